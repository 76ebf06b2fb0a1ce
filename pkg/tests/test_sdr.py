"""Global point-target design: SDP construction, rank-one recovery, pipeline checks."""

import numpy as np
import pytest

from quantbeam.channel import ChannelSet, ExtendedTarget, generate_channels, steering_tx
from quantbeam.config import SystemConfig, db_to_lin
from quantbeam.conic import ConicSettings
from quantbeam.errors import ConfigError, InfeasibleError
from quantbeam.metrics import (
    covariance_rx,
    radar_snr_ideal,
    sqinr_all,
    transmit_power,
)
from quantbeam.quantization import (
    INFINITE,
    BitAllocation,
    build_profile,
    ideal_profile,
)
from quantbeam.rng import stream
from quantbeam.sdr import (
    extract_beamformers,
    feasibility_margin,
    rank_one_reduce,
    solve_sdr,
)

from conftest import FAST, point_target, small_system, uniform_bits

TIGHT = ConicSettings(eps_abs=1e-10, eps_rel=1e-10)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def solve_small(seed=7, gamma_db=5.0, bits=3, n_tx=8, n_users=2, settings=FAST):
    cfg = small_system(n_tx=n_tx, n_rx=n_tx, n_users=n_users, gamma_db=gamma_db)
    ch = generate_channels(cfg, point_target(), seed=seed)
    prof = build_profile(uniform_bits(cfg, bits))
    return cfg, ch, prof, solve_sdr(cfg, ch, prof, settings=settings)


# ---------------------------------------------------------------------------
# analytic optima


def test_radar_only_closed_form():
    # no users: max a^H R a s.t. alpha tr(R) <= P has optimum N_T P / alpha
    cfg = SystemConfig(n_tx=4, n_rx=4, n_users=0, power=0.1, gamma=np.zeros(0),
                       sigma_user2=np.zeros(0), sigma_radar2=1e-3)
    ch = generate_channels(cfg, point_target(), seed=1)
    bits = BitAllocation(dac=np.full(4, 3), adc_bs=np.full(4, 3),
                         adc_user=np.zeros(0, dtype=int))
    sol = solve_sdr(cfg, ch, build_profile(bits), settings=TIGHT)
    alpha = 1.0 - 0.03454
    assert sol.objective_value == pytest.approx(4 * 0.1 / alpha, rel=1e-7)


def test_radar_only_covariance_aligned_with_steering():
    cfg = SystemConfig(n_tx=6, n_rx=6, n_users=0, power=0.1, gamma=np.zeros(0),
                       sigma_user2=np.zeros(0), sigma_radar2=1e-3)
    tgt = point_target()
    ch = generate_channels(cfg, tgt, seed=2)
    bits = BitAllocation(dac=np.full(6, 3), adc_bs=np.full(6, 3),
                         adc_user=np.zeros(0, dtype=int))
    sol = solve_sdr(cfg, ch, build_profile(bits), settings=TIGHT)
    w, V = np.linalg.eigh(sol.R_x)
    a = steering_tx(tgt.theta, 6)
    corr = abs(np.vdot(V[:, -1], a)) / (np.linalg.norm(V[:, -1]) * np.linalg.norm(a))
    assert corr == pytest.approx(1.0, abs=1e-5)


def test_vanishing_floor_approaches_radar_only():
    cfg, ch, prof, sol = solve_small(seed=3, gamma_db=-50.0, n_tx=4, n_users=1,
                                     settings=TIGHT)
    alpha = float(prof.alpha_t[0])
    assert sol.objective_value == pytest.approx(4 * cfg.power / alpha, rel=1e-4)


def test_matches_brute_force_grid_two_antennas():
    # N_T=2, one user, unquantized, binding floor: global optimum vs a
    # two-stage direction grid (about 1e6 evaluated direction pairs)
    tgt = point_target()
    cfg = SystemConfig(n_tx=2, n_rx=2, n_users=1, power=0.1,
                       gamma=np.array([db_to_lin(20.0)]),
                       sigma_user2=np.array([1e-3]), sigma_radar2=1e-3)
    ch = generate_channels(cfg, tgt, seed=5)
    sol = solve_sdr(cfg, ch, ideal_profile(2, 2, 1), settings=TIGHT)
    assert sol.sqinr_per_user[0] == pytest.approx(cfg.gamma[0], rel=1e-4)  # binding

    a = steering_tx(tgt.theta, 2)
    h = ch.H[0]
    P, G, s2 = cfg.power, cfg.gamma[0], cfg.sigma_user2[0]

    def grid_best(n_ang, box):
        (u1, u2), (v1, v2), (r1, r2), (t1, t2) = box
        Uc, Vc = np.meshgrid(np.linspace(u1, u2, n_ang),
                             np.linspace(v1, v2, n_ang), indexing="ij")
        dc = np.stack([np.cos(Uc), np.sin(Uc) * np.exp(1j * Vc)], -1).reshape(-1, 2)
        Ur, Vr = np.meshgrid(np.linspace(r1, r2, n_ang),
                             np.linspace(t1, t2, n_ang), indexing="ij")
        dr = np.stack([np.cos(Ur), np.sin(Ur) * np.exp(1j * Vr)], -1).reshape(-1, 2)
        sc = np.abs(dc @ h.conj()) ** 2
        oc = np.abs(dc @ a.conj()) ** 2
        sr = np.abs(dr @ h.conj()) ** 2
        orr = np.abs(dr @ a.conj()) ** 2
        SC, OC = sc[:, None], oc[:, None]
        SR, OR = sr[None, :], orr[None, :]
        # best power split for fixed directions is at an endpoint of the
        # feasible interval (objective linear in the split)
        rho_min = G * (P * SR + s2) / np.maximum(P * SC + G * P * SR, 1e-300)
        feas = (rho_min <= 1.0) & (SC > 0)
        rho_min = np.clip(rho_min, 0.0, 1.0)
        obj = np.where(
            feas,
            np.maximum(rho_min * P * OC + (1 - rho_min) * P * OR,
                       np.where(P * SC >= G * s2, P * OC, -1.0)),
            -1.0,
        )
        idx = np.unravel_index(np.argmax(obj), obj.shape)
        return obj[idx], (Uc.reshape(-1)[idx[0]], Vc.reshape(-1)[idx[0]],
                          Ur.reshape(-1)[idx[1]], Vr.reshape(-1)[idx[1]])

    box = ((0, np.pi / 2), (0, 2 * np.pi), (0, np.pi / 2), (0, 2 * np.pi))
    _, (uc, vc, ur, vr) = grid_best(33, box)
    wu, wv = np.pi / 2 / 32 * 1.5, 2 * np.pi / 32 * 1.5
    refined, _ = grid_best(33, ((max(uc - wu, 0), min(uc + wu, np.pi / 2)),
                                (vc - wv, vc + wv),
                                (max(ur - wu, 0), min(ur + wu, np.pi / 2)),
                                (vr - wv, vr + wv)))
    # the grid point is feasible, so the SDR value dominates it; and the
    # relaxation is tight here, so they agree closely
    assert sol.objective_value >= refined - 1e-9
    assert abs(sol.objective_value - refined) / refined < 1e-3


# ---------------------------------------------------------------------------
# rank-one reduction identities


def random_covariance_blocks(rng, n, K):
    R_ks = []
    for _ in range(K):
        B = crandn(rng, n, 2)
        R_ks.append(B @ B.conj().T)
    slack = crandn(rng, n, n)
    R_x = sum(R_ks) + slack @ slack.conj().T * 0.1
    return R_x, R_ks


def test_rank_one_reduce_identities():
    rng = stream(41, "r1")
    H = crandn(rng, 3, 6)
    R_x, R_ks = random_covariance_blocks(rng, 6, 3)
    R_x_t, R_ts = rank_one_reduce(R_x, R_ks, H)
    assert R_x_t is R_x  # untouched, objective unchanged exactly
    for k in range(3):
        h = H[k]
        before = np.real(np.vdot(h, R_ks[k] @ h))
        after = np.real(np.vdot(h, R_ts[k] @ h))
        assert abs(after - before) <= 1e-10 * before
        s = np.linalg.svd(R_ts[k], compute_uv=False)
        assert s[1] <= 1e-10 * s[0]
    coupling = R_x - sum(R_ts)
    assert np.min(np.linalg.eigvalsh(0.5 * (coupling + coupling.conj().T))) >= -1e-8


def test_rank_one_reduce_fixed_point():
    rng = stream(42, "r1fix")
    h = crandn(rng, 4)
    w = crandn(rng, 4)
    R_k = np.outer(w, w.conj())
    _, (R_t,) = rank_one_reduce(R_k * 2.0, [R_k], h[None, :])
    # already rank one: unchanged up to scale-free structure
    assert np.linalg.matrix_rank(R_t, tol=1e-10) == 1
    assert np.real(np.vdot(h, R_t @ h)) == pytest.approx(
        np.real(np.vdot(h, R_k @ h)), rel=1e-12)


def test_rank_one_reduce_rejects_zero_power():
    h = np.array([1.0 + 0j, 0.0])
    R_k = np.diag([0.0, 1.0]).astype(complex)  # h^H R h = 0
    from quantbeam.errors import SolverError
    with pytest.raises(SolverError):
        rank_one_reduce(np.eye(2, dtype=complex), [R_k], h[None, :])


def test_extract_beamformers_reconstructs_covariance():
    rng = stream(43, "extract")
    H = crandn(rng, 2, 5)
    R_x, R_ks = random_covariance_blocks(rng, 5, 2)
    R_x, R_ts = rank_one_reduce(R_x, R_ks, H)
    W_c, W_r = extract_beamformers(R_x, R_ts, H)
    R_back = covariance_rx(W_c, W_r)
    assert np.linalg.norm(R_back - R_x) / np.linalg.norm(R_x) < 1e-8


def test_extract_beamformers_zero_residual_means_no_sensing_columns():
    rng = stream(44, "extract2")
    H = crandn(rng, 2, 4)
    w1, w2 = crandn(rng, 4), crandn(rng, 4)
    R_ts = [np.outer(w1, w1.conj()), np.outer(w2, w2.conj())]
    R_x = R_ts[0] + R_ts[1]
    W_c, W_r = extract_beamformers(R_x, R_ts, H)
    assert W_r.shape[1] == 0
    assert np.allclose(covariance_rx(W_c, W_r), R_x, atol=1e-10)


def test_extract_beamformers_phase_convention():
    cfg, ch, prof, sol = solve_small(seed=8)
    for k in range(cfg.n_users):
        inner = np.vdot(ch.H[k], sol.W_c[:, k])  # h^H w
        assert abs(np.imag(inner)) <= 1e-9 * abs(inner)
        assert np.real(inner) > 0


# ---------------------------------------------------------------------------
# full pipeline invariants


def test_power_constraint_active():
    for seed in (1, 2, 3):
        cfg, ch, prof, sol = solve_small(seed=seed)
        used = transmit_power(prof.A_t, sol.R_x)
        assert abs(used - cfg.power) / cfg.power <= 1e-6


def test_floors_met_by_extracted_solution():
    cfg, ch, prof, sol = solve_small(seed=9, gamma_db=8.0, settings=TIGHT)
    got = sqinr_all(sol.W_c, sol.W_r, ch.H, prof, cfg.sigma_user2)
    assert np.all(got >= cfg.gamma * (1 - 1e-6))


def test_infinite_bits_matches_unquantized_radar_snr():
    cfg = small_system(n_tx=6, n_rx=6)
    ch = generate_channels(cfg, point_target(), seed=11)
    bits = BitAllocation(dac=np.full(6, INFINITE), adc_bs=np.full(6, INFINITE),
                         adc_user=np.full(2, INFINITE))
    sol = solve_sdr(cfg, ch, build_profile(bits), settings=FAST)
    want = radar_snr_ideal(ch.G, sol.R_x, cfg.sigma_radar2)
    assert sol.radar_sqnr == pytest.approx(want, rel=1e-10)


def test_warm_start_helps():
    cfg, ch, prof, cold = solve_small(seed=12)
    warm = solve_sdr(cfg, ch, prof, settings=FAST,
                     warm=cold.solver_info["raw"])
    assert warm.solver_info["iterations"] <= cold.solver_info["iterations"]
    assert warm.objective_value == pytest.approx(cold.objective_value, rel=1e-5)


def test_solution_validates():
    cfg, ch, prof, sol = solve_small(seed=13)
    sol.validate()


# ---------------------------------------------------------------------------
# feasibility handling


def test_ceiling_infeasible_raises():
    cfg = small_system(gamma_db=200.0)
    ch = generate_channels(cfg, point_target(), seed=14)
    prof = build_profile(uniform_bits(cfg, 3))
    with pytest.raises(InfeasibleError):
        solve_sdr(cfg, ch, prof, settings=FAST)


def test_duplicate_channels_below_ceiling_infeasible():
    # two users on the same channel both demanding 10 dB cannot coexist,
    # though 10 dB is far below the 3-bit ADC ceiling
    cfg = small_system(n_users=2, gamma_db=10.0)
    base = generate_channels(cfg, point_target(), seed=15)
    H = np.vstack([base.H[0], base.H[0]])
    ch = ChannelSet(H=H, G=base.G, target=base.target, seed=base.seed)
    prof = build_profile(uniform_bits(cfg, 3))
    assert feasibility_margin(cfg, ch, prof, settings=FAST) < 0
    with pytest.raises(InfeasibleError):
        solve_sdr(cfg, ch, prof, settings=FAST)


def test_feasibility_margin_positive_when_solvable():
    cfg = small_system()
    ch = generate_channels(cfg, point_target(), seed=16)
    prof = build_profile(uniform_bits(cfg, 3))
    assert feasibility_margin(cfg, ch, prof, settings=FAST) > 0


# ---------------------------------------------------------------------------
# applicability guards


def test_rejects_extended_target():
    cfg = small_system()
    ch = generate_channels(cfg, ExtendedTarget(sigma_g2=0.1), seed=17)
    prof = build_profile(uniform_bits(cfg, 3))
    with pytest.raises(ConfigError):
        solve_sdr(cfg, ch, prof, settings=FAST)


def test_rejects_mixed_dacs():
    cfg = small_system()
    ch = generate_channels(cfg, point_target(), seed=18)
    dac = np.array([2] * 4 + [8] * 4)
    bits = BitAllocation(dac=dac, adc_bs=np.full(8, 3), adc_user=np.full(2, 3))
    with pytest.raises(ConfigError):
        solve_sdr(cfg, ch, build_profile(bits), settings=FAST)
