"""Semidefinite relaxation for the point-target, uniform-DAC design.

The design problem: maximize the coherent return power a^H R_x a subject to
per-user SQINR floors, the post-DAC power budget alpha_t Tr(R_x) <= P, and
the decomposition constraint R_x >= sum_k R_k with every block PSD.  In
covariance variables the SQINR floor of user k is the linear inequality

    (1 + 1/Gamma_k) alpha_k alpha_t^2 h_k^H R_k h_k
        >= alpha_t^2 h_k^H R_x h_k
         + alpha_t (1 - alpha_t) h_k^H diag(R_x) h_k + sigma_k^2,

so the relaxation is an SDP that the conic engine solves after Hermitian
embedding.  The relaxation is tight: a rank-one communication covariance with
identical user terms and unchanged R_x always exists and rank_one_reduce
constructs it in closed form.
"""

import numpy as np
import scipy.sparse as sp

from . import conic
from .channel import PointTarget, steering_tx
from .conic import Cones, ConicProblem, ConicSettings, embed_matrix, hmat, hvec
from .errors import ConfigError, InfeasibleError, SolverError
from .metrics import (
    BeamformingSolution,
    covariance_rx,
    radar_sqnr_max,
    sqinr_all,
    sqinr_ceiling,
    transmit_power,
)


def _check_sdr_applicable(channels, profile):
    if not isinstance(channels.target, PointTarget):
        raise ConfigError("the SDR path needs a point target; use the MM solver instead")
    if not profile.uniform_dac():
        raise ConfigError("the SDR path needs uniform DAC resolution; use the MM solver instead")


def _ceiling_precheck(config, profile):
    for k in range(config.n_users):
        cap = sqinr_ceiling(profile.alpha_user[k])
        if config.gamma[k] >= cap:
            raise InfeasibleError(
                f"user {k}: SQINR target {config.gamma[k]:.4g} is at or above the "
                f"quantizer ceiling alpha/(1-alpha) = {cap:.4g}; no transmit design can meet it"
            )


def build_sdr(config, channels, profile, feasibility=False):
    """Assemble the (embedded, real) conic program.

    Variables are hvec(R_x) followed by hvec(R_1) ... hvec(R_K), plus one
    trailing margin variable in feasibility mode (maximized; the design is
    feasible iff the optimal margin is nonnegative).  Returns the problem
    and an index map used by the extractor.
    """
    _check_sdr_applicable(channels, profile)
    nt, K = config.n_tx, config.n_users
    alpha_t = float(profile.alpha_t[0])
    a = steering_tx(channels.target.theta, nt)
    d = nt * nt
    n = (K + 1) * d + (1 if feasibility else 0)
    E = embed_matrix(nt)
    side = 2 * nt
    sd = conic.svec_dim(side)

    def block(k):
        return slice(k * d, (k + 1) * d)

    rows_nonneg = []
    b_nonneg = []
    for k in range(K):
        h = channels.H[k]
        quad = hvec(np.outer(h, h.conj()))
        diag_part = hvec(np.diag(np.abs(h) ** 2))
        row = np.zeros(n)
        row[block(0)] = alpha_t**2 * quad + alpha_t * (1.0 - alpha_t) * diag_part
        row[block(k + 1)] = -(1.0 + 1.0 / config.gamma[k]) * profile.alpha_user[k] * alpha_t**2 * quad
        if feasibility:
            row[-1] = 1.0
        rows_nonneg.append(row)
        b_nonneg.append(-config.sigma_user2[k])
    power_row = np.zeros(n)
    power_row[block(0)] = alpha_t * hvec(np.eye(nt))
    rows_nonneg.append(power_row)
    b_nonneg.append(config.power)

    A_parts = [sp.csr_matrix(np.vstack(rows_nonneg))]
    psd_sides = []
    zeros_pad = sp.csr_matrix((sd, 1)) if feasibility else None

    def psd_block(coeff_map):
        # coeff_map: {var block index: sign}
        cols = []
        for j in range(K + 1):
            sgn = coeff_map.get(j, 0.0)
            cols.append(sgn * E if sgn else sp.csr_matrix((sd, d)))
        if feasibility:
            cols.append(zeros_pad)
        return sp.hstack(cols, format="csr")

    for j in range(K + 1):
        A_parts.append(psd_block({j: -1.0}))
        psd_sides.append(side)
    if K:
        coup = {0: -1.0}
        coup.update({j: 1.0 for j in range(1, K + 1)})
        A_parts.append(psd_block(coup))
        psd_sides.append(side)

    A = sp.vstack(A_parts, format="csc")
    b = np.concatenate([np.asarray(b_nonneg), np.zeros(len(psd_sides) * sd)])
    c = np.zeros(n)
    if feasibility:
        c[-1] = -1.0  # maximize the margin
    else:
        c[block(0)] = -hvec(np.outer(a, a.conj()))  # maximize a^H R_x a
    problem = ConicProblem(c=c, A=A, b=b, cones=Cones(nonneg=K + 1, psd=tuple(psd_sides)))
    meta = {"d": d, "n_users": K, "feasibility": feasibility}
    return problem, meta


def extract_covariances(sol, meta):
    """Pull (R_x, [R_1..R_K]) out of a conic solution's x vector."""
    d, K = meta["d"], meta["n_users"]
    R_x = hmat(sol.x[0:d])
    R_ks = [hmat(sol.x[(k + 1) * d : (k + 2) * d]) for k in range(K)]
    return R_x, R_ks


def rank_one_reduce(R_x, R_ks, H):
    """Closed-form rank-one communication covariances with identical metrics.

    R~_k = R_k h_k h_k^H R_k / (h_k^H R_k h_k).  Leaves R_x untouched; the
    user quadratic forms h_k^H R~_k h_k match the originals exactly and
    R_x - sum_k R~_k stays PSD.
    """
    out = []
    for k, R_k in enumerate(R_ks):
        h = H[k]
        g = R_k @ h
        quad = float(np.real(np.vdot(h, g)))
        if quad <= 0:
            raise SolverError(f"user {k}: degenerate covariance block (h^H R h = {quad:.3e})")
        out.append(np.outer(g, g.conj()) / quad)
    return R_x, out


def extract_beamformers(R_x, R_k_tildes, H):
    """Beamforming columns from the reduced covariances.

    w_k = R~_k h_k / sqrt(h_k^H R~_k h_k), rotated so h_k^H w_k is real and
    nonnegative (with uniform DACs this also aligns h_k^H A_t w_k).  The
    sensing columns come from the PSD residual R_x - sum_k w_k w_k^H.
    """
    nt = R_x.shape[0]
    K = len(R_k_tildes)
    W_c = np.zeros((nt, K), dtype=complex)
    for k in range(K):
        h = H[k]
        g = R_k_tildes[k] @ h
        quad = float(np.real(np.vdot(h, g)))
        w = g / np.sqrt(quad)
        phase = np.vdot(h, w)  # h^H w
        if abs(phase) > 0:
            w = w * (phase.conjugate() / abs(phase))
        W_c[:, k] = w
    resid = R_x - sum(np.outer(W_c[:, k], W_c[:, k].conj()) for k in range(K)) if K else R_x.copy()
    resid = 0.5 * (resid + resid.conj().T)
    w_eig, V = np.linalg.eigh(resid)
    keep = w_eig > max(1e-12, 1e-12 * max(w_eig.max(), 0.0))
    W_r = V[:, keep] * np.sqrt(w_eig[keep])
    return W_c, W_r


def solve_sdr(config, channels, profile, settings=None, warm=None):
    """Full pipeline: precheck, SDP solve, rank-one reduction, power polish.

    Raises InfeasibleError with a diagnosis when the SQINR floors cannot be
    met, SolverError when the conic engine fails on a feasible instance.
    """
    _check_sdr_applicable(channels, profile)
    _ceiling_precheck(config, profile)
    st = settings or ConicSettings()
    problem, meta = build_sdr(config, channels, profile)
    sol = conic.solve(problem, st, warm=warm)

    if sol.status != "optimal":
        margin = feasibility_margin(config, channels, profile, settings=st)
        if margin < -1e-9 * max(1.0, float(np.max(config.sigma_user2, initial=0.0))):
            raise InfeasibleError(
                f"SQINR floors unreachable: best achievable constraint margin {margin:.3e} W"
            )
        raise SolverError(f"conic solve ended with status {sol.status!r} on a feasible instance")

    R_x_hat, R_k_hats = extract_covariances(sol, meta)
    R_x, R_k_tildes = rank_one_reduce(R_x_hat, R_k_hats, channels.H)
    W_c, W_r = extract_beamformers(R_x, R_k_tildes, channels.H)

    # exact power use never hurts: scaling up leaves the SQINR floors satisfied
    alpha_t = float(profile.alpha_t[0])
    t = config.power / transmit_power(profile.A_t, covariance_rx(W_c, W_r))
    W_c = W_c * np.sqrt(t)
    W_r = W_r * np.sqrt(t)
    R_x = covariance_rx(W_c, W_r)

    a = steering_tx(channels.target.theta, config.n_tx)
    info = {
        "solver": "sdr",
        "status": sol.status,
        "iterations": sol.iterations,
        "res_primal": sol.res_primal,
        "res_dual": sol.res_dual,
        "gap": sol.gap,
        "solve_time": sol.solve_time,
        "power_scale": t,
        "raw": sol,
    }
    return BeamformingSolution(
        W_c=W_c,
        W_r=W_r,
        R_x=R_x,
        objective_value=float(np.real(np.vdot(a, R_x @ a))),
        sqinr_per_user=sqinr_all(W_c, W_r, channels.H, profile, config.sigma_user2),
        radar_sqnr=radar_sqnr_max(channels.G, profile, R_x, config.sigma_radar2),
        solver_info=info,
    )


def feasibility_margin(config, channels, profile, settings=None):
    """Largest uniform slack by which the SQINR rows can be over-satisfied.

    Nonnegative means the design set is nonempty.  Solved as its own SDP
    (always strictly feasible, always bounded) so infeasible inputs get a
    quantitative diagnosis rather than a solver status heuristic.
    """
    st = settings or ConicSettings()
    problem, _ = build_sdr(config, channels, profile, feasibility=True)
    sol = conic.solve(problem, st)
    if sol.status != "optimal":
        raise SolverError(f"feasibility probe ended with status {sol.status!r}")
    return -sol.pobj
