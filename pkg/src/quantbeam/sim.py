"""Experiment harness: signal-level sampling, detection trials, design sweeps.

Everything is deterministic given (spec, seed).  Monte-Carlo trials draw from
hash-keyed substreams so results never depend on execution order or worker
count, and the CSV emitters format floats identically across runs, so
re-running a sweep with the same seed reproduces the output files byte for
byte.
"""

import csv
import hashlib
import json
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .channel import (
    CustomTarget,
    ExtendedTarget,
    PointTarget,
    ChannelSet,
    generate_channels,
    make_trm,
)
from .config import (
    DEFAULT_BITS,
    DEFAULT_REFLECT_DB,
    DEFAULT_SIGMA_G2_DB,
    DEFAULT_THETA_DEG,
    SystemConfig,
    db_to_lin,
    dbm_to_watt,
    lin_to_db,
)
from .errors import ConfigError, InfeasibleError
from .metrics import (
    BeamformingSolution,
    PowerModel,
    energy_efficiency,
    radar_sqnr_max,
    receive_beamformer,
    sqinr_all,
)
from .mm import MMSettings, run_mm
from .quantization import (
    BitAllocation,
    build_profile,
    draw_aqnm_noise,
    ideal_profile,
    midrise_quantize,
)
from .rng import stream
from .sdr import solve_sdr

ALGORITHMS = ("robust", "non_robust", "radar_only")
SCENARIOS = ("point", "extended", "custom")
AXES = ("gamma_db", "power_dbm", "n_tx", "n_rx", "bits")


@dataclass
class ExperimentSpec:
    """What to run: scenario, converter bits, sweep axis/grid, trial counts.

    Physical quantities carry their unit in the field name; conversion to
    linear units happens when the spec is instantiated into targets and
    profiles.
    """

    scenario: str = "point"
    theta_deg: float = DEFAULT_THETA_DEG
    reflect_db: float = DEFAULT_REFLECT_DB  # |eta|^2 for point targets
    sigma_g2_db: float = DEFAULT_SIGMA_G2_DB  # per-entry variance, extended targets
    trm: np.ndarray = None  # explicit response matrix, custom scenario only
    dac_bits: object = DEFAULT_BITS
    adc_bs_bits: object = DEFAULT_BITS
    adc_user_bits: object = DEFAULT_BITS
    axis: str = "gamma_db"
    grid: tuple = ()
    trials: int = 2000
    snapshots: int = 64
    seed: int = 0
    algorithms: tuple = ("robust",)
    pfa_grid: tuple = (0.01, 0.05, 0.1, 0.3)
    loading: object = 3.0  # quantizer clip point in input-rms units, or "calibrated"
    force_mm: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.scenario == "custom" and self.trm is None:
            raise ConfigError("custom scenario requires an explicit target response matrix")
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        # empty grid is fine for ROC runs; sweeps check at call time
        self.grid = tuple(float(v) for v in np.atleast_1d(self.grid))
        if not (isinstance(self.trials, (int, np.integer)) and self.trials >= 1):
            raise ConfigError(f"trials must be a positive integer, got {self.trials!r}")
        if not (isinstance(self.snapshots, (int, np.integer)) and self.snapshots >= 1):
            raise ConfigError(f"snapshots must be a positive integer, got {self.snapshots!r}")
        self.algorithms = tuple(self.algorithms)
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {alg!r}; choose from {ALGORITHMS}")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        self.pfa_grid = tuple(float(p) for p in self.pfa_grid)
        if any(not 0.0 < p < 1.0 for p in self.pfa_grid):
            raise ConfigError("pfa_grid entries must lie in (0, 1)")

    def target(self):
        if self.scenario == "point":
            return PointTarget(
                theta=float(np.deg2rad(self.theta_deg)),
                eta=float(np.sqrt(db_to_lin(self.reflect_db))),
            )
        if self.scenario == "extended":
            return ExtendedTarget(sigma_g2=float(db_to_lin(self.sigma_g2_db)))
        return CustomTarget(G=self.trm)

    def bit_allocation(self, config):
        return BitAllocation.create(
            config.n_tx,
            config.n_rx,
            config.n_users,
            dac=self.dac_bits,
            adc_bs=self.adc_bs_bits,
            adc_user=self.adc_user_bits,
        )


# ---------------------------------------------------------------------------
# solver dispatch and baselines


def solve_robust(config, channels, profile, conic_settings=None, mm_settings=None,
                 force_mm=False, warm=None, v0=None):
    """Route to the semidefinite path when it is exact, else the ascent path.

    The semidefinite path applies to a point target with one shared DAC
    depth; everything else goes through the iterative solver.
    """
    if channels.target.kind == "point" and profile.uniform_dac() and not force_mm:
        return solve_sdr(config, channels, profile, settings=conic_settings, warm=warm)
    mm = mm_settings or MMSettings()
    if conic_settings is not None:
        mm = MMSettings(eps_mm=mm.eps_mm, max_iters=mm.max_iters, conic=conic_settings)
    return run_mm(config, channels, profile, settings=mm, V0=v0)


def evaluate_under(solution, config, channels, profile, tag=None):
    """Re-score fixed beamformers under a (possibly different) gain profile."""
    sq = sqinr_all(solution.W_c, solution.W_r, channels.H, profile, config.sigma_user2)
    gr = radar_sqnr_max(channels.G, profile, solution.R_x, config.sigma_radar2)
    info = dict(solution.solver_info)
    info.pop("raw", None)
    if tag is not None:
        info["algorithm"] = tag
    info["designed_sqinr"] = np.asarray(solution.sqinr_per_user, dtype=float)
    info["designed_radar_sqnr"] = float(solution.radar_sqnr)
    return BeamformingSolution(
        W_c=solution.W_c,
        W_r=solution.W_r,
        R_x=solution.R_x,
        objective_value=float(gr),
        sqinr_per_user=sq,
        radar_sqnr=float(gr),
        solver_info=info,
    )


def non_robust_baseline(config, channels, profile, conic_settings=None,
                        mm_settings=None, force_mm=False, warm=None):
    """Design as if every converter were ideal, then score under the true gains.

    The returned transmit power cannot exceed the budget: the design enforces
    Tr(R_x) <= P and the true radiated power is sum alpha_n [R_x]_nn with
    alpha <= 1.
    """
    assumed = ideal_profile(config.n_tx, config.n_rx, config.n_users)
    designed = solve_robust(
        config, channels, assumed,
        conic_settings=conic_settings, mm_settings=mm_settings,
        force_mm=force_mm, warm=warm,
    )
    scored = evaluate_under(designed, config, channels, profile, tag="non_robust")
    scored.solver_info["raw"] = designed.solver_info.get("raw")
    return scored


def radar_only_baseline(config, channels, profile, conic_settings=None,
                        mm_settings=None, force_mm=False):
    """Drop the user SQINR floors entirely; upper bound on sensing performance."""
    cfg0 = SystemConfig(
        n_tx=config.n_tx,
        n_rx=config.n_rx,
        n_users=0,
        power=config.power,
        sigma_radar2=config.sigma_radar2,
    )
    ch0 = ChannelSet(
        H=np.zeros((0, channels.n_tx), dtype=complex),
        G=channels.G,
        target=channels.target,
        seed=channels.seed,
    )
    prof0 = replace(profile, alpha_user=np.ones(0))
    sol = solve_robust(
        cfg0, ch0, prof0,
        conic_settings=conic_settings, mm_settings=mm_settings, force_mm=force_mm,
    )
    info = dict(sol.solver_info)
    info.pop("raw", None)
    info["algorithm"] = "radar_only"
    # users are unserved: report their SQINR as exactly zero
    return BeamformingSolution(
        W_c=np.zeros((config.n_tx, config.n_users), dtype=complex),
        W_r=sol.W_r if sol.W_r.size else sol.W_c,
        R_x=sol.R_x,
        objective_value=sol.objective_value,
        sqinr_per_user=np.zeros(config.n_users),
        radar_sqnr=sol.radar_sqnr,
        solver_info=info,
    )


def _solve_algorithm(alg, config, channels, profile, conic_settings=None,
                     mm_settings=None, force_mm=False, warm=None):
    if alg == "robust":
        return solve_robust(config, channels, profile, conic_settings=conic_settings,
                            mm_settings=mm_settings, force_mm=force_mm, warm=warm)
    if alg == "non_robust":
        return non_robust_baseline(config, channels, profile, conic_settings=conic_settings,
                                   mm_settings=mm_settings, force_mm=force_mm, warm=warm)
    if alg == "radar_only":
        return radar_only_baseline(config, channels, profile, conic_settings=conic_settings,
                                   mm_settings=mm_settings, force_mm=force_mm)
    raise ConfigError(f"unknown algorithm {alg!r}")


# ---------------------------------------------------------------------------
# signal-level sampler


def _crandn(rng, *shape):
    """CN(0,1) i.i.d. samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_snapshot(solution, config, channels, profile, rng, n_snap=1,
                    mode="aqnm", target_present=True, bits=None, loading=3.0):
    """Draw transmit/receive signal snapshots through the quantized link.

    mode "aqnm" adds Gaussian converter noise with the model covariances,
    which by definition track the statistics of the input actually applied.
    mode "midrise" runs the actual uniform quantizer on every chain (bits
    required); its reference levels are fixed at the surveillance condition
    (target presumed present), because a deployed converter cannot rescale
    to the hypothesis the detector is trying to decide.  With target_present
    False the target response is zeroed, so in midrise mode the sensing
    receiver quantizes pure noise against a full-scale grid sized for the
    target return.

    Returns a dict with x, x_q (n_tx x n_snap), y_bs, y_bs_q (n_rx x n_snap)
    and y_k, y_k_q (n_users x n_snap).
    """
    if mode not in ("aqnm", "midrise"):
        raise ConfigError(f"mode must be 'aqnm' or 'midrise', got {mode!r}")
    if mode == "midrise" and bits is None:
        raise ConfigError("midrise mode requires the bit allocation")
    K, nt, nr = channels.n_users, channels.n_tx, channels.n_rx
    W_c, W_r = solution.W_c, solution.W_r
    R_x = solution.R_x
    G = channels.G if target_present else np.zeros_like(channels.G)

    s_c = _crandn(rng, W_c.shape[1], n_snap)
    s_r = _crandn(rng, W_r.shape[1], n_snap)
    x = W_c @ s_c + W_r @ s_r

    # model covariances seen at each converter input
    at, ar, au = profile.alpha_t, profile.alpha_r, profile.alpha_user
    d_x = np.real(np.diag(R_x)).copy()
    R_xq = profile.A_t @ R_x @ profile.A_t + np.diag(at * (1.0 - at) * d_x)
    R_in = G @ R_xq @ G.conj().T + config.sigma_radar2 * np.eye(nr)
    d_in = np.real(np.diag(R_in)).copy()
    # hardware reference: sized for the target-present return regardless of
    # the hypothesis in force
    R_ref = channels.G @ R_xq @ channels.G.conj().T \
        + config.sigma_radar2 * np.eye(nr)
    d_ref = np.real(np.diag(R_ref)).copy()
    r_user = np.array(
        [np.real(np.vdot(channels.H[k], R_xq @ channels.H[k])) for k in range(K)]
    ) + (config.sigma_user2 if K else np.zeros(0))

    z_bs = np.sqrt(config.sigma_radar2) * _crandn(rng, nr, n_snap)
    z_user = (np.sqrt(config.sigma_user2)[:, None] * _crandn(rng, K, n_snap)
              if K else np.zeros((0, n_snap)))

    if mode == "aqnm":
        q_t = draw_aqnm_noise(rng, at * (1.0 - at) * d_x, n_snap)
        x_q = profile.A_t @ x + q_t
        y_bs = G @ x_q + z_bs
        q_r = draw_aqnm_noise(rng, ar * (1.0 - ar) * d_in, n_snap)
        y_bs_q = profile.A_r @ y_bs + q_r
        y_k = channels.H.conj() @ x_q + z_user
        q_k = draw_aqnm_noise(rng, au * (1.0 - au) * r_user, n_snap)
        y_k_q = au[:, None] * y_k + q_k if K else y_k
    else:
        x_q = midrise_quantize(x, bits.dac, np.sqrt(d_x / 2.0), loading=loading)
        y_bs = G @ x_q + z_bs
        y_bs_q = midrise_quantize(y_bs, bits.adc_bs, np.sqrt(d_ref / 2.0), loading=loading)
        y_k = channels.H.conj() @ x_q + z_user
        y_k_q = (midrise_quantize(y_k, bits.adc_user, np.sqrt(r_user / 2.0), loading=loading)
                 if K else y_k)

    return {"x": x, "x_q": x_q, "y_bs": y_bs, "y_bs_q": y_bs_q, "y_k": y_k, "y_k_q": y_k_q}


def detection_statistic(u, y_bs_q):
    """Energy detector: average |u^H y|^2 over the snapshot burst."""
    return float(np.mean(np.abs(u.conj() @ y_bs_q) ** 2))


def estimate_radar_sqnr(solution, config, channels, profile, rng, n_snap,
                        mode="aqnm", bits=None, loading=3.0):
    """Sampled radar SQNR at the receive combiner output.

    Splits the received snapshots into the mean-gain signal path
    A_r G A_t x and the residual disturbance (converter noise, thermal
    noise, and any distortion the Gaussian converter model does not
    capture), then returns the power ratio after combining.  In aqnm mode
    this converges to the analytic objective; in midrise mode the gap to
    the analytic value measures how well the Gaussian model tracks the
    true quantizer.
    """
    u = receive_beamformer(channels.G, profile, solution.R_x, config.sigma_radar2)
    sig = sample_snapshot(solution, config, channels, profile, rng, n_snap=n_snap,
                          mode=mode, target_present=True, bits=bits, loading=loading)
    s_lin = profile.A_r @ channels.G @ profile.A_t @ sig["x"]
    resid = sig["y_bs_q"] - s_lin
    num = detection_statistic(u, s_lin)
    den = detection_statistic(u, resid)
    return num / den


# ---------------------------------------------------------------------------
# detection experiment


def wilson_interval(successes, n, z=1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    p = successes / n
    denom = 1.0 + z * z / n
    center = p + z * z / (2.0 * n)
    half = z * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    return (center - half) / denom, (center + half) / denom


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def roc_experiment(spec, config=None, conic_settings=None, mm_settings=None, threads=1):
    """Detection trials through the real quantizer chain, per algorithm.

    One channel/target realization per experiment; each trial redraws
    symbols and noise.  Under the null the target response is zeroed, so the
    sensing receiver quantizes pure noise.  The combiner of each algorithm is
    computed from the model that algorithm believes in.  Thresholds sweep the
    pooled statistics; detection and false-alarm rates carry 95% Wilson
    intervals.

    Returns {algorithm: {"curve": rows, "operating_points": rows}} where
    curve rows are (threshold, P_FA, P_FA_lo, P_FA_hi, P_D, P_D_lo, P_D_hi)
    and operating points pin the threshold at empirical null quantiles for
    each requested false-alarm rate.
    """
    config = config or SystemConfig()
    channels = generate_channels(config, spec.target(), spec.seed)
    bits = spec.bit_allocation(config)
    profile = build_profile(bits)
    L, n_trials = spec.snapshots, spec.trials

    out = {}
    for alg in spec.algorithms:
        sol = _solve_algorithm(alg, config, channels, profile,
                               conic_settings=conic_settings, mm_settings=mm_settings,
                               force_mm=spec.force_mm)
        # combiner from the model the algorithm assumes
        prof_assumed = (ideal_profile(config.n_tx, config.n_rx, config.n_users)
                        if alg == "non_robust" else profile)
        u = receive_beamformer(channels.G, prof_assumed, sol.R_x, config.sigma_radar2)

        def one_trial(args):
            hypo, t = args
            rng = stream(spec.seed, "roc", alg, hypo, t)
            ch_t = channels
            if spec.scenario == "extended" and hypo == "h1":
                # fluctuating extended target: fresh response each look
                G_t = make_trm(spec.target(), config.n_rx, config.n_tx,
                               rng=stream(spec.seed, "roc", "trm", t))
                ch_t = ChannelSet(H=channels.H, G=G_t, target=channels.target,
                                  seed=channels.seed)
            sig = sample_snapshot(sol, config, ch_t, profile, rng, n_snap=L,
                                  mode="midrise", target_present=(hypo == "h1"),
                                  bits=bits, loading=spec.loading)
            return detection_statistic(u, sig["y_bs_q"])

        t1 = np.array(_map(one_trial, [("h1", t) for t in range(n_trials)], threads))
        t0 = np.array(_map(one_trial, [("h0", t) for t in range(n_trials)], threads))

        pooled = np.sort(np.concatenate([t0, t1]))
        if pooled.size > 512:
            idx = np.unique(np.linspace(0, pooled.size - 1, 512).round().astype(int))
            pooled = pooled[idx]
        curve = []
        for tau in pooled:
            k_fa = int(np.sum(t0 > tau))
            k_d = int(np.sum(t1 > tau))
            fa_lo, fa_hi = wilson_interval(k_fa, n_trials)
            d_lo, d_hi = wilson_interval(k_d, n_trials)
            curve.append((float(tau), k_fa / n_trials, fa_lo, fa_hi,
                          k_d / n_trials, d_lo, d_hi))

        points = []
        for pfa in spec.pfa_grid:
            tau = float(np.quantile(t0, 1.0 - pfa))
            k_fa = int(np.sum(t0 > tau))
            k_d = int(np.sum(t1 > tau))
            fa_lo, fa_hi = wilson_interval(k_fa, n_trials)
            d_lo, d_hi = wilson_interval(k_d, n_trials)
            points.append((pfa, tau, k_fa / n_trials, fa_lo, fa_hi,
                           k_d / n_trials, d_lo, d_hi))
        out[alg] = {"curve": curve, "operating_points": points}
    return out


# ---------------------------------------------------------------------------
# design sweeps


def _sqinr_summary(sol):
    sq = np.asarray(sol.sqinr_per_user, dtype=float)
    if sq.size == 0 or np.all(sq <= 0):
        return float("nan"), float("nan")
    return float(lin_to_db(np.mean(sq))), float(lin_to_db(np.min(sq)))


def _row(axis, value, alg, sol=None, status="ok"):
    if sol is None:
        return {axis: value, "algorithm": alg, "status": status,
                "achieved_sqinr_db": float("nan"), "min_sqinr_db": float("nan"),
                "radar_sqnr_db": float("nan"), "iterations": 0}
    mean_db, min_db = _sqinr_summary(sol)
    return {axis: value, "algorithm": alg, "status": status,
            "achieved_sqinr_db": mean_db, "min_sqinr_db": min_db,
            "radar_sqnr_db": float(lin_to_db(sol.radar_sqnr)),
            "iterations": int(sol.solver_info.get("iterations", 0))}


def _config_at(config, axis, value):
    if axis == "gamma_db":
        return replace(config, gamma=np.full(config.n_users, db_to_lin(value)))
    if axis == "power_dbm":
        return replace(config, power=float(dbm_to_watt(value)))
    if axis == "n_tx":
        return replace(config, n_tx=int(value))
    if axis == "n_rx":
        return replace(config, n_rx=int(value))
    raise ConfigError(f"axis {axis!r} does not modify the system configuration")


def sweep(spec, config=None, conic_settings=None, mm_settings=None):
    """Solve each algorithm along the spec grid; one result row per point.

    gamma_db and power_dbm sweeps share one channel realization and reuse the
    previous solution as a warm start along the grid; antenna-count sweeps
    redraw channels at each size (same seed, so the run is reproducible).
    radar_only ignores the SQINR floors, so on a gamma_db sweep it is solved
    once and replicated.  Infeasible points are recorded, not raised.
    """
    config = config or SystemConfig()
    if not spec.grid:
        raise ConfigError("sweep grid must be nonempty")
    if spec.axis == "bits":
        raise ConfigError("bit-depth sweeps run through ee_sweep")
    resize = spec.axis in ("n_tx", "n_rx")
    if not resize:
        channels = generate_channels(config, spec.target(), spec.seed)
        bits = spec.bit_allocation(config)
        profile = build_profile(bits)

    rows = []
    for alg in spec.algorithms:
        warm = None
        radar_only_done = None
        for value in spec.grid:
            cfg = _config_at(config, spec.axis, value)
            if resize:
                channels = generate_channels(cfg, spec.target(), spec.seed)
                bits = spec.bit_allocation(cfg)
                profile = build_profile(bits)
                warm = None
            if alg == "radar_only" and spec.axis == "gamma_db" and radar_only_done is not None:
                rows.append(dict(radar_only_done, **{spec.axis: value}))
                continue
            try:
                sol = _solve_algorithm(alg, cfg, channels, profile,
                                       conic_settings=conic_settings,
                                       mm_settings=mm_settings,
                                       force_mm=spec.force_mm, warm=warm)
            except InfeasibleError:
                rows.append(_row(spec.axis, value, alg, status="infeasible"))
                warm = None
                continue
            warm = sol.solver_info.get("raw")
            row = _row(spec.axis, value, alg, sol)
            rows.append(row)
            if alg == "radar_only":
                radar_only_done = row
    return rows


def tradeoff_sweep(spec, config=None, conic_settings=None, mm_settings=None):
    """SQINR-floor sweep: the sensing/communication trade-off curve."""
    if spec.axis != "gamma_db":
        spec = replace(spec, axis="gamma_db")
    return sweep(spec, config=config, conic_settings=conic_settings,
                 mm_settings=mm_settings)


def ee_sweep(spec, config=None, power_model=None, conic_settings=None, mm_settings=None):
    """Energy efficiency versus a shared converter resolution.

    Every DAC and ADC in the link runs at the same depth b; the robust design
    is recomputed per depth and scored by sum rate over total consumed power.
    """
    config = config or SystemConfig()
    if not spec.grid:
        raise ConfigError("sweep grid must be nonempty")
    power_model = power_model or PowerModel()
    channels = generate_channels(config, spec.target(), spec.seed)
    rows = []
    warm = None
    for value in spec.grid:
        b = int(value)
        if b < 1:
            raise ConfigError("converter depth grid must be >= 1 bit")
        bits = BitAllocation.create(config.n_tx, config.n_rx, config.n_users,
                                    dac=b, adc_bs=b, adc_user=b)
        profile = build_profile(bits)
        try:
            sol = solve_robust(config, channels, profile,
                               conic_settings=conic_settings, mm_settings=mm_settings,
                               force_mm=spec.force_mm, warm=warm)
        except InfeasibleError:
            rows.append({"b": b, "EE": float("nan"), "status": "infeasible",
                         "rate_bits": float("nan"), "radar_sqnr_db": float("nan"),
                         "min_sqinr_db": float("nan"), "iterations": 0})
            warm = None
            continue
        warm = sol.solver_info.get("raw")
        ee = energy_efficiency(sol.sqinr_per_user, sol.radar_sqnr, config, bits, power_model)
        rate = (float(np.sum(np.log2(1.0 + np.asarray(sol.sqinr_per_user))))
                + float(np.log2(1.0 + sol.radar_sqnr)))
        _, min_db = _sqinr_summary(sol)
        rows.append({"b": b, "EE": float(ee), "status": "ok", "rate_bits": rate,
                     "radar_sqnr_db": float(lin_to_db(sol.radar_sqnr)),
                     "min_sqinr_db": min_db,
                     "iterations": int(sol.solver_info.get("iterations", 0))})
    return rows


# ---------------------------------------------------------------------------
# artifact writers


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def write_csv(path, header, rows):
    """Write rows with %.12g float formatting; deterministic byte-for-byte."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])
    return path


def git_describe():
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True, text=True, timeout=10,
        )
        if res.returncode == 0:
            return res.stdout.strip()
    except OSError:
        pass
    return "unknown"


def config_hash(doc):
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(out_dir, config_doc, seed, csv_paths):
    """Run manifest: config digest, seed, source version, output digests."""
    files = {}
    for p in csv_paths:
        with open(p, "rb") as fh:
            files[os.path.basename(p)] = hashlib.sha256(fh.read()).hexdigest()
    doc = {
        "config_sha256": config_hash(config_doc),
        "seed": int(seed),
        "git_describe": git_describe(),
        "package_version": __version__,
        "files": files,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


SWEEP_COLUMNS = ("algorithm", "status", "achieved_sqinr_db", "min_sqinr_db",
                 "radar_sqnr_db", "iterations")


def write_sweep_csvs(rows, axis, out_dir, prefix="sweep"):
    """One CSV per algorithm curve; grid order preserved."""
    paths = []
    algs = []
    for row in rows:
        if row["algorithm"] not in algs:
            algs.append(row["algorithm"])
    header = [axis] + [c for c in SWEEP_COLUMNS if c != "algorithm"]
    for alg in algs:
        body = [[row[axis]] + [row[c] for c in header[1:]]
                for row in rows if row["algorithm"] == alg]
        paths.append(write_csv(os.path.join(out_dir, f"{prefix}_{alg}.csv"), header, body))
    return paths


def write_roc_csvs(result, out_dir):
    paths = []
    for alg, tables in result.items():
        paths.append(write_csv(
            os.path.join(out_dir, f"roc_{alg}.csv"),
            ["threshold", "P_FA", "P_FA_lo", "P_FA_hi", "P_D", "P_D_lo", "P_D_hi"],
            tables["curve"],
        ))
        paths.append(write_csv(
            os.path.join(out_dir, f"roc_points_{alg}.csv"),
            ["P_FA_target", "threshold", "P_FA", "P_FA_lo", "P_FA_hi",
             "P_D", "P_D_lo", "P_D_hi"],
            tables["operating_points"],
        ))
    return paths


def write_ee_csv(rows, out_dir):
    header = ["b", "EE", "status", "rate_bits", "radar_sqnr_db", "min_sqinr_db", "iterations"]
    body = [[row[c] for c in header] for row in rows]
    return [write_csv(os.path.join(out_dir, "ee.csv"), header, body)]
