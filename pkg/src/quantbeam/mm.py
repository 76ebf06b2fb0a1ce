"""Majorization-minimization for the general (extended-target / mixed-DAC) design.

Direct beamformer variables V = [W_c, W_r] (N_T x (K + N_T)).  The radar
objective f(V) = Tr(X Z^{-1} X^H), with X = V^H A_t^H G^H A_r^H and Z the
quantization-plus-noise covariance built from R_x = V V^H, is neither convex
nor concave.  Each MM step maximizes the tangent minorant of the jointly
convex map (X, Z) -> Tr(X Z^{-1} X^H):

    g(V) = 2 Re Tr(Z_m^{-1} X_m^H X(V)) - Tr(C_m Z(V)),
    C_m  = Z_m^{-1} X_m^H X_m Z_m^{-1},

which touches f at V_m and never exceeds it.  Both terms are quadratic in V
with PSD curvature: Tr(C_m Z(V)) = Tr(V^H M V) + const with M assembled in
closed form below, so the subproblem is an SOCP (linear objective, an
epigraph cone for the quadratic, per-user SQINR cones, one power cone) that
the conic engine solves.  The SQINR cones restrict h_k^H A_t v_k to be real
nonnegative, which is lossless only at points already aligned that way, so
every iteration starts by phase-rotating the communication columns; the
rotation changes neither f nor any true constraint.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import conic
from .channel import PointTarget, steering_tx
from .conic import Cones, ConicProblem, ConicSettings
from .errors import ConfigError, InfeasibleError, SolverError
from .metrics import (
    BeamformingSolution,
    covariance_rx,
    radar_sqnr_max,
    sqinr_all,
    sqinr_ceiling,
    transmit_power,
)


@dataclass
class MMSettings:
    eps_mm: float = 1e-4
    max_iters: int = 50
    conic: ConicSettings = field(default_factory=ConicSettings)


@dataclass
class MMState:
    """Current iterate and the frozen quantities the surrogate needs."""

    V: np.ndarray
    X_m: np.ndarray
    Z_m: np.ndarray
    f_m: float
    iteration: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        w = np.linalg.eigvalsh(self.Z_m)
        if w[0] <= 0:
            raise SolverError(f"disturbance covariance lost positive definiteness (min eig {w[0]:.3e})")


def mm_matrices(V, G, profile, sigma_r2):
    """(X, Z) at V: the numerator factor and the disturbance covariance."""
    alpha_t, alpha_r = profile.alpha_t, profile.alpha_r
    R_diag = np.sum(np.abs(V) ** 2, axis=1)
    t_t = alpha_t * (1.0 - alpha_t)
    qt_diag = t_t * R_diag
    GA = G * alpha_t[None, :]  # G A_t
    AGA = GA * alpha_r[:, None]  # A_r G A_t
    X = V.conj().T @ AGA.conj().T
    # Z = A_r G R_qt G^H A_r^H + sigma_r2 A_r A_r^H + A_r (I - A_r) diag(R_ybs)
    ArG = G * alpha_r[:, None]
    Z = (ArG * qt_diag[None, :]) @ ArG.conj().T + sigma_r2 * np.diag(alpha_r**2)
    ybs_diag = (
        np.sum(np.abs(GA @ V) ** 2, axis=1)
        + np.sum(np.abs(G) ** 2 * qt_diag[None, :], axis=1)
        + sigma_r2
    )
    Z += np.diag(alpha_r * (1.0 - alpha_r) * np.real(ybs_diag))
    return X, 0.5 * (Z + Z.conj().T)


def objective_f(V, G, profile, sigma_r2):
    """Radar SQNR Tr(X Z^{-1} X^H) at the beamformer V."""
    X, Z = mm_matrices(V, G, profile, sigma_r2)
    return float(np.real(np.trace(X @ scipy.linalg.solve(Z, X.conj().T, assume_a="pos"))))


def make_state(V, G, profile, sigma_r2, iteration=0, history=None):
    X, Z = mm_matrices(V, G, profile, sigma_r2)
    f = float(np.real(np.trace(X @ scipy.linalg.solve(Z, X.conj().T, assume_a="pos"))))
    return MMState(V=V, X_m=X, Z_m=Z, f_m=f, iteration=iteration, history=history or [])


def surrogate_g(V, state, G, profile, sigma_r2):
    """Minorant value at V.  Touches f at state.V and never exceeds f."""
    X, Z = mm_matrices(V, G, profile, sigma_r2)
    Zi_XmH = scipy.linalg.solve(state.Z_m, state.X_m.conj().T, assume_a="pos")
    lin = 2.0 * float(np.real(np.trace(Zi_XmH @ X)))
    C_m = Zi_XmH @ Zi_XmH.conj().T
    return lin - float(np.real(np.trace(C_m @ Z)))


def surrogate_terms(state, G, profile, sigma_r2):
    """Closed-form pieces of g: linear coefficient, curvature M, constant.

    g(V) = 2 Re Tr(C_lin V^H) - Tr(V^H M V) - const with M PSD.
    """
    alpha_t, alpha_r = profile.alpha_t, profile.alpha_r
    t_t = alpha_t * (1.0 - alpha_t)
    t_r = alpha_r * (1.0 - alpha_r)
    Zi_XmH = scipy.linalg.solve(state.Z_m, state.X_m.conj().T, assume_a="pos")
    C_m = Zi_XmH @ Zi_XmH.conj().T
    AGA = (G * alpha_t[None, :]) * alpha_r[:, None]
    C_lin = AGA.conj().T @ Zi_XmH

    w = np.real(np.diag(C_m)) * t_r
    GA = G * alpha_t[None, :]
    # DAC-noise coupling through the receiver: diagonal in the chain index
    d1 = t_t * np.real(np.diag(G.conj().T @ (C_m * (alpha_r[:, None] * alpha_r[None, :])) @ G))
    # ADC-noise coupling: one dense quadratic piece plus a diagonal one
    M2 = GA.conj().T @ (w[:, None] * GA)
    d3 = t_t * np.real(np.sum(w[:, None] * np.abs(G) ** 2, axis=0))
    M_total = M2 + np.diag(d1 + d3)
    const = sigma_r2 * float(np.real(np.trace(C_m @ np.diag(alpha_r**2)))) + sigma_r2 * float(np.sum(w))
    return C_lin, 0.5 * (M_total + M_total.conj().T), const


def _align_phases(V, H, profile, n_users):
    """Rotate communication columns so h_k^H A_t v_k is real nonnegative."""
    V = V.copy()
    for k in range(n_users):
        c = np.vdot(profile.alpha_t * H[k], V[:, k])
        if abs(c) > 0:
            V[:, k] *= c.conjugate() / abs(c)
    return V


def build_subproblem(state, config, channels, profile, feasibility=False):
    """Real SOCP encoding of the surrogate maximization.

    Variable layout: per column j of V, Re v_j then Im v_j (n_tx each);
    one trailing scalar (the quadratic epigraph t, or the feasibility margin).
    Cones: K user SQINR cones, the power cone, and the epigraph cone
    ||(t-1, 2 F V)|| <= t+1 for Tr(V^H M V) <= t (skipped in feasibility
    mode).  F keeps a fixed n_tx rows (zero-padded) so warm starts carry
    across iterations.
    """
    nt, K = config.n_tx, config.n_users
    J = K + nt
    nV = 2 * nt * J
    n = nV + 1

    def re_sl(j):
        return slice(2 * j * nt, (2 * j + 1) * nt)

    def im_sl(j):
        return slice((2 * j + 1) * nt, (2 * j + 2) * nt)

    rows, cols, vals, b_list = [], [], [], []
    soc_dims = []
    r_ptr = 0

    def add_row(entries, bval):
        nonlocal r_ptr
        for cidx, v in entries:
            if v != 0.0:
                rows.append(r_ptr)
                cols.append(cidx)
                vals.append(v)
        b_list.append(bval)
        r_ptr += 1

    def vec_entries(sl, vec):
        start = sl.start
        return [(start + i, vec[i]) for i in range(len(vec)) if vec[i] != 0.0]

    for k in range(K):
        h_t = profile.alpha_t * channels.H[k]
        lhs = np.sqrt(profile.alpha_user[k] * (1.0 + 1.0 / config.gamma[k]))
        # s0 = lhs * Re(h_t^H v_k) (- margin in feasibility mode)
        ent = vec_entries(re_sl(k), -lhs * np.real(h_t)) + vec_entries(im_sl(k), -lhs * np.imag(h_t))
        if feasibility:
            ent.append((n - 1, 1.0))
        add_row(ent, 0.0)
        dim = 1
        for j in range(J):
            # Re and Im of v_j^H h_t
            add_row(
                vec_entries(re_sl(j), -np.real(h_t)) + vec_entries(im_sl(j), -np.imag(h_t)), 0.0
            )
            add_row(
                vec_entries(re_sl(j), -np.imag(h_t)) + vec_entries(im_sl(j), np.real(h_t)), 0.0
            )
            dim += 2
        c_dac = np.sqrt(profile.alpha_t * (1.0 - profile.alpha_t)) * np.abs(channels.H[k])
        for i in np.nonzero(c_dac > 0)[0]:
            for j in range(J):
                add_row([(re_sl(j).start + i, -c_dac[i])], 0.0)
                add_row([(im_sl(j).start + i, -c_dac[i])], 0.0)
                dim += 2
        add_row([], float(np.sqrt(config.sigma_user2[k])))
        dim += 1
        soc_dims.append(dim)

    # power cone: sqrt(P) >= sqrt(alpha_t) |V| entrywise
    add_row([], float(np.sqrt(config.power)))
    sq = np.sqrt(profile.alpha_t)
    for j in range(J):
        for i in range(nt):
            add_row([(re_sl(j).start + i, -sq[i])], 0.0)
            add_row([(im_sl(j).start + i, -sq[i])], 0.0)
    soc_dims.append(1 + 2 * nt * J)

    C_lin = None
    const = 0.0
    if not feasibility:
        C_lin, M, const = surrogate_terms(state, channels.G, profile, config.sigma_radar2)
        w_eig, U = np.linalg.eigh(M)
        w_eig = np.clip(w_eig, 0.0, None)
        F = (np.sqrt(w_eig)[:, None] * U.conj().T)  # nt x nt, zero rows allowed
        add_row([(n - 1, -1.0)], 1.0)  # t + 1
        add_row([(n - 1, -1.0)], -1.0)  # t - 1
        for i in range(nt):
            fr, fi = np.real(F[i]), np.imag(F[i])
            if not (np.any(fr) or np.any(fi)):
                for j in range(J):
                    add_row([], 0.0)
                    add_row([], 0.0)
                continue
            for j in range(J):
                add_row(vec_entries(re_sl(j), -2.0 * fr) + vec_entries(im_sl(j), 2.0 * fi), 0.0)
                add_row(vec_entries(re_sl(j), -2.0 * fi) + vec_entries(im_sl(j), -2.0 * fr), 0.0)
        soc_dims.append(2 + 2 * nt * J)

    A = sp.csc_matrix((vals, (rows, cols)), shape=(r_ptr, n))
    b = np.asarray(b_list)
    c = np.zeros(n)
    if feasibility:
        c[n - 1] = -1.0  # maximize the margin
    else:
        for j in range(J):
            c[re_sl(j)] = -2.0 * np.real(C_lin[:, j])
            c[im_sl(j)] = -2.0 * np.imag(C_lin[:, j])
        c[n - 1] = 1.0
    problem = ConicProblem(c=c, A=A, b=b, cones=Cones(soc=tuple(soc_dims)))
    meta = {"nt": nt, "J": J, "const": const, "feasibility": feasibility}
    return problem, meta


def extract_v(x, meta):
    nt, J = meta["nt"], meta["J"]
    V = np.empty((nt, J), dtype=complex)
    for j in range(J):
        V[:, j] = x[2 * j * nt : (2 * j + 1) * nt] + 1j * x[(2 * j + 1) * nt : (2 * j + 2) * nt]
    return V


def initialize(config, channels, profile, settings=None):
    """Feasible starting beamformer.

    Matched-filter communication columns with a bisected power split against
    an isotropic-ish sensing block; falls back to a feasibility SOCP when the
    heuristic cannot meet the targets, and raises InfeasibleError (with the
    achieved margin) when nothing can.
    """
    st = settings or MMSettings()
    nt, K = config.n_tx, config.n_users
    for k in range(K):
        cap = sqinr_ceiling(profile.alpha_user[k])
        if config.gamma[k] >= cap:
            raise InfeasibleError(
                f"user {k}: SQINR target {config.gamma[k]:.4g} is at or above the "
                f"quantizer ceiling alpha/(1-alpha) = {cap:.4g}"
            )
    P_tr = config.power  # budget on sum alpha_t |V|^2

    # sensing directions: right singular basis of A_r G A_t, power ~ sigma_i^2
    AGA = (channels.G * profile.alpha_t[None, :]) * profile.alpha_r[:, None]
    _, sv, Vh = np.linalg.svd(AGA)
    p_rad_shape = np.zeros(nt)
    p_rad_shape[: sv.size] = sv**2
    if p_rad_shape.sum() <= 0:
        p_rad_shape[:] = 1.0
    p_rad_shape /= p_rad_shape.sum()

    dirs = np.zeros((nt, K), dtype=complex)
    cost = np.ones(K)  # per-unit-power column cost sum alpha_t |dir|^2
    for k in range(K):
        h_t = profile.alpha_t * channels.H[k]
        dirs[:, k] = h_t / np.linalg.norm(h_t)
        cost[k] = float(profile.alpha_t @ np.abs(dirs[:, k]) ** 2)

    def radar_block(frac):
        frac = max(frac, 0.0)
        W_r = np.zeros((nt, nt), dtype=complex)
        for i in range(nt):
            d = Vh[i] if i < Vh.shape[0] else np.eye(nt)[i]
            denom = float(profile.alpha_t @ np.abs(d) ** 2)
            if denom > 0:
                W_r[:, i] = d * np.sqrt(frac * P_tr * p_rad_shape[i] / denom)
        return W_r

    def build(nu):
        # nu = fraction of the power budget spent on communication columns;
        # a few fixed-point rounds share it according to per-user need
        p_user = np.full(K, nu * P_tr / K)
        W_c = dirs * np.sqrt(p_user / cost)
        for _ in range(6):
            W_r = radar_block(1.0 - p_user.sum() / P_tr)
            g = sqinr_all(W_c, W_r, channels.H, profile, config.sigma_user2)
            p_user = p_user * np.clip(config.gamma / np.maximum(g, 1e-12), 0.2, 5.0)
            if p_user.sum() > nu * P_tr:
                p_user *= nu * P_tr / p_user.sum()
            W_c = dirs * np.sqrt(p_user / cost)
        return W_c, radar_block(1.0 - p_user.sum() / P_tr)

    def feasible(nu):
        W_c, W_r = build(nu)
        g = sqinr_all(W_c, W_r, channels.H, profile, config.sigma_user2)
        return bool(np.all(g >= config.gamma)), W_c, W_r

    if K == 0:
        return radar_block(1.0)

    lo, hi = 0.0, 1.0
    ok_hi, W_c, W_r = feasible(hi)
    if ok_hi:
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            ok, Wc_m, Wr_m = feasible(mid)
            if ok:
                hi, W_c, W_r = mid, Wc_m, Wr_m
            else:
                lo = mid
        return _align_phases(np.hstack([W_c, W_r]), channels.H, profile, K)

    # heuristic failed: ask the feasibility SOCP for a point (margin maximal)
    problem, meta = build_subproblem(None, config, channels, profile, feasibility=True)
    sol = conic.solve(problem, st.conic)
    if sol.status != "optimal":
        raise SolverError(f"feasibility probe ended with status {sol.status!r}")
    margin = -sol.pobj
    if margin < -1e-9 * max(1.0, float(np.max(np.sqrt(config.sigma_user2), initial=0.0))):
        raise InfeasibleError(
            f"SQINR floors unreachable: best achievable SOC margin {margin:.3e}"
        )
    return _align_phases(extract_v(sol.x, meta), channels.H, profile, K)


def _violation(V, config, channels, profile):
    """Max relative constraint violation (0 when feasible)."""
    K = config.n_users
    W_c, W_r = V[:, :K], V[:, K:]
    v = 0.0
    if K:
        g = sqinr_all(W_c, W_r, channels.H, profile, config.sigma_user2)
        v = float(np.max(np.maximum(0.0, (config.gamma - g) / config.gamma)))
    pw = transmit_power(profile.A_t, covariance_rx(W_c, W_r))
    return max(v, max(0.0, (pw - config.power) / config.power))


def run_mm(config, channels, profile, settings=None, V0=None, trace_path=None):
    """Full MM loop with monotone safeguard and optional iteration trace CSV.

    Stops when the relative objective gain drops below eps_mm or at
    max_iters.  A subproblem step that fails to improve f (possible only
    through finite subproblem tolerance) is rejected; one retry at tighter
    tolerance is attempted before stopping.
    """
    st = settings or MMSettings()
    t_start = time.perf_counter()
    V = initialize(config, channels, profile, st) if V0 is None else np.asarray(V0, dtype=complex)
    G, sig_r = channels.G, config.sigma_radar2
    state = make_state(V, G, profile, sig_r)
    trace = [(0, state.f_m, _violation(V, config, channels, profile), 0)]
    warm = None
    sub_iters_total = 0
    status = "max_iters"
    tightened = False

    m = 0
    while m < st.max_iters:
        m += 1
        V_al = _align_phases(state.V, channels.H, profile, config.n_users)
        state = make_state(V_al, G, profile, sig_r, iteration=state.iteration, history=state.history)
        problem, meta = build_subproblem(state, config, channels, profile)
        sub = conic.solve(problem, st.conic, warm=warm)
        if sub.status != "optimal":
            raise SolverError(f"MM subproblem ended with status {sub.status!r} at iteration {m}")
        sub_iters_total += sub.iterations
        V_new = extract_v(sub.x, meta)
        f_new = objective_f(V_new, G, profile, sig_r)

        if f_new < state.f_m:
            if tightened:
                status = "converged"
                trace.append((m, state.f_m, _violation(state.V, config, channels, profile), sub.iterations))
                break
            # solver-precision stall: one retry at a tighter subproblem tolerance
            tightened = True
            st = MMSettings(
                eps_mm=st.eps_mm,
                max_iters=st.max_iters,
                conic=ConicSettings(
                    **{**st.conic.__dict__, "eps_abs": st.conic.eps_abs / 100.0, "eps_rel": st.conic.eps_rel / 100.0}
                ),
            )
            m -= 1
            continue

        warm = sub
        gain = f_new - state.f_m
        state = make_state(V_new, G, profile, sig_r, iteration=m, history=state.history)
        trace.append((m, state.f_m, _violation(V_new, config, channels, profile), sub.iterations))
        if gain <= st.eps_mm * max(1.0, abs(f_new)):
            status = "converged"
            break

    V = _align_phases(state.V, channels.H, profile, config.n_users)
    # exact power use: scaling up never hurts f and keeps the SQINR cones satisfied
    K = config.n_users
    W_c, W_r = V[:, :K].copy(), V[:, K:].copy()
    pw = transmit_power(profile.A_t, covariance_rx(W_c, W_r))
    scale = np.sqrt(config.power / pw)
    W_c *= scale
    W_r *= scale
    R_x = covariance_rx(W_c, W_r)
    f_final = objective_f(np.hstack([W_c, W_r]), G, profile, sig_r)

    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iter", "objective", "max_violation", "subproblem_iters"])
            for row in trace:
                wr.writerow([row[0], f"{row[1]:.12g}", f"{row[2]:.12g}", row[3]])

    info = {
        "solver": "mm",
        "status": status,
        "iterations": len(trace) - 1,
        "subproblem_iterations": sub_iters_total,
        "trace": trace,
        "solve_time": time.perf_counter() - t_start,
        "power_scale": scale**2,
    }
    return BeamformingSolution(
        W_c=W_c,
        W_r=W_r,
        R_x=R_x,
        objective_value=f_final,
        sqinr_per_user=sqinr_all(W_c, W_r, channels.H, profile, config.sigma_user2),
        radar_sqnr=f_final,
        solver_info=info,
    )
