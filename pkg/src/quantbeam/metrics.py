"""Link-level performance metrics under the additive quantization noise model.

Conventions: V = [W_c, W_r] stacks the K communication columns and the
sensing columns; R_x = V V^H is the transmit covariance before the DACs.
A_t, A_r are the diagonal AQNM gain matrices of the DACs and the sensing
ADCs; alpha_user holds the user-side ADC gains.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError
from .quantization import INFINITE, bs_adc_noise_cov, dac_noise_cov


def covariance_rx(W_c, W_r):
    """Transmit covariance R_x = W_c W_c^H + W_r W_r^H."""
    R = np.zeros((W_c.shape[0] if W_c.size else W_r.shape[0],) * 2, dtype=complex)
    if W_c.size:
        R = R + W_c @ W_c.conj().T
    if W_r.size:
        R = R + W_r @ W_r.conj().T
    return R


def transmit_power(A_t, R_x):
    """Radiated power after the DACs.

    Equals Tr(A_t R_x A_t^H) + Tr(R_qt), which collapses to
    sum_n alpha_n [R_x]_nn.  Both forms are evaluated and must agree.
    """
    alpha = np.real(np.diag(np.asarray(A_t)))
    d = np.real(np.diag(R_x))
    simple = float(alpha @ d)
    full = float(np.real(np.trace(np.diag(alpha) @ R_x @ np.diag(alpha)))) + float(
        np.sum(alpha * (1.0 - alpha) * d)
    )
    if abs(simple - full) > 1e-9 * max(1.0, abs(simple)):
        raise AssertionError(f"transmit power forms disagree: {simple} vs {full}")
    return simple


def _user_terms(k, W_c, W_r, h_k, profile):
    """S (desired), T (total beam power at the user) and the DAC-noise term."""
    A_th = profile.alpha_t * h_k  # A_t^H h_k with real diagonal A_t
    S = abs(np.vdot(A_th, W_c[:, k])) ** 2
    T = float(np.sum(np.abs(W_c.conj().T @ A_th) ** 2))
    if W_r.size:
        T += float(np.sum(np.abs(W_r.conj().T @ A_th) ** 2))
    R_x_diag = np.sum(np.abs(W_c) ** 2, axis=1)
    if W_r.size:
        R_x_diag = R_x_diag + np.sum(np.abs(W_r) ** 2, axis=1)
    qt = float(np.sum(np.abs(h_k) ** 2 * profile.alpha_t * (1.0 - profile.alpha_t) * R_x_diag))
    return S, T, qt


def sqinr(k, W_c, W_r, h_k, profile, sigma_k2):
    """Post-ADC SQINR of user k, reduced form alpha S / (T + qt + sigma - alpha S)."""
    a_k = profile.alpha_user[k]
    S, T, qt = _user_terms(k, W_c, W_r, h_k, profile)
    den = T + qt + sigma_k2 - a_k * S
    return a_k * S / den


def sqinr_direct(k, W_c, W_r, h_k, profile, sigma_k2):
    """Same quantity assembled term by term from the AQNM signal decomposition."""
    a_k = profile.alpha_user[k]
    S, T, qt = _user_terms(k, W_c, W_r, h_k, profile)
    r_k = T + qt + sigma_k2  # pre-ADC received power
    num = a_k**2 * S
    den = a_k**2 * (T - S) + a_k**2 * qt + a_k**2 * sigma_k2 + a_k * (1.0 - a_k) * r_k
    return num / den


def sqinr_all(W_c, W_r, H, profile, sigma_user2):
    return np.array(
        [sqinr(k, W_c, W_r, H[k], profile, sigma_user2[k]) for k in range(H.shape[0])]
    )


def sqinr_ceiling(alpha_k):
    """Supremum of the user SQINR over all designs: alpha / (1 - alpha)."""
    return np.inf if alpha_k >= 1.0 else alpha_k / (1.0 - alpha_k)


def radar_covariances(G, A_t, A_r, R_x, R_qt, sigma_r2):
    """Pre-ADC covariance R_ybs and post-ADC disturbance covariance Q."""
    n_rx = G.shape[0]
    R_ybs = G @ (A_t @ R_x @ A_t.conj().T + R_qt) @ G.conj().T + sigma_r2 * np.eye(n_rx)
    R_qr = bs_adc_noise_cov(A_r, R_ybs)
    Q = (
        A_r @ G @ R_qt @ G.conj().T @ A_r.conj().T
        + sigma_r2 * A_r @ A_r.conj().T
        + R_qr
    )
    return R_ybs, Q


def radar_signal_cov(G, profile, R_x):
    """Mean-gain target return covariance A_r G A_t R_x A_t^H G^H A_r^H."""
    A_t, A_r = profile.A_t, profile.A_r
    M = A_r @ G @ A_t
    return M @ R_x @ M.conj().T


def radar_sqnr_max(G, profile, R_x, sigma_r2):
    """Radar output SQNR with the optimal linear receive filter, Tr(S Q^{-1})."""
    A_t, A_r = profile.A_t, profile.A_r
    R_qt = dac_noise_cov(A_t, R_x)
    _, Q = radar_covariances(G, A_t, A_r, R_x, R_qt, sigma_r2)
    S = radar_signal_cov(G, profile, R_x)
    return float(np.real(np.trace(linalg.solve(Q, S, assume_a="pos"))))


def radar_snr_ideal(G, R_x, sigma_r2):
    """Sensing SNR with infinite-resolution converters, Tr(G R_x G^H) / sigma_r2."""
    return float(np.real(np.trace(G @ R_x @ G.conj().T))) / sigma_r2


def receive_beamformer(G, profile, R_x, sigma_r2):
    """Unit-norm u maximizing u^H S u / u^H Q u (principal generalized eigenvector)."""
    A_t, A_r = profile.A_t, profile.A_r
    R_qt = dac_noise_cov(A_t, R_x)
    _, Q = radar_covariances(G, A_t, A_r, R_x, R_qt, sigma_r2)
    S = radar_signal_cov(G, profile, R_x)
    w, v = linalg.eigh(S, Q)
    u = v[:, -1]
    return u / np.linalg.norm(u)


# ---------------------------------------------------------------------------
# point-target closed forms (uniform DACs)


def point_target_factors(R_x, alpha_t, eta, a, b, alpha_r, sigma_r2):
    """Scalars of the rank-one radar chain: zeta, eps, diag(B) and g.

    zeta = alpha_t^2 a^H R_x a is the coherent return power, eps the DAC-noise
    leakage alpha_t (1 - alpha_t) Tr(R_x); B is the diagonal part of the
    whitening matrix and g = sum_i alpha_r_i / B_ii.
    """
    eta2 = abs(eta) ** 2
    zeta = float(np.real(alpha_t**2 * np.vdot(a, R_x @ a)))
    eps = float(alpha_t * (1.0 - alpha_t) * np.real(np.trace(R_x)))
    B = eta2 * (zeta + eps) * (1.0 - alpha_r) + sigma_r2
    g = float(np.sum(alpha_r / B))
    return zeta, eps, B, g


def point_q_inverse(R_x, alpha_t, eta, a, b, alpha_r, sigma_r2):
    """Closed-form Q^{-1} for the point target via a rank-one update.

    Q = A_r (|eta|^2 eps b b^H A_r + B) with diagonal B, so one
    Sherman-Morrison step inverts it.
    """
    eta2 = abs(eta) ** 2
    zeta, eps, B, g = point_target_factors(R_x, alpha_t, eta, a, b, alpha_r, sigma_r2)
    Binv_b = b / B
    denom = 1.0 + eta2 * eps * g
    M_inv = np.diag(1.0 / B) - (eta2 * eps / denom) * np.outer(Binv_b, (alpha_r * Binv_b).conj())
    return M_inv @ np.diag(1.0 / alpha_r)


def point_radar_sqnr(R_x, alpha_t, eta, a, b, alpha_r, sigma_r2, power=None, tol=1e-6):
    """Closed-form radar SQNR |eta|^2 zeta / (1/g + |eta|^2 eps).

    The scalarization substitutes Tr(R_x) = P/alpha_t (power constraint
    active); pass power to enforce that precondition instead of silently
    evaluating off the constraint surface.
    """
    if power is not None:
        used = alpha_t * float(np.real(np.trace(R_x)))
        if abs(used - power) > tol * power:
            raise ConfigError(
                f"closed form needs an active power constraint: alpha_t tr(R_x) = "
                f"{used:.6g} but the budget is {power:.6g}")
    eta2 = abs(eta) ** 2
    zeta, eps, B, g = point_target_factors(R_x, alpha_t, eta, a, b, alpha_r, sigma_r2)
    return eta2 * zeta / (1.0 / g + eta2 * eps)


# ---------------------------------------------------------------------------
# energy efficiency


@dataclass
class PowerModel:
    """Hardware power draw model (watts).

    Converter power doubles per bit: P_DAC(b) = c_dac 2^b and likewise for
    ADCs; each chain carries two converters (I and Q rails).  kappa is the
    power amplifier efficiency.
    """

    p_lo: float = 22.5e-3
    p_rf: float = 31.6e-3
    c_dac: float = 0.5e-3
    c_adc: float = 0.5e-3
    kappa: float = 0.39

    def dac_power(self, bits):
        return self.c_dac * 2.0 ** np.asarray(bits, dtype=float)

    def adc_power(self, bits):
        return self.c_adc * 2.0 ** np.asarray(bits, dtype=float)

    def bs_power(self, bits, power):
        """Base station draw: LO, per-chain RF and converters, PA feed."""
        if np.any(np.isinf(bits.dac)) or np.any(np.isinf(bits.adc_bs)):
            return np.inf
        n_tx, n_rx = bits.dac.size, bits.adc_bs.size
        return (
            self.p_lo
            + n_tx * self.p_rf
            + 2.0 * float(np.sum(self.dac_power(bits.dac)))
            + n_rx * self.p_rf
            + 2.0 * float(np.sum(self.adc_power(bits.adc_bs)))
            + power / self.kappa
        )

    def ue_power(self, bits_user):
        if np.isinf(bits_user):
            return np.inf
        return self.p_lo + self.p_rf + 2.0 * float(self.adc_power(bits_user))


def energy_efficiency(gammas, gamma_r, config, bits, power_model):
    """Sum rate (communication plus sensing) divided by total consumed power."""
    rate = float(np.sum(np.log2(1.0 + np.asarray(gammas)))) + float(np.log2(1.0 + gamma_r))
    total = power_model.bs_power(bits, config.power)
    for k in range(config.n_users):
        total += power_model.ue_power(bits.adc_user[k])
    return rate / total


# ---------------------------------------------------------------------------
# solution container


@dataclass
class BeamformingSolution:
    """Designed beamformers plus the metrics evaluated at design time.

    R_x caches covariance_rx(W_c, W_r); validate() recomputes it and the
    stored metrics to guard against stale fields.
    """

    W_c: np.ndarray
    W_r: np.ndarray
    R_x: np.ndarray
    objective_value: float
    sqinr_per_user: np.ndarray
    radar_sqnr: float
    solver_info: dict = field(default_factory=dict)

    def validate(self, tol=1e-10):
        R = covariance_rx(self.W_c, self.W_r)
        err = np.max(np.abs(R - self.R_x)) if R.size else 0.0
        if err > tol * max(1.0, float(np.max(np.abs(R)))):
            raise AssertionError(f"cached R_x is stale (max deviation {err:.3e})")
        return True

    def to_json(self):
        def c2j(M):
            M = np.asarray(M)
            # every complex entry becomes a [re, im] pair
            return np.stack([np.real(M), np.imag(M)], axis=-1).tolist()

        return {
            "W_c": c2j(self.W_c),
            "W_r": c2j(self.W_r),
            "R_x": c2j(self.R_x),
            "objective_value": self.objective_value,
            "sqinr_per_user": np.asarray(self.sqinr_per_user, dtype=float).tolist(),
            "radar_sqnr": self.radar_sqnr,
            "solver_info": _jsonable(self.solver_info),
        }

    @classmethod
    def from_json(cls, obj):
        def j2c(entries):
            arr = np.asarray(entries, dtype=float)
            if arr.size == 0:
                return arr.astype(complex)
            return arr[..., 0] + 1j * arr[..., 1]

        return cls(
            W_c=j2c(obj["W_c"]),
            W_r=j2c(obj["W_r"]),
            R_x=j2c(obj["R_x"]),
            objective_value=obj["objective_value"],
            sqinr_per_user=np.asarray(obj["sqinr_per_user"], dtype=float),
            radar_sqnr=obj["radar_sqnr"],
            solver_info=obj.get("solver_info", {}),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
