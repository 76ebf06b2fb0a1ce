"""Additive quantization noise model (AQNM) and a concrete mid-rise quantizer.

A b-bit converter with distortion factor beta = beta(b) is modeled as

    q(z) = (1 - beta) z + e,   E{e e^H} = alpha (1 - alpha) diag(Cov z),

with alpha = 1 - beta.  beta(b) is the normalized MSE of the optimal scalar
(Lloyd-Max) quantizer for a Gaussian input: tabulated for b <= 5, and
(sqrt(3) pi / 2) 4^-b beyond.  Infinite resolution is the explicit value
INFINITE (beta = 0 exactly, never a rounded large-b stand-in).

The mid-rise uniform quantizer at the bottom of the module is the
*non-idealized* hardware stand-in used by simulations to check how well the
AQNM predictions transfer.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .errors import ConfigError

INFINITE = float("inf")

# normalized Lloyd-Max MSE for a unit-variance Gaussian input
LLOYD_MAX_BETA = {1: 0.3634, 2: 0.1175, 3: 0.03454, 4: 0.009497, 5: 0.002499}


def distortion_factor(bits):
    """Normalized quantization MSE beta(b) for one converter.

    bits must be a positive integer or INFINITE.  For b > 5 the asymptotic
    law (sqrt(3) pi / 2) 2^(-2b) applies.
    """
    b = float(bits)
    if b == INFINITE:
        return 0.0
    if b < 1 or b != int(b) or not math.isfinite(b):
        raise ConfigError(f"bit depth must be a positive integer or INFINITE, got {bits!r}")
    b = int(b)
    if b <= 5:
        return LLOYD_MAX_BETA[b]
    return (math.sqrt(3.0) * math.pi / 2.0) * 2.0 ** (-2 * b)


def distortion_factors(bits):
    """Vectorized distortion_factor."""
    return np.array([distortion_factor(b) for b in np.atleast_1d(np.asarray(bits, dtype=float))])


def _as_bits_array(bits, n, name):
    arr = np.atleast_1d(np.asarray(bits, dtype=float))
    if arr.size == 1:
        arr = np.full(n, arr[0])
    if arr.shape != (n,):
        raise ConfigError(f"{name} must be a scalar or length-{n} sequence, got shape {arr.shape}")
    for b in arr:
        distortion_factor(b)  # validates
    return arr


@dataclass
class BitAllocation:
    """Per-converter bit depths for the transmit DACs, sensing ADCs and user ADCs."""

    dac: np.ndarray
    adc_bs: np.ndarray
    adc_user: np.ndarray

    @classmethod
    def create(cls, n_tx, n_rx, n_users, dac=3, adc_bs=3, adc_user=3):
        return cls(
            dac=_as_bits_array(dac, n_tx, "dac"),
            adc_bs=_as_bits_array(adc_bs, n_rx, "adc_bs"),
            adc_user=_as_bits_array(adc_user, n_users, "adc_user"),
        )

    def __post_init__(self):
        self.dac = _as_bits_array(self.dac, len(np.atleast_1d(self.dac)), "dac")
        self.adc_bs = _as_bits_array(self.adc_bs, len(np.atleast_1d(self.adc_bs)), "adc_bs")
        self.adc_user = _as_bits_array(self.adc_user, len(np.atleast_1d(self.adc_user)), "adc_user")

    def uniform_dac(self):
        """True when all transmit DACs share one bit depth."""
        return bool(np.all(self.dac == self.dac[0])) if self.dac.size else True


@dataclass
class QuantizationProfile:
    """AQNM gains alpha = 1 - beta for every converter in the link."""

    alpha_t: np.ndarray  # transmit DACs, length n_tx
    alpha_r: np.ndarray  # sensing receiver ADCs, length n_rx
    alpha_user: np.ndarray  # user ADCs, length n_users

    def __post_init__(self):
        self.alpha_t = np.asarray(self.alpha_t, dtype=float)
        self.alpha_r = np.asarray(self.alpha_r, dtype=float)
        self.alpha_user = np.asarray(self.alpha_user, dtype=float)
        for name in ("alpha_t", "alpha_r", "alpha_user"):
            a = getattr(self, name)
            if a.size and not (np.all(a > 0) and np.all(a <= 1)):
                raise ConfigError(f"{name} entries must lie in (0, 1]")

    @property
    def A_t(self):
        return np.diag(self.alpha_t)

    @property
    def A_r(self):
        return np.diag(self.alpha_r)

    def uniform_dac(self):
        return bool(np.all(self.alpha_t == self.alpha_t[0])) if self.alpha_t.size else True


def build_profile(bits):
    """AQNM gain profile for a BitAllocation."""
    return QuantizationProfile(
        alpha_t=1.0 - distortion_factors(bits.dac),
        alpha_r=1.0 - distortion_factors(bits.adc_bs),
        alpha_user=1.0 - distortion_factors(bits.adc_user),
    )


def ideal_profile(n_tx, n_rx, n_users):
    """All-ones profile: what a quantization-unaware design assumes."""
    return QuantizationProfile(np.ones(n_tx), np.ones(n_rx), np.ones(n_users))


def dac_noise_cov(A_t, R_x):
    """DAC quantization noise covariance A_t (I - A_t) diag(R_x).

    Diagonal by the per-converter independence of the AQNM error terms; the
    result is returned as a real matrix.
    """
    alpha = np.diag(np.asarray(A_t))
    return np.diag(alpha * (1.0 - alpha) * np.real(np.diag(R_x)))


def bs_adc_noise_cov(A_r, R_ybs):
    """Sensing ADC noise covariance A_r (I - A_r) diag(R_ybs)."""
    alpha = np.diag(np.asarray(A_r))
    return np.diag(alpha * (1.0 - alpha) * np.real(np.diag(R_ybs)))


def user_adc_noise_var(alpha_k, r_k):
    """Scalar ADC noise variance alpha (1 - alpha) r for one user."""
    return alpha_k * (1.0 - alpha_k) * np.real(r_k)


def draw_aqnm_noise(rng, variances, n_snap):
    """Circularly symmetric Gaussian noise with the given per-entry variances.

    Shape (len(variances), n_snap).  Used by the AQNM-mode signal sampler.
    """
    v = np.asarray(variances, dtype=float)
    if np.any(v < 0):
        raise ValueError("noise variances must be nonnegative")
    scale = np.sqrt(v / 2.0)[:, None]
    return scale * (
        rng.standard_normal((v.size, n_snap)) + 1j * rng.standard_normal((v.size, n_snap))
    )


# ---------------------------------------------------------------------------
# mid-rise uniform quantizer


def _gauss_cell_mse(lo, hi, c):
    """E{(x - c)^2 ; lo < x < hi} for x ~ N(0,1), via erf partial moments."""
    Phi = lambda t: 0.5 * (1.0 + special.erf(t / math.sqrt(2.0)))
    phi = lambda t: np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    p = Phi(hi) - Phi(lo)
    ex = phi(lo) - phi(hi)
    # E{x^2; cell}: integrate by parts; t*phi(t) -> 0 at +-inf
    lo_f = np.where(np.isfinite(lo), lo, 0.0)
    hi_f = np.where(np.isfinite(hi), hi, 0.0)
    ex2 = p + lo_f * phi(lo_f) * np.isfinite(lo) - hi_f * phi(hi_f) * np.isfinite(hi)
    return ex2 - 2.0 * c * ex + c * c * p


def uniform_quantizer_mse(bits, loading):
    """Normalized MSE of a mid-rise uniform quantizer on a unit Gaussian.

    loading is the clip point in standard deviations; the step is
    2 * loading / 2^bits.
    """
    b = int(bits)
    n = 2**b
    delta = 2.0 * loading / n
    edges = np.concatenate(([-np.inf], (np.arange(1, n) - n / 2) * delta, [np.inf]))
    centers = (np.arange(n) - n / 2 + 0.5) * delta
    return float(np.sum(_gauss_cell_mse(edges[:-1], edges[1:], centers)))


@lru_cache(maxsize=None)
def calibrated_loading(bits):
    """Clip point minimizing the uniform-quantizer MSE for a Gaussian input."""
    res = optimize.minimize_scalar(
        lambda L: uniform_quantizer_mse(bits, L), bounds=(0.5, 10.0), method="bounded",
        options={"xatol": 1e-10},
    )
    return float(res.x)


def midrise_quantize(z, bits, scale, loading=3.0):
    """Apply a complex mid-rise quantizer per chain.

    z has shape (n_chains, ...); bits and scale are scalars or per-chain
    vectors.  Each real component is quantized with step
    delta = 2 * loading * scale / 2^bits and clipped to the outermost level;
    a zero input maps to +delta/2 (no zero output level).  Chains with
    INFINITE bits pass through untouched.  loading may be the string
    "calibrated" to use the MSE-optimal clip point per bit depth.
    """
    z = np.asarray(z, dtype=complex)
    n = z.shape[0]
    bits_arr = _as_bits_array(bits, n, "bits")
    scale_arr = np.broadcast_to(np.asarray(scale, dtype=float), (n,)).astype(float)
    finite = np.array([b != INFINITE for b in bits_arr])
    if np.any(scale_arr[finite] <= 0):
        raise ConfigError("quantizer scale must be positive on every finite-bit chain")

    out = z.copy()
    for i in range(n):
        b = bits_arr[i]
        if b == INFINITE:
            continue
        L = calibrated_loading(int(b)) if loading == "calibrated" else float(loading)
        delta = 2.0 * L * scale_arr[i] / (2.0 ** int(b))
        top = L * scale_arr[i] - delta / 2.0

        def q(x):
            v = delta * (np.floor(x / delta) + 0.5)
            return np.clip(v, -top, top)

        out[i] = q(np.real(z[i])) + 1j * q(np.imag(z[i]))
    return out
