"""System-level configuration and unit conversions.

All internal computation is in linear units (watts, ratios).  dB / dBm values
appear only at the configuration boundary; converters live here so the rest
of the package never sees a dB quantity.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# defaults used throughout when a field is omitted
DEFAULT_N_TX = 16
DEFAULT_N_RX = 16
DEFAULT_N_USERS = 4
DEFAULT_POWER_DBM = 20.0
DEFAULT_GAMMA_DB = 5.0
DEFAULT_NOISE_DBM = 0.0
DEFAULT_THETA_DEG = 40.0
DEFAULT_REFLECT_DB = -10.0
DEFAULT_SIGMA_G2_DB = -10.0
DEFAULT_BITS = 3


def db_to_lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_watt(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(p_w) + 30.0


@dataclass
class SystemConfig:
    """Array sizes, power budget, SQINR targets and noise floors (linear units).

    gamma is the per-user SQINR target vector (length n_users), sigma_user2
    the per-user noise variance vector, sigma_radar2 the sensing receiver
    noise variance.  Scalars broadcast at construction.
    """

    n_tx: int = DEFAULT_N_TX
    n_rx: int = DEFAULT_N_RX
    n_users: int = DEFAULT_N_USERS
    power: float = float(dbm_to_watt(DEFAULT_POWER_DBM))
    gamma: np.ndarray = None
    sigma_user2: np.ndarray = None
    sigma_radar2: float = float(dbm_to_watt(DEFAULT_NOISE_DBM))

    def __post_init__(self):
        for name in ("n_tx", "n_rx"):
            if not (isinstance(getattr(self, name), (int, np.integer)) and getattr(self, name) >= 1):
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)!r}")
        if not (isinstance(self.n_users, (int, np.integer)) and self.n_users >= 0):
            raise ConfigError(f"n_users must be a nonnegative integer, got {self.n_users!r}")
        if not (np.isfinite(self.power) and self.power > 0):
            raise ConfigError(f"power must be positive and finite, got {self.power!r}")
        if self.gamma is None:
            self.gamma = np.full(self.n_users, db_to_lin(DEFAULT_GAMMA_DB))
        self.gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (self.n_users,)).copy()
        if self.n_users and not np.all(self.gamma > 0):
            raise ConfigError("all SQINR targets must be positive")
        if self.sigma_user2 is None:
            self.sigma_user2 = np.full(self.n_users, dbm_to_watt(DEFAULT_NOISE_DBM))
        self.sigma_user2 = np.broadcast_to(
            np.asarray(self.sigma_user2, dtype=float), (self.n_users,)
        ).copy()
        if self.n_users and not np.all(self.sigma_user2 > 0):
            raise ConfigError("user noise variances must be positive")
        if not (np.isfinite(self.sigma_radar2) and self.sigma_radar2 > 0):
            raise ConfigError("sigma_radar2 must be positive and finite")
