"""Shared fixtures: small deterministic systems that solve in well under a second."""

import numpy as np
import pytest

from quantbeam.channel import PointTarget, ExtendedTarget, generate_channels
from quantbeam.config import SystemConfig, db_to_lin
from quantbeam.conic import ConicSettings
from quantbeam.quantization import BitAllocation, build_profile


FAST = ConicSettings(eps_abs=1e-7, eps_rel=1e-7)


def small_system(n_tx=8, n_rx=8, n_users=2, gamma_db=5.0, power=0.1):
    return SystemConfig(n_tx=n_tx, n_rx=n_rx, n_users=n_users, power=power,
                        gamma=np.full(n_users, db_to_lin(gamma_db)),
                        sigma_user2=np.full(n_users, 1e-3), sigma_radar2=1e-3)


def point_target(theta_deg=40.0, reflect_db=-10.0):
    return PointTarget(theta=np.deg2rad(theta_deg),
                       eta=np.sqrt(db_to_lin(reflect_db)))


def uniform_bits(config, b):
    return BitAllocation(dac=np.full(config.n_tx, b),
                         adc_bs=np.full(config.n_rx, b),
                         adc_user=np.full(config.n_users, b))


@pytest.fixture
def cfg8():
    return small_system()


@pytest.fixture
def chans8(cfg8):
    return generate_channels(cfg8, point_target(), seed=7)


@pytest.fixture
def prof3(cfg8):
    return build_profile(uniform_bits(cfg8, 3))
