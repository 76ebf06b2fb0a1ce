"""Steering vectors, target responses and user channels.

Half-wavelength ULAs at the transmitter and the collocated sensing receiver.
The target-response matrix G is either the rank-one point model
eta * b(theta) a(theta)^H or an unstructured draw for an extended target.
"""

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigError
from .rng import stream


def steering_tx(theta, n):
    """Transmit array response, entries exp(-j pi m sin theta), m = 0..n-1."""
    return np.exp(-1j * np.pi * np.arange(n) * np.sin(theta))


def steering_rx(theta, n):
    """Receive array response, entries exp(+j pi m sin theta)."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(theta))


@dataclass(frozen=True)
class PointTarget:
    """Single far-field scatterer at angle theta (radians) with gain eta."""

    theta: float
    eta: complex = 1.0

    kind = "point"


@dataclass(frozen=True)
class ExtendedTarget:
    """Unstructured response; entries i.i.d. CN(0, sigma_g2)."""

    sigma_g2: float

    kind = "extended"

    def __post_init__(self):
        if not self.sigma_g2 > 0:
            raise ConfigError("sigma_g2 must be positive")


@dataclass(frozen=True)
class CustomTarget:
    """Caller-supplied response matrix."""

    G: np.ndarray

    kind = "custom"


TargetModel = Union[PointTarget, ExtendedTarget, CustomTarget]


def make_trm(target, n_rx, n_tx, rng=None):
    """Target-response matrix for the given model.

    Point targets are deterministic; extended targets need an rng.
    """
    if isinstance(target, PointTarget):
        return target.eta * np.outer(steering_rx(target.theta, n_rx), steering_tx(target.theta, n_tx).conj())
    if isinstance(target, ExtendedTarget):
        if rng is None:
            raise ConfigError("extended target draw needs an rng")
        scale = np.sqrt(target.sigma_g2 / 2.0)
        return scale * (rng.standard_normal((n_rx, n_tx)) + 1j * rng.standard_normal((n_rx, n_tx)))
    if isinstance(target, CustomTarget):
        G = np.asarray(target.G, dtype=complex)
        if G.shape != (n_rx, n_tx):
            raise ConfigError(f"custom G has shape {G.shape}, expected {(n_rx, n_tx)}")
        return G
    raise ConfigError(f"unknown target model {target!r}")


def rayleigh_channels(n_users, n_tx, rng):
    """User downlink channels, rows h_k^H stacked: entries i.i.d. CN(0,1)."""
    return (rng.standard_normal((n_users, n_tx)) + 1j * rng.standard_normal((n_users, n_tx))) / np.sqrt(2.0)


@dataclass
class ChannelSet:
    """One realization of the user channels and the target response.

    H has shape (n_users, n_tx) with h_k = H[k] the channel of user k
    (y_k = h_k^H x convention uses conj inside the metrics).  G has shape
    (n_rx, n_tx).
    """

    H: np.ndarray
    G: np.ndarray
    target: TargetModel
    seed: int = 0

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        self.G = np.asarray(self.G, dtype=complex)
        if self.H.ndim != 2 or self.G.ndim != 2:
            raise ConfigError("H and G must be matrices")
        if self.H.size and self.H.shape[1] != self.G.shape[1]:
            raise ConfigError("H and G disagree on the transmit array size")

    @property
    def n_users(self):
        return self.H.shape[0]

    @property
    def n_tx(self):
        return self.G.shape[1]

    @property
    def n_rx(self):
        return self.G.shape[0]

    def to_json(self):
        def c2j(M):
            # every complex entry becomes a [re, im] pair
            return np.stack([np.real(M), np.imag(M)], axis=-1).tolist()

        meta = {"kind": self.target.kind}
        if isinstance(self.target, PointTarget):
            meta.update(theta=self.target.theta, eta=[np.real(self.target.eta), np.imag(self.target.eta)])
        elif isinstance(self.target, ExtendedTarget):
            meta.update(sigma_g2=self.target.sigma_g2)
        return {"H": c2j(self.H), "G": c2j(self.G), "target": meta, "seed": self.seed}

    @classmethod
    def from_json(cls, obj):
        def j2c(entries):
            arr = np.asarray(entries, dtype=float)
            if arr.size == 0:
                return arr.astype(complex)
            return arr[..., 0] + 1j * arr[..., 1]

        meta = obj["target"]
        G = j2c(obj["G"])
        if meta["kind"] == "point":
            target = PointTarget(theta=meta["theta"], eta=complex(meta["eta"][0], meta["eta"][1]))
        elif meta["kind"] == "extended":
            target = ExtendedTarget(sigma_g2=meta["sigma_g2"])
        else:
            target = CustomTarget(G=G)
        return cls(H=j2c(obj["H"]), G=G, target=target, seed=obj.get("seed", 0))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def generate_channels(config, target, seed):
    """Draw a ChannelSet for the given system size and target model.

    User channels and the target response come from independent substreams of
    the seed, so e.g. redrawing the target keeps H fixed.
    """
    H = rayleigh_channels(config.n_users, config.n_tx, stream(seed, "channels"))
    G = make_trm(target, config.n_rx, config.n_tx, stream(seed, "target"))
    return ChannelSet(H=H, G=G, target=target, seed=seed)
