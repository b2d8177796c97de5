"""Subnetwork geometry and stochastic channel generation.

One realization covers every link the uplink protocol uses: device -> pAP,
device -> sAP, and sAP -> pAP.  Large-scale attenuation is log-distance path
loss plus i.i.d. log-normal shadowing; small-scale fading is frequency-flat
Rayleigh.  Everything is driven by an explicit numpy Generator so that a
(config, seed) pair reproduces a realization byte for byte.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0


def free_space_loss_db(distance_m: float, frequency_hz: float) -> float:
    """Free-space path loss 20*log10(4*pi*d*f/c) in dB."""
    return 20.0 * math.log10(4.0 * math.pi * distance_m * frequency_hz / SPEED_OF_LIGHT)


@dataclass(frozen=True)
class GeometryConfig:
    """Square subnetwork with N sensors, K relay APs and one primary AP."""

    side_length: float = 3.0
    n_sensors: int = 20
    n_saps: int = 4
    pap_position: tuple[float, float] | str = "center"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.side_length <= 0:
            raise ConfigError("side_length must be positive")
        if self.n_sensors < 1:
            raise ConfigError("n_sensors must satisfy N >= 1")
        if self.n_saps < 0:
            raise ConfigError("n_saps must satisfy K >= 0")
        if isinstance(self.pap_position, str):
            if self.pap_position != "center":
                raise ConfigError("pap_position must be 'center' or an (x, y) pair")
        else:
            x, y = self.pap_position
            if not (0.0 <= x <= self.side_length and 0.0 <= y <= self.side_length):
                raise ConfigError("pap_position must lie inside the square")

    def pap_xy(self) -> np.ndarray:
        if self.pap_position == "center":
            half = self.side_length / 2.0
            return np.array([half, half])
        return np.asarray(self.pap_position, dtype=float)


@dataclass(frozen=True)
class PropagationParams:
    """Log-distance path loss with log-normal shadowing.

    ``reference_loss`` defaults to the free-space loss at ``reference_distance``
    for ``carrier_frequency`` (about 52.4 dB at 1 m / 10 GHz).
    """

    carrier_frequency: float = 10e9
    reference_distance: float = 1.0
    reference_loss: float | None = None
    pathloss_exponent: float = 2.2
    shadowing_sigma: float = 7.0
    min_distance_clamp: float = 0.1

    def __post_init__(self) -> None:
        if self.pathloss_exponent <= 0:
            raise ConfigError("pathloss_exponent must be positive")
        if self.shadowing_sigma < 0:
            raise ConfigError("shadowing_sigma must be nonnegative")
        if self.min_distance_clamp <= 0:
            raise ConfigError("min_distance_clamp must be positive")
        if self.reference_distance <= 0:
            raise ConfigError("reference_distance must be positive")

    @property
    def reference_loss_db(self) -> float:
        if self.reference_loss is not None:
            return self.reference_loss
        return free_space_loss_db(self.reference_distance, self.carrier_frequency)


@dataclass(frozen=True)
class NodePositions:
    """Planar coordinates of all nodes of one drop."""

    sensors: np.ndarray  # (N, 2)
    saps: np.ndarray     # (K, 2)
    pap: np.ndarray      # (2,)

    @property
    def n_sensors(self) -> int:
        return self.sensors.shape[0]

    @property
    def n_saps(self) -> int:
        return self.saps.shape[0]


@dataclass(frozen=True)
class ChannelRealization:
    """Complex gains of every link for one fading draw.

    h_p[n]   : device n -> pAP
    H_s[n,k] : device n -> sAP k
    h_c[k]   : sAP k -> pAP
    """

    h_p: np.ndarray
    H_s: np.ndarray
    h_c: np.ndarray

    @property
    def n_devices(self) -> int:
        return self.h_p.shape[0]

    @property
    def n_saps(self) -> int:
        return self.h_c.shape[0]

    def direct_gain(self, n: int) -> float:
        """|h_p(n)|^2."""
        return float(np.abs(self.h_p[n]) ** 2)

    def hop1_gain(self, n: int, k: int) -> float:
        """|H_s(n,k)|^2."""
        return float(np.abs(self.H_s[n, k]) ** 2)

    def backhaul_gain(self, k: int) -> float:
        """|h_c(k)|^2."""
        return float(np.abs(self.h_c[k]) ** 2)


def place_nodes(cfg: GeometryConfig, rng: np.random.Generator) -> NodePositions:
    """Drop sensors and sAPs i.i.d. uniform over the square; pAP is fixed."""
    sensors = rng.uniform(0.0, cfg.side_length, size=(cfg.n_sensors, 2))
    saps = rng.uniform(0.0, cfg.side_length, size=(cfg.n_saps, 2))
    return NodePositions(sensors=sensors, saps=saps, pap=cfg.pap_xy())


def linear_gain(
    distance: float | np.ndarray,
    p: PropagationParams,
    rng: np.random.Generator | None = None,
) -> float | np.ndarray:
    """Large-scale power gain (dimensionless) of a link of given length.

    PL(d) = L0 + 10 * eta * log10(max(d, clamp) / d0), shadowing ~ N(0, sigma^2)
    in dB, gain = 10 ** (-(PL + X) / 10).  With ``rng=None`` the shadowing
    term is omitted (useful for deterministic checks).
    """
    d = np.maximum(np.asarray(distance, dtype=float), p.min_distance_clamp)
    loss_db = p.reference_loss_db + 10.0 * p.pathloss_exponent * np.log10(
        d / p.reference_distance
    )
    if rng is not None and p.shadowing_sigma > 0:
        loss_db = loss_db + rng.normal(0.0, p.shadowing_sigma, size=np.shape(d))
    gain = 10.0 ** (-loss_db / 10.0)
    if np.isscalar(distance):
        return float(gain)
    return gain


def _rayleigh(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    # Circularly-symmetric complex normal, E|z|^2 = 1.
    re = rng.normal(0.0, math.sqrt(0.5), size=shape)
    im = rng.normal(0.0, math.sqrt(0.5), size=shape)
    return re + 1j * im


def draw_channels(
    positions: NodePositions,
    p: PropagationParams,
    rng: np.random.Generator,
) -> ChannelRealization:
    """One joint fading draw of all device->pAP, device->sAP, sAP->pAP links.

    Each complex gain is sqrt(large-scale gain) * z with z ~ CN(0, 1); all
    entries are mutually independent.  Draw order is fixed (h_p, H_s, h_c) so
    a given generator state maps to exactly one realization.
    """
    n, k = positions.n_sensors, positions.n_saps

    d_p = np.linalg.norm(positions.sensors - positions.pap, axis=1)
    g_p = linear_gain(d_p, p, rng)
    h_p = np.sqrt(g_p) * _rayleigh(rng, (n,))

    if k > 0:
        d_s = np.linalg.norm(
            positions.sensors[:, None, :] - positions.saps[None, :, :], axis=2
        )
        g_s = linear_gain(d_s, p, rng)
        H_s = np.sqrt(g_s) * _rayleigh(rng, (n, k))
        d_c = np.linalg.norm(positions.saps - positions.pap, axis=1)
        g_c = linear_gain(d_c, p, rng)
        h_c = np.sqrt(g_c) * _rayleigh(rng, (k,))
    else:
        H_s = np.zeros((n, 0), dtype=complex)
        h_c = np.zeros((0,), dtype=complex)

    return ChannelRealization(h_p=h_p, H_s=H_s, h_c=h_c)


def realize(
    geometry: GeometryConfig,
    propagation: PropagationParams,
    rng: np.random.Generator,
) -> tuple[NodePositions, ChannelRealization]:
    """Convenience: one drop plus one fading draw from a single generator."""
    positions = place_nodes(geometry, rng)
    return positions, draw_channels(positions, propagation, rng)
