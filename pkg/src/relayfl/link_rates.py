"""SNRs and spectral efficiencies of the three uplink transmission legs.

All rates are spectral efficiencies in bits/s/Hz; packet airtime is
s / (W * rate) and is computed where needed, never folded into the rates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class LinkParams:
    """Uplink radio constants: noise power sigma0^2 (W), bandwidth W (Hz),
    packet size s (bits)."""

    noise_power: float
    bandwidth: float = 100e6
    packet_bits: float = 10e3

    def __post_init__(self) -> None:
        if self.noise_power <= 0 or self.bandwidth <= 0 or self.packet_bits <= 0:
            raise ConfigError("noise_power, bandwidth and packet_bits must be positive")

    @classmethod
    def from_noise_psd_dbm_hz(
        cls, psd_dbm_hz: float = -174.0, bandwidth: float = 100e6,
        packet_bits: float = 10e3,
    ) -> "LinkParams":
        noise_w = 10.0 ** ((psd_dbm_hz - 30.0) / 10.0) * bandwidth
        return cls(noise_power=noise_w, bandwidth=bandwidth, packet_bits=packet_bits)


def snr_direct(power: float, gain: float, noise_power: float) -> float:
    """Received SNR of a single transmission: P * |h|^2 / sigma0^2."""
    if power < 0 or gain < 0 or noise_power <= 0:
        raise ValueError("power and gain must be nonnegative, noise positive")
    return power * gain / noise_power


def rate_direct(snr: float) -> float:
    """log2(1 + snr), the direct-link spectral efficiency."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return math.log2(1.0 + snr)


def rate_hop1(power: float, gain: float, noise_power: float) -> float:
    """Device -> sAP spectral efficiency (phase 1 of the two-hop leg)."""
    return rate_direct(snr_direct(power, gain, noise_power))


def rate_hop2_combined(
    relay_power: float,
    relay_gain: float,
    device_power: float,
    direct_gain: float,
    noise_power: float,
) -> float:
    """sAP -> pAP spectral efficiency with energy combining.

    The pAP adds the SNR of the relay retransmission and the SNR of the
    device's own phase-1 signal before decoding:
    log2(1 + Ps*|h_c|^2/sigma^2 + Pn*|h_p|^2/sigma^2).
    """
    g_relay = snr_direct(relay_power, relay_gain, noise_power)
    g_direct = snr_direct(device_power, direct_gain, noise_power)
    return math.log2(1.0 + g_relay + g_direct)


def packet_airtime(rate: float, link: LinkParams) -> float:
    """Seconds to move one packet at a given spectral efficiency.

    A rate of exactly zero (silenced or zero-gain device) yields infinite
    airtime; callers treat that as infeasibility, not as an error here.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if rate == 0.0:
        return math.inf
    return link.packet_bits / (link.bandwidth * rate)
