import math

import numpy as np
import pytest

from relayfl.errors import ConfigError
from relayfl.link_rates import (
    LinkParams,
    packet_airtime,
    rate_direct,
    rate_hop1,
    rate_hop2_combined,
    snr_direct,
)


def test_snr_unit_substitution():
    assert snr_direct(1.0, 1.0, 1.0) == 1.0
    assert snr_direct(0.0, 0.5, 1.0) == 0.0


def test_snr_table_values():
    # -174 dBm/Hz over 100 MHz = -94 dBm noise power
    link = LinkParams.from_noise_psd_dbm_hz(-174.0, 100e6, 10e3)
    assert link.noise_power == pytest.approx(10 ** (-9.4) * 1e-3, rel=1e-12)
    snr = snr_direct(0.2, 1e-10, link.noise_power)
    assert snr == pytest.approx(50.25, rel=0.01)
    assert 10 * math.log10(snr) == pytest.approx(17.0, abs=0.05)


def test_rate_values():
    assert rate_direct(1.0) == 1.0
    assert rate_direct(0.0) == 0.0
    assert rate_direct(3.0) == 2.0


def test_rate_hop1_composition():
    assert rate_hop1(1.0, 1.0, 1.0) == 1.0
    assert rate_hop1(0.0, 0.3, 1.0) == 0.0
    assert rate_hop1(2.0, 1.0, 1.0) > rate_hop1(1.0, 1.0, 1.0)


def test_hop2_energy_combining():
    # relay SNR 1 plus direct SNR 2 decode together
    assert rate_hop2_combined(1.0, 1.0, 2.0, 1.0, 1.0) == 2.0
    # no relay power degenerates to the direct-link rate
    assert rate_hop2_combined(0.0, 5.0, 3.0, 1.0, 1.0) == rate_direct(3.0)


def test_hop2_dominates_single_terms(rng):
    for _ in range(1000):
        ps, gs, pn, gn, s2 = rng.uniform(0.0, 2.0, 5) + [0, 1e-3, 0, 1e-3, 1e-3]
        combined = rate_hop2_combined(ps, gs, pn, gn, s2)
        assert combined >= rate_direct(snr_direct(ps, gs, s2)) - 1e-12
        assert combined >= rate_direct(snr_direct(pn, gn, s2)) - 1e-12


def test_rates_increase_in_power(rng):
    for _ in range(100):
        g, s2 = rng.uniform(0.1, 2.0, 2)
        p = rng.uniform(0.01, 1.0)
        assert rate_direct(snr_direct(2 * p, g, s2)) > rate_direct(snr_direct(p, g, s2))


def test_packet_airtime_units():
    # 1e4 bits over 1e8 Hz at 1 bit/s/Hz is 100 microseconds
    link = LinkParams(noise_power=1e-12, bandwidth=1e8, packet_bits=1e4)
    assert packet_airtime(1.0, link) == pytest.approx(100e-6, rel=1e-12)


def test_zero_rate_is_infinite_airtime_not_error():
    link = LinkParams(noise_power=1e-12, bandwidth=1e8, packet_bits=1e4)
    assert packet_airtime(0.0, link) == math.inf


def test_invalid_link_params():
    with pytest.raises(ConfigError):
        LinkParams(noise_power=0.0)
    with pytest.raises(ConfigError):
        LinkParams(noise_power=1e-12, bandwidth=-1.0)


def test_negative_inputs_rejected():
    with pytest.raises(ValueError):
        snr_direct(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        rate_direct(-0.1)
