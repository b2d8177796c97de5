import numpy as np
import pytest

from relayfl.errors import ConfigError
from relayfl.scheduler import (
    Schedule,
    all_single_hop,
    best_relay_gain,
    classify,
    effective_two_hop_gain,
)

from conftest import gains_to_channels


def exhaustive_classify(gp, hs, hc):
    """Independent reference: plain loops over the selection rule."""
    n, k = hs.shape
    single, two, relay = [], [], {}
    for i in range(n):
        best_gain, best_k = -1.0, None
        for j in range(k):
            eff = 0.5 * min(hc[j], hs[i, j])
            if eff > best_gain:
                best_gain, best_k = eff, j
        if k == 0 or gp[i] >= best_gain:
            single.append(i)
        else:
            two.append(i)
            relay[i] = best_k
    return single, two, relay


def test_effective_gain_weakest_hop():
    # exact-square gains survive the sqrt/square round trip bit-exactly
    ch = gains_to_channels([1.0], [[2.25]], [4.0])
    assert effective_two_hop_gain(0, 0, ch) == 1.125   # 0.5 * min(4, 2.25)


def test_effective_gain_symmetric_hops():
    ch = gains_to_channels([1.0], [[4.0]], [4.0])
    assert effective_two_hop_gain(0, 0, ch) == 2.0


def test_effective_gain_zero_backhaul():
    ch = gains_to_channels([1.0], [[5.0]], [0.0])
    assert effective_two_hop_gain(0, 0, ch) == 0.0


def test_best_relay_is_argmax():
    # per-sAP effective gains 0.125, 2.0, 0.5
    ch = gains_to_channels([0.1], [[0.25, 4.0, 1.0]], [4.0, 4.0, 4.0])
    gain, k = best_relay_gain(0, ch)
    assert gain == 2.0 and k == 1


def test_best_relay_tie_breaks_low_index():
    ch = gains_to_channels([0.1], [[1.0, 1.0]], [1.0, 1.0])
    gain, k = best_relay_gain(0, ch)
    assert gain == 0.5 and k == 0


def test_best_relay_requires_saps():
    ch = gains_to_channels([1.0], np.zeros((1, 0)), [])
    with pytest.raises(ConfigError, match="no relays"):
        best_relay_gain(0, ch)


def test_classify_strong_direct_goes_single_hop():
    ch = gains_to_channels([1.0], [[0.6]], [0.6])   # g2h = 0.3 < 1.0
    s = classify(ch)
    assert s.single_hop == (0,) and s.two_hop == ()


def test_classify_weak_direct_goes_two_hop():
    # 0.5 * min(4, 2) = 1.0 > 0.1
    ch = gains_to_channels([0.1], [[2.0]], [4.0])
    s = classify(ch)
    assert s.two_hop == (0,) and s.relay_of[0] == 0


def test_classify_exact_tie_is_single_hop():
    # amplitudes chosen so the computed direct gain equals the computed
    # effective two-hop gain bit-exactly; >= routes the tie single-hop
    from relayfl.channel import ChannelRealization

    c, d = 1.0001, 0.7071774918646662
    ch = ChannelRealization(
        h_p=np.array([d], dtype=complex),
        H_s=np.array([[c]], dtype=complex),
        h_c=np.array([c], dtype=complex),
    )
    assert effective_two_hop_gain(0, 0, ch) == ch.direct_gain(0)
    s = classify(ch)
    assert s.single_hop == (0,)


def test_classify_no_saps_all_single_hop():
    ch = gains_to_channels([0.001, 0.002], np.zeros((2, 0)), [])
    s = classify(ch)
    assert s.single_hop == (0, 1) and s.two_hop == ()


def test_classify_matches_exhaustive_oracle(rng):
    for _ in range(300):
        n = int(rng.integers(1, 7))
        k = int(rng.integers(0, 5))
        gp = rng.exponential(1.0, n)
        hs = rng.exponential(1.0, (n, k))
        hc = rng.exponential(1.0, k)
        s = classify(gains_to_channels(gp, hs, hc))
        single, two, relay = exhaustive_classify(gp, hs, hc)
        assert list(s.single_hop) == single
        assert list(s.two_hop) == two
        assert s.relay_of == relay


def test_partition_invariant(rng):
    for _ in range(100):
        n = int(rng.integers(1, 7))
        k = int(rng.integers(0, 4))
        ch = gains_to_channels(rng.exponential(1.0, n),
                               rng.exponential(1.0, (n, k)),
                               rng.exponential(1.0, k))
        s = classify(ch)
        assert sorted(s.single_hop + s.two_hop) == list(range(n))
        assert set(s.relay_of) == set(s.two_hop)
        assert all(0 <= v < k for v in s.relay_of.values())


def test_scale_covariance(rng):
    for _ in range(50):
        n, k = 5, 3
        gp = rng.exponential(1.0, n)
        hs = rng.exponential(1.0, (n, k))
        hc = rng.exponential(1.0, k)
        c = float(rng.uniform(0.01, 100.0))
        a = classify(gains_to_channels(gp, hs, hc))
        b = classify(gains_to_channels(c * gp, c * hs, c * hc))
        assert a.single_hop == b.single_hop
        assert a.two_hop == b.two_hop
        assert a.relay_of == b.relay_of


def test_schedule_validation():
    with pytest.raises(ConfigError):
        Schedule(n_devices=2, single_hop=(0,), two_hop=(), relay_of={})
    with pytest.raises(ConfigError):
        Schedule(n_devices=2, single_hop=(0,), two_hop=(1,), relay_of={})


def test_all_single_hop_helper():
    s = all_single_hop(4)
    assert s.single_hop == (0, 1, 2, 3)
    assert s.n_power_variables == 4
