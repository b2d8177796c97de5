"""Device classification and relay selection.

Each device is routed single-hop or two-hop by comparing its direct channel
gain against the best effective two-hop gain, where a two-hop path through
sAP k is only as strong as its weaker hop and pays a factor 1/2 for occupying
two sub-slots.  The winning sAP under the '1 of K' rule is the argmax of that
effective gain.  The 1/2 factor belongs to the selection metric only; rate
computations never see it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .errors import ConfigError


@dataclass(frozen=True)
class Schedule:
    """Partition of devices into single-hop and two-hop sets.

    ``relay_of`` maps each two-hop device to its serving sAP index and is
    defined exactly on ``two_hop``.
    """

    n_devices: int
    single_hop: tuple[int, ...]
    two_hop: tuple[int, ...]
    relay_of: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        all_devices = sorted(self.single_hop) + sorted(self.two_hop)
        if sorted(all_devices) != list(range(self.n_devices)):
            raise ConfigError("single_hop and two_hop must partition the device set")
        if set(self.relay_of) != set(self.two_hop):
            raise ConfigError("relay_of must be defined exactly on two_hop")

    @property
    def n_single_hop(self) -> int:
        return len(self.single_hop)

    @property
    def n_two_hop(self) -> int:
        return len(self.two_hop)

    @property
    def n_power_variables(self) -> int:
        """One transmit power per device plus one forward power per two-hop device."""
        return self.n_single_hop + 2 * self.n_two_hop


def effective_two_hop_gain(n: int, k: int, ch: ChannelRealization) -> float:
    """0.5 * min(|h_c(k)|^2, |H_s(n,k)|^2): the weakest hop limits the path."""
    return 0.5 * min(ch.backhaul_gain(k), ch.hop1_gain(n, k))


def best_relay_gain(n: int, ch: ChannelRealization) -> tuple[float, int]:
    """Strongest effective two-hop gain for device n and the sAP achieving it.

    Ties break toward the lowest sAP index so results are reproducible.
    """
    if ch.n_saps == 0:
        raise ConfigError("no relays available: K = 0")
    # Vectorized over k; argmax returns the first (lowest) index on ties.
    pair_gains = 0.5 * np.minimum(
        np.abs(ch.h_c) ** 2, np.abs(ch.H_s[n, :]) ** 2
    )
    k_star = int(np.argmax(pair_gains))
    return float(pair_gains[k_star]), k_star


def classify(ch: ChannelRealization) -> Schedule:
    """Split devices into single-hop and two-hop sets and pick relays.

    Device n goes single-hop iff |h_p(n)|^2 >= g2h(n); equality resolves to
    single-hop.  With K = 0 every device is single-hop.
    """
    single: list[int] = []
    two: list[int] = []
    relay_of: dict[int, int] = {}
    for n in range(ch.n_devices):
        if ch.n_saps == 0:
            single.append(n)
            continue
        g2h, k_star = best_relay_gain(n, ch)
        if ch.direct_gain(n) >= g2h:
            single.append(n)
        else:
            two.append(n)
            relay_of[n] = k_star
    return Schedule(
        n_devices=ch.n_devices,
        single_hop=tuple(single),
        two_hop=tuple(two),
        relay_of=relay_of,
    )


def all_single_hop(n_devices: int) -> Schedule:
    """Degenerate schedule that forces direct transmission for every device."""
    return Schedule(
        n_devices=n_devices,
        single_hop=tuple(range(n_devices)),
        two_hop=(),
        relay_of={},
    )
