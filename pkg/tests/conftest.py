"""Shared helpers: deterministic random instances for the optimizer tests."""
from __future__ import annotations

import numpy as np
import pytest

from relayfl.channel import ChannelRealization
from relayfl.energy_time import PowerAllocation, achieved_rates, uplink_times
from relayfl.link_rates import LinkParams
from relayfl.scheduler import Schedule, classify

P_MAX_23_DBM = 10.0 ** ((23.0 - 30.0) / 10.0)


def table_link() -> LinkParams:
    """100 MHz, 10 kbit packets, -174 dBm/Hz noise floor."""
    return LinkParams.from_noise_psd_dbm_hz(-174.0, 100e6, 10e3)


def gains_to_channels(gp: np.ndarray, hs: np.ndarray, hc: np.ndarray) -> ChannelRealization:
    """Real nonnegative power gains to a (phaseless) realization."""
    return ChannelRealization(
        h_p=np.sqrt(np.asarray(gp, dtype=float)).astype(complex),
        H_s=np.sqrt(np.asarray(hs, dtype=float)).astype(complex),
        h_c=np.sqrt(np.asarray(hc, dtype=float)).astype(complex),
    )


def random_instance(
    rng: np.random.Generator,
    n_max: int = 2,
    k_max: int = 1,
    max_power_vars: int | None = 3,
    p_max: float = P_MAX_23_DBM,
    deadline_scale: tuple[float, float] = (1.5, 4.0),
) -> tuple[Schedule, ChannelRealization, float]:
    """Feasible random instance with a mid-range optimum.

    The deadline is set to a multiple of the full-power uplink time so the
    optimal powers sit well inside (0, P_max), where grid oracles resolve
    the minimum accurately.
    """
    link = table_link()
    while True:
        n = int(rng.integers(1, n_max + 1))
        k = int(rng.integers(0, k_max + 1))
        gp = 10.0 ** rng.uniform(-13, -9, n)
        hs = 10.0 ** rng.uniform(-13, -9, (n, k))
        hc = 10.0 ** rng.uniform(-12, -9, k)
        ch = gains_to_channels(gp, hs, hc)
        schedule = classify(ch)
        if max_power_vars is not None and schedule.n_power_variables > max_power_vars:
            continue
        t_full = uplink_times(
            schedule,
            achieved_rates(schedule, ch, PowerAllocation.full_power(schedule, p_max),
                           link),
            link,
        ).total
        deadline = t_full * rng.uniform(*deadline_scale)
        return schedule, ch, deadline


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
