"""Computation/transmission time and energy bookkeeping for one FL round.

All powers are watts, times seconds, energies joules; dB and dBm exist only
at config boundaries.  Infeasibility (a device that cannot make the deadline)
is represented in reports as data so the Monte Carlo layer can count outages
instead of aborting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .errors import ComputeBoundError, ConfigError, InfeasibleError, UplinkBudgetError
from .link_rates import (
    LinkParams,
    packet_airtime,
    rate_direct,
    rate_hop1,
    rate_hop2_combined,
    snr_direct,
)
from .scheduler import Schedule


@dataclass(frozen=True)
class ComputeProfile:
    """Per-device CPU model: cycles/sample C, samples D, local iterations I,
    operating frequency f, cap f_max and switched capacitance kappa."""

    cycles_per_sample: float
    local_samples: int
    local_iterations: int
    cpu_frequency: float
    max_frequency: float = 1e9
    kappa: float = 1e-28

    def __post_init__(self) -> None:
        if min(self.cycles_per_sample, self.local_samples, self.max_frequency) <= 0:
            raise ConfigError("cycles, samples and max_frequency must be positive")
        if self.local_iterations < 0 or self.kappa < 0 or self.cpu_frequency <= 0:
            raise ConfigError("iterations/kappa nonnegative, cpu_frequency positive")
        if self.cpu_frequency > self.max_frequency:
            raise ConfigError("cpu_frequency exceeds max_frequency")

    @property
    def cycles_per_round(self) -> float:
        """I_n * C_n * D_n."""
        return self.local_iterations * self.cycles_per_sample * self.local_samples


@dataclass(frozen=True)
class TimingBudget:
    """Training deadline T_th, number of global rounds I_0 and the per-round
    uplink deadline T' handed to the power optimizer."""

    total_deadline: float = 6.0
    global_rounds: int = 130
    uplink_deadline: float = 4e-3

    def __post_init__(self) -> None:
        if self.total_deadline <= 0 or self.global_rounds < 1 or self.uplink_deadline <= 0:
            raise ConfigError("deadlines must be positive and global_rounds >= 1")

    @property
    def round_budget(self) -> float:
        """Per-round wall-clock budget T_th / I_0."""
        return self.total_deadline / self.global_rounds


@dataclass(frozen=True)
class PowerAllocation:
    """Transmit powers: one per device, plus one forward power per two-hop
    device (the serving sAP retransmits each packet individually)."""

    device_power: np.ndarray
    relay_power: dict[int, float]

    def clipped(self, p_max: float) -> "PowerAllocation":
        return PowerAllocation(
            device_power=np.clip(self.device_power, 0.0, p_max),
            relay_power={n: min(max(p, 0.0), p_max) for n, p in self.relay_power.items()},
        )

    @classmethod
    def full_power(cls, schedule: Schedule, p_max: float) -> "PowerAllocation":
        return cls(
            device_power=np.full(schedule.n_devices, p_max),
            relay_power={n: p_max for n in schedule.two_hop},
        )


@dataclass(frozen=True)
class RateTable:
    """Achieved spectral efficiencies under a schedule and power allocation.

    ``direct`` is defined on single-hop devices, ``hop1``/``hop2`` on two-hop
    devices.  Entries may be zero; time formulas then yield infinity.
    """

    direct: dict[int, float]
    hop1: dict[int, float]
    hop2: dict[int, float]


@dataclass(frozen=True)
class UplinkTimes:
    """TDMA sub-slot durations; ``total`` is always their exact sum."""

    t_single_hop: float
    t_two_hop_phase1: float
    t_two_hop_phase2: float

    @property
    def total(self) -> float:
        return self.t_single_hop + self.t_two_hop_phase1 + self.t_two_hop_phase2

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.total)


@dataclass(frozen=True)
class EnergyLatencyReport:
    """Everything the Monte Carlo layer records for one round of one trial."""

    schedule: Schedule
    uplink: UplinkTimes
    compute_time_s: np.ndarray        # tau_n
    compute_energy_j: np.ndarray      # E_L per device
    cpu_frequency_hz: np.ndarray      # frequency used for the accounting
    transmit_energy_j: float          # E_T per round
    total_energy_j: float             # E = I_0 * (E_T + sum E_L)
    completion_time_s: np.ndarray     # T_c per device
    outage: np.ndarray                # bool per device
    relay_transmit_energy_j: float    # the sAP share of E_T, reported separately

    @property
    def outage_fraction(self) -> float:
        return float(np.mean(self.outage))


def compute_time(p: ComputeProfile) -> float:
    """Local training time tau = I * C * D / f."""
    return p.cycles_per_round / p.cpu_frequency


def compute_energy(p: ComputeProfile) -> float:
    """Local training energy kappa * I * C * D * f^2."""
    return p.kappa * p.cycles_per_round * p.cpu_frequency**2


def achieved_rates(
    schedule: Schedule,
    ch: ChannelRealization,
    powers: PowerAllocation,
    link: LinkParams,
) -> RateTable:
    """True rates of every scheduled transmission at the given powers."""
    direct = {
        n: rate_direct(snr_direct(float(powers.device_power[n]), ch.direct_gain(n),
                                  link.noise_power))
        for n in schedule.single_hop
    }
    hop1 = {}
    hop2 = {}
    for n in schedule.two_hop:
        k = schedule.relay_of[n]
        p_n = float(powers.device_power[n])
        hop1[n] = rate_hop1(p_n, ch.hop1_gain(n, k), link.noise_power)
        hop2[n] = rate_hop2_combined(
            powers.relay_power[n], ch.backhaul_gain(k), p_n, ch.direct_gain(n),
            link.noise_power,
        )
    return RateTable(direct=direct, hop1=hop1, hop2=hop2)


def uplink_times(schedule: Schedule, rates: RateTable, link: LinkParams) -> UplinkTimes:
    """TDMA sub-slot durations: the three sums of per-packet airtimes.

    A zero rate on any scheduled transmission makes its sub-slot infinite,
    which marks the uplink infeasible rather than raising.
    """
    t_1h = sum(packet_airtime(rates.direct[n], link) for n in schedule.single_hop)
    t_2h_1 = sum(packet_airtime(rates.hop1[n], link) for n in schedule.two_hop)
    t_2h_2 = sum(packet_airtime(rates.hop2[n], link) for n in schedule.two_hop)
    return UplinkTimes(float(t_1h), float(t_2h_1), float(t_2h_2))


def transmit_energy(
    schedule: Schedule,
    powers: PowerAllocation,
    rates: RateTable,
    link: LinkParams,
) -> tuple[float, float]:
    """Per-round radio energy (total, relay share).

    E_T = (s/W) * [sum_1h P_n/r_d + sum_2h (P_n/r1 + Ps/r2)]; each term is the
    transmitter's power times its airtime.
    """
    s_over_w = link.packet_bits / link.bandwidth
    device_part = 0.0
    relay_part = 0.0
    for n in schedule.single_hop:
        r = rates.direct[n]
        p = float(powers.device_power[n])
        if r == 0.0:
            if p > 0.0:
                return math.inf, math.inf
            raise InfeasibleError("single-hop device with zero rate and zero power")
        device_part += p / r
    for n in schedule.two_hop:
        r1, r2 = rates.hop1[n], rates.hop2[n]
        if r1 == 0.0 or r2 == 0.0:
            return math.inf, math.inf
        device_part += float(powers.device_power[n]) / r1
        relay_part += powers.relay_power[n] / r2
    return s_over_w * (device_part + relay_part), s_over_w * relay_part


def total_energy(transmit_j: float, compute_j: np.ndarray | list[float],
                 global_rounds: int) -> float:
    """E = I_0 * (E_T + sum_n E_L_n)."""
    return global_rounds * (transmit_j + float(np.sum(compute_j)))


def completion_time(tau: float, t_ul: float, global_rounds: int) -> float:
    """T_c = I_0 * (tau + T_UL)."""
    return global_rounds * (tau + t_ul)


def optimal_frequency(p: ComputeProfile, budget: TimingBudget, t_ul: float) -> float:
    """Lowest CPU frequency that still meets the training deadline.

    f* = I*C*D / (T_th/I_0 - T_UL).  Raises instead of clamping: a frequency
    above f_max means the device cannot make the deadline at any legal speed.
    """
    slack = budget.round_budget - t_ul
    if slack <= 0:
        raise UplinkBudgetError(
            f"round budget exhausted by uplink: T_th/I_0 = {budget.round_budget:.6g} s "
            f"<= T_UL = {t_ul:.6g} s"
        )
    f_star = p.cycles_per_round / slack
    if f_star > p.max_frequency:
        raise ComputeBoundError(
            f"compute-bound outage: f* = {f_star:.6g} Hz exceeds f_max = "
            f"{p.max_frequency:.6g} Hz"
        )
    return f_star


def build_report(
    schedule: Schedule,
    ch: ChannelRealization,
    powers: PowerAllocation,
    link: LinkParams,
    profiles: list[ComputeProfile],
    budget: TimingBudget,
) -> EnergyLatencyReport:
    """Assemble the per-round report for one realization.

    Each device runs at its deadline-tight frequency f* when that is legal;
    a device whose f* is unattainable runs at f_max instead and its outage
    flag then follows from T_c > T_th (never a silent clamp).
    """
    if len(profiles) != schedule.n_devices:
        raise ConfigError("one ComputeProfile per device required")

    rates = achieved_rates(schedule, ch, powers, link)
    uplink = uplink_times(schedule, rates, link)
    t_ul = uplink.total

    n = schedule.n_devices
    freq = np.empty(n)
    tau = np.empty(n)
    e_local = np.empty(n)
    t_c = np.empty(n)
    outage = np.zeros(n, dtype=bool)

    for i, prof in enumerate(profiles):
        try:
            if not math.isfinite(t_ul):
                raise UplinkBudgetError("uplink time is infinite")
            f_i = optimal_frequency(prof, budget, t_ul)
        except InfeasibleError:
            f_i = prof.max_frequency
            outage[i] = True
        freq[i] = f_i
        run = ComputeProfile(
            cycles_per_sample=prof.cycles_per_sample,
            local_samples=prof.local_samples,
            local_iterations=prof.local_iterations,
            cpu_frequency=f_i,
            max_frequency=prof.max_frequency,
            kappa=prof.kappa,
        )
        tau[i] = compute_time(run)
        e_local[i] = compute_energy(run)
        t_c[i] = completion_time(tau[i], t_ul, budget.global_rounds)
        # f* makes T_c equal T_th by construction; a 1-ulp excess from that
        # cancellation is not an outage
        if t_c[i] > budget.total_deadline * (1.0 + 1e-9):
            outage[i] = True

    e_t, e_relay = transmit_energy(schedule, powers, rates, link)
    e_total = total_energy(e_t, e_local, budget.global_rounds)

    return EnergyLatencyReport(
        schedule=schedule,
        uplink=uplink,
        compute_time_s=tau,
        compute_energy_j=e_local,
        cpu_frequency_hz=freq,
        transmit_energy_j=e_t,
        total_energy_j=e_total,
        completion_time_s=t_c,
        outage=outage,
        relay_transmit_energy_j=e_relay,
    )


def outage_probability(reports: list[EnergyLatencyReport]) -> float:
    """Average over trials of the per-trial outage fraction.

    Each report's outage flags already encode T_c > T_th and every
    infeasibility marker, so this is a plain mean.
    """
    if not reports:
        raise ConfigError("outage_probability needs at least one trial")
    return float(np.mean([r.outage_fraction for r in reports]))
