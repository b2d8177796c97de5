"""Link-level simulator and transmit-power optimizer for relay-assisted
federated learning in factory subnetworks."""

__version__ = "0.1.0"

from .channel import (
    ChannelRealization,
    GeometryConfig,
    NodePositions,
    PropagationParams,
    draw_channels,
    linear_gain,
    place_nodes,
)
from .energy_time import (
    ComputeProfile,
    EnergyLatencyReport,
    PowerAllocation,
    TimingBudget,
    build_report,
    compute_energy,
    compute_time,
    optimal_frequency,
    outage_probability,
    total_energy,
    transmit_energy,
    uplink_times,
)
from .errors import (
    ComputeBoundError,
    ConfigError,
    DeadlineUnattainableError,
    InfeasibleError,
    RelayFlError,
    UplinkBudgetError,
)
from .link_rates import LinkParams, rate_direct, rate_hop1, rate_hop2_combined, snr_direct
from .scheduler import Schedule, best_relay_gain, classify, effective_two_hop_gain
from .spca import (
    SolverReport,
    SpcaOptions,
    brute_force_power_oracle,
    initialize_feasible,
    omega_lower_bound,
    spca_minimize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
