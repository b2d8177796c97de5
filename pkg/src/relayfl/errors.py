"""Exception types shared across the simulator."""


class RelayFlError(Exception):
    """Base class for all package errors."""


class ConfigError(RelayFlError):
    """Invalid or inconsistent configuration."""


class InfeasibleError(RelayFlError):
    """A constraint set that cannot be satisfied.

    Infeasibility is data at the experiment level: the Monte Carlo harness
    catches these and folds them into the outage statistics instead of
    aborting a sweep.
    """


class UplinkBudgetError(InfeasibleError):
    """Round budget exhausted by uplink: T_th/I_0 - T_ul is not positive."""


class ComputeBoundError(InfeasibleError):
    """Required CPU frequency exceeds the device maximum."""


class DeadlineUnattainableError(InfeasibleError):
    """Uplink deadline cannot be met even at maximum transmit power."""


class DatasetFormatError(RelayFlError):
    """Malformed dataset file (bad magic, truncated payload, ...)."""
