"""Experiment configuration: YAML blocks mapped onto the module dataclasses.

Blocks: geometry, propagation, link, timing, compute, fl, spca, experiment.
Unknown keys are rejected so typos fail at parse time, not mid-sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import GeometryConfig, PropagationParams
from .errors import ConfigError
from .fl_sim import FlConfig
from .link_rates import LinkParams
from .energy_time import TimingBudget
from .spca import SpcaOptions


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ComputeParams:
    """Per-device CPU draw: cycles/sample uniform in a range, shared caps."""

    cycles_per_sample: tuple[float, float] = (1e4, 2e4)
    local_iterations: int = 1
    max_frequency: float = 1e9
    kappa: float = 1e-28
    local_samples: int | None = None   # None: fl.samples_per_device

    def __post_init__(self) -> None:
        lo, hi = self.cycles_per_sample
        if lo <= 0 or hi < lo:
            raise ConfigError("cycles_per_sample must be a positive (lo, hi) range")
        if self.local_iterations < 0 or self.max_frequency <= 0 or self.kappa < 0:
            raise ConfigError("invalid compute block")


@dataclass(frozen=True)
class SchemeSpec:
    label: str
    n_saps: int

    def __post_init__(self) -> None:
        if not self.label:
            raise ConfigError("scheme label must be nonempty")
        if self.n_saps < 0:
            raise ConfigError("scheme n_saps must be >= 0")


@dataclass(frozen=True)
class SweepSpec:
    name: str              # p_max_dbm | n_sensors
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.name not in ("p_max_dbm", "n_sensors"):
            raise ConfigError("sweep name must be p_max_dbm or n_sensors")
        if not self.values:
            raise ConfigError("sweep values must be nonempty")


@dataclass(frozen=True)
class ExperimentSpec:
    schemes: tuple[SchemeSpec, ...]
    sweep: SweepSpec
    trials: int = 200
    master_seed: int = 1
    output: str = "sweep.csv"
    fl_in_sweep: bool = False

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        labels = [s.label for s in self.schemes]
        if len(set(labels)) != len(labels):
            raise ConfigError("scheme labels must be unique")
        if not self.schemes:
            raise ConfigError("at least one scheme required")


@dataclass(frozen=True)
class SimConfig:
    geometry: GeometryConfig
    propagation: PropagationParams
    link: LinkParams
    power_max_w: float
    timing: TimingBudget
    compute: ComputeParams
    fl: FlConfig
    fl_dataset: str
    fl_phy_coupled: bool
    spca: SpcaOptions
    experiment: ExperimentSpec

    @property
    def local_samples(self) -> int:
        return self.compute.local_samples or self.fl.samples_per_device


_BLOCKS = ("geometry", "propagation", "link", "timing", "compute", "fl", "spca",
           "experiment")


def _take(block: dict, name: str, key: str, default):
    if key in block:
        return block.pop(key)
    if default is _REQUIRED:
        raise ConfigError(f"{name}.{key} is required")
    return default


_REQUIRED = object()


def _check_empty(block: dict, name: str) -> None:
    if block:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(sorted(block))}")


def parse_config(raw: dict) -> SimConfig:
    """Validate a parsed YAML mapping into a SimConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(raw) - set(_BLOCKS)
    if unknown:
        raise ConfigError(f"unknown block(s): {', '.join(sorted(unknown))}")

    g = dict(raw.get("geometry") or {})
    pap = _take(g, "geometry", "pap_position", "center")
    if isinstance(pap, list):
        pap = tuple(float(v) for v in pap)
    geometry = GeometryConfig(
        side_length=float(_take(g, "geometry", "side_length", 3.0)),
        n_sensors=int(_take(g, "geometry", "n_sensors", 20)),
        n_saps=int(_take(g, "geometry", "n_saps", 4)),
        pap_position=pap,
    )
    _check_empty(g, "geometry")

    p = dict(raw.get("propagation") or {})
    ref_loss = _take(p, "propagation", "reference_loss", None)
    propagation = PropagationParams(
        carrier_frequency=float(_take(p, "propagation", "carrier_frequency", 10e9)),
        reference_distance=float(_take(p, "propagation", "reference_distance", 1.0)),
        reference_loss=None if ref_loss is None else float(ref_loss),
        pathloss_exponent=float(_take(p, "propagation", "pathloss_exponent", 2.2)),
        shadowing_sigma=float(_take(p, "propagation", "shadowing_sigma", 7.0)),
        min_distance_clamp=float(_take(p, "propagation", "min_distance_clamp", 0.1)),
    )
    _check_empty(p, "propagation")

    l = dict(raw.get("link") or {})
    bandwidth = float(_take(l, "link", "bandwidth", 100e6))
    link = LinkParams.from_noise_psd_dbm_hz(
        psd_dbm_hz=float(_take(l, "link", "noise_psd_dbm_hz", -174.0)),
        bandwidth=bandwidth,
        packet_bits=float(_take(l, "link", "packet_bits", 10e3)),
    )
    power_max_dbm = float(_take(l, "link", "power_max_dbm", 23.0))
    _check_empty(l, "link")

    t = dict(raw.get("timing") or {})
    timing = TimingBudget(
        total_deadline=float(_take(t, "timing", "total_deadline", 6.0)),
        global_rounds=int(_take(t, "timing", "global_rounds", 130)),
        uplink_deadline=float(_take(t, "timing", "uplink_deadline", 4e-3)),
    )
    _check_empty(t, "timing")

    c = dict(raw.get("compute") or {})
    cyc = _take(c, "compute", "cycles_per_sample", [1e4, 2e4])
    if isinstance(cyc, (int, float)):
        cyc = [cyc, cyc]
    ls = _take(c, "compute", "local_samples", None)
    compute = ComputeParams(
        cycles_per_sample=(float(cyc[0]), float(cyc[1])),
        local_iterations=int(_take(c, "compute", "local_iterations", 1)),
        max_frequency=float(_take(c, "compute", "max_frequency", 1e9)),
        kappa=float(_take(c, "compute", "kappa", 1e-28)),
        local_samples=None if ls is None else int(ls),
    )
    _check_empty(c, "compute")

    f = dict(raw.get("fl") or {})
    fl_dataset = str(_take(f, "fl", "dataset", "synthetic"))
    fl_phy_coupled = bool(_take(f, "fl", "phy_coupled", True))
    fl = FlConfig(
        hidden_units=int(_take(f, "fl", "hidden_units", 50)),
        learning_rate=float(_take(f, "fl", "learning_rate", 1.0)),
        local_iterations=int(_take(f, "fl", "local_iterations", 1)),
        global_rounds=int(_take(f, "fl", "global_rounds", 50)),
        samples_per_device=int(_take(f, "fl", "samples_per_device", 200)),
        seed=int(_take(f, "fl", "seed", 0)),
        drop_on_outage=bool(_take(f, "fl", "drop_on_outage", True)),
    )
    _check_empty(f, "fl")

    s = dict(raw.get("spca") or {})
    spca = SpcaOptions(
        eps_rel=float(_take(s, "spca", "eps_rel", 1e-4)),
        max_outer=int(_take(s, "spca", "max_outer", 50)),
        inner_tol=float(_take(s, "spca", "inner_tol", 1e-8)),
    )
    if spca.eps_rel <= 0 or spca.inner_tol <= 0 or spca.max_outer < 1:
        raise ConfigError("invalid spca block")
    _check_empty(s, "spca")

    e = dict(raw.get("experiment") or {})
    schemes_raw = _take(e, "experiment", "schemes",
                        [{"label": "1h", "n_saps": 0}, {"label": "1 of 4", "n_saps": 4}])
    schemes = tuple(
        SchemeSpec(label=str(sr["label"]), n_saps=int(sr["n_saps"]))
        for sr in schemes_raw
    )
    sweep_raw = _take(e, "experiment", "sweep",
                      {"name": "p_max_dbm", "values": [power_max_dbm]})
    sweep = SweepSpec(
        name=str(sweep_raw["name"]),
        values=tuple(float(v) for v in sweep_raw["values"]),
    )
    experiment = ExperimentSpec(
        schemes=schemes,
        sweep=sweep,
        trials=int(_take(e, "experiment", "trials", 200)),
        master_seed=int(_take(e, "experiment", "master_seed", 1)),
        output=str(_take(e, "experiment", "output", "sweep.csv")),
        fl_in_sweep=bool(_take(e, "experiment", "fl_in_sweep", False)),
    )
    _check_empty(e, "experiment")

    if sweep.name == "n_sensors" and any(v < 1 for v in sweep.values):
        raise ConfigError("n_sensors sweep values must be >= 1")

    return SimConfig(
        geometry=geometry,
        propagation=propagation,
        link=link,
        power_max_w=dbm_to_watts(power_max_dbm),
        timing=timing,
        compute=compute,
        fl=fl,
        fl_dataset=fl_dataset,
        fl_phy_coupled=fl_phy_coupled,
        spca=spca,
        experiment=experiment,
    )


def load_config(path: str | Path) -> SimConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw or {})


def default_config_path() -> Path:
    return Path(__file__).parent / "configs" / "default.yaml"
