"""Monte Carlo harness: seeded trials over (scheme, sweep point) grids.

Per-trial seeds come from a stable SHA-256 hash of (master seed, scheme
label, point index, trial index), so results never depend on execution
order, worker count, or which other schemes share the sweep.  Records are
canonically sorted before writing, which makes a rerun of the same config
byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import GeometryConfig, draw_channels, place_nodes
from .config import SimConfig, dbm_to_watts
from .energy_time import ComputeProfile, build_report
from .errors import ConfigError, DeadlineUnattainableError
from .fl_sim import Model, load_dataset, run_round
from .scheduler import classify
from .spca import spca_minimize

CSV_HEADER = (
    "scheme,sweep_name,sweep_value,trial,seed,n_1h,n_2h,e_transmit_j,"
    "e_compute_j,e_total_j,t_ul_s,outage_frac,spca_status,accuracy"
)


@dataclass(frozen=True)
class TrialRecord:
    scheme: str
    sweep_name: str
    sweep_value: float
    trial: int
    seed: int
    n_1h: int
    n_2h: int
    e_transmit_j: float | None
    e_compute_j: float | None
    e_total_j: float | None
    t_ul_s: float | None
    outage_frac: float
    spca_status: str
    accuracy: float | None = None

    def to_csv_fields(self) -> list[str]:
        return [
            self.scheme,
            self.sweep_name,
            _fmt(self.sweep_value),
            str(self.trial),
            str(self.seed),
            str(self.n_1h),
            str(self.n_2h),
            _fmt(self.e_transmit_j),
            _fmt(self.e_compute_j),
            _fmt(self.e_total_j),
            _fmt(self.t_ul_s),
            _fmt(self.outage_frac),
            self.spca_status,
            _fmt(self.accuracy),
        ]


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.12g}"


def derive_seed(master_seed: int, scheme_label: str, point_index: int,
                trial: int) -> int:
    """Stable 64-bit trial seed; documented so goldens stay diffable."""
    key = f"{master_seed}|{scheme_label}|{point_index}|{trial}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def _apply_sweep(cfg: SimConfig, sweep_name: str, value: float,
                 n_saps: int) -> tuple[GeometryConfig, float]:
    """Geometry and P_max for one (scheme, point)."""
    n_sensors = cfg.geometry.n_sensors
    p_max = cfg.power_max_w
    if sweep_name == "n_sensors":
        n_sensors = int(value)
    elif sweep_name == "p_max_dbm":
        p_max = dbm_to_watts(value)
    geometry = replace(cfg.geometry, n_sensors=n_sensors, n_saps=n_saps)
    return geometry, p_max


def _trial_outcome(cfg: SimConfig, scheme_label: str, n_saps: int, sweep_name: str,
                   sweep_value: float, point_index: int,
                   trial: int) -> tuple[TrialRecord, np.ndarray]:
    """One seeded trial: drop, fade, classify, optimize powers, account.

    Returns the record plus the per-device outage flags (all True when the
    deadline is unattainable outright).
    """
    seed = derive_seed(cfg.experiment.master_seed, scheme_label, point_index, trial)
    rng = np.random.default_rng(seed)
    geometry, p_max = _apply_sweep(cfg, sweep_name, sweep_value, n_saps)

    positions = place_nodes(geometry, rng)
    ch = draw_channels(positions, cfg.propagation, rng)
    schedule = classify(ch)
    cycles = rng.uniform(*cfg.compute.cycles_per_sample, size=geometry.n_sensors)

    base = dict(
        scheme=scheme_label,
        sweep_name=sweep_name,
        sweep_value=sweep_value,
        trial=trial,
        seed=seed,
        n_1h=schedule.n_single_hop,
        n_2h=schedule.n_two_hop,
    )
    try:
        powers, solver = spca_minimize(
            schedule, ch, cfg.link, cfg.timing.uplink_deadline, p_max, cfg.spca
        )
    except DeadlineUnattainableError:
        record = TrialRecord(
            **base,
            e_transmit_j=None, e_compute_j=None, e_total_j=None, t_ul_s=None,
            outage_frac=1.0, spca_status="infeasible",
        )
        return record, np.ones(geometry.n_sensors, dtype=bool)

    profiles = [
        ComputeProfile(
            cycles_per_sample=float(cycles[n]),
            local_samples=cfg.local_samples,
            local_iterations=cfg.compute.local_iterations,
            cpu_frequency=cfg.compute.max_frequency,
            max_frequency=cfg.compute.max_frequency,
            kappa=cfg.compute.kappa,
        )
        for n in range(geometry.n_sensors)
    ]
    report = build_report(schedule, ch, powers, cfg.link, profiles, cfg.timing)
    record = TrialRecord(
        **base,
        e_transmit_j=report.transmit_energy_j,
        e_compute_j=float(np.sum(report.compute_energy_j)),
        e_total_j=report.total_energy_j,
        t_ul_s=report.uplink.total,
        outage_frac=report.outage_fraction,
        spca_status=solver.status,
    )
    return record, report.outage


def run_point(cfg: SimConfig, scheme_label: str, n_saps: int, sweep_name: str,
              sweep_value: float, point_index: int, trial: int) -> TrialRecord:
    """One seeded trial of the Monte Carlo grid (record only)."""
    record, _ = _trial_outcome(cfg, scheme_label, n_saps, sweep_name,
                               sweep_value, point_index, trial)
    return record


def _run_point_task(args) -> TrialRecord:
    return run_point(*args)


def run_sweep(cfg: SimConfig, out_path: str | Path | None = None,
              threads: int | None = None,
              trials: int | None = None,
              scheme_filter: str | None = None) -> Path:
    """All (scheme x point x trial) records plus per-point summary rows.

    Rows are computed in parallel (process pool) but written in canonical
    order; the CSV is byte-stable for a given config and master seed.
    """
    exp = cfg.experiment
    n_trials = trials if trials is not None else exp.trials
    schemes = [s for s in exp.schemes
               if scheme_filter is None or s.label == scheme_filter]
    if not schemes:
        raise ConfigError(f"no scheme labelled {scheme_filter!r} in config")

    tasks = [
        (cfg, s.label, s.n_saps, exp.sweep.name, value, pi, trial)
        for s in schemes
        for pi, value in enumerate(exp.sweep.values)
        for trial in range(n_trials)
    ]
    if threads is None or threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_run_point_task, tasks, chunksize=8))
    else:
        records = [_run_point_task(t) for t in tasks]

    records.sort(key=lambda r: (r.scheme, r.sweep_value, r.trial))

    out = Path(out_path if out_path is not None else exp.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        for rec in records:
            writer.writerow(rec.to_csv_fields())
        for s in schemes:
            for value in exp.sweep.values:
                group = [r for r in records
                         if r.scheme == s.label and r.sweep_value == value]
                writer.writerow(_summary_fields(group))
    return out


def _mean_std(values: list[float | None]) -> str:
    present = [v for v in values if v is not None and math.isfinite(v)]
    if not present:
        return ""
    mean = float(np.mean(present))
    std = float(np.std(present, ddof=1)) if len(present) > 1 else 0.0
    return f"{mean:.6g}±{std:.6g}"


def _summary_fields(group: list[TrialRecord]) -> list[str]:
    """One mean±std row per (scheme, point); consumers skip the non-integer
    trial column."""
    first = group[0]
    return [
        first.scheme,
        first.sweep_name,
        _fmt(first.sweep_value),
        "summary",
        "",
        _mean_std([float(r.n_1h) for r in group]),
        _mean_std([float(r.n_2h) for r in group]),
        _mean_std([r.e_transmit_j for r in group]),
        _mean_std([r.e_compute_j for r in group]),
        _mean_std([r.e_total_j for r in group]),
        _mean_std([r.t_ul_s for r in group]),
        _mean_std([r.outage_frac for r in group]),
        "summary",
        _mean_std([r.accuracy for r in group]),
    ]


def summarize(records: list[TrialRecord]):
    """Per (scheme, sweep value) means used by trend checks and tests."""
    out: dict[tuple[str, float], dict[str, float]] = {}
    keys = sorted({(r.scheme, r.sweep_value) for r in records})
    for key in keys:
        group = [r for r in records if (r.scheme, r.sweep_value) == key]
        energies = [r.e_total_j for r in group if r.e_total_j is not None]
        transmit = [r.e_transmit_j for r in group if r.e_transmit_j is not None]
        outages = [r.outage_frac for r in group]
        out[key] = {
            "trials": len(group),
            "outage_mean": float(np.mean(outages)),
            "outage_sem": float(np.std(outages, ddof=1) / np.sqrt(len(outages)))
            if len(outages) > 1 else 0.0,
            "e_total_mean": float(np.mean(energies)) if energies else math.nan,
            "e_transmit_mean": float(np.mean(transmit)) if transmit else math.nan,
            "feasible_trials": len(energies),
        }
    return out


# --------------------------------------------------------------------------
# FL training runs (accuracy vs round, one curve per scheme)
# --------------------------------------------------------------------------

def run_fl_training(cfg: SimConfig, out_path: str | Path | None = None) -> Path:
    """Accuracy-vs-round records, one row per (scheme, round).

    With fl.phy_coupled on, every round draws a fresh channel realization,
    optimizes powers and derives outage flags; devices in outage that round
    are dropped from aggregation when fl.drop_on_outage is set.  With it off
    this is plain federated averaging and the radio columns stay empty.
    """
    data = load_dataset(cfg.fl_dataset, cfg.geometry.n_sensors,
                        cfg.fl.samples_per_device, cfg.fl.seed)
    records: list[TrialRecord] = []
    for scheme in cfg.experiment.schemes:
        rng_model = np.random.default_rng(cfg.fl.seed)
        model = Model.init(data.input_dim, cfg.fl.hidden_units, rng_model)
        for rnd in range(cfg.fl.global_rounds):
            mask = None
            phy: TrialRecord | None = None
            if cfg.fl_phy_coupled:
                phy, outage = _trial_outcome(cfg, scheme.label, scheme.n_saps,
                                             "round", float(rnd), 0, rnd)
                if cfg.fl.drop_on_outage:
                    mask = ~outage
            model, acc, _ = run_round(model, data, cfg.fl, mask)
            if phy is not None:
                records.append(replace(phy, accuracy=acc))
            else:
                records.append(TrialRecord(
                    scheme=scheme.label, sweep_name="round",
                    sweep_value=float(rnd), trial=rnd,
                    seed=derive_seed(cfg.experiment.master_seed, scheme.label, 0, rnd),
                    n_1h=0, n_2h=0, e_transmit_j=None, e_compute_j=None,
                    e_total_j=None, t_ul_s=None, outage_frac=0.0,
                    spca_status="", accuracy=acc,
                ))

    out = Path(out_path if out_path is not None else cfg.experiment.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        for rec in records:
            writer.writerow(rec.to_csv_fields())
    return out
