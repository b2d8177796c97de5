"""Command-line entry point.

Exit codes: 0 success, 1 configuration/usage error, 2 infeasible snapshot,
3 I/O error.  Human-readable text goes to stdout; machine-readable CSV only
to the path given via --out.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .channel import draw_channels, place_nodes
from .config import default_config_path, load_config
from .energy_time import ComputeProfile, build_report
from .errors import ConfigError, DeadlineUnattainableError, RelayFlError
from .experiments import CSV_HEADER, TrialRecord, run_fl_training, run_sweep
from .scheduler import classify
from .spca import spca_minimize, transmit_objective


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; remap onto the config-error code
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise SystemExit(self._usage_exit_code(message))

    @staticmethod
    def _usage_exit_code(message: str) -> int:
        print(f"error: {message}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relayfl",
                     description="Relay-assisted federated learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None,
                        help="YAML config path (default: shipped defaults)")
    common.add_argument("--seed", type=int, default=None,
                        help="override experiment.master_seed")
    common.add_argument("--out", type=str, default=None,
                        help="machine-readable output path")

    p = sub.add_parser("solve-snapshot", parents=[common],
                       help="one realization: schedule, powers, energies")
    p.add_argument("--scheme", type=str, default=None,
                   help="scheme label to run (default: first in config)")

    p = sub.add_parser("sweep", parents=[common], help="run the Monte Carlo sweep")
    p.add_argument("--trials", type=int, default=None,
                   help="override trials per point")
    p.add_argument("--scheme", type=str, default=None,
                   help="run only this scheme label")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: machine cores)")

    sub.add_parser("fl-train", parents=[common],
                   help="accuracy-versus-round training run")

    sub.add_parser("validate-config", parents=[common],
                   help="parse and validate a config file")
    return parser


def _load(args) -> "SimConfig":
    path = args.config if args.config is not None else default_config_path()
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace
        cfg = replace(cfg, experiment=replace(cfg.experiment, master_seed=args.seed))
    return cfg


def _cmd_validate(args) -> int:
    cfg = _load(args)
    exp = cfg.experiment
    print(f"config ok: {len(exp.schemes)} scheme(s), sweep {exp.sweep.name} over "
          f"{len(exp.sweep.values)} point(s), {exp.trials} trial(s)/point")
    return 0


def _cmd_snapshot(args) -> int:
    cfg = _load(args)
    schemes = cfg.experiment.schemes
    scheme = schemes[0]
    if args.scheme is not None:
        match = [s for s in schemes if s.label == args.scheme]
        if not match:
            raise ConfigError(f"no scheme labelled {args.scheme!r} in config")
        scheme = match[0]

    seed = cfg.experiment.master_seed
    rng = np.random.default_rng(seed)
    from dataclasses import replace
    geometry = replace(cfg.geometry, n_saps=scheme.n_saps)
    positions = place_nodes(geometry, rng)
    ch = draw_channels(positions, cfg.propagation, rng)
    schedule = classify(ch)
    print(f"scheme {scheme.label!r}, seed {seed}: "
          f"{schedule.n_single_hop} single-hop, {schedule.n_two_hop} two-hop")
    try:
        powers, solver = spca_minimize(schedule, ch, cfg.link,
                                       cfg.timing.uplink_deadline,
                                       cfg.power_max_w, cfg.spca)
    except DeadlineUnattainableError as exc:
        print(f"infeasible: {exc}")
        return 2

    cycles = rng.uniform(*cfg.compute.cycles_per_sample, size=geometry.n_sensors)
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

    print(f"solver: {solver.status} after {solver.iterations} iterations, "
          f"scaled objective {transmit_objective(schedule, ch, cfg.link, powers):.6g}")
    print("device powers (W):",
          " ".join(f"{p:.4g}" for p in powers.device_power))
    if powers.relay_power:
        print("relay forward powers (W):",
              " ".join(f"{n}:{p:.4g}" for n, p in sorted(powers.relay_power.items())))
    u = report.uplink
    print(f"uplink s: 1h {u.t_single_hop:.6g}, 2h phase1 {u.t_two_hop_phase1:.6g}, "
          f"2h phase2 {u.t_two_hop_phase2:.6g}, total {u.total:.6g}")
    print(f"energy J/round: transmit {report.transmit_energy_j:.6g} "
          f"(relay share {report.relay_transmit_energy_j:.6g}), "
          f"compute {float(np.sum(report.compute_energy_j)):.6g}; "
          f"training total {report.total_energy_j:.6g}")
    print(f"outage fraction: {report.outage_fraction:.4g}")

    if args.out is not None:
        rec = TrialRecord(
            scheme=scheme.label, sweep_name="snapshot", sweep_value=0.0,
            trial=0, seed=seed,
            n_1h=schedule.n_single_hop, n_2h=schedule.n_two_hop,
            e_transmit_j=report.transmit_energy_j,
            e_compute_j=float(np.sum(report.compute_energy_j)),
            e_total_j=report.total_energy_j,
            t_ul_s=report.uplink.total,
            outage_frac=report.outage_fraction,
            spca_status=solver.status,
        )
        _write_single_record(args.out, rec)
        print(f"record written to {args.out}")
    return 0


def _write_single_record(path: str, rec: TrialRecord) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        writer.writerow(rec.to_csv_fields())


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    out = run_sweep(cfg, out_path=args.out, threads=args.threads,
                    trials=args.trials, scheme_filter=args.scheme)
    print(f"sweep written to {out}")
    return 0


def _cmd_fl_train(args) -> int:
    cfg = _load(args)
    out = run_fl_training(cfg, out_path=args.out)
    print(f"training curve written to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 1

    handlers = {
        "validate-config": _cmd_validate,
        "solve-snapshot": _cmd_snapshot,
        "sweep": _cmd_sweep,
        "fl-train": _cmd_fl_train,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DeadlineUnattainableError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except RelayFlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
