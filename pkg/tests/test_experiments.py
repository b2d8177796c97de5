import csv
from pathlib import Path

import numpy as np
import pytest
import yaml

from relayfl.config import load_config, parse_config, default_config_path
from relayfl.errors import ConfigError
from relayfl.experiments import (
    CSV_HEADER,
    derive_seed,
    run_fl_training,
    run_point,
    run_sweep,
    summarize,
)

FAST_TEST_CONFIG = {
    "geometry": {"n_sensors": 4},
    "propagation": {"reference_loss": 100.0},
    "timing": {"uplink_deadline": 4.0e-3},
    "spca": {"eps_rel": 1e-3, "inner_tol": 1e-6},
    "fl": {"samples_per_device": 20, "global_rounds": 3, "phy_coupled": True,
           "local_iterations": 1},
    "experiment": {
        "schemes": [{"label": "1h", "n_saps": 0}, {"label": "1 of 2", "n_saps": 2}],
        "sweep": {"name": "p_max_dbm", "values": [11.0, 17.0, 23.0]},
        "trials": 10,
        "master_seed": 77,
        "output": "out.csv",
    },
}


@pytest.fixture(scope="module")
def fast_cfg():
    return parse_config(FAST_TEST_CONFIG)


def read_rows(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    records = [r for r in rows if r[3].isdigit()]
    summaries = [r for r in rows if not r[3].isdigit()]
    return header, records, summaries


def test_seed_derivation_is_stable():
    # frozen values: the documented hash must never drift
    assert derive_seed(1, "1h", 0, 0) == derive_seed(1, "1h", 0, 0)
    assert derive_seed(1, "1h", 0, 0) != derive_seed(1, "1h", 0, 1)
    assert derive_seed(1, "1h", 0, 0) != derive_seed(1, "1 of 4", 0, 0)
    assert derive_seed(1, "1h", 0, 0) != derive_seed(2, "1h", 0, 0)
    assert derive_seed(1, "1h", 0, 0) == 16530169854577751259


def test_single_hop_scheme_never_has_two_hop_devices(fast_cfg):
    for trial in range(5):
        rec = run_point(fast_cfg, "1h", 0, "p_max_dbm", 23.0, 0, trial)
        assert rec.n_2h == 0
        assert rec.n_1h == 4


def test_run_point_deterministic(fast_cfg):
    a = run_point(fast_cfg, "1 of 2", 2, "p_max_dbm", 17.0, 1, 3)
    b = run_point(fast_cfg, "1 of 2", 2, "p_max_dbm", 17.0, 1, 3)
    assert a == b


def test_sweep_row_counts_and_header(fast_cfg, tmp_path):
    out = run_sweep(fast_cfg, out_path=tmp_path / "out.csv", threads=1)
    header, records, summaries = read_rows(out)
    assert ",".join(header) == CSV_HEADER
    # 2 schemes x 3 points x 10 trials records, one summary per scheme-point
    assert len(records) == 60
    assert len(summaries) == 6
    assert all(s[3] == "summary" for s in summaries)


def test_sweep_byte_identical_rerun(fast_cfg, tmp_path):
    a = run_sweep(fast_cfg, out_path=tmp_path / "a.csv", threads=1)
    b = run_sweep(fast_cfg, out_path=tmp_path / "b.csv", threads=2)
    assert a.read_bytes() == b.read_bytes()


def test_trial_order_independence(fast_cfg):
    # records are pure functions of (scheme, point, trial): shuffling the
    # evaluation order cannot change per-point statistics
    recs = [run_point(fast_cfg, "1 of 2", 2, "p_max_dbm", 23.0, 2, t)
            for t in range(6)]
    shuffled = [run_point(fast_cfg, "1 of 2", 2, "p_max_dbm", 23.0, 2, t)
                for t in reversed(range(6))]
    stats_a = summarize(recs)
    stats_b = summarize(shuffled)
    assert stats_a == stats_b


def test_k_zero_scheme_degenerates_to_single_hop(fast_cfg):
    # same label and K=0 must reproduce the 1h records exactly
    cfg_a = parse_config({**FAST_TEST_CONFIG, "experiment": {
        **FAST_TEST_CONFIG["experiment"],
        "schemes": [{"label": "x", "n_saps": 0}],
    }})
    rec_via_relay_code = run_point(cfg_a, "x", 0, "p_max_dbm", 23.0, 0, 4)
    assert rec_via_relay_code.n_2h == 0
    rec_again = run_point(cfg_a, "x", 0, "p_max_dbm", 23.0, 0, 4)
    assert rec_via_relay_code == rec_again


def test_n_sensors_sweep_changes_device_count(fast_cfg):
    cfg = parse_config({**FAST_TEST_CONFIG, "experiment": {
        **FAST_TEST_CONFIG["experiment"],
        "sweep": {"name": "n_sensors", "values": [2, 5]},
    }})
    rec2 = run_point(cfg, "1h", 0, "n_sensors", 2, 0, 0)
    rec5 = run_point(cfg, "1h", 0, "n_sensors", 5, 1, 0)
    assert rec2.n_1h == 2 and rec5.n_1h == 5


def test_infeasible_trials_record_outage_with_absent_energy():
    cfg = parse_config({**FAST_TEST_CONFIG,
                        "timing": {"uplink_deadline": 1.0e-9}})
    rec = run_point(cfg, "1h", 0, "p_max_dbm", 23.0, 0, 0)
    assert rec.spca_status == "infeasible"
    assert rec.outage_frac == 1.0
    assert rec.e_total_j is None and rec.e_transmit_j is None
    fields = rec.to_csv_fields()
    assert fields[7] == "" and fields[9] == ""


def test_summary_row_holds_mean_and_std(fast_cfg, tmp_path):
    out = run_sweep(fast_cfg, out_path=tmp_path / "s.csv", threads=1)
    _, records, summaries = read_rows(out)
    group = [r for r in records if r[0] == "1h" and r[2] == "23"]
    outages = [float(r[11]) for r in group]
    srow = [s for s in summaries if s[0] == "1h" and s[2] == "23"][0]
    mean, std = srow[11].split("±")
    assert float(mean) == pytest.approx(np.mean(outages), rel=1e-5)
    assert float(std) == pytest.approx(np.std(outages, ddof=1), rel=1e-4, abs=1e-9)


def test_scheme_filter_and_trial_override(fast_cfg, tmp_path):
    out = run_sweep(fast_cfg, out_path=tmp_path / "f.csv", threads=1,
                    trials=2, scheme_filter="1h")
    _, records, summaries = read_rows(out)
    assert len(records) == 6 and len(summaries) == 3
    assert all(r[0] == "1h" for r in records)
    with pytest.raises(ConfigError):
        run_sweep(fast_cfg, out_path=tmp_path / "g.csv", threads=1,
                  scheme_filter="nope")


def test_fl_training_rows(tmp_path):
    cfg = parse_config({**FAST_TEST_CONFIG, "link": {"power_max_dbm": 17.0}})
    out = run_fl_training(cfg, out_path=tmp_path / "fl.csv")
    header, records, _ = read_rows(out)
    assert ",".join(header) == CSV_HEADER
    # one row per (scheme, round)
    assert len(records) == 2 * 3
    assert all(r[1] == "round" for r in records)
    accs = [float(r[13]) for r in records]
    assert all(0.0 <= a <= 1.0 for a in accs)


def test_default_config_parses():
    cfg = load_config(default_config_path())
    assert cfg.geometry.n_sensors == 20
    assert cfg.link.bandwidth == 1e8
    assert cfg.power_max_w == pytest.approx(10 ** ((23 - 30) / 10))
    assert cfg.timing.total_deadline == 6.0
    assert cfg.compute.kappa == 1e-28


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        parse_config({"geometry": {"n_sensors": 3, "bogus": 1}})
    with pytest.raises(ConfigError, match="unknown block"):
        parse_config({"geom": {}})


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        parse_config({"experiment": {"schemes": [{"label": "a", "n_saps": 0},
                                                 {"label": "a", "n_saps": 1}],
                      "sweep": {"name": "p_max_dbm", "values": [1.0]}}})
    with pytest.raises(ConfigError):
        parse_config({"experiment": {"sweep": {"name": "nope", "values": [1]}}})
    with pytest.raises(ConfigError):
        parse_config({"experiment": {"trials": 0}})


def test_shipped_experiment_configs_parse():
    base = default_config_path().parent
    for name in ("accuracy_vs_rounds.yaml", "outage_vs_power.yaml",
                 "energy_vs_devices.yaml"):
        cfg = load_config(base / name)
        assert cfg.experiment.trials >= 1
