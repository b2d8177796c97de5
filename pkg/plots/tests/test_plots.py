import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from plot import (  # noqa: E402
    AXIS_LABELS,
    EXPECTED_HEADER,
    PlotError,
    build_figure,
    main,
    read_records,
    render,
)

FIXTURES = Path(__file__).parent / "fixtures"
FIXTURE_FOR_KIND = {
    "accuracy": FIXTURES / "accuracy.csv",
    "outage": FIXTURES / "outage.csv",
    "energy": FIXTURES / "energy.csv",
}


@pytest.mark.parametrize("kind", sorted(FIXTURE_FOR_KIND))
def test_render_smoke(kind, tmp_path):
    out = render(kind, FIXTURE_FOR_KIND[kind], tmp_path / f"{kind}.png")
    assert out.exists()
    assert out.stat().st_size > 1000


@pytest.mark.parametrize("kind", sorted(FIXTURE_FOR_KIND))
def test_axes_labelled_per_kind(kind):
    records = read_records(FIXTURE_FOR_KIND[kind])
    fig, ax = build_figure(kind, records)
    xlabel, ylabel = AXIS_LABELS[kind]
    assert ax.get_xlabel() == xlabel
    assert ax.get_ylabel() == ylabel
    if kind == "outage":
        assert ax.get_yscale() == "log"


def test_two_schemes_give_two_labelled_curves():
    records = read_records(FIXTURE_FOR_KIND["energy"])
    fig, ax = build_figure("energy", records)
    labels = [t.get_text() for t in ax.get_legend().get_texts()]
    assert sorted(labels) == ["1 of 2", "1h"]


def test_summary_rows_are_skipped():
    records = read_records(FIXTURE_FOR_KIND["outage"])
    assert all(r["trial"].isdigit() for r in records)
    assert len(records) == 48   # 2 schemes x 3 points x 8 trials


def test_empty_csv_errors_and_writes_nothing(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(EXPECTED_HEADER) + "\n")
    out = tmp_path / "out.png"
    with pytest.raises(PlotError, match="no record rows"):
        render("energy", empty, out)
    assert not out.exists()


def test_schema_mismatch_names_columns(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("scheme,value\n1h,2\n")
    with pytest.raises(PlotError) as err:
        read_records(bad)
    assert "sweep_value" in str(err.value)
    assert "value" in str(err.value)


def test_headerless_file_rejected(tmp_path):
    nothing = tmp_path / "nothing.csv"
    nothing.write_text("")
    with pytest.raises(PlotError, match="empty"):
        read_records(nothing)


def test_unknown_kind_rejected():
    records = read_records(FIXTURE_FOR_KIND["energy"])
    with pytest.raises(PlotError, match="unknown kind"):
        build_figure("scatter", records)


def test_cli_end_to_end(tmp_path, capsys):
    out = tmp_path / "fig.png"
    rc = main(["--kind", "outage", "--in", str(FIXTURE_FOR_KIND["outage"]),
               "--out", str(out)])
    assert rc == 0 and out.exists()
    rc = main(["--kind", "energy", "--in", str(tmp_path / "missing.csv"),
               "--out", str(tmp_path / "x.png")])
    assert rc == 1
    assert not (tmp_path / "x.png").exists()


def test_render_deterministic(tmp_path):
    a = render("energy", FIXTURE_FOR_KIND["energy"], tmp_path / "a.png")
    b = render("energy", FIXTURE_FOR_KIND["energy"], tmp_path / "b.png")
    assert a.read_bytes() == b.read_bytes()
