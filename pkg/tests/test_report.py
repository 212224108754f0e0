import csv
import json
import math

import numpy as np
import pytest

from hardymeans.report import (
    CHECK_FAMILIES,
    CSV_COLUMNS,
    ConfigInvalid,
    ConvexityReport,
    Grid,
    IoError,
    RunConfig,
    default_config,
    emit_csv,
    emit_json,
    emit_svg_plot,
    report_to_dict,
    run,
)

SMALL = Grid(0.1, 10.0, 8)


def _small(**kw):
    base = dict(weight_ids=("unit-power:1", "tail-exp"), function_ids=("cayley-1",), p_values=(2.0,), grid=SMALL)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def small_report():
    return run(_small(checks=("thm_signs", "hip_inequality", "golden_weights")))


# ---------------------------------------------------------------------------
# configuration


@pytest.mark.parametrize("kw", [
    dict(p_values=(1.5,)),
    dict(p_values=(math.inf,)),
    dict(weight_ids=()),
    dict(weight_ids=("no-such",)),
    dict(function_ids=("nope",)),
    dict(checks=("lemma99",)),
    dict(grid=Grid(0.0, 1.0, 5)),
    dict(grid=Grid(2.0, 1.0, 5)),
    dict(tolerances={"lemma31": -1.0}),
    dict(tolerances={"bogus": 1e-3}),
    dict(lemma_p=(3.0,)),
    dict(threads=0),
])
def test_config_invalid(kw):
    with pytest.raises(ValueError):  # ConfigInvalid, UnknownId and InvalidParameter are all ValueErrors
        _small(**kw)


def test_p_below_two_is_config_invalid():
    with pytest.raises(ConfigInvalid):
        RunConfig(p_values=(1.5,))


def test_grid_parse():
    assert Grid.parse("0.1:5:7") == Grid(0.1, 5.0, 7, True)
    assert Grid.parse("0.1:5:7:lin") == Grid(0.1, 5.0, 7, False)
    for bad in ("1:2", "a:2:3", "1:2:3:cubic"):
        with pytest.raises(ConfigInvalid):
            Grid.parse(bad)
    np.testing.assert_allclose(Grid(1, 100, 3).values(), [1, 10, 100])


def test_config_round_trip():
    cfg = default_config(grid=SMALL)
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigInvalid):
        RunConfig.from_dict({"colour": "blue"})
    with pytest.raises(ConfigInvalid):
        RunConfig.from_dict([1, 2])


# ---------------------------------------------------------------------------
# rows


def test_golden_only_has_no_function_rows():
    rep = run(_small(checks=("golden_weights",)))
    assert rep.rows and all(r.function_id is None for r in rep.rows)
    assert set(rep.summary) == {"golden_weights"}
    assert rep.all_passed


def test_small_run_passes_and_rows_sorted(small_report):
    rep = small_report
    assert rep.all_passed
    keys = [r.sort_key() for r in rep.rows]
    assert keys == sorted(keys)
    assert {r.check_family for r in rep.rows} == {"thm_signs", "hip_inequality", "golden_weights"}


def test_skips_do_not_count(small_report):
    # tail-exp has A = 0, so the "roots" route is unavailable; it falls back to h - C/B
    for fam, s in small_report.summary.items():
        live = s.total - s.skipped
        assert s.passed + s.failed == live
        if live:
            assert s.pass_rate == pytest.approx(s.passed / live)
    flat = [r for r in small_report.rows if r.weight_id == "tail-exp" and r.quantity == "h_minus_CB"]
    assert flat and all(r.passed for r in flat)


def test_lemma34_precondition_skips():
    rep = run(_small(checks=("lemma34",)))
    rows = [r for r in rep.rows if r.function_id != "synthetic-q"]
    power = [r for r in rows if r.weight_id == "unit-power:1"]
    flat = [r for r in rows if r.weight_id == "tail-exp"]
    assert power and all(r.skipped and "PreconditionFailed" in r.flags for r in power)
    assert flat and all(r.passed for r in flat)
    s = rep.summary["lemma34"]
    assert s.skipped >= len(power) and s.failed == 0


def test_anchor_rows_present(small_report):
    anchor = {r.quantity: r for r in small_report.rows
              if r.weight_id == "unit-power:1" and r.quantity.startswith("anchor_") and r.y == 1.0}
    assert set(anchor) == {"anchor_ratio", "anchor_ratio_d1", "anchor_log_ratio_d2"}
    assert all(r.passed for r in anchor.values())


def test_unit_ratio_series_has_no_jump_at_anchor(small_report):
    (s,) = [s for s in small_report.series if s.quantity == "ratio" and s.label.startswith("unit-power:1")]
    y, v = np.array(s.y), np.array(s.values)
    assert 1.0 in y
    i = int(np.flatnonzero(y == 1.0)[0])
    # neighbours 1 -+ 0.01 differ by about |r'| * 0.01
    assert abs(v[i + 1] - v[i]) < 0.01 and abs(v[i] - v[i - 1]) < 0.01
    assert v[i] == pytest.approx(math.pi / 2, rel=1e-12)


# ---------------------------------------------------------------------------
# artifacts


def _empty():
    return ConvexityReport(config={}, rows=(), summary={}, series=(), environment={})


def test_empty_report_csv_is_header_only(tmp_path):
    path = tmp_path / "e.csv"
    emit_csv(_empty(), path)
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_csv_and_json_content(small_report, tmp_path):
    emit_csv(small_report, tmp_path / "r.csv")
    emit_json(small_report, tmp_path / "r.json")
    with open(tmp_path / "r.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == len(small_report.rows) + 1
    assert all(len(r) == 9 for r in rows)
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["all_passed"] is True
    assert len(data["rows"]) == len(small_report.rows)
    assert set(data["summary"]) <= set(CHECK_FAMILIES)
    assert data == json.loads(json.dumps(report_to_dict(small_report), allow_nan=True).replace("NaN", "null"))


def test_json_deterministic(tmp_path):
    cfg = _small(checks=("thm_signs", "lemma31"))
    emit_json(run(cfg), tmp_path / "a.json")
    emit_json(run(cfg), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_thread_count_does_not_change_output(tmp_path):
    cfg = _small(checks=("thm_signs", "golden_weights"))
    emit_json(run(cfg.__class__(**{**cfg.__dict__, "threads": 1})), tmp_path / "one.json")
    emit_json(run(cfg.__class__(**{**cfg.__dict__, "threads": 3})), tmp_path / "three.json")
    assert (tmp_path / "one.json").read_bytes() == (tmp_path / "three.json").read_bytes()


def test_svg_logM_for_cayley1(tmp_path):
    rep = run(_small(weight_ids=("origin-exp",), checks=("hip_inequality",)))
    (s,) = [s for s in rep.series if s.quantity == "logM"]
    y = np.array(s.y)
    np.testing.assert_allclose(s.values, np.log(np.pi / (1 + y)), rtol=1e-8)
    # convex and decreasing
    assert np.all(np.diff(s.values) < 0)
    path = tmp_path / "logM.svg"
    emit_svg_plot(rep, "logM", path)
    text = path.read_text()
    assert text.startswith("<svg") and "<polyline" in text and "cayley-1 | p=2" in text


def test_svg_rejects_unknown_quantity(tmp_path):
    with pytest.raises(ValueError):
        emit_svg_plot(_empty(), "pressure", tmp_path / "x.svg")


def test_svg_without_data(tmp_path):
    emit_svg_plot(_empty(), "ratio", tmp_path / "x.svg")
    assert "no data" in (tmp_path / "x.svg").read_text()


def test_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        emit_csv(_empty(), blocker / "sub" / "r.csv")
