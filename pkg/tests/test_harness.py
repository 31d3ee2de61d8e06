import csv
import json

import numpy as np
import pytest

from ualc import harness
from ualc.harness import (
    TRACE_COLUMNS,
    apply_lockfile,
    export,
    load_trace,
    mitigation_pct,
    report_markdown,
    report_rows,
    run_pair,
    run_scenario,
    sweep,
    write_lockfile,
)
from ualc.perception import Road
from ualc.scenario import ScenarioConfig

SHORT = ScenarioConfig(duration=2.0, start_x=30.0)


def test_trace_length_and_columns(tmp_path):
    r = run_scenario(SHORT, "mitigated")
    assert r.n_rows == SHORT.n_ticks == 40
    trace_path, summary_path = export(r, tmp_path)
    with open(trace_path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) - 1 == 40
    summary = json.loads(summary_path.read_text())
    assert summary["seed"] == 0 and summary["config"]["attack"]["patch_start"] == 40.0
    assert summary["metrics"]["max_abs_lateral_deviation"] == r.max_abs_lateral_deviation


def test_reexport_is_byte_identical(tmp_path):
    r = run_scenario(SHORT, "baseline")
    export(r, tmp_path / "a")
    export(r, tmp_path / "b")
    for name in ("trace.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_summary_mitigation_recomputed_from_csvs(tmp_path):
    base, mit = run_pair(SHORT)
    export(base, tmp_path / "baseline")
    export(mit, tmp_path / "mitigated")
    road = SHORT.road
    devs = []
    for name in ("baseline", "mitigated"):
        t = load_trace(tmp_path / name / "trace.csv")
        devs.append(np.max(np.abs(t["y"] - road.center(t["x"]))))
    summary = json.loads((tmp_path / "mitigated" / "summary.json").read_text())
    assert summary["metrics"]["mitigation_pct"] == pytest.approx((1 - devs[1] / devs[0]) * 100, rel=1e-12)


def test_mitigation_pct_degenerate():
    assert mitigation_pct(0.0, 0.1) is None
    assert mitigation_pct(1.0, 0.25) == pytest.approx(75.0)


def test_sweep_singleton_equals_direct_pair():
    table = sweep(SHORT, [40.0], [1.0])
    base, mit = run_pair(SHORT.with_attack(patch_start=40.0, strength=1.0))
    (cell,) = table.cells
    assert np.array_equal(cell.baseline.trace["y"], base.trace["y"])
    assert cell.mitigation_pct == mit.mitigation_pct


def test_sweep_zero_strength_has_no_mitigation():
    (cell,) = sweep(SHORT, [40.0], [0.0]).cells
    assert cell.mitigation_pct is None
    with pytest.raises(ValueError):
        sweep(SHORT, [], [1.0])


def test_leaving_the_road_terminates_early():
    cfg = ScenarioConfig(road=Road(lateral_extent=0.3), duration=5.0, start_x=30.0)
    r = run_scenario(cfg, "baseline")
    assert r.terminated_early and r.out_of_lane
    assert r.n_rows < cfg.n_ticks


def test_lockfile_round_trip(tmp_path):
    cal = harness.Calibration(2.5, 0.05, 1.0, [])
    path = write_lockfile(cal, tmp_path / "cal.json")
    cfg = apply_lockfile(ScenarioConfig(), path)
    assert cfg.attack.path_bias_gain == 2.5 and cfg.attack.conf_floor == 0.05


def test_report_table(tmp_path):
    base, mit = run_pair(SHORT)
    export(base, tmp_path / "x" / "baseline")
    export(mit, tmp_path / "x" / "mitigated")
    rows = report_rows(tmp_path)
    assert [r["variant"] for r in rows] == ["baseline", "mitigated"]
    text = report_markdown(rows)
    assert text.count("\n") == 4


def test_calibration_converges_from_default_gain():
    cfg = ScenarioConfig().with_attack(path_bias_gain=1.5)
    cal = harness.calibrate(cfg)
    assert 0.8 <= cal.baseline_deviation <= 1.2
    assert abs(cal.baseline_deviation - 1.0) <= 0.05
    assert {"path_bias_gain": cal.path_bias_gain, "conf_floor": cal.conf_floor,
            "baseline_deviation": cal.baseline_deviation} in cal.history
