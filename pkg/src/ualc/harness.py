"""Closed-loop runs, attack sweeps, calibration and result export."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import VehicleState
from .dynamics import step
from .pipeline import VARIANTS, make_pipeline
from .scenario import OUT_OF_LANE_THRESHOLD, ScenarioConfig

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "tick",
    "t",
    "x",
    "y",
    "heading",
    "v",
    "steering",
    "accel",
    "lr_conf",
    "sigma_left_sum",
    "sigma_right_sum",
    "v_ref",
)


@dataclass
class RunResult:
    variant: str
    config: ScenarioConfig
    trace: dict  # column name -> np.ndarray
    deviation: np.ndarray
    terminated_early: bool = False
    mitigation_pct: Optional[float] = None
    baseline_deviation: Optional[float] = None

    @property
    def n_rows(self) -> int:
        return len(self.trace["tick"])

    @property
    def max_abs_lateral_deviation(self) -> float:
        return float(np.max(np.abs(self.deviation))) if self.deviation.size else 0.0

    @property
    def out_of_lane(self) -> bool:
        return self.terminated_early or self.max_abs_lateral_deviation > OUT_OF_LANE_THRESHOLD

    def summary(self) -> dict:
        return {
            "variant": self.variant,
            "seed": self.config.seed,
            "metrics": {
                "max_abs_lateral_deviation": self.max_abs_lateral_deviation,
                "out_of_lane": self.out_of_lane,
                "terminated_early": self.terminated_early,
                "ticks": self.n_rows,
                "mitigation_pct": self.mitigation_pct,
                "baseline_max_abs_lateral_deviation": self.baseline_deviation,
            },
            "config": self.config.to_dict(),
        }


def run_scenario(cfg: ScenarioConfig, variant: str = "mitigated") -> RunResult:
    """Integrate the closed loop for ``cfg.duration`` seconds.

    The trace records the state at the start of each tick and the commands
    computed from it. Leaving the road ends the run early.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    road = cfg.road
    pipeline = make_pipeline(variant, road, cfg.attack, cfg.pipeline_config())
    state = VehicleState(cfg.start_x, float(road.center(cfg.start_x)), 0.0, cfg.speed.v_ref)
    rows = []
    terminated = False
    for k in range(cfg.n_ticks):
        if not road.contains(state):
            terminated = True
            log.info("%s: vehicle left the road at tick %d", variant, k)
            break
        out = pipeline.tick(state, k)
        rows.append(
            (
                k,
                k * cfg.dt,
                state.x,
                state.y,
                state.heading,
                state.speed,
                out.steering,
                out.accel,
                out.lr_conf,
                out.sigma_left_sum,
                out.sigma_right_sum,
                out.v_ref,
            )
        )
        state = step(state, out.steering, out.accel, cfg.bicycle)
    arr = np.array(rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))
    trace = {name: arr[:, i] for i, name in enumerate(TRACE_COLUMNS)}
    trace["tick"] = trace["tick"].astype(int)
    deviation = trace["y"] - road.center(trace["x"])
    return RunResult(variant, cfg, trace, deviation, terminated)


def mitigation_pct(baseline_dev: float, mitigated_dev: float, min_baseline: float = 1e-9) -> Optional[float]:
    """Percent reduction of max deviation; None when the baseline has nothing to mitigate."""
    if not baseline_dev > min_baseline:
        return None
    return (1.0 - mitigated_dev / baseline_dev) * 100.0


def pair(baseline: RunResult, mitigated: RunResult) -> RunResult:
    """Attach the mitigation percentage of ``mitigated`` relative to ``baseline``."""
    pct = None
    if mitigated.config.attack.strength > 0:
        pct = mitigation_pct(baseline.max_abs_lateral_deviation, mitigated.max_abs_lateral_deviation)
    return replace(mitigated, mitigation_pct=pct, baseline_deviation=baseline.max_abs_lateral_deviation)


def run_pair(cfg: ScenarioConfig, variant: str = "mitigated") -> tuple[RunResult, RunResult]:
    base = run_scenario(cfg, "baseline")
    return base, pair(base, run_scenario(cfg, variant))


@dataclass
class SweepCell:
    patch_start: float
    strength: float
    baseline: RunResult
    mitigated: RunResult

    @property
    def mitigation_pct(self) -> Optional[float]:
        return self.mitigated.mitigation_pct

    def row(self) -> dict:
        return {
            "patch_start": self.patch_start,
            "strength": self.strength,
            "baseline_dev": self.baseline.max_abs_lateral_deviation,
            "mitigated_dev": self.mitigated.max_abs_lateral_deviation,
            "mitigation_pct": self.mitigation_pct,
            "baseline_out_of_lane": self.baseline.out_of_lane,
            "mitigated_out_of_lane": self.mitigated.out_of_lane,
        }


@dataclass
class SweepTable:
    cells: list = field(default_factory=list)

    def rows(self) -> list:
        return [c.row() for c in self.cells]

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.rows()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [], lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(v) for k, v in r.items()})
        return buf.getvalue()


def _sweep_cell(args) -> SweepCell:
    base_cfg, position, strength, variant = args
    cfg = base_cfg.with_attack(patch_start=float(position), strength=float(strength))
    baseline, mitigated = run_pair(cfg, variant)
    return SweepCell(float(position), float(strength), baseline, mitigated)


def sweep(
    base: ScenarioConfig,
    patch_positions: Sequence[float],
    strengths: Sequence[float],
    variant: str = "mitigated",
    jobs: int = 1,
) -> SweepTable:
    """Baseline/mitigated pairs over the cross product of positions and strengths."""
    if not patch_positions or not strengths:
        raise ValueError("patch_positions and strengths must be non-empty")
    tasks = [(base, p, s, variant) for p in patch_positions for s in strengths]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_sweep_cell, tasks))
    else:
        cells = [_sweep_cell(t) for t in tasks]
    return SweepTable(cells)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trace_csv(result: RunResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    cols = [result.trace[c] for c in TRACE_COLUMNS]
    for i in range(result.n_rows):
        writer.writerow([_fmt(c[i]) for c in cols])
    return buf.getvalue()


def summary_json(result: RunResult) -> str:
    return json.dumps(result.summary(), indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def export(result: RunResult, out_dir) -> tuple[Path, Path]:
    """Write ``trace.csv`` and ``summary.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.csv"
    summary_path = out / "summary.json"
    trace_path.write_text(trace_csv(result))
    summary_path.write_text(summary_json(result))
    return trace_path, summary_path


def export_sweep(table: SweepTable, out_dir) -> Path:
    out = Path(out_dir)
    for cell in table.cells:
        cell_dir = out / f"patch{cell.patch_start:g}_strength{cell.strength:g}"
        export(cell.baseline, cell_dir / "baseline")
        export(cell.mitigated, cell_dir / cell.mitigated.variant)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    path.write_text(table.to_csv())
    return path


def load_trace(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in TRACE_COLUMNS}


@dataclass
class Calibration:
    path_bias_gain: float
    conf_floor: float
    baseline_deviation: float
    history: list

    def to_dict(self) -> dict:
        return {
            "path_bias_gain": self.path_bias_gain,
            "conf_floor": self.conf_floor,
            "baseline_deviation": self.baseline_deviation,
            "history": self.history,
        }


def calibrate(
    cfg: ScenarioConfig,
    band: tuple = (0.8, 1.2),
    target: float = 1.0,
    tol: float = 0.05,
    floors: Sequence[float] = (0.1, 0.05, 0.2),
    max_iter: int = 8,
) -> Calibration:
    """Find a path bias gain (and confidence floor) that puts the baseline in ``band``.

    Runs the baseline on ``cfg`` as given (reference: patch at 40 m, strength
    1). The baseline deviation is close to proportional to the gain, so a
    secant iteration on the gain converges in a few runs.
    """
    history = []

    def deviation(gain, floor):
        trial = cfg.with_attack(path_bias_gain=gain, conf_floor=floor)
        dev = run_scenario(trial, "baseline").max_abs_lateral_deviation
        history.append({"path_bias_gain": gain, "conf_floor": floor, "baseline_deviation": dev})
        log.info("calibrate: gain=%.4f floor=%.3f -> %.4f m", gain, floor, dev)
        return dev

    best = None
    for floor in floors:
        g0 = cfg.attack.path_bias_gain
        d0 = deviation(g0, floor)
        g1 = g0 * target / d0 if d0 > 0 else 2 * g0
        for _ in range(max_iter):
            if abs(d0 - target) <= tol:
                break
            d1 = deviation(g1, floor)
            if abs(d1 - target) <= tol:
                g0, d0 = g1, d1
                break
            slope = (d1 - d0) / (g1 - g0) if g1 != g0 else 0.0
            g0, d0 = g1, d1
            g1 = g1 + (target - d1) / slope if slope > 0 else g1 * target / d1
            g1 = max(g1, 1e-3)
        if best is None or abs(d0 - target) < abs(best[2] - target):
            best = (g0, floor, d0)
        if band[0] <= d0 <= band[1]:
            break
    return Calibration(best[0], best[1], best[2], history)


def write_lockfile(cal: Calibration, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cal.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def apply_lockfile(cfg: ScenarioConfig, path) -> ScenarioConfig:
    data = json.loads(Path(path).read_text())
    return cfg.with_attack(path_bias_gain=float(data["path_bias_gain"]), conf_floor=float(data["conf_floor"]))


def collect_summaries(root) -> list:
    """All ``summary.json`` files below ``root`` as (relative dir, summary) pairs."""
    root = Path(root)
    found = []
    for path in sorted(root.rglob("summary.json")):
        found.append((str(path.parent.relative_to(root)) or ".", json.loads(path.read_text())))
    return found


REPORT_COLUMNS = ("run", "variant", "patch_start", "strength", "max_dev_m", "out_of_lane", "mitigation_pct")


def report_rows(root) -> list:
    rows = []
    for rel, s in collect_summaries(root):
        attack = s["config"]["attack"]
        m = s["metrics"]
        rows.append(
            {
                "run": rel,
                "variant": s["variant"],
                "patch_start": attack["patch_start"],
                "strength": attack["strength"],
                "max_dev_m": m["max_abs_lateral_deviation"],
                "out_of_lane": m["out_of_lane"],
                "mitigation_pct": m["mitigation_pct"],
            }
        )
    return rows


def report_markdown(rows) -> str:
    lines = ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
    for r in rows:
        cells = []
        for c in REPORT_COLUMNS:
            v = r[c]
            if v is None:
                cells.append("n/a")
            elif isinstance(v, bool):
                cells.append("yes" if v else "no")
            elif isinstance(v, float):
                cells.append(f"{v:.3f}" if c != "mitigation_pct" else f"{v:.1f}")
            else:
                cells.append(str(v))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def report_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(v) if not isinstance(v, str) else v for k, v in r.items()})
    return buf.getvalue()
