"""Command-line entry point: run, sweep, calibrate, report."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import harness
from .core import ConfigError
from .pipeline import VARIANTS
from .scenario import ScenarioConfig, apply_overrides, load_scenario


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _kv(text: str) -> tuple:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _scenario(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    overrides = dict(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "max_steer_deg", None) is not None:
        overrides["mpc.max_steer_deg"] = str(args.max_steer_deg)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if getattr(args, "calibration", None):
        cfg = harness.apply_lockfile(cfg, args.calibration)
    return cfg


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--scenario", type=Path, help="scenario INI file (defaults to the reference scenario)")
    p.add_argument("--calibration", type=Path, help="lockfile from `calibrate` to apply")
    p.add_argument("--set", type=_kv, action="append", metavar="SECTION.KEY=VALUE", help="override a scenario value")


def cmd_run(args) -> int:
    cfg = _scenario(args)
    if args.paired and args.variant != "baseline":
        baseline, result = harness.run_pair(cfg, args.variant)
        harness.export(baseline, args.out / "baseline")
        harness.export(result, args.out / args.variant)
        out = args.out / args.variant
    else:
        result = harness.run_scenario(cfg, args.variant)
        harness.export(result, args.out)
        out = args.out
    line = f"{result.variant}: max |deviation| {result.max_abs_lateral_deviation:.3f} m, out_of_lane={result.out_of_lane}"
    if result.mitigation_pct is not None:
        line += f", mitigation {result.mitigation_pct:.1f}%"
    print(line)
    print(f"wrote {out}/trace.csv and {out}/summary.json")
    return 0


def cmd_sweep(args) -> int:
    cfg = _scenario(args)
    table = harness.sweep(cfg, args.positions, args.strengths, args.variant, jobs=args.jobs)
    path = harness.export_sweep(table, args.out)
    sys.stdout.write(harness.report_markdown(harness.report_rows(args.out)))
    print(f"wrote {path}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _scenario(args)
    cal = harness.calibrate(cfg, target=args.target)
    path = harness.write_lockfile(cal, args.out)
    print(
        f"path_bias_gain={cal.path_bias_gain:.4f} conf_floor={cal.conf_floor:g} "
        f"baseline deviation={cal.baseline_deviation:.3f} m -> {path}"
    )
    return 0


def cmd_report(args) -> int:
    rows = harness.report_rows(args.dir)
    if not rows:
        print(f"no summary.json found under {args.dir}", file=sys.stderr)
        return 1
    text = harness.report_csv(rows) if args.format == "csv" else harness.report_markdown(rows)
    if args.out:
        args.out.write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ualc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one closed-loop scenario")
    _add_common(p)
    p.add_argument("--variant", choices=VARIANTS, default="mitigated")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steer-deg", type=float)
    p.add_argument("--paired", action="store_true", help="also run the baseline and report mitigation")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="baseline/mitigated pairs over patch positions and strengths")
    _add_common(p)
    p.add_argument("--positions", type=_floats, default=[40.0, 80.0, 120.0])
    p.add_argument("--strengths", type=_floats, default=[0.25, 0.5, 0.75, 1.0])
    p.add_argument("--variant", choices=VARIANTS[1:], default="mitigated")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="fit attack effect sizes to the reference baseline deviation")
    _add_common(p)
    p.add_argument("--target", type=float, default=1.0)
    p.add_argument("--out", type=Path, default=Path("calibration.lock.json"))
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", help="tabulate every summary.json under a directory")
    p.add_argument("dir", type=Path)
    p.add_argument("--format", choices=("md", "csv"), default="md")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
