"""Mitigation table over patch positions and attack strengths.

Equivalent to `ualc sweep` but prints the table in the grid layout
(positions as rows, strengths as columns).
"""

import argparse
from pathlib import Path

from ualc.harness import export_sweep, sweep
from ualc.scenario import ScenarioConfig, load_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", type=Path)
    parser.add_argument("--positions", default="40,80,120")
    parser.add_argument("--strengths", default="0.25,0.5,0.75,1.0")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("results/sweep"))
    args = parser.parse_args()

    cfg = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    positions = [float(v) for v in args.positions.split(",")]
    strengths = [float(v) for v in args.strengths.split(",")]
    table = sweep(cfg, positions, strengths, jobs=args.jobs)
    export_sweep(table, args.out)

    cells = {(c.patch_start, c.strength): c for c in table.cells}
    header = "patch (m) | " + " | ".join(f"s={s:g}" for s in strengths)
    print(header)
    print("-" * len(header))
    for p in positions:
        row = []
        for s in strengths:
            c = cells[(p, s)]
            pct = "n/a" if c.mitigation_pct is None else f"{c.mitigation_pct:.1f}%"
            row.append(f"{c.baseline.max_abs_lateral_deviation:.2f}->{c.mitigated.max_abs_lateral_deviation:.2f} m ({pct})")
        print(f"{p:9g} | " + " | ".join(row))
    print(f"wrote {args.out / 'sweep.csv'}")


if __name__ == "__main__":
    main()
