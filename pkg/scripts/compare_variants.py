"""Lateral deviation over time for the four pipeline variants on one scenario.

Writes each run (trace.csv + summary.json) under --out, prints a table, and
saves deviation.png when matplotlib is available.
"""

import argparse
from dataclasses import replace
from pathlib import Path

from ualc.harness import export, pair, run_scenario
from ualc.scenario import ScenarioConfig, load_scenario

RUNS = (
    ("benign_baseline", "baseline", True),
    ("attacked_baseline", "baseline", False),
    ("attacked_mitigated_no_cache", "mitigated_no_cache", False),
    ("attacked_mitigated", "mitigated", False),
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", type=Path)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("results/compare"))
    args = parser.parse_args()

    cfg = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    cfg = replace(cfg, seed=args.seed)
    results = {}
    for name, variant, benign in RUNS:
        run_cfg = cfg.with_attack(strength=0.0) if benign else cfg
        results[name] = run_scenario(run_cfg, variant)
    attacked = results["attacked_baseline"]
    for name in ("attacked_mitigated_no_cache", "attacked_mitigated"):
        results[name] = pair(attacked, results[name])

    print(f"{'run':30s} {'max |dev| (m)':>14s} {'out of lane':>12s} {'mitigation %':>13s}")
    for name, r in results.items():
        export(r, args.out / name)
        pct = "" if r.mitigation_pct is None else f"{r.mitigation_pct:.1f}"
        print(f"{name:30s} {r.max_abs_lateral_deviation:14.3f} {str(r.out_of_lane):>12s} {pct:>13s}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot")
        return
    fig, ax = plt.subplots(figsize=(8, 4))
    for name, r in results.items():
        ax.plot(r.trace["x"], r.deviation, label=name.replace("_", " "))
    patch = cfg.attack
    ax.axvspan(patch.patch_start, patch.patch_start + patch.patch_length, color="0.9", label="patch")
    ax.axhline(0.735, ls="--", c="k", lw=0.8)
    ax.axhline(-0.735, ls="--", c="k", lw=0.8)
    ax.set_xlabel("longitudinal position (m)")
    ax.set_ylabel("lateral deviation (m, left +)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = args.out / "deviation.png"
    fig.savefig(path, dpi=120)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
