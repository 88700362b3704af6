#!/usr/bin/env python3
"""Run the full attack/evaluation pipeline on the seeded default benchmark.

Equivalent to:
    hgattack run --preset default --out results/benchmark --seed 0 \
        --budgets 1,3,5 --variants semantics_aware,info,random,fga_baseline

Prints a compact micro-F1 table per victim at the end.
"""

import argparse
import json
import sys
from pathlib import Path

from hgattack.experiment import experiment_config_from_dict, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/benchmark")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--num-targets", type=int, default=50)
    parser.add_argument("--budgets", default="1,3,5")
    args = parser.parse_args()

    config = experiment_config_from_dict({
        "out_dir": args.out,
        "preset": "default",
        "synthetic_seed": args.seed,
        "surrogate": {"seed": args.seed},
        "variants": ["semantics_aware", "info", "random", "fga_baseline"],
        "budgets": [int(b) for b in args.budgets.split(",")],
        "num_targets": args.num_targets,
    })
    manifest = run_experiment(config)

    summary = json.loads((Path(args.out) / "eval_summary.json").read_text())
    for victim, entry in summary["victims"].items():
        print(f"\n{victim}: clean micro-F1 {entry['clean']['micro_f1']:.3f}")
        for variant, by_budget in entry["attacked"].items():
            cells = "  ".join(
                f"b={b}: {v['micro_f1']:.3f}" for b, v in sorted(
                    by_budget.items(), key=lambda kv: int(kv[0])))
            print(f"  {variant:<16} {cells}")
    total = manifest["telemetry"]["wall_time_s"]["total"]
    print(f"\nartifacts in {args.out} ({total:.0f}s, "
          f"peak RSS {manifest['telemetry']['peak_rss_kb']} kB)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
