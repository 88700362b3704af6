"""Command-line entry points.

Subcommands: ``generate``, ``train-surrogate``, ``attack``, ``evaluate``,
``analyze`` and ``run`` (the end-to-end pipeline). Exit codes: 0 on
success, 2 for configuration/usage errors, 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import adversarial_degree_stats, compare_distributions, \
    label_inconsistency
from .attack import (AttackConfig, apply_attack, load_results_jsonl,
                     run_attacks, save_results_jsonl)
from .experiment import (ConfigError, PRESETS, StageError, ExperimentConfig,
                         experiment_config_from_dict, run_experiment,
                         select_targets)
from .graphio import GraphFormatError, load_graph, save_graph
from .hgraph import GraphError
from .surrogate import SurrogateConfig, init_model, load_model, save_model, train
from .synthetic import SyntheticSpec, RelationSpec, generate_synthetic
from .victims import VictimKind, clean_report, evaluate, train_victim

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgattack",
        description="Targeted gray-box topology attacks on heterogeneous graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic benchmark graph")
    p.add_argument("--out", required=True, help="output graph JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=sorted(PRESETS), default="default")
    p.add_argument("--spec", help="JSON file with SyntheticSpec fields "
                                  "(overrides --preset)")

    p = sub.add_parser("train-surrogate", help="train and checkpoint a surrogate")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.01)

    p = sub.add_parser("attack", help="generate perturbations for target nodes")
    p.add_argument("--graph", required=True)
    p.add_argument("--model", help="surrogate checkpoint (not needed for "
                                   "fga_baseline/random)")
    p.add_argument("--variant", default="semantics_aware",
                   choices=["semantics_aware", "info", "fga_baseline", "random"])
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--num-targets", type=int, default=50)
    p.add_argument("--target-seed", type=int, default=7)
    p.add_argument("--seed", type=int, default=13,
                   help="attack-side seed (random variant, FGA training)")
    p.add_argument("--out", required=True, help="output JSONL path")

    p = sub.add_parser("evaluate", help="measure victim degradation")
    p.add_argument("--graph", required=True)
    p.add_argument("--attacks", required=True, help="attack JSONL path")
    p.add_argument("--victim", required=True,
                   choices=[k.value for k in VictimKind])
    p.add_argument("--victim-seed", type=int, default=101)
    p.add_argument("--hidden-dim", type=int, default=48)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("analyze", help="label inconsistency and degree stats")
    p.add_argument("--graph", required=True)
    p.add_argument("--attacks", required=True)
    p.add_argument("--budget", type=int, default=3)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("run", help="end-to-end experiment")
    p.add_argument("--config", help="ExperimentConfig as JSON")
    p.add_argument("--out", help="output directory (with flags, not --config)")
    p.add_argument("--graph", help="graph JSON path")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, default=0, help="generator/surrogate seed")
    p.add_argument("--budgets", default="1,3,5")
    p.add_argument("--variants", default="semantics_aware,random,fga_baseline")
    p.add_argument("--num-targets", type=int, default=50)
    p.add_argument("--target-seed", type=int, default=7)
    return parser


def _cmd_generate(args) -> int:
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            doc = json.load(fh)
        doc.setdefault("seed", args.seed)
        doc["relations"] = [RelationSpec(**r) for r in doc.get("relations", [])]
        spec = SyntheticSpec(**doc)
    else:
        spec = PRESETS[args.preset](args.seed)
    graph = generate_synthetic(spec)
    save_graph(graph, args.out)
    print(f"wrote {args.out}: {sum(nt.count for nt in graph.node_types)} nodes, "
          f"{len(graph.relations)} relations, {len(graph.meta_paths)} meta-paths")
    return EXIT_OK


def _cmd_train_surrogate(args) -> int:
    graph = load_graph(args.graph)
    cfg = SurrogateConfig(hidden_dim=args.hidden_dim, max_epochs=args.epochs,
                          learning_rate=args.learning_rate, seed=args.seed)
    model = init_model(graph, cfg)
    report = train(model, graph)
    save_model(model, args.out)
    print(f"trained {report.epochs_run} epochs, train accuracy "
          f"{report.final_train_accuracy:.3f}; checkpoint at {args.out}")
    return EXIT_OK


def _cmd_attack(args) -> int:
    graph = load_graph(args.graph)
    config = AttackConfig(budget=args.budget, variant=args.variant,
                          seed=args.seed)
    model = None
    if args.variant in ("semantics_aware", "info"):
        if not args.model:
            raise ConfigError(f"--model is required for variant '{args.variant}'")
        model = load_model(args.model)
    targets = select_targets(graph, args.num_targets, args.target_seed)
    results = run_attacks(model, graph, targets, config)
    save_results_jsonl(results, args.out)
    n_steps = sum(len(r.steps) for r in results)
    print(f"attacked {len(results)} targets ({n_steps} flips) -> {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    graph = load_graph(args.graph)
    results = load_results_jsonl(args.attacks)
    victim = train_victim(VictimKind(args.victim), graph, args.victim_seed,
                          hidden_dim=args.hidden_dim)
    targets = sorted(r.target for r in results)
    clean = clean_report(victim, graph, targets)
    attacked = evaluate(victim, graph, results, args.budget, targets=targets)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "clean_prediction", "attacked_prediction",
                         "truth"])
        for row in attacked.rows:
            writer.writerow([row["target"], row["clean_prediction"],
                             row["attacked_prediction"], row["truth"]])
    summary = {
        "victim": args.victim, "victim_seed": args.victim_seed,
        "budget": args.budget,
        "clean": {"macro_f1": clean.macro_f1, "micro_f1": clean.micro_f1},
        "attacked": {"macro_f1": attacked.macro_f1,
                     "micro_f1": attacked.micro_f1},
    }
    with open(out / "eval_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"micro F1 clean {clean.micro_f1:.3f} -> attacked "
          f"{attacked.micro_f1:.3f}; artifacts in {out}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    graph = load_graph(args.graph)
    results = load_results_jsonl(args.attacks)
    targets = sorted(r.target for r in results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for path in graph.meta_paths:
        clean = label_inconsistency(graph, path, targets)
        rows.append(["clean", path.name, 0,
                     "" if clean.mean_score is None else clean.mean_score,
                     len(clean.per_target), len(clean.skipped)])
        scores = []
        skipped = 0
        for res in results:
            work = graph.copy()
            apply_attack(work, res, args.budget)
            rep = label_inconsistency(work, path, [res.target])
            if rep.mean_score is None:
                skipped += 1
            else:
                scores.append(rep.mean_score)
        rows.append(["attacked", path.name, args.budget,
                     "" if not scores else float(np.mean(scores)),
                     len(scores), skipped])
    with open(out / "label_inconsistency.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "meta_path", "budget", "mean_score",
                         "n_scored", "n_skipped"])
        writer.writerows(rows)

    stats = adversarial_degree_stats(graph, results)
    hist = compare_distributions(stats.neighbor_degrees,
                                 stats.adversarial_degrees)
    with open(out / "degree_hist.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "neighbor_density",
                         "adversarial_density"])
        for i in range(len(hist.neighbor_density)):
            writer.writerow([hist.bin_edges[i], hist.bin_edges[i + 1],
                             hist.neighbor_density[i],
                             hist.adversarial_density[i]])
    with open(out / "degree_stats.json", "w", encoding="utf-8") as fh:
        json.dump({"threshold": stats.threshold,
                   "large_degree_percentage": stats.large_degree_percentage,
                   "n_adversarial": int(stats.adversarial_degrees.size)},
                  fh, indent=2, sort_keys=True)
    print(f"analysis artifacts in {out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
        config = experiment_config_from_dict(doc)
    else:
        if not args.out:
            raise ConfigError("--out is required without --config")
        doc = {
            "out_dir": args.out,
            "budgets": [int(b) for b in args.budgets.split(",") if b],
            "variants": [v for v in args.variants.split(",") if v],
            "num_targets": args.num_targets,
            "target_seed": args.target_seed,
            "surrogate": {"seed": args.seed},
        }
        if args.graph:
            doc["graph_path"] = args.graph
        else:
            doc["preset"] = args.preset or "default"
            doc["synthetic_seed"] = args.seed
        config = experiment_config_from_dict(doc)
    manifest = run_experiment(config)
    print(f"experiment complete; artifacts in {config.out_dir} "
          f"(total {manifest['telemetry']['wall_time_s']['total']}s)")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "train-surrogate": _cmd_train_surrogate,
    "attack": _cmd_attack,
    "evaluate": _cmd_evaluate,
    "analyze": _cmd_analyze,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, GraphFormatError, GraphError, FileNotFoundError,
            json.JSONDecodeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as err:
        print(f"runtime failure in {err.stage}: {err.cause}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as err:  # pragma: no cover - last-resort diagnostics
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
