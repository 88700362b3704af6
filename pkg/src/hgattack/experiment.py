"""End-to-end experiment driver: train, attack, evaluate, analyze, report.

A run is a pure function of its config: every random draw is seeded from a
config field and recorded in the manifest, artifact rows are sorted by
target id, and a rerun with the same config reproduces every JSON/CSV
artifact byte for byte (the manifest's timestamp and telemetry excepted).
"""

from __future__ import annotations

import csv
import json
import platform
import resource
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (adversarial_degree_stats, compare_distributions,
                       label_inconsistency)
from .attack import AttackConfig, apply_attack, run_attacks, \
    save_results_jsonl
from .graphio import load_graph
from .hgraph import HeteroGraph
from .surrogate import SurrogateConfig, init_model, train
from .synthetic import (SyntheticSpec, RelationSpec, default_benchmark_spec,
                        generate_synthetic, separable_benchmark_spec)
from .victims import VictimKind, clean_report, evaluate, train_victim

PRESETS = {
    "default": default_benchmark_spec,
    "separable": separable_benchmark_spec,
}


class ConfigError(ValueError):
    """The experiment configuration is inconsistent or incomplete."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class VictimSpec:
    kind: str
    seed: int
    hidden_dim: int = 48


@dataclass
class ExperimentConfig:
    out_dir: str
    graph_path: str | None = None
    synthetic: SyntheticSpec | None = None
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    variants: list[str] = field(default_factory=lambda: ["semantics_aware"])
    budgets: list[int] = field(default_factory=lambda: [1, 3, 5])
    victims: list[VictimSpec] = field(default_factory=lambda: [
        VictimSpec("metapath_attention", seed=101),
        VictimSpec("relation_onehop", seed=202)])
    num_targets: int = 50
    target_seed: int = 7
    attack_seed: int = 13
    analysis_budget: int | None = None  # defaults to 3 when budgeted, else max

    def validate(self) -> None:
        if (self.graph_path is None) == (self.synthetic is None):
            raise ConfigError("exactly one of graph_path or synthetic is required")
        if not self.budgets or any(b < 1 for b in self.budgets):
            raise ConfigError("budgets must be a non-empty list of integers >= 1")
        if not self.variants:
            raise ConfigError("at least one attack variant is required")
        from .attack import VARIANTS
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown attack variant '{v}'")
        if self.num_targets < 1:
            raise ConfigError("num_targets must be >= 1")
        if not self.victims:
            raise ConfigError("at least one victim is required")
        for vs in self.victims:
            try:
                VictimKind(vs.kind)
            except ValueError:
                raise ConfigError(f"unknown victim kind '{vs.kind}'") from None
            if vs.seed == self.surrogate.seed:
                raise ConfigError(
                    f"victim seed {vs.seed} must differ from the surrogate seed")
            if (vs.kind == VictimKind.METAPATH_ATTENTION.value
                    and vs.hidden_dim == self.surrogate.hidden_dim):
                raise ConfigError(
                    "metapath_attention victim must not share the surrogate's "
                    "hidden size")


def experiment_config_from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    try:
        if "preset" in doc:
            preset = doc.pop("preset")
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset '{preset}'")
            doc["synthetic"] = PRESETS[preset](doc.pop("synthetic_seed", 0))
        elif "synthetic" in doc and doc["synthetic"] is not None:
            syn = dict(doc["synthetic"])
            syn["relations"] = [RelationSpec(**r) for r in syn.get("relations", [])]
            doc["synthetic"] = SyntheticSpec(**syn)
        if "surrogate" in doc:
            doc["surrogate"] = SurrogateConfig(**doc["surrogate"])
        if "victims" in doc:
            doc["victims"] = [VictimSpec(**v) for v in doc["victims"]]
        config = ExperimentConfig(**doc)
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from err
    config.validate()
    return config


def select_targets(graph: HeteroGraph, num_targets: int, seed: int) -> np.ndarray:
    """Uniform draw (without replacement) of labeled nodes outside the
    training split, sorted for deterministic artifact ordering."""
    pool = np.flatnonzero(graph.labels >= 0)
    if graph.train_nodes is not None:
        in_train = np.zeros(graph.n_target, dtype=bool)
        in_train[graph.train_nodes] = True
        pool = pool[~in_train[pool]]
    else:
        warnings.warn("graph has no training split; targets may overlap the "
                      "training labels", stacklevel=2)
    if pool.size == 0:
        raise ConfigError("no labeled non-training nodes to target")
    rng = np.random.default_rng(seed)
    take = min(num_targets, pool.size)
    if take < num_targets:
        warnings.warn(f"only {take} of {num_targets} requested targets are "
                      f"available", stacklevel=2)
    return np.sort(rng.choice(pool, size=take, replace=False))


def _victim_key(spec: VictimSpec) -> str:
    return f"{spec.kind}:{spec.seed}"


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute the full pipeline; returns the manifest written to out_dir."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    telemetry: dict[str, float] = {}
    started = time.time()

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except StageError:
            raise
        except Exception as err:
            raise StageError(name, err) from err
        telemetry[name] = round(time.perf_counter() - t0, 3)
        return result

    def load_stage():
        if config.graph_path is not None:
            return load_graph(config.graph_path)
        return generate_synthetic(config.synthetic)

    graph = stage("load-graph", load_stage)

    def surrogate_stage():
        model = init_model(graph, config.surrogate)
        report = train(model, graph)
        return model, report

    model, train_report = stage("train-surrogate", surrogate_stage)

    victims = stage("train-victims", lambda: {
        _victim_key(vs): train_victim(VictimKind(vs.kind), graph, vs.seed,
                                      hidden_dim=vs.hidden_dim)
        for vs in config.victims})

    targets = stage("select-targets", lambda: select_targets(
        graph, config.num_targets, config.target_seed))

    def attack_stage():
        results = {}
        max_budget = max(config.budgets)
        for variant in config.variants:
            cfg = AttackConfig(budget=max_budget, variant=variant,
                               seed=config.attack_seed)
            res = run_attacks(model, graph, targets, cfg)
            save_results_jsonl(res, out / f"attacks_{variant}.jsonl")
            results[variant] = res
        return results

    attack_results = stage("attack", attack_stage)

    def evaluate_stage():
        summary = {"targets": [int(t) for t in targets], "victims": {}}
        for vs in config.victims:
            key = _victim_key(vs)
            victim = victims[key]
            clean = clean_report(victim, graph, targets)
            entry = {"clean": {"macro_f1": clean.macro_f1,
                               "micro_f1": clean.micro_f1},
                     "attacked": {}}
            for variant in config.variants:
                entry["attacked"][variant] = {}
                for budget in sorted(config.budgets):
                    report = evaluate(victim, graph, attack_results[variant],
                                      budget, targets=targets)
                    entry["attacked"][variant][str(budget)] = {
                        "macro_f1": report.macro_f1,
                        "micro_f1": report.micro_f1,
                    }
                    _write_eval_csv(
                        out / f"eval_{vs.kind}_{vs.seed}_{variant}_b{budget}.csv",
                        report)
            summary["victims"][key] = entry
        with open(out / "eval_summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        return summary

    eval_summary = stage("evaluate", evaluate_stage)

    def analyze_stage():
        budget = config.analysis_budget
        if budget is None:
            budget = 3 if 3 in config.budgets else max(config.budgets)
        rows = []
        for path in graph.meta_paths:
            clean = label_inconsistency(graph, path, targets)
            rows.append(["clean", path.name, 0, _fmt(clean.mean_score),
                         len(clean.per_target), len(clean.skipped)])
            for variant in config.variants:
                scores = []
                skipped = 0
                for res in attack_results[variant]:
                    work = graph.copy()
                    apply_attack(work, res, budget)
                    report = label_inconsistency(work, path, [res.target])
                    if report.mean_score is None:
                        skipped += 1
                    else:
                        scores.append(report.mean_score)
                mean = float(np.mean(scores)) if scores else None
                rows.append([variant, path.name, budget, _fmt(mean),
                             len(scores), skipped])
        with open(out / "label_inconsistency.csv", "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "meta_path", "budget", "mean_score",
                             "n_scored", "n_skipped"])
            writer.writerows(rows)

        degree_doc = {}
        for variant in config.variants:
            stats = adversarial_degree_stats(graph, attack_results[variant])
            degree_doc[variant] = {
                "threshold": stats.threshold,
                "large_degree_percentage": stats.large_degree_percentage,
                "n_adversarial": int(stats.adversarial_degrees.size),
            }
            hist = compare_distributions(stats.neighbor_degrees,
                                         stats.adversarial_degrees)
            with open(out / f"degree_hist_{variant}.csv", "w", newline="",
                      encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["bin_lo", "bin_hi", "neighbor_density",
                                 "adversarial_density"])
                for i in range(len(hist.neighbor_density)):
                    writer.writerow([_fmt(hist.bin_edges[i]),
                                     _fmt(hist.bin_edges[i + 1]),
                                     _fmt(hist.neighbor_density[i]),
                                     _fmt(hist.adversarial_density[i])])
        with open(out / "degree_stats.json", "w", encoding="utf-8") as fh:
            json.dump(degree_doc, fh, indent=2, sort_keys=True)

    stage("analyze", analyze_stage)

    manifest = {
        "config": _config_doc(config),
        "package_version": __version__,
        "versions": {"python": platform.python_version(),
                     "numpy": np.__version__},
        "train_report": {"final_train_accuracy": train_report.final_train_accuracy,
                         "epochs_run": train_report.epochs_run},
        "targets": [int(t) for t in targets],
        "telemetry": {
            "wall_time_s": {**telemetry,
                            "total": round(time.time() - started, 3)},
            "peak_rss_kb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
        },
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _fmt(x):
    return "" if x is None else float(x)


def _config_doc(config: ExperimentConfig) -> dict:
    doc = asdict(config)
    return doc


def _write_eval_csv(path, report) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "clean_prediction", "attacked_prediction",
                         "truth"])
        for row in report.rows:
            writer.writerow([row["target"], row["clean_prediction"],
                             row["attacked_prediction"], row["truth"]])
