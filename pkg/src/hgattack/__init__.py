"""Gray-box topology attacks on heterogeneous graph neural networks."""

__version__ = "0.1.0"

from .hgraph import (HeteroGraph, MetaPath, MetaPathGraph, NodeType, Relation,
                     GraphError, compose_metapath, normalize, flip_edge,
                     complement_mask)
from .surrogate import (SurrogateConfig, SurrogateModel, TrainReport,
                        PseudoLabels, init_model, train, pseudo_labels,
                        forward_logits, save_model, load_model)
from .attack import (AttackConfig, AttackResult, PerturbationStep,
                     relation_gradients, semantics_weight, select_flip,
                     hgattack, fga_baseline, random_flip_attack, apply_attack,
                     run_attacks)
from .victims import VictimKind, EvalReport, train_victim, evaluate
from .analysis import (LabelInconsistencyReport, DegreeStats,
                       label_inconsistency, adversarial_degree_stats,
                       compare_distributions)
from .graphio import load_graph, save_graph
from .synthetic import (SyntheticSpec, RelationSpec, generate_synthetic,
                        default_benchmark_spec, separable_benchmark_spec)
from .experiment import ExperimentConfig, VictimSpec, run_experiment

__all__ = [
    "HeteroGraph", "MetaPath", "MetaPathGraph", "NodeType", "Relation",
    "GraphError", "compose_metapath", "normalize", "flip_edge",
    "complement_mask", "SurrogateConfig", "SurrogateModel", "TrainReport",
    "PseudoLabels", "init_model", "train", "pseudo_labels", "forward_logits",
    "save_model", "load_model", "AttackConfig", "AttackResult",
    "PerturbationStep", "relation_gradients", "semantics_weight",
    "select_flip", "hgattack", "fga_baseline", "random_flip_attack",
    "apply_attack", "run_attacks", "VictimKind", "EvalReport", "train_victim",
    "evaluate", "LabelInconsistencyReport", "DegreeStats",
    "label_inconsistency", "adversarial_degree_stats", "compare_distributions",
    "load_graph", "save_graph", "SyntheticSpec", "RelationSpec",
    "generate_synthetic", "default_benchmark_spec", "separable_benchmark_spec",
    "ExperimentConfig", "VictimSpec", "run_experiment",
]
