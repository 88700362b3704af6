"""Empirical-analysis metrics: label inconsistency and adversarial degrees.

The label inconsistency score of a target under a meta-path is the mean,
over its one-hop composed-graph neighbors, of the fraction of THEIR
composed-graph neighbors (two hops from the target) whose label differs
from the target's. Degree statistics compare the nodes an attack attaches
to the target against the clean degree distribution of all reachable
neighbor-type nodes, using a pinned nearest-rank 90th percentile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackResult
from .hgraph import HeteroGraph, MetaPath, compose_metapath


@dataclass
class LabelInconsistencyReport:
    meta_path: str
    mean_score: float | None          # None when every target was skipped
    per_target: dict[int, float] = field(default_factory=dict)
    skipped: list[int] = field(default_factory=list)


@dataclass
class DegreeStats:
    neighbor_degrees: np.ndarray      # clean degrees of all reachable neighbor-type nodes
    adversarial_degrees: np.ndarray   # clean degrees of added endpoints
    threshold: int                    # nearest-rank 90th percentile of neighbor degrees
    large_degree_percentage: float | None  # None when the attack added no edges


@dataclass
class HistogramPair:
    bin_edges: np.ndarray
    neighbor_density: np.ndarray
    adversarial_density: np.ndarray


def label_inconsistency(graph: HeteroGraph, meta_path: MetaPath, targets,
                        labels=None) -> LabelInconsistencyReport:
    """Mean two-hop label disagreement per target on one composed graph.

    Composition self-loops never count as neighbors, the target itself is
    not one of its own two-hop neighbors, unlabeled two-hop nodes are
    ignored, and targets with no usable neighborhood are skipped (and
    listed) rather than scored.
    """
    labels = graph.labels if labels is None else np.asarray(labels)
    composed = compose_metapath(graph, meta_path).composed
    per_target: dict[int, float] = {}
    skipped: list[int] = []
    for t in targets:
        t = int(t)
        y_t = labels[t]
        if y_t < 0:
            skipped.append(t)
            continue
        one_hop = np.flatnonzero(composed[t] > 0)
        one_hop = one_hop[one_hop != t]
        deltas = []
        for i in one_hop:
            two_hop = np.flatnonzero(composed[i] > 0)
            two_hop = two_hop[(two_hop != i) & (two_hop != t)
                              & (labels[two_hop] >= 0)]
            if two_hop.size == 0:
                continue
            deltas.append(float((labels[two_hop] != y_t).mean()))
        if not deltas:
            skipped.append(t)
            continue
        per_target[t] = float(np.mean(deltas))
    mean_score = float(np.mean(list(per_target.values()))) if per_target else None
    return LabelInconsistencyReport(meta_path=meta_path.name,
                                    mean_score=mean_score,
                                    per_target=per_target, skipped=skipped)


def nearest_rank_percentile(values, pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * n)-th order statistic."""
    arr = np.sort(np.asarray(values))
    if arr.size == 0:
        raise ValueError("percentile of an empty list")
    rank = max(1, math.ceil(pct / 100.0 * arr.size))
    return float(arr[rank - 1])


def _relation_degree(graph: HeteroGraph, relation_id: int) -> np.ndarray:
    """Clean degree of each destination node under one relation (column sums)."""
    return graph.relations[relation_id].adjacency.sum(axis=0)


def adversarial_degree_stats(clean_graph: HeteroGraph,
                             attack_results: list[AttackResult]) -> DegreeStats:
    """Degrees of added endpoints vs. the clean neighbor-type degree pool.

    The pool holds, for every relation leaving the target type, the clean
    degree of every destination node under that relation; an adversarial
    node's degree is measured under the relation of its ADD step. The
    90th-percentile threshold always comes from the clean pool.
    """
    neighbor_degrees = []
    for rel in clean_graph.direct_relations():
        neighbor_degrees.append(_relation_degree(clean_graph, rel.id))
    if not neighbor_degrees:
        raise ValueError("graph has no relations leaving the target type")
    neighbor_degrees = np.concatenate(neighbor_degrees)

    adversarial = []
    for res in attack_results:
        for step in res.steps:
            rel = clean_graph.relations[step.relation_id]
            if not 0 <= step.dst < rel.adjacency.shape[1]:
                raise ValueError(
                    f"attack step references node {step.dst} outside relation "
                    f"'{rel.name}'")
            if step.direction == "add":
                adversarial.append(rel.adjacency[:, step.dst].sum())
    adversarial = np.asarray(adversarial, dtype=np.float64)

    threshold = nearest_rank_percentile(neighbor_degrees, 90.0)
    percentage = (float((adversarial >= threshold).mean() * 100.0)
                  if adversarial.size else None)
    return DegreeStats(neighbor_degrees=neighbor_degrees,
                       adversarial_degrees=adversarial,
                       threshold=threshold,
                       large_degree_percentage=percentage)


def compare_distributions(neighbor_degrees, adversarial_degrees,
                          bins: int = 20) -> HistogramPair:
    """Shared log-spaced histograms normalized to unit mass per distribution.

    Bins are log-spaced on degree+1 so degree 0 is representable; densities
    are counts / list length (each distribution sums to 1 when non-empty).
    """
    neighbor = np.asarray(neighbor_degrees, dtype=np.float64)
    adversarial = np.asarray(adversarial_degrees, dtype=np.float64)
    if neighbor.size == 0:
        raise ValueError("neighbor degree list must be non-empty")
    hi = max(neighbor.max(), adversarial.max() if adversarial.size else 0.0) + 1.0
    if hi <= 1.0:
        edges = np.array([-0.5, 0.5])
    else:
        edges = np.logspace(0.0, np.log10(hi), bins + 1) - 1.0
        # Rounding of the outermost edges must not drop integer degrees.
        edges[0] = -0.5
        edges[-1] = hi - 0.5
    n_counts, _ = np.histogram(neighbor, bins=edges)
    a_counts, _ = np.histogram(adversarial, bins=edges)
    n_density = n_counts / neighbor.size
    a_density = a_counts / adversarial.size if adversarial.size else a_counts * 0.0
    return HistogramPair(bin_edges=edges, neighbor_density=n_density,
                         adversarial_density=a_density)
