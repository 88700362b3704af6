"""Heterogeneous graph data model, meta-paths and meta-path composition.

A heterogeneous graph stores one binary adjacency matrix per directed
relation, with every relation paired to an explicit reverse relation whose
adjacency is the transpose (kept in lockstep by :func:`flip_edge`).
Meta-paths compose relation adjacencies into a homogeneous graph over the
target node type; the composed matrix carries path counts, not booleans,
so it stays differentiable downstream.
"""

from __future__ import annotations

import copy
import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

# Below this density the composition switches to CSR products. Pure speed
# optimization: 0/1 matrix products are integer-valued, so the result is
# exact in float64 regardless of summation order.
SPARSE_DENSITY_CUTOFF = 0.05


class GraphError(ValueError):
    """A heterogeneous graph or meta-path violates its contract."""


@dataclass
class NodeType:
    id: int
    name: str
    count: int
    feature_dim: int


@dataclass
class Relation:
    id: int
    name: str
    src_type: int
    dst_type: int
    reverse_id: int
    adjacency: np.ndarray  # (count(src_type) x count(dst_type)), entries in {0, 1}


@dataclass
class MetaPath:
    """Ordered relation composition starting and ending at the target type.

    The first relation is the "direct" one: its adjacency row at the target
    node is the attackable surface for this path.
    """

    name: str
    relation_ids: list[int] = field(default_factory=list)

    @property
    def direct_relation(self) -> int:
        return self.relation_ids[0]


@dataclass
class MetaPathGraph:
    meta_path: MetaPath
    composed: np.ndarray    # (n_target x n_target) path counts
    normalized: np.ndarray  # D^{-1/2} (composed + I) D^{-1/2}


class HeteroGraph:
    """Typed node sets, per-relation adjacencies, features and labels.

    Parameters
    ----------
    node_types : list of NodeType with dense ids 0..len-1.
    relations : list of Relation with dense ids 0..len-1; reverse pairing
        must be involutive and transpose-consistent.
    features : list of (count x feature_dim) float arrays, one per node type.
    labels : int array over target-type nodes; -1 marks unlabeled nodes.
    target_type : id of the node type carrying labels.
    num_classes : number of label classes (>= 2).
    meta_paths : MetaPath list; each must start and end at target_type.
    train_nodes : optional array of target-type node ids forming the
        training split. None means every labeled node trains.
    """

    def __init__(self, node_types, relations, features, labels, target_type,
                 num_classes, meta_paths=None, train_nodes=None):
        self.node_types = list(node_types)
        self.relations = list(relations)
        self.features = [np.asarray(f, dtype=np.float64) for f in features]
        self.labels = np.asarray(labels, dtype=np.int64)
        self.target_type = int(target_type)
        self.num_classes = int(num_classes)
        self.meta_paths = list(meta_paths) if meta_paths is not None else []
        self.train_nodes = (np.asarray(train_nodes, dtype=np.int64)
                            if train_nodes is not None else None)
        self._validate()

    # -- validation -----------------------------------------------------

    def _validate(self):
        if len(self.node_types) + len(self.relations) <= 2:
            raise GraphError("need |node types| + |relations| > 2")
        for idx, nt in enumerate(self.node_types):
            if nt.id != idx:
                raise GraphError(f"node type ids must be dense, got {nt.id} at {idx}")
        if self.num_classes < 2:
            raise GraphError("num_classes must be >= 2")
        if not (0 <= self.target_type < len(self.node_types)):
            raise GraphError(f"unknown target_type {self.target_type}")
        if len(self.features) != len(self.node_types):
            raise GraphError("one feature matrix per node type required")
        for nt, feat in zip(self.node_types, self.features):
            if feat.shape != (nt.count, nt.feature_dim):
                raise GraphError(
                    f"features of type '{nt.name}' have shape {feat.shape}, "
                    f"expected {(nt.count, nt.feature_dim)}")
        if self.labels.shape != (self.n_target,):
            raise GraphError(
                f"labels must cover the {self.n_target} target-type nodes")
        valid = (self.labels == -1) | ((self.labels >= 0) & (self.labels < self.num_classes))
        if not valid.all():
            raise GraphError("labels must be -1 or in [0, num_classes)")
        for idx, rel in enumerate(self.relations):
            if rel.id != idx:
                raise GraphError(f"relation ids must be dense, got {rel.id} at {idx}")
            src, dst = self.node_types[rel.src_type], self.node_types[rel.dst_type]
            if rel.adjacency.shape != (src.count, dst.count):
                raise GraphError(
                    f"relation '{rel.name}' adjacency {rel.adjacency.shape} does not "
                    f"match type counts {(src.count, dst.count)}")
            if src.count < 1 or dst.count < 1:
                raise GraphError(f"relation '{rel.name}' references an empty node type")
            vals = np.unique(rel.adjacency)
            if not np.isin(vals, (0.0, 1.0)).all():
                raise GraphError(f"relation '{rel.name}' adjacency is not binary")
            rev = self.relations[rel.reverse_id]
            if rev.reverse_id != rel.id:
                raise GraphError(f"reverse pairing of '{rel.name}' is not involutive")
            if rel.reverse_id == rel.id:
                if rel.src_type != rel.dst_type:
                    raise GraphError(
                        f"self-paired relation '{rel.name}' must connect one type")
                if not np.array_equal(rel.adjacency, rel.adjacency.T):
                    raise GraphError(
                        f"self-paired relation '{rel.name}' must be symmetric")
            else:
                if rev.src_type != rel.dst_type or rev.dst_type != rel.src_type:
                    raise GraphError(
                        f"reverse of '{rel.name}' connects the wrong types")
                if not np.array_equal(rel.adjacency.T, rev.adjacency):
                    raise GraphError(
                        f"adjacency of '{rel.name}' is not the transpose of its reverse")
        if self.train_nodes is not None:
            if self.train_nodes.size and (self.train_nodes.min() < 0
                                          or self.train_nodes.max() >= self.n_target):
                raise GraphError("train_nodes out of target-type range")
        for path in self.meta_paths:
            validate_meta_path(self, path)

    # -- convenience ----------------------------------------------------

    @property
    def n_target(self) -> int:
        return self.node_types[self.target_type].count

    @property
    def target_features(self) -> np.ndarray:
        return self.features[self.target_type]

    def relation_by_name(self, name: str) -> Relation:
        for rel in self.relations:
            if rel.name == name:
                return rel
        raise GraphError(f"no relation named '{name}'")

    def reverse(self, relation_id: int) -> Relation:
        return self.relations[self.relations[relation_id].reverse_id]

    def direct_relations(self) -> list[Relation]:
        """Relations whose source type is the target type (attack surface)."""
        return [r for r in self.relations if r.src_type == self.target_type]

    def training_mask(self) -> np.ndarray:
        """Boolean mask of target nodes whose labels are used for training."""
        mask = self.labels >= 0
        if self.train_nodes is not None:
            split = np.zeros(self.n_target, dtype=bool)
            split[self.train_nodes] = True
            mask &= split
        return mask

    def copy(self) -> "HeteroGraph":
        g = HeteroGraph.__new__(HeteroGraph)
        g.node_types = [copy.copy(nt) for nt in self.node_types]
        g.relations = [Relation(r.id, r.name, r.src_type, r.dst_type,
                                r.reverse_id, r.adjacency.copy())
                       for r in self.relations]
        g.features = [f.copy() for f in self.features]
        g.labels = self.labels.copy()
        g.target_type = self.target_type
        g.num_classes = self.num_classes
        g.meta_paths = [MetaPath(p.name, list(p.relation_ids)) for p in self.meta_paths]
        g.train_nodes = None if self.train_nodes is None else self.train_nodes.copy()
        return g

    def checksum(self) -> str:
        """SHA-256 over adjacencies, features and labels; detects any mutation."""
        h = hashlib.sha256()
        for rel in self.relations:
            h.update(np.ascontiguousarray(rel.adjacency).tobytes())
        for feat in self.features:
            h.update(np.ascontiguousarray(feat).tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()


def validate_meta_path(graph: HeteroGraph, path: MetaPath) -> None:
    if not path.relation_ids:
        raise GraphError(f"meta-path '{path.name}' has no relations")
    rels = [graph.relations[rid] for rid in path.relation_ids]
    for left, right in zip(rels, rels[1:]):
        if left.dst_type != right.src_type:
            raise GraphError(
                f"meta-path '{path.name}': relation '{left.name}' ends at type "
                f"{left.dst_type} but '{right.name}' starts at type {right.src_type}")
    if rels[0].src_type != graph.target_type or rels[-1].dst_type != graph.target_type:
        raise GraphError(
            f"meta-path '{path.name}' must start and end at the target type")


def warn_uncovered_relations(graph: HeteroGraph) -> list[str]:
    """Warn when some relation appears in no meta-path; returns their names."""
    covered = set()
    for path in graph.meta_paths:
        for rid in path.relation_ids:
            covered.add(rid)
            covered.add(graph.relations[rid].reverse_id)
    missing = [r.name for r in graph.relations if r.id not in covered]
    if missing:
        warnings.warn(
            f"relations not covered by any meta-path: {', '.join(missing)}",
            stacklevel=2)
    return missing


def normalize(composed: np.ndarray) -> np.ndarray:
    """Symmetric degree normalization D^{-1/2} (A + I) D^{-1/2}.

    Degrees are row sums of (A + I); the identity term keeps every degree
    strictly positive, so no zero-degree handling is needed.
    """
    a = np.asarray(composed, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError("normalize expects a square matrix")
    if (a < 0).any():
        raise GraphError("normalize expects non-negative entries")
    with_loops = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(with_loops.sum(axis=1))
    return with_loops * inv_sqrt[:, None] * inv_sqrt[None, :]


def compose_metapath(graph: HeteroGraph, path: MetaPath,
                     binarize: bool = False) -> MetaPathGraph:
    """Compose a meta-path's relation adjacencies into A_P and its normalization.

    The composed entry (i, j) counts the distinct path instances from i to j.
    ``binarize`` thresholds counts to {0,1} before normalizing; it defaults
    off because counts keep the composition differentiable.
    """
    validate_meta_path(graph, path)
    mats = [graph.relations[rid].adjacency for rid in path.relation_ids]
    composed = mats[0]
    use_sparse = any(m.size and np.count_nonzero(m) / m.size < SPARSE_DENSITY_CUTOFF
                     for m in mats)
    if use_sparse and len(mats) > 1:
        acc = sp.csr_matrix(composed)
        for m in mats[1:]:
            acc = acc @ sp.csr_matrix(m)
        composed = np.asarray(acc.todense(), dtype=np.float64)
    else:
        for m in mats[1:]:
            composed = composed @ m
        composed = np.array(composed, dtype=np.float64)
    if binarize:
        composed = (composed > 0).astype(np.float64)
    return MetaPathGraph(path, composed, normalize(composed))


def flip_edge(graph: HeteroGraph, relation_id: int, i: int, j: int) -> None:
    """Toggle entry (i, j) of a relation and (j, i) of its reverse, in lockstep."""
    rel = graph.relations[relation_id]
    n_src, n_dst = rel.adjacency.shape
    if not (0 <= i < n_src and 0 <= j < n_dst):
        raise GraphError(
            f"flip ({i}, {j}) out of bounds for relation '{rel.name}' "
            f"of shape {(n_src, n_dst)}")
    rel.adjacency[i, j] = 1.0 - rel.adjacency[i, j]
    if rel.reverse_id == rel.id:
        if i != j:
            rel.adjacency[j, i] = 1.0 - rel.adjacency[j, i]
    else:
        rev = graph.relations[rel.reverse_id]
        rev.adjacency[j, i] = 1.0 - rev.adjacency[j, i]


def complement_mask(relation: Relation) -> np.ndarray:
    """Feasibility sign mask: +1 where an edge is absent, -1 where present."""
    return 1.0 - 2.0 * relation.adjacency
