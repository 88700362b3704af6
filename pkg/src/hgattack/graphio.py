"""Versioned JSON graph format: save, load, validate.

Format (version 1), one UTF-8 JSON document, all indices 0-based::

    {
      "format_version": 1,
      "target_type": "paper",
      "num_classes": 3,
      "node_types": [{"name": "paper", "count": 30, "feature_dim": 5}, ...],
      "features": {"paper": [[...], ...]},           # optional per type
      "relations": [{"name": "pa", "src": "paper", "dst": "author",
                     "reverse": "ap", "edges": [[0, 1], ...]}, ...],
      "labels": {"0": 2, ...},                       # target-type node -> class
      "train_nodes": [0, 4, ...],                    # optional training split
      "meta_paths": [{"name": "PAP", "relations": ["pa", "ap"]}]
    }

A node type listed without a ``features`` entry gets one-hot identity
features (feature_dim = count). A relation may name a ``reverse`` that is
not declared, or omit it; the transposed relation is then generated
automatically. A declared reverse whose edge set is not the exact
transpose is rejected.
"""

from __future__ import annotations

import json

import numpy as np
from jsonschema import Draft202012Validator

from .hgraph import (GraphError, HeteroGraph, MetaPath, NodeType, Relation,
                     warn_uncovered_relations)

FORMAT_VERSION = 1

SCHEMA = {
    "type": "object",
    "required": ["format_version", "target_type", "node_types", "relations",
                 "labels", "meta_paths"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "target_type": {"type": "string"},
        "num_classes": {"type": "integer", "minimum": 2},
        "node_types": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "count"],
                "properties": {
                    "name": {"type": "string"},
                    "count": {"type": "integer", "minimum": 1},
                    "feature_dim": {"type": "integer", "minimum": 0},
                },
            },
        },
        "features": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {"type": "array", "items": {"type": "number"}},
            },
        },
        "relations": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "src", "dst", "edges"],
                "properties": {
                    "name": {"type": "string"},
                    "src": {"type": "string"},
                    "dst": {"type": "string"},
                    "reverse": {"type": ["string", "null"]},
                    "edges": {
                        "type": "array",
                        "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                  "items": {"type": "integer", "minimum": 0}},
                    },
                },
            },
        },
        "labels": {
            "type": "object",
            "additionalProperties": {"type": "integer", "minimum": 0},
        },
        "train_nodes": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "meta_paths": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "relations"],
                "properties": {
                    "name": {"type": "string"},
                    "relations": {"type": "array", "minItems": 1,
                                  "items": {"type": "string"}},
                },
            },
        },
    },
}


class GraphFormatError(GraphError):
    """The document violates the graph file format."""


def _schema_check(doc) -> None:
    errors = sorted(Draft202012Validator(SCHEMA).iter_errors(doc),
                    key=lambda e: e.json_path)
    if errors:
        first = errors[0]
        raise GraphFormatError(f"{first.json_path}: {first.message}")


def load_graph_dict(doc: dict) -> HeteroGraph:
    """Build a validated HeteroGraph from an already-parsed document."""
    _schema_check(doc)

    type_ids = {}
    node_types = []
    features = []
    feats_doc = doc.get("features", {})
    for i, nt in enumerate(doc["node_types"]):
        name = nt["name"]
        if name in type_ids:
            raise GraphFormatError(f"$.node_types[{i}]: duplicate type '{name}'")
        type_ids[name] = i
        count = nt["count"]
        if name in feats_doc:
            mat = np.asarray(feats_doc[name], dtype=np.float64)
            if mat.ndim != 2 or mat.shape[0] != count:
                raise GraphFormatError(
                    f"$.features.{name}: expected {count} rows, got shape "
                    f"{mat.shape}")
            fdim = mat.shape[1]
            if "feature_dim" in nt and nt["feature_dim"] != fdim:
                raise GraphFormatError(
                    f"$.node_types[{i}].feature_dim: declared {nt['feature_dim']} "
                    f"but features have width {fdim}")
        else:
            mat = np.eye(count)
            fdim = count
        node_types.append(NodeType(id=i, name=name, count=count, feature_dim=fdim))
        features.append(mat)
    for name in feats_doc:
        if name not in type_ids:
            raise GraphFormatError(f"$.features.{name}: unknown node type")

    if doc["target_type"] not in type_ids:
        raise GraphFormatError(f"$.target_type: unknown node type "
                               f"'{doc['target_type']}'")
    target_type = type_ids[doc["target_type"]]

    def build_adjacency(idx, name, src, dst, edges):
        adj = np.zeros((node_types[src].count, node_types[dst].count))
        for k, (a, b) in enumerate(edges):
            if a >= node_types[src].count or b >= node_types[dst].count:
                raise GraphFormatError(
                    f"$.relations[{idx}].edges[{k}]: edge ({a}, {b}) out of "
                    f"range for '{name}' "
                    f"({node_types[src].count} x {node_types[dst].count})")
            adj[a, b] = 1.0
        return adj

    declared = {}
    for i, rd in enumerate(doc["relations"]):
        if rd["name"] in declared:
            raise GraphFormatError(f"$.relations[{i}]: duplicate relation "
                                   f"'{rd['name']}'")
        for side in ("src", "dst"):
            if rd[side] not in type_ids:
                raise GraphFormatError(
                    f"$.relations[{i}].{side}: unknown node type '{rd[side]}'")
        declared[rd["name"]] = (i, rd)

    relations = []
    rel_ids = {}

    def add_relation(name, src, dst, adjacency):
        rel = Relation(id=len(relations), name=name, src_type=src, dst_type=dst,
                       reverse_id=-1, adjacency=adjacency)
        relations.append(rel)
        rel_ids[name] = rel.id
        return rel

    for name, (i, rd) in declared.items():
        src, dst = type_ids[rd["src"]], type_ids[rd["dst"]]
        add_relation(name, src, dst, build_adjacency(i, name, src, dst, rd["edges"]))

    # Pair or synthesize reverses.
    for name, (i, rd) in list(declared.items()):
        rel = relations[rel_ids[name]]
        if rel.reverse_id != -1:
            continue
        rev_name = rd.get("reverse")
        if rev_name == name:
            if rel.src_type != rel.dst_type:
                raise GraphFormatError(
                    f"$.relations[{i}].reverse: self-paired relation '{name}' "
                    f"must connect one node type")
            if not np.array_equal(rel.adjacency, rel.adjacency.T):
                raise GraphFormatError(
                    f"$.relations[{i}]: self-paired relation '{name}' has an "
                    f"asymmetric edge set")
            rel.reverse_id = rel.id
            continue
        if rev_name is not None and rev_name in declared:
            rev = relations[rel_ids[rev_name]]
            if rev.src_type != rel.dst_type or rev.dst_type != rel.src_type:
                raise GraphFormatError(
                    f"$.relations[{i}].reverse: '{rev_name}' connects the "
                    f"wrong node types")
            if not np.array_equal(rel.adjacency.T, rev.adjacency):
                raise GraphFormatError(
                    f"$.relations[{i}]: '{name}' and its declared reverse "
                    f"'{rev_name}' are not transposes of each other")
            rel.reverse_id = rev.id
            rev.reverse_id = rel.id
            continue
        auto_name = rev_name if rev_name is not None else f"{name}_rev"
        if auto_name in rel_ids:
            raise GraphFormatError(
                f"$.relations[{i}].reverse: cannot auto-generate '{auto_name}', "
                f"the name is taken")
        rev = add_relation(auto_name, rel.dst_type, rel.src_type,
                           rel.adjacency.T.copy())
        rel.reverse_id = rev.id
        rev.reverse_id = rel.id

    n_target = node_types[target_type].count
    labels = np.full(n_target, -1, dtype=np.int64)
    for key, cls in doc["labels"].items():
        node = int(key)
        if node >= n_target:
            raise GraphFormatError(
                f"$.labels.{key}: node {node} out of range for target type "
                f"({n_target} nodes)")
        labels[node] = cls
    num_classes = doc.get("num_classes", int(labels.max()) + 1 if (labels >= 0).any() else 2)
    if (labels >= num_classes).any():
        raise GraphFormatError("$.labels: a label exceeds num_classes")

    train_nodes = doc.get("train_nodes")
    if train_nodes is not None:
        bad = [n for n in train_nodes if n >= n_target]
        if bad:
            raise GraphFormatError(
                f"$.train_nodes: node {bad[0]} out of range for target type")

    meta_paths = []
    for i, mp in enumerate(doc["meta_paths"]):
        rids = []
        for rname in mp["relations"]:
            if rname not in rel_ids:
                raise GraphFormatError(
                    f"$.meta_paths[{i}]: unknown relation '{rname}'")
            rids.append(rel_ids[rname])
        meta_paths.append(MetaPath(mp["name"], rids))

    graph = HeteroGraph(node_types, relations, features, labels, target_type,
                        num_classes, meta_paths=meta_paths,
                        train_nodes=train_nodes)
    warn_uncovered_relations(graph)
    return graph


def load_graph(path) -> HeteroGraph:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise GraphFormatError(f"not valid JSON: {err}") from err
    return load_graph_dict(doc)


def graph_to_dict(graph: HeteroGraph) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "target_type": graph.node_types[graph.target_type].name,
        "num_classes": graph.num_classes,
        "node_types": [{"name": nt.name, "count": nt.count,
                        "feature_dim": nt.feature_dim}
                       for nt in graph.node_types],
        "features": {nt.name: graph.features[nt.id].tolist()
                     for nt in graph.node_types},
        "relations": [],
        "labels": {str(i): int(c) for i, c in enumerate(graph.labels) if c >= 0},
        "meta_paths": [{"name": p.name,
                        "relations": [graph.relations[r].name
                                      for r in p.relation_ids]}
                       for p in graph.meta_paths],
    }
    if graph.train_nodes is not None:
        doc["train_nodes"] = [int(n) for n in graph.train_nodes]
    for rel in graph.relations:
        rows, cols = np.nonzero(rel.adjacency)
        doc["relations"].append({
            "name": rel.name,
            "src": graph.node_types[rel.src_type].name,
            "dst": graph.node_types[rel.dst_type].name,
            "reverse": graph.relations[rel.reverse_id].name,
            "edges": [[int(a), int(b)] for a, b in zip(rows, cols)],
        })
    return doc


def save_graph(graph: HeteroGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_dict(graph), fh)
