"""Shared builders and independent oracles for the test suite."""

import numpy as np

from hgattack.hgraph import HeteroGraph, MetaPath, NodeType, Relation


def sym_random_binary(rng, n, density):
    upper = np.triu((rng.random((n, n)) < density).astype(np.float64), 1)
    return upper + upper.T


def random_binary(rng, shape, density):
    return (rng.random(shape) < density).astype(np.float64)


def make_relation_pair(rid, name, src, dst, adjacency):
    fwd = Relation(id=rid, name=name, src_type=src, dst_type=dst,
                   reverse_id=rid + 1, adjacency=adjacency)
    rev = Relation(id=rid + 1, name=f"{name}_rev", src_type=dst, dst_type=src,
                   reverse_id=rid, adjacency=adjacency.T.copy())
    return fwd, rev


def random_graph_with_path(seed, kind="pap", n_t=6, n_a=5, n_b=4,
                           density=0.35, num_classes=2):
    """A small typed graph plus one valid meta-path of the requested shape.

    kinds: "self" (one symmetric target-target relation), "pap" (out and
    back through type A), "paap" (with a symmetric A-A hop in the middle),
    "pabp" (three hops through two auxiliary types).
    """
    rng = np.random.default_rng(seed)
    node_types = [NodeType(0, "t", n_t, num_classes),
                  NodeType(1, "a", n_a, num_classes),
                  NodeType(2, "b", n_b, num_classes)]
    relations = []
    if kind == "self":
        tt = sym_random_binary(rng, n_t, density)
        relations.append(Relation(0, "tt", 0, 0, 0, tt))
        path = MetaPath("tt", [0])
    elif kind == "pap":
        ta, at = make_relation_pair(0, "ta", 0, 1, random_binary(rng, (n_t, n_a), density))
        relations += [ta, at]
        path = MetaPath("t-a-t", [0, 1])
    elif kind == "paap":
        ta, at = make_relation_pair(0, "ta", 0, 1, random_binary(rng, (n_t, n_a), density))
        aa = Relation(2, "aa", 1, 1, 2, sym_random_binary(rng, n_a, density))
        relations += [ta, at, aa]
        path = MetaPath("t-a-a-t", [0, 2, 1])
    elif kind == "pabp":
        ta, at = make_relation_pair(0, "ta", 0, 1, random_binary(rng, (n_t, n_a), density))
        ab, ba = make_relation_pair(2, "ab", 1, 2, random_binary(rng, (n_a, n_b), density))
        bt, tb = make_relation_pair(4, "bt", 2, 0, random_binary(rng, (n_b, n_t), density))
        relations += [ta, at, ab, ba, bt, tb]
        path = MetaPath("t-a-b-t", [0, 2, 4])
    else:
        raise ValueError(kind)
    features = [rng.normal(size=(nt.count, nt.feature_dim)) for nt in node_types]
    labels = rng.integers(0, num_classes, size=n_t)
    graph = HeteroGraph(node_types, relations, features, labels, 0, num_classes,
                        meta_paths=[path])
    return graph, path


def brute_force_composed(graph, path):
    """Exhaustive typed-path enumeration; counts every path instance."""
    rels = [graph.relations[rid] for rid in path.relation_ids]
    n = graph.n_target
    out = np.zeros((n, n))

    def walk(start, node, depth):
        if depth == len(rels):
            out[start, node] += 1
            return
        adjacency = rels[depth].adjacency
        for nxt in range(adjacency.shape[1]):
            if adjacency[node, nxt] == 1.0:
                walk(start, nxt, depth + 1)

    for i in range(n):
        walk(i, i, 0)
    return out


def nested_loop_inconsistency(composed, labels, target):
    """Independent double-loop implementation of the two-hop label score.

    Pinned definition: one-hop neighbors exclude the target; two-hop
    neighborhoods exclude the intermediate node, the target itself and any
    unlabeled node.
    """
    n = composed.shape[0]
    y_t = labels[target]
    if y_t < 0:
        return None
    deltas = []
    for i in range(n):
        if i == target or composed[target, i] <= 0:
            continue
        diffs, count = 0, 0
        for j in range(n):
            if j == i or j == target or composed[i, j] <= 0 or labels[j] < 0:
                continue
            count += 1
            if labels[j] != y_t:
                diffs += 1
        if count:
            deltas.append(diffs / count)
    if not deltas:
        return None
    return sum(deltas) / len(deltas)


def small_attack_spec(seed, n_t=10, n_a=7, n_b=5, num_classes=2,
                      noise=0.3, degree=2, signal=0.8):
    from hgattack.synthetic import RelationSpec, SyntheticSpec
    return SyntheticSpec(
        node_counts={"t": n_t, "a": n_a, "b": n_b},
        target_type="t",
        relations=[RelationSpec("ta", "t", "a", degree, signal),
                   RelationSpec("tb", "t", "b", 1, signal)],
        num_classes=num_classes, feature_noise=noise, seed=seed)
