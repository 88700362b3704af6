"""Gradient-driven edge-flip perturbation search.

The main loop greedily spends an undirected flip budget on the edges
incident to a target node: each iteration differentiates the surrogate's
cross-entropy at the target through the meta-path compositions down to
every base relation adjacency, weights each relation's gradient row by its
norm (the semantics-aware step), and flips the feasible entry with the
largest weighted magnitude. Variants: ``info`` drops the norm weighting,
``random`` flips uniformly at random, and ``fga_baseline`` runs the same
loop on a flattened homogeneous graph with its own GCN surrogate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import diffcore as dc
from .diffcore import Tape
from .hgraph import HeteroGraph, flip_edge
from .surrogate import (SurrogateConfig, SurrogateModel, adjacency_leaf,
                        forward, forward_logits, top_two, Adam, TrainError)

VARIANTS = ("semantics_aware", "info", "fga_baseline", "random")


class NoFeasibleFlip(RuntimeError):
    """Every candidate entry is already flipped, zero or sign-infeasible."""


@dataclass
class AttackConfig:
    budget: int = 3
    variant: str = "semantics_aware"
    direct_only: bool = True
    full_matrix_norm: bool = False   # Frobenius norm of the whole gradient matrix
    frozen_pseudo: bool = False      # keep the clean-graph pseudo label throughout
    overconfidence_threshold: float = 1e-6
    seed: int = 0                    # used by the random variant and FGA training

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.direct_only:
            raise ValueError("influencer (non-direct) attacks are not supported")


@dataclass
class PerturbationStep:
    relation_id: int
    relation_name: str
    src: int          # the target node
    dst: int
    direction: str    # "add" | "delete"
    weighted_gradient: float
    raw_gradient: float
    iteration: int


@dataclass
class AttackResult:
    target: int
    variant: str
    budget: int
    steps: list[PerturbationStep] = field(default_factory=list)
    pseudo_per_iteration: list[int] = field(default_factory=list)
    loss_before: list[float | None] = field(default_factory=list)
    loss_after: list[float | None] = field(default_factory=list)
    stopped_early: str | None = None


def _ce(logits_row: np.ndarray, label: int) -> float:
    z = logits_row - logits_row.max()
    return float(np.log(np.exp(z).sum()) - z[label])


def _loss_gradients(model: SurrogateModel, graph: HeteroGraph, target: int,
                    label: int, threshold: float):
    """One forward/backward pass; returns (label used, loss, full grads by relation).

    When the cross-entropy at ``label`` is below ``threshold`` the loss is
    rebuilt at the second-largest-logit class so the gradients do not starve.
    """
    tape = Tape()
    logits = forward(model, graph, tape)
    row = logits.data[target]
    loss = dc.cross_entropy(dc.take_row(logits, target), label)
    if float(loss.data[0, 0]) < threshold:
        top1, top2 = top_two(row)
        label = top2 if label == top1 else top1
        loss = dc.cross_entropy(dc.take_row(logits, target), label)
    dc.backward(loss)
    grads = {}
    for name, leaf in tape.leaves.items():
        if name.startswith("adj:"):
            grads[int(name.split(":")[1])] = leaf.grad.copy()
    return label, float(loss.data[0, 0]), grads


def relation_gradients(model: SurrogateModel, graph: HeteroGraph, target: int,
                       pseudo: int) -> dict[int, np.ndarray]:
    """Gradient row d(loss)/dA_r[target, :] for every direct relation.

    A direct relation that no meta-path consumes gets an explicit zero row:
    the loss simply does not depend on it.
    """
    if not 0 <= target < graph.n_target:
        raise ValueError(f"node {target} is not a target-type node")
    if not 0 <= pseudo < graph.num_classes:
        raise ValueError(f"pseudo label {pseudo} out of range")
    tape = Tape()
    logits = forward(model, graph, tape)
    loss = dc.cross_entropy(dc.take_row(logits, target), pseudo)
    dc.backward(loss)
    rows = {}
    for rel in graph.direct_relations():
        name = adjacency_leaf(rel.id)
        if name in tape.leaves:
            rows[rel.id] = tape.leaves[name].grad[target].copy()
        else:
            rows[rel.id] = np.zeros(rel.adjacency.shape[1])
    return rows


def semantics_weight(gradients: dict[int, np.ndarray],
                     norms: dict[int, float] | None = None) -> dict[int, np.ndarray]:
    """Scale each relation's gradient row by the relation's gradient norm."""
    if not gradients:
        raise ValueError("no gradient rows to weight")
    weighted = {}
    for rid, row in gradients.items():
        norm = norms[rid] if norms is not None else float(np.linalg.norm(row))
        weighted[rid] = norm * row
    return weighted


def select_flip(weighted: dict[int, np.ndarray], graph: HeteroGraph, target: int,
                already_flipped: set, raw: dict[int, np.ndarray] | None = None,
                ) -> PerturbationStep:
    """Pick the sign-feasible candidate with the largest |weighted gradient|.

    Feasible means the flip moves the entry in the gradient's uphill
    direction: positive gradient on an absent edge (add) or negative
    gradient on a present edge (delete). Ties break toward the lower
    relation id, then the lower column index. Self-loops on target-type
    relations are never candidates.
    """
    best = None  # (abs weighted, step)
    for rid in sorted(weighted):
        rel = graph.relations[rid]
        row = weighted[rid]
        present = rel.adjacency[target]
        for j in range(row.shape[0]):
            g = row[j]
            if g == 0.0 or (rid, target, j) in already_flipped:
                continue
            if j == target and rel.src_type == rel.dst_type:
                continue
            if g > 0.0 and present[j] == 0.0:
                direction = "add"
            elif g < 0.0 and present[j] == 1.0:
                direction = "delete"
            else:
                continue
            mag = abs(g)
            if best is None or mag > best[0]:
                raw_g = float(raw[rid][j]) if raw is not None else float(g)
                best = (mag, PerturbationStep(
                    relation_id=rid, relation_name=rel.name, src=target, dst=j,
                    direction=direction, weighted_gradient=float(g),
                    raw_gradient=raw_g, iteration=-1))
    if best is None:
        raise NoFeasibleFlip(
            f"no sign-feasible unflipped candidate for target {target}")
    return best[1]


def _mark_flipped(flipped: set, graph: HeteroGraph, rid: int, i: int, j: int):
    flipped.add((rid, i, j))
    flipped.add((graph.relations[rid].reverse_id, j, i))


def hgattack(model: SurrogateModel, graph: HeteroGraph, target: int,
             config: AttackConfig) -> AttackResult:
    """Run the budgeted greedy flip loop for one target node.

    Operates on a private copy; the caller's graph is never mutated. The
    pseudo label is re-derived from the perturbed graph each iteration
    unless ``frozen_pseudo`` is set.
    """
    if config.variant not in ("semantics_aware", "info"):
        raise ValueError(f"hgattack does not run variant '{config.variant}'")
    work = graph.copy()
    result = AttackResult(target=target, variant=config.variant,
                          budget=config.budget)
    frozen = None
    if config.frozen_pseudo:
        frozen = top_two(forward_logits(model, work)[target])[0]
    flipped: set = set()
    for iteration in range(config.budget):
        if frozen is not None:
            label = frozen
        else:
            label = top_two(forward_logits(model, work)[target])[0]
        label, loss_before, grads = _loss_gradients(
            model, work, target, label, config.overconfidence_threshold)
        rows = {rel.id: (grads[rel.id][target] if rel.id in grads
                         else np.zeros(rel.adjacency.shape[1]))
                for rel in work.direct_relations()}
        if not rows or all(not row.any() for row in rows.values()):
            result.stopped_early = "zero-gradient"
            break
        if config.variant == "info":
            weighted = rows
        elif config.full_matrix_norm:
            norms = {rid: float(np.linalg.norm(grads[rid])) if rid in grads
                     else 0.0 for rid in rows}
            weighted = semantics_weight(rows, norms)
        else:
            weighted = semantics_weight(rows)
        try:
            step = select_flip(weighted, work, target, flipped, raw=rows)
        except NoFeasibleFlip as stop:
            result.stopped_early = str(stop)
            break
        step.iteration = iteration
        flip_edge(work, step.relation_id, target, step.dst)
        _mark_flipped(flipped, work, step.relation_id, target, step.dst)
        result.steps.append(step)
        result.pseudo_per_iteration.append(label)
        result.loss_before.append(loss_before)
        result.loss_after.append(_ce(forward_logits(model, work)[target], label))
    return result


def random_flip_attack(graph: HeteroGraph, target: int, budget: int,
                       seed: int = 0) -> AttackResult:
    """Uniformly random direct flips of equal budget; the control baseline."""
    rng = np.random.default_rng([seed, target])
    work = graph.copy()
    result = AttackResult(target=target, variant="random", budget=budget)
    flipped: set = set()
    for iteration in range(budget):
        candidates = []
        for rel in work.direct_relations():
            for j in range(rel.adjacency.shape[1]):
                if (rel.id, target, j) in flipped:
                    continue
                if j == target and rel.src_type == rel.dst_type:
                    continue
                candidates.append((rel.id, j))
        if not candidates:
            result.stopped_early = "no unflipped candidates"
            break
        rid, j = candidates[rng.integers(len(candidates))]
        rel = work.relations[rid]
        direction = "delete" if rel.adjacency[target, j] == 1.0 else "add"
        flip_edge(work, rid, target, j)
        _mark_flipped(flipped, work, rid, target, j)
        result.steps.append(PerturbationStep(
            relation_id=rid, relation_name=rel.name, src=target, dst=j,
            direction=direction, weighted_gradient=0.0, raw_gradient=0.0,
            iteration=iteration))
        result.pseudo_per_iteration.append(-1)
        result.loss_before.append(None)
        result.loss_after.append(None)
    return result


# -- homogeneous FGA baseline ----------------------------------------------

class HomogeneousGcn:
    """Two-layer GCN over the flattened (all types merged) adjacency."""

    def __init__(self, w1: np.ndarray, w2: np.ndarray):
        self.w1 = w1
        self.w2 = w2

    def logits(self, adjacency: np.ndarray, features: np.ndarray) -> np.ndarray:
        norm = _sym_normalize(adjacency)
        h = np.maximum(norm @ features @ self.w1, 0.0)
        return norm @ h @ self.w2


def _sym_normalize(a: np.ndarray) -> np.ndarray:
    with_loops = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(with_loops.sum(axis=1))
    return with_loops * inv_sqrt[:, None] * inv_sqrt[None, :]


def flatten_graph(graph: HeteroGraph):
    """Merge all typed nodes into one symmetric zero-diagonal adjacency.

    Returns (adjacency, padded features, node-type id per row, per-type
    row offsets). Features are zero-padded to the widest type.
    """
    counts = [nt.count for nt in graph.node_types]
    offsets = np.concatenate([[0], np.cumsum(counts)])[:-1]
    n = sum(counts)
    adj = np.zeros((n, n))
    for rel in graph.relations:
        ro, co = offsets[rel.src_type], offsets[rel.dst_type]
        rows, cols = np.nonzero(rel.adjacency)
        adj[ro + rows, co + cols] = 1.0
    adj = np.maximum(adj, adj.T)
    np.fill_diagonal(adj, 0.0)
    width = max(nt.feature_dim for nt in graph.node_types)
    if width == 0:
        raise ValueError("cannot flatten a graph with no features anywhere")
    feats = np.zeros((n, width))
    for nt, block in zip(graph.node_types, graph.features):
        feats[offsets[nt.id]:offsets[nt.id] + nt.count, :nt.feature_dim] = block
    types = np.concatenate([np.full(c, nt.id)
                            for nt, c in zip(graph.node_types, counts)])
    return adj, feats, types, offsets


def train_homogeneous_gcn(graph: HeteroGraph, seed: int,
                          config: SurrogateConfig | None = None) -> HomogeneousGcn:
    cfg = config or SurrogateConfig(seed=seed)
    adj, feats, _, offsets = flatten_graph(graph)
    n = adj.shape[0]
    t0 = offsets[graph.target_type]
    labels = np.full(n, -1, dtype=np.int64)
    labels[t0:t0 + graph.n_target] = graph.labels
    mask = np.zeros(n, dtype=bool)
    mask[t0:t0 + graph.n_target] = graph.training_mask()
    if not mask.any():
        raise TrainError("no labeled training nodes")

    rng = np.random.default_rng(seed)
    h = cfg.hidden_dim
    w1 = rng.normal(0.0, np.sqrt(2.0 / (feats.shape[1] + h)), (feats.shape[1], h))
    w2 = rng.normal(0.0, np.sqrt(2.0 / (h + graph.num_classes)),
                    (h, graph.num_classes))
    opt = Adam(cfg.learning_rate)
    best, since_best = np.inf, 0
    norm_const = _sym_normalize(adj)
    clamped = np.where(labels >= 0, labels, 0)
    for epoch in range(cfg.max_epochs):
        tape = Tape()
        norm = tape.constant(norm_const)
        x = tape.constant(feats)
        w1_leaf = tape.leaf("w1", w1)
        w2_leaf = tape.leaf("w2", w2)
        hid = dc.relu(dc.matmul(dc.matmul(norm, x), w1_leaf))
        logits = dc.matmul(dc.matmul(norm, hid), w2_leaf)
        loss = dc.masked_mean_cross_entropy(logits, clamped, mask)
        loss_val = float(loss.data[0, 0])
        if not np.isfinite(loss_val):
            raise TrainError(f"FGA surrogate diverged at epoch {epoch}")
        dc.backward(loss)
        opt.start_step()
        w1 = opt.update("w1", w1, tape.grad_of("w1") + cfg.weight_decay * w1)
        w2 = opt.update("w2", w2, tape.grad_of("w2") + cfg.weight_decay * w2)
        if loss_val < best - 1e-12:
            best, since_best = loss_val, 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return HomogeneousGcn(w1, w2)


def _fga_candidates(graph: HeteroGraph, offsets):
    """Map each flippable global column j to its covering (relation, local) pairs."""
    cover = {}
    for rel in sorted(graph.direct_relations(), key=lambda r: r.id):
        off = offsets[rel.dst_type]
        for j_local in range(rel.adjacency.shape[1]):
            cover.setdefault(off + j_local, []).append((rel.id, j_local))
    return cover


def fga_baseline(graph: HeteroGraph, targets, config: AttackConfig,
                 gcn_config: SurrogateConfig | None = None) -> list[AttackResult]:
    """Heterogeneity-blind baseline: one GCN on the flattened graph.

    The flip loop mirrors :func:`hgattack` (sign feasibility, per-iteration
    pseudo label, overconfidence switch) but ranks raw gradient magnitudes
    on the merged adjacency row. Chosen flips map back to the lowest-id
    declared relation covering the node pair; pairs covered by no relation
    are masked out.
    """
    if config.variant != "fga_baseline":
        raise ValueError("config.variant must be 'fga_baseline'")
    gcn = train_homogeneous_gcn(graph, config.seed, gcn_config)
    clean_adj, feats, _, offsets = flatten_graph(graph)
    t_off = offsets[graph.target_type]
    cover = _fga_candidates(graph, offsets)
    results = []
    for target in targets:
        target = int(target)
        adj = clean_adj.copy()
        # Per-relation row state at the target, kept in sync with the merged
        # adjacency so flips map back to the right relation.
        rel_state = {rel.id: rel.adjacency[target].copy()
                     for rel in graph.direct_relations()}
        t_glob = t_off + target
        result = AttackResult(target=target, variant="fga_baseline",
                              budget=config.budget)
        flipped: set = set()
        for iteration in range(config.budget):
            tape = Tape()
            a_leaf = tape.leaf("adj_hom", adj)
            x = tape.constant(feats)
            norm = dc.diag_rsqrt_scale(dc.add(a_leaf, tape.constant(np.eye(adj.shape[0]))))
            hid = dc.relu(dc.matmul(dc.matmul(norm, x), tape.constant(gcn.w1)))
            logits = dc.matmul(dc.matmul(norm, hid), tape.constant(gcn.w2))
            row_logits = logits.data[t_glob]
            label = top_two(row_logits)[0]
            loss = dc.cross_entropy(dc.take_row(logits, t_glob), label)
            if float(loss.data[0, 0]) < config.overconfidence_threshold:
                label = top_two(row_logits)[1]
                loss = dc.cross_entropy(dc.take_row(logits, t_glob), label)
            loss_before = float(loss.data[0, 0])
            dc.backward(loss)
            grad_row = tape.grad_of("adj_hom")[t_glob]

            best = None
            for j_glob in range(adj.shape[0]):
                if j_glob == t_glob or j_glob not in cover:
                    continue
                g = grad_row[j_glob]
                if g == 0.0:
                    continue
                present = adj[t_glob, j_glob]
                if g > 0.0 and present == 0.0:
                    direction = "add"
                elif g < 0.0 and present == 1.0:
                    direction = "delete"
                else:
                    continue
                want = 1.0 if direction == "delete" else 0.0
                choice = next(((rid, j_local) for rid, j_local in cover[j_glob]
                               if (rid, j_local) not in flipped
                               and rel_state[rid][j_local] == want), None)
                if choice is None:
                    continue
                if best is None or abs(g) > best[0]:
                    best = (abs(g), choice[0], choice[1], j_glob, direction, g)
            if best is None:
                result.stopped_early = "no feasible candidate"
                break
            _, rid, j_local, j_glob, direction, g = best
            rel_state[rid][j_local] = 1.0 - rel_state[rid][j_local]
            merged = max(rel_state[r][jl] for r, jl in cover[j_glob])
            adj[t_glob, j_glob] = merged
            adj[j_glob, t_glob] = merged
            flipped.add((rid, j_local))
            result.steps.append(PerturbationStep(
                relation_id=rid, relation_name=graph.relations[rid].name,
                src=target, dst=j_local, direction=direction,
                weighted_gradient=float(g), raw_gradient=float(g),
                iteration=iteration))
            result.pseudo_per_iteration.append(label)
            result.loss_before.append(loss_before)
            result.loss_after.append(_ce(gcn.logits(adj, feats)[t_glob], label))
        results.append(result)
    return results


def apply_attack(graph: HeteroGraph, result: AttackResult,
                 budget: int | None = None) -> int:
    """Apply the first ``budget`` recorded flips to ``graph`` in place."""
    steps = result.steps if budget is None else result.steps[:budget]
    for step in steps:
        flip_edge(graph, step.relation_id, step.src, step.dst)
    return len(steps)


def run_attacks(model: SurrogateModel | None, graph: HeteroGraph, targets,
                config: AttackConfig) -> list[AttackResult]:
    """Dispatch one attack per target for the configured variant."""
    if config.variant in ("semantics_aware", "info"):
        if model is None:
            raise ValueError(f"variant '{config.variant}' needs a trained surrogate")
        return [hgattack(model, graph, int(t), config) for t in targets]
    if config.variant == "random":
        return [random_flip_attack(graph, int(t), config.budget, config.seed)
                for t in targets]
    return fga_baseline(graph, targets, config)


# -- serialization -----------------------------------------------------------

def save_results_jsonl(results: list[AttackResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in sorted(results, key=lambda r: r.target):
            fh.write(json.dumps(_result_doc(res)) + "\n")


def _result_doc(res: AttackResult) -> dict:
    return {
        "target": res.target,
        "variant": res.variant,
        "budget": res.budget,
        "pseudo_per_iteration": res.pseudo_per_iteration,
        "loss_before": res.loss_before,
        "loss_after": res.loss_after,
        "stopped_early": res.stopped_early,
        "steps": [asdict(s) for s in res.steps],
    }


def load_results_jsonl(path) -> list[AttackResult]:
    results = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            results.append(AttackResult(
                target=doc["target"], variant=doc["variant"], budget=doc["budget"],
                steps=[PerturbationStep(**s) for s in doc["steps"]],
                pseudo_per_iteration=doc["pseudo_per_iteration"],
                loss_before=doc["loss_before"], loss_after=doc["loss_after"],
                stopped_early=doc["stopped_early"]))
    return results
