"""Victim models and the transfer-evaluation harness.

Victims are trained independently of the surrogate (different seeds and
hidden sizes by contract) and are only ever used forward: evaluation
applies each target's recorded flips to a fresh copy of the clean graph,
reads the victim's prediction for that one target, and aggregates macro
and micro F1 over the target set.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import f1_score

from . import diffcore as dc
from .diffcore import Tape
from .hgraph import HeteroGraph
from .attack import AttackResult, apply_attack
from .surrogate import SurrogateConfig, TrainError, Adam, forward_logits, init_model, train


class VictimKind(enum.Enum):
    METAPATH_ATTENTION = "metapath_attention"
    RELATION_ONEHOP = "relation_onehop"


@dataclass
class EvalReport:
    macro_f1: float
    micro_f1: float
    rows: list[dict] = field(default_factory=list)  # target, clean/attacked pred, truth
    flagged_clean: list[int] = field(default_factory=list)


class MetapathAttentionVictim:
    """HAN-lite: the per-meta-path GCN + attention family, independent weights."""

    kind = VictimKind.METAPATH_ATTENTION

    def __init__(self, model):
        self.model = model

    def predict(self, graph: HeteroGraph) -> np.ndarray:
        return forward_logits(self.model, graph).argmax(axis=1)


class RelationOnehopVictim:
    """RGCN-lite: mean aggregation per relation, relation-specific weights,
    summed across relations, two layers. Purely message-passing: a node's
    own features only reach it through round-trip paths."""

    kind = VictimKind.RELATION_ONEHOP

    def __init__(self, graph: HeteroGraph, hidden_dim: int, seed: int):
        rng = np.random.default_rng(seed)
        self.hidden_dim = hidden_dim
        self.num_classes = graph.num_classes
        self.target_type = graph.target_type

        def glorot(shape):
            return rng.normal(0.0, np.sqrt(2.0 / (shape[0] + shape[1])), shape)

        self.w_rel1 = {r.id: glorot((graph.node_types[r.src_type].feature_dim,
                                     hidden_dim)) for r in graph.relations}
        self.w_rel2 = {r.id: glorot((hidden_dim, hidden_dim))
                       for r in graph.relations if r.dst_type == graph.target_type}
        self.classifier = glorot((hidden_dim, graph.num_classes))

    def weight_items(self):
        for rid, w in sorted(self.w_rel1.items()):
            yield f"rel1:{rid}", w
        for rid, w in sorted(self.w_rel2.items()):
            yield f"rel2:{rid}", w
        yield "classifier", self.classifier

    def set_weight(self, name, array):
        kind, _, key = name.partition(":")
        if kind == "rel1":
            self.w_rel1[int(key)] = array
        elif kind == "rel2":
            self.w_rel2[int(key)] = array
        else:
            self.classifier = array

    def _build(self, graph: HeteroGraph, tape: Tape, weight_leaves: bool):
        def param(name, array):
            return tape.leaf(name, array) if weight_leaves else tape.constant(array)

        agg = {rel.id: tape.constant(_mean_aggregator(rel.adjacency))
               for rel in graph.relations}
        feats = {nt.id: tape.constant(graph.features[nt.id])
                 for nt in graph.node_types}
        hidden = {}
        for nt in graph.node_types:
            acc = None
            for rel in graph.relations:
                if rel.dst_type != nt.id:
                    continue
                msg = dc.matmul(dc.matmul(agg[rel.id], feats[rel.src_type]),
                                param(f"rel1:{rel.id}", self.w_rel1[rel.id]))
                acc = msg if acc is None else dc.add(acc, msg)
            if acc is None:  # type receives no relation; keep a zero block
                acc = tape.constant(np.zeros((graph.node_types[nt.id].count,
                                              self.hidden_dim)))
            hidden[nt.id] = dc.relu(acc)
        out = None
        for rel in graph.relations:
            if rel.dst_type != self.target_type:
                continue
            msg = dc.matmul(dc.matmul(agg[rel.id], hidden[rel.src_type]),
                            param(f"rel2:{rel.id}", self.w_rel2[rel.id]))
            out = msg if out is None else dc.add(out, msg)
        if out is None:
            raise TrainError("no relation reaches the target type")
        return dc.matmul(out, param("classifier", self.classifier))

    def logits(self, graph: HeteroGraph) -> np.ndarray:
        return self._build(graph, Tape(), weight_leaves=False).data

    def predict(self, graph: HeteroGraph) -> np.ndarray:
        return self.logits(graph).argmax(axis=1)


def _mean_aggregator(adjacency: np.ndarray) -> np.ndarray:
    """Row-normalized transpose: mean over in-neighbors, zero row if none."""
    at = adjacency.T
    deg = at.sum(axis=1)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return at * inv[:, None]


def train_victim(kind: VictimKind, graph: HeteroGraph, seed: int,
                 hidden_dim: int = 48):
    """Train a fresh victim of the requested kind; deterministic in the seed."""
    if kind is VictimKind.METAPATH_ATTENTION:
        cfg = SurrogateConfig(hidden_dim=hidden_dim, attention_dim=32, seed=seed)
        model = init_model(graph, cfg)
        train(model, graph, cfg)
        return MetapathAttentionVictim(model)
    if kind is not VictimKind.RELATION_ONEHOP:
        raise ValueError(f"unknown victim kind {kind!r}")

    victim = RelationOnehopVictim(graph, hidden_dim, seed)
    mask = graph.training_mask()
    if not mask.any():
        raise TrainError("no labeled training nodes")
    clamped = np.where(graph.labels >= 0, graph.labels, 0)
    opt = Adam(0.01)
    best, since_best = np.inf, 0
    weight_decay, patience, max_epochs = 5e-4, 30, 200
    for epoch in range(max_epochs):
        tape = Tape()
        logits = victim._build(graph, tape, weight_leaves=True)
        loss = dc.masked_mean_cross_entropy(logits, clamped, mask)
        loss_val = float(loss.data[0, 0])
        if not np.isfinite(loss_val):
            raise TrainError(f"victim training diverged at epoch {epoch}")
        dc.backward(loss)
        opt.start_step()
        for name, w in list(victim.weight_items()):
            victim.set_weight(name, opt.update(name, w,
                                               tape.grad_of(name) + weight_decay * w))
        if loss_val < best - 1e-12:
            best, since_best = loss_val, 0
        else:
            since_best += 1
            if since_best >= patience:
                break
    return victim


def macro_f1(truth, pred) -> float:
    labels = sorted(set(int(t) for t in truth))
    return float(f1_score(truth, pred, labels=labels, average="macro",
                          zero_division=0))


def micro_f1(truth, pred) -> float:
    labels = sorted(set(int(t) for t in truth))
    return float(f1_score(truth, pred, labels=labels, average="micro",
                          zero_division=0))


def evaluate(victim, graph: HeteroGraph, attack_results: list[AttackResult],
             budget: int, targets=None) -> EvalReport:
    """Per-target reload evaluation.

    Each target's first ``budget`` flips are applied to a fresh copy of the
    clean graph (never mixing perturbations across targets); predictions are
    scored against the true labels over the target set. Targets without an
    attack result are evaluated on the clean graph and flagged.
    """
    by_target = {res.target: res for res in attack_results}
    if targets is None:
        targets = sorted(by_target)
    clean_pred = victim.predict(graph)
    rows, truths, preds, flagged = [], [], [], []
    for t in targets:
        t = int(t)
        truth = int(graph.labels[t])
        if truth < 0:
            raise ValueError(f"target {t} has no true label to score against")
        res = by_target.get(t)
        if res is None:
            attacked = int(clean_pred[t])
            flagged.append(t)
        else:
            work = graph.copy()
            apply_attack(work, res, budget)
            attacked = int(victim.predict(work)[t])
        rows.append({"target": t, "clean_prediction": int(clean_pred[t]),
                     "attacked_prediction": attacked, "truth": truth})
        truths.append(truth)
        preds.append(attacked)
    return EvalReport(macro_f1=macro_f1(truths, preds),
                      micro_f1=micro_f1(truths, preds),
                      rows=rows, flagged_clean=flagged)


def clean_report(victim, graph: HeteroGraph, targets) -> EvalReport:
    """Evaluation of the unperturbed graph over the same target set."""
    return evaluate(victim, graph, [], budget=0, targets=targets)
