"""Meta-path surrogate model: one GCN per composed graph plus attention fusion.

Each meta-path induced graph gets its own GCN weight stack; the per-path
embeddings are fused by semantic attention (per-node scores, averaged over
nodes, softmaxed over meta-paths) and classified by a linear head. The
whole forward pass runs on a diffcore tape so the training loss is
differentiable with respect to the weights and, crucially for the attack,
with respect to every base relation adjacency.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tape, Value
from .hgraph import HeteroGraph, MetaPath


class TrainError(RuntimeError):
    """Training could not proceed (no labels, divergence)."""


@dataclass
class SurrogateConfig:
    hidden_dim: int = 64
    num_gcn_layers: int = 2
    attention_dim: int = 64
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 200
    patience: int = 30
    seed: int = 0
    optimizer: str = "adam"          # "adam" or "sgd"
    binarize_composed: bool = False  # sensitivity experiments only; kills gradients
    stop_grad_degrees: bool = False  # treat degree matrices as constants

    def __post_init__(self):
        if min(self.hidden_dim, self.num_gcn_layers, self.attention_dim) < 1:
            raise ValueError("dimensions and layer count must be >= 1")
        if self.learning_rate <= 0 and self.learning_rate != 0.0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer '{self.optimizer}'")


@dataclass
class TrainReport:
    final_train_accuracy: float
    epochs_run: int
    loss_curve: list[float] = field(default_factory=list)


@dataclass
class PseudoLabel:
    top1: int
    top2: int
    logits: np.ndarray


@dataclass
class PseudoLabels:
    entries: dict[int, PseudoLabel]

    def __getitem__(self, node_id: int) -> PseudoLabel:
        return self.entries[node_id]


class SurrogateModel:
    """Per-meta-path GCN stacks, attention parameters and a linear head."""

    def __init__(self, meta_paths, gcn_weights, attn_proj, attn_vec,
                 classifier, config, feature_dim, num_classes):
        self.meta_paths = meta_paths
        self.gcn_weights = gcn_weights  # [path][layer] -> ndarray
        self.attn_proj = attn_proj      # (hidden, attention_dim)
        self.attn_vec = attn_vec        # (attention_dim, 1)
        self.classifier = classifier    # (hidden, num_classes)
        self.config = config
        self.feature_dim = feature_dim
        self.num_classes = num_classes

    def weight_items(self):
        """(name, array) pairs for every trainable weight, in a fixed order."""
        for p, stack in enumerate(self.gcn_weights):
            for l, w in enumerate(stack):
                yield f"w:{p}:{l}", w
        yield "attn_proj", self.attn_proj
        yield "attn_vec", self.attn_vec
        yield "classifier", self.classifier

    def set_weight(self, name: str, array: np.ndarray) -> None:
        if name == "attn_proj":
            self.attn_proj = array
        elif name == "attn_vec":
            self.attn_vec = array
        elif name == "classifier":
            self.classifier = array
        else:
            _, p, l = name.split(":")
            self.gcn_weights[int(p)][int(l)] = array


def _glorot(rng, shape):
    scale = np.sqrt(2.0 / (shape[0] + shape[1]))
    return rng.normal(0.0, scale, size=shape)


def init_model(graph: HeteroGraph, config: SurrogateConfig) -> SurrogateModel:
    if not graph.meta_paths:
        raise ValueError("graph defines no meta-paths")
    rng = np.random.default_rng(config.seed)
    fdim = graph.node_types[graph.target_type].feature_dim
    h = config.hidden_dim
    gcn_weights = []
    for _ in graph.meta_paths:
        stack, d_in = [], fdim
        for _ in range(config.num_gcn_layers):
            stack.append(_glorot(rng, (d_in, h)))
            d_in = h
        gcn_weights.append(stack)
    return SurrogateModel(
        meta_paths=[MetaPath(p.name, list(p.relation_ids)) for p in graph.meta_paths],
        gcn_weights=gcn_weights,
        attn_proj=_glorot(rng, (h, config.attention_dim)),
        attn_vec=_glorot(rng, (config.attention_dim, 1)),
        classifier=_glorot(rng, (h, graph.num_classes)),
        config=config,
        feature_dim=fdim,
        num_classes=graph.num_classes,
    )


def adjacency_leaf(relation_id: int) -> str:
    return f"adj:{relation_id}"


def _check_paths_match(model: SurrogateModel, graph: HeteroGraph) -> None:
    if len(model.meta_paths) != len(graph.meta_paths) or any(
            mp.name != gp.name or mp.relation_ids != gp.relation_ids
            for mp, gp in zip(model.meta_paths, graph.meta_paths)):
        raise ValueError("graph meta-paths do not match the model's meta-paths")


def forward(model: SurrogateModel, graph: HeteroGraph, tape: Tape,
            weight_leaves: bool = False) -> Value:
    """Build the surrogate forward pass on ``tape`` and return the logits.

    Every relation adjacency used by some meta-path is registered as a
    differentiable leaf named ``adj:<relation id>``. With ``weight_leaves``
    the model weights become leaves too (training needs their gradients;
    the attack does not).
    """
    _check_paths_match(model, graph)
    cfg = model.config
    x = graph.target_features
    if x.shape[1] != model.feature_dim:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match model ({model.feature_dim})")

    needed = sorted({rid for p in model.meta_paths for rid in p.relation_ids})
    adj = {rid: tape.leaf(adjacency_leaf(rid), graph.relations[rid].adjacency)
           for rid in needed}

    def param(name, array):
        if weight_leaves:
            return tape.leaf(name, array)
        return tape.constant(array)

    weights = [[param(f"w:{p}:{l}", w) for l, w in enumerate(stack)]
               for p, stack in enumerate(model.gcn_weights)]
    attn_proj = param("attn_proj", model.attn_proj)
    attn_vec = param("attn_vec", model.attn_vec)
    classifier = param("classifier", model.classifier)

    x_const = tape.constant(x)
    eye = tape.constant(np.eye(graph.n_target))

    embeddings, scores = [], []
    for p, path in enumerate(model.meta_paths):
        composed = adj[path.relation_ids[0]]
        for rid in path.relation_ids[1:]:
            composed = dc.matmul(composed, adj[rid])
        if cfg.binarize_composed:
            composed = dc.binarize_step(composed)
        norm = dc.diag_rsqrt_scale(dc.add(composed, eye),
                                   stop_grad_degrees=cfg.stop_grad_degrees)
        h = x_const
        for l, w in enumerate(weights[p]):
            h = dc.matmul(dc.matmul(norm, h), w)
            if l < cfg.num_gcn_layers - 1:
                h = dc.relu(h)
        embeddings.append(h)
        scores.append(dc.mean_all(dc.tanh(dc.matmul(dc.matmul(h, attn_proj),
                                                    attn_vec))))

    alpha = dc.softmax_rows(dc.concat_cols(scores))  # (1, n_paths)
    fused = dc.scalar_mul(dc.take_entry(alpha, 0, 0), embeddings[0])
    for p in range(1, len(embeddings)):
        fused = dc.add(fused, dc.scalar_mul(dc.take_entry(alpha, 0, p),
                                            embeddings[p]))
    tape.notes["alpha"] = alpha
    return dc.matmul(fused, classifier)


def forward_logits(model: SurrogateModel, graph: HeteroGraph) -> np.ndarray:
    """Plain forward pass; returns the (n_target x num_classes) logits array."""
    return forward(model, graph, Tape()).data


def attention_weights(model: SurrogateModel, graph: HeteroGraph) -> np.ndarray:
    """Meta-path attention vector alpha from a clean forward pass."""
    tape = Tape()
    forward(model, graph, tape)
    return tape.notes["alpha"].data[0].copy()


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v = {}, {}
        self.t = 0

    def start_step(self):
        self.t += 1

    def update(self, name, w, g):
        m = self.m.setdefault(name, np.zeros_like(w))
        v = self.v.setdefault(name, np.zeros_like(w))
        m[...] = self.beta1 * m + (1 - self.beta1) * g
        v[...] = self.beta2 * v + (1 - self.beta2) * g * g
        m_hat = m / (1 - self.beta1 ** self.t)
        v_hat = v / (1 - self.beta2 ** self.t)
        return w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    def __init__(self, lr):
        self.lr = lr

    def start_step(self):
        pass

    def update(self, name, w, g):
        return w - self.lr * g


def train(model: SurrogateModel, graph: HeteroGraph,
          config: SurrogateConfig | None = None) -> TrainReport:
    """Full-batch training on the graph's training labels, in place.

    Early-stops when the training loss has not improved for ``patience``
    epochs. Deterministic for a fixed seed: the only randomness is the
    weight initialization, which happened in :func:`init_model`.
    """
    cfg = config or model.config
    mask = graph.training_mask()
    if not mask.any():
        raise TrainError("no labeled training nodes")
    labels = graph.labels
    opt = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else Sgd(cfg.learning_rate)

    best_loss = np.inf
    since_best = 0
    curve = []
    epochs_run = 0
    logits = None
    for epoch in range(cfg.max_epochs):
        tape = Tape()
        try:
            logits = forward(model, graph, tape, weight_leaves=True)
            clamped = np.where(labels >= 0, labels, 0)
            loss = dc.masked_mean_cross_entropy(logits, clamped, mask)
        except dc.DiffError as err:
            raise TrainError(f"training diverged at epoch {epoch}: {err}") from err
        loss_val = float(loss.data[0, 0])
        if not np.isfinite(loss_val):
            raise TrainError(f"training diverged at epoch {epoch}: loss={loss_val}")
        curve.append(loss_val)
        epochs_run = epoch + 1

        dc.backward(loss)
        opt.start_step()
        for name, w in list(model.weight_items()):
            g = tape.grad_of(name) + cfg.weight_decay * w
            model.set_weight(name, opt.update(name, w, g))

        if loss_val < best_loss - 1e-12:
            best_loss = loss_val
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    final = forward_logits(model, graph)
    pred = final.argmax(axis=1)
    acc = float((pred[mask] == labels[mask]).mean())
    return TrainReport(final_train_accuracy=acc, epochs_run=epochs_run,
                       loss_curve=curve)


def top_two(logits_row: np.ndarray) -> tuple[int, int]:
    """Largest and second-largest class; ties resolved to the lower class id."""
    order = np.argsort(-logits_row, kind="stable")
    return int(order[0]), int(order[1])


def pseudo_labels(model: SurrogateModel, graph: HeteroGraph,
                  targets) -> PseudoLabels:
    """Clean-graph top-2 predictions for the given target-type nodes."""
    logits = forward_logits(model, graph)
    entries = {}
    for t in targets:
        t = int(t)
        if not 0 <= t < graph.n_target:
            raise ValueError(f"node {t} is not a target-type node")
        top1, top2 = top_two(logits[t])
        entries[t] = PseudoLabel(top1, top2, logits[t].copy())
    return PseudoLabels(entries)


# -- checkpointing ---------------------------------------------------------

def save_model(model: SurrogateModel, path) -> None:
    doc = {
        "config": vars(model.config),
        "meta_paths": [{"name": p.name, "relation_ids": p.relation_ids}
                       for p in model.meta_paths],
        "feature_dim": model.feature_dim,
        "num_classes": model.num_classes,
        "weights": {name: w.tolist() for name, w in model.weight_items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> SurrogateModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg = SurrogateConfig(**doc["config"])
    paths = [MetaPath(p["name"], list(p["relation_ids"])) for p in doc["meta_paths"]]
    weights = {name: np.array(w, dtype=np.float64)
               for name, w in doc["weights"].items()}
    gcn = []
    for p in range(len(paths)):
        stack = []
        for l in range(cfg.num_gcn_layers):
            stack.append(weights[f"w:{p}:{l}"])
        gcn.append(stack)
    return SurrogateModel(
        meta_paths=paths, gcn_weights=gcn, attn_proj=weights["attn_proj"],
        attn_vec=weights["attn_vec"], classifier=weights["classifier"],
        config=cfg, feature_dim=doc["feature_dim"],
        num_classes=doc["num_classes"])
