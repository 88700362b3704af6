"""Minimal dense reverse-mode differentiation engine.

Just enough machinery to express the surrogate forward pass and recover
the gradient of a scalar loss with respect to any registered leaf matrix,
relation adjacencies included. Everything is float64 and 2-D; creation
order on the tape doubles as the topological order for the backward sweep.
"""

from __future__ import annotations

import numpy as np


class DiffError(ValueError):
    """Shape mismatch, non-finite data or tape misuse."""


def _as2d(data) -> np.ndarray:
    a = np.asarray(data, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise DiffError(f"expected at most 2 dimensions, got shape {a.shape}")
    return a


def _require_finite(data: np.ndarray, what: str) -> None:
    if not np.isfinite(data).all():
        raise DiffError(f"non-finite values in {what}")


class Value:
    """One tape node: forward data, gradient accumulator and backward rule."""

    __slots__ = ("data", "grad", "parents", "requires_grad", "tape", "_backward")

    def __init__(self, data, tape, parents=(), requires_grad=False, backward=None):
        self.data = data
        self.grad = np.zeros_like(data)
        self.parents = parents
        self.requires_grad = requires_grad
        self.tape = tape
        self._backward = backward
        tape.values.append(self)

    @property
    def shape(self):
        return self.data.shape


class Tape:
    """Ordered record of Values plus a registry of named leaves.

    ``notes`` is a scratch dict for callers that want to expose auxiliary
    forward results (e.g. attention weights) alongside the main output.
    """

    def __init__(self):
        self.values: list[Value] = []
        self.leaves: dict[str, Value] = {}
        self.notes: dict = {}
        self._backward_done = False

    def leaf(self, name: str, data, requires_grad: bool = True) -> Value:
        if name in self.leaves:
            raise DiffError(f"leaf '{name}' already registered")
        a = _as2d(data)
        _require_finite(a, f"leaf '{name}'")
        v = Value(a, self, requires_grad=requires_grad)
        self.leaves[name] = v
        return v

    def constant(self, data) -> Value:
        a = _as2d(data)
        _require_finite(a, "constant")
        return Value(a, self)

    def grad_of(self, name: str) -> np.ndarray:
        if name not in self.leaves:
            raise DiffError(f"unknown leaf '{name}'")
        return self.leaves[name].grad.copy()

    def reset(self) -> None:
        for v in self.values:
            v.grad[...] = 0.0
        self._backward_done = False


def backward(loss: Value) -> None:
    """Reverse sweep seeding d(loss)/d(loss) = 1; visits each node once."""
    if loss.data.shape != (1, 1):
        raise DiffError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    tape = loss.tape
    if tape._backward_done:
        raise DiffError("backward already ran on this tape; call reset() first")
    tape._backward_done = True
    loss.grad[0, 0] = 1.0
    for v in reversed(tape.values):
        if v._backward is not None and v.requires_grad:
            v._backward(v.grad)


def grad_of(tape: Tape, leaf_name: str) -> np.ndarray:
    return tape.grad_of(leaf_name)


# -- operator helpers ----------------------------------------------------

def _result(data, parents, backward_rule):
    tape = parents[0].tape
    for p in parents[1:]:
        if p.tape is not tape:
            raise DiffError("operands live on different tapes")
    _require_finite(data, "operation result")
    requires = any(p.requires_grad for p in parents)
    return Value(data, tape, parents=tuple(parents), requires_grad=requires,
                 backward=backward_rule if requires else None)


def matmul(a: Value, b: Value) -> Value:
    if a.shape[1] != b.shape[0]:
        raise DiffError(f"matmul shape mismatch {a.shape} x {b.shape}")
    out = a.data @ b.data

    def rule(g):
        if a.requires_grad:
            a.grad += g @ b.data.T
        if b.requires_grad:
            b.grad += a.data.T @ g
    return _result(out, (a, b), rule)


def add(a: Value, b: Value) -> Value:
    if a.shape != b.shape:
        raise DiffError(f"add shape mismatch {a.shape} vs {b.shape}")

    def rule(g):
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad += g
    return _result(a.data + b.data, (a, b), rule)


def scale(a: Value, c: float) -> Value:
    c = float(c)

    def rule(g):
        if a.requires_grad:
            a.grad += c * g
    return _result(c * a.data, (a,), rule)


def hadamard(a: Value, b: Value) -> Value:
    if a.shape != b.shape:
        raise DiffError(f"hadamard shape mismatch {a.shape} vs {b.shape}")

    def rule(g):
        if a.requires_grad:
            a.grad += g * b.data
        if b.requires_grad:
            b.grad += g * a.data
    return _result(a.data * b.data, (a, b), rule)


def transpose(a: Value) -> Value:
    def rule(g):
        if a.requires_grad:
            a.grad += g.T
    return _result(a.data.T.copy(), (a,), rule)


def relu(a: Value) -> Value:
    out = np.maximum(a.data, 0.0)

    def rule(g):
        if a.requires_grad:
            a.grad += g * (a.data > 0.0)
    return _result(out, (a,), rule)


def tanh(a: Value) -> Value:
    out = np.tanh(a.data)

    def rule(g):
        if a.requires_grad:
            a.grad += g * (1.0 - out * out)
    return _result(out, (a,), rule)


def softmax_rows(a: Value) -> Value:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        if a.requires_grad:
            a.grad += out * (g - (g * out).sum(axis=1, keepdims=True))
    return _result(out, (a,), rule)


def row_sum(a: Value) -> Value:
    out = a.data.sum(axis=1, keepdims=True)

    def rule(g):
        if a.requires_grad:
            a.grad += np.broadcast_to(g, a.shape)
    return _result(out, (a,), rule)


def mean_all(a: Value) -> Value:
    out = np.array([[a.data.mean()]])
    inv = 1.0 / a.data.size

    def rule(g):
        if a.requires_grad:
            a.grad += g[0, 0] * inv
    return _result(out, (a,), rule)


def take_row(a: Value, i: int) -> Value:
    if not 0 <= i < a.shape[0]:
        raise DiffError(f"row {i} out of range for shape {a.shape}")
    out = a.data[i:i + 1].copy()

    def rule(g):
        if a.requires_grad:
            a.grad[i] += g[0]
    return _result(out, (a,), rule)


def take_entry(a: Value, i: int, j: int) -> Value:
    if not (0 <= i < a.shape[0] and 0 <= j < a.shape[1]):
        raise DiffError(f"entry ({i}, {j}) out of range for shape {a.shape}")
    out = np.array([[a.data[i, j]]])

    def rule(g):
        if a.requires_grad:
            a.grad[i, j] += g[0, 0]
    return _result(out, (a,), rule)


def concat_cols(values: list[Value]) -> Value:
    if not values:
        raise DiffError("concat_cols needs at least one operand")
    rows = values[0].shape[0]
    if any(v.shape[0] != rows for v in values):
        raise DiffError("concat_cols operands must share the row count")
    out = np.concatenate([v.data for v in values], axis=1)
    widths = [v.shape[1] for v in values]

    def rule(g):
        offset = 0
        for v, w in zip(values, widths):
            if v.requires_grad:
                v.grad += g[:, offset:offset + w]
            offset += w
    return _result(out, tuple(values), rule)


def scalar_mul(s: Value, m: Value) -> Value:
    if s.shape != (1, 1):
        raise DiffError(f"scalar_mul needs a (1, 1) scalar, got {s.shape}")
    out = s.data[0, 0] * m.data

    def rule(g):
        if s.requires_grad:
            s.grad[0, 0] += (g * m.data).sum()
        if m.requires_grad:
            m.grad += s.data[0, 0] * g
    return _result(out, (s, m), rule)


def diag_rsqrt_scale(m: Value, stop_grad_degrees: bool = False) -> Value:
    """Symmetric degree scaling D^{-1/2} M D^{-1/2}, D = diag(row sums of M).

    Differentiates through the degrees as well as the entries; the adjoint's
    degree term is -1/2 d^{-3/2} [(G*M) s + (G*M)^T s] broadcast over rows,
    with s = d^{-1/2}. ``stop_grad_degrees`` drops that term (treats D as a
    constant), trading exactness for a cheaper backward.
    """
    if m.shape[0] != m.shape[1]:
        raise DiffError(f"diag_rsqrt_scale needs a square matrix, got {m.shape}")
    d = m.data.sum(axis=1)
    if (d <= 0.0).any():
        raise DiffError("diag_rsqrt_scale needs strictly positive row sums")
    s = d ** -0.5
    out = m.data * s[:, None] * s[None, :]

    def rule(g):
        if not m.requires_grad:
            return
        m.grad += g * s[:, None] * s[None, :]
        if not stop_grad_degrees:
            p = g * m.data
            t = p @ s + p.T @ s
            dd = -0.5 * d ** -1.5 * t
            m.grad += dd[:, None]
    return _result(out, (m,), rule)


def binarize_step(a: Value) -> Value:
    """Elementwise (x > 0) indicator; its derivative is zero almost everywhere."""
    out = (a.data > 0.0).astype(np.float64)

    def rule(g):
        pass
    return _result(out, (a,), rule)


def cross_entropy(logits: Value, label: int) -> Value:
    """-log softmax(logits)[label] for a single (1, C) logits row."""
    if logits.shape[0] != 1:
        raise DiffError(f"cross_entropy expects one logits row, got {logits.shape}")
    if not 0 <= label < logits.shape[1]:
        raise DiffError(f"label {label} out of range for {logits.shape[1]} classes")
    z = logits.data[0]
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    out = np.array([[lse - z[label]]])
    softmax = np.exp(z - lse)

    def rule(g):
        if logits.requires_grad:
            adj = softmax.copy()
            adj[label] -= 1.0
            logits.grad[0] += g[0, 0] * adj
    return _result(out, (logits,), rule)


def masked_mean_cross_entropy(logits: Value, labels: np.ndarray,
                              mask: np.ndarray) -> Value:
    """Mean cross-entropy over the masked rows of an (n, C) logits matrix."""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    if labels.shape != (logits.shape[0],) or mask.shape != (logits.shape[0],):
        raise DiffError("labels and mask must have one entry per logits row")
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise DiffError("mask selects no rows")
    z = logits.data[idx]
    m = z.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))
    losses = lse[:, 0] - z[np.arange(idx.size), labels[idx]]
    out = np.array([[losses.mean()]])
    softmax = np.exp(z - lse)

    def rule(g):
        if logits.requires_grad:
            adj = softmax.copy()
            adj[np.arange(idx.size), labels[idx]] -= 1.0
            logits.grad[idx] += (g[0, 0] / idx.size) * adj
    return _result(out, (logits,), rule)
