"""Reverse-mode autodiff over float64 numpy arrays.

A Tensor wraps an ndarray plus a gradient accumulator and a backward closure.
The graph is built eagerly by the op functions below; ``Tensor.backward()``
walks it in reverse topological order.  Everything is double precision so
analytic gradients can be checked against central finite differences.
"""

from __future__ import annotations

import numpy as np

from comgen import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        """Backpropagate from this tensor (scalar unless ``seed`` is given)."""
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed requires a scalar tensor")
            seed = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate(seed)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar; full implementations live at module level
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name=""):
    return Tensor(data, requires_grad=True, name=name)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


_grad_enabled = True


class no_grad:
    """Context manager that skips graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def _needs_grad(*ts):
    return _grad_enabled and any(t.requires_grad or t._backward is not None
                                 for t in ts)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data
    if not _needs_grad(a, b):
        return Tensor(out_data)

    def bwd(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, True, (a, b), bwd)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data - b.data
    if not _needs_grad(a, b):
        return Tensor(out_data)

    def bwd(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(-g, b.data.shape))

    return Tensor(out_data, True, (a, b), bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data
    if not _needs_grad(a, b):
        return Tensor(out_data)

    def bwd(g):
        a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, True, (a, b), bwd)


def scale(a, s):
    a = _as_tensor(a)
    out_data = a.data * s
    if not _needs_grad(a):
        return Tensor(out_data)

    def bwd(g):
        a.accumulate(g * s)

    return Tensor(out_data, True, (a,), bwd)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data @ b.data
    if not _needs_grad(a, b):
        return Tensor(out_data)

    def bwd(g):
        bt = np.swapaxes(b.data, -1, -2)
        at = np.swapaxes(a.data, -1, -2)
        a.accumulate(_unbroadcast(g @ bt, a.data.shape))
        b.accumulate(_unbroadcast(at @ g, b.data.shape))

    return Tensor(out_data, True, (a, b), bwd)


def transpose(a, axes):
    a = _as_tensor(a)
    out_data = np.transpose(a.data, axes)
    if not _needs_grad(a):
        return Tensor(out_data)
    inv = np.argsort(axes)

    def bwd(g):
        a.accumulate(np.transpose(g, inv))

    return Tensor(out_data, True, (a,), bwd)


def reshape(a, shape):
    a = _as_tensor(a)
    out_data = a.data.reshape(shape)
    if not _needs_grad(a):
        return Tensor(out_data)
    orig = a.data.shape

    def bwd(g):
        a.accumulate(g.reshape(orig))

    return Tensor(out_data, True, (a,), bwd)


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    if not _needs_grad(*tensors):
        return Tensor(out_data)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t.accumulate(piece)

    return Tensor(out_data, True, tuple(tensors), bwd)


def embedding(table, ids):
    """Row gather ``table[ids]``; backward scatter-adds into the table."""
    ids = np.asarray(ids)
    out_data = table.data[ids]
    if not _needs_grad(table):
        return Tensor(out_data)

    def bwd(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, ids, g)
        table.accumulate(acc)

    return Tensor(out_data, True, (table,), bwd)


def relu(a):
    a = _as_tensor(a)
    out_data = np.maximum(a.data, 0.0)
    if not _needs_grad(a):
        return Tensor(out_data)
    gate = a.data > 0.0

    def bwd(g):
        a.accumulate(g * gate)

    return Tensor(out_data, True, (a,), bwd)


def tanh(a):
    a = _as_tensor(a)
    out_data = np.tanh(a.data)
    if not _needs_grad(a):
        return Tensor(out_data)

    def bwd(g):
        a.accumulate(g * (1.0 - out_data * out_data))

    return Tensor(out_data, True, (a,), bwd)


def sigmoid(a):
    a = _as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))
    if not _needs_grad(a):
        return Tensor(out_data)

    def bwd(g):
        a.accumulate(g * out_data * (1.0 - out_data))

    return Tensor(out_data, True, (a,), bwd)


def dropout(a, p, rng, training):
    if not training or p <= 0.0:
        return a
    a = _as_tensor(a)
    keep = rng.random(a.data.shape) >= p
    factor = keep / (1.0 - p)
    out_data = a.data * factor
    if not _needs_grad(a):
        return Tensor(out_data)

    def bwd(g):
        a.accumulate(g * factor)

    return Tensor(out_data, True, (a,), bwd)


def masked_softmax(scores, valid=None, axis=-1):
    """Softmax where ``valid == False`` entries get exactly zero weight.

    Rows with no valid entry produce an all-zero row (and zero gradient),
    which is how fully-padded memory positions stay inert.
    """
    scores = _as_tensor(scores)
    s = scores.data
    if valid is not None:
        s = np.where(valid, s, -np.inf)
    m = np.max(s, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(s - m)
    z = e.sum(axis=axis, keepdims=True)
    out_data = np.divide(e, z, out=np.zeros_like(e), where=z > 0.0)
    if not _needs_grad(scores):
        return Tensor(out_data)

    def bwd(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        scores.accumulate(out_data * (g - inner))

    return Tensor(out_data, True, (scores,), bwd)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x = _as_tensor(x)
    d = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = gamma.data * xhat + beta.data
    if not _needs_grad(x, gamma, beta):
        return Tensor(out_data)

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=lead))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=lead))
        dxhat = g * gamma.data
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        x.accumulate(dx)

    return Tensor(out_data, True, (x, gamma, beta), bwd)


def cross_entropy(logits, targets, ignore_id):
    """Mean token-level cross entropy over positions where target != ignore_id."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets)
    keep = targets != ignore_id
    count = int(keep.sum())
    if count == 0:
        raise ValueError("cross_entropy: every target position is ignored")
    s = logits.data
    m = s.max(axis=-1, keepdims=True)
    e = np.exp(s - m)
    z = e.sum(axis=-1, keepdims=True)
    logp = (s - m) - np.log(z)
    safe_targets = np.where(keep, targets, 0)
    picked = np.take_along_axis(logp, safe_targets[..., None], axis=-1)[..., 0]
    loss = -(picked * keep).sum() / count
    if not _needs_grad(logits):
        return Tensor(loss)

    def bwd(g):
        p = e / z
        onehot_sub = p.copy()
        np.put_along_axis(
            onehot_sub, safe_targets[..., None],
            np.take_along_axis(onehot_sub, safe_targets[..., None], axis=-1) - 1.0,
            axis=-1)
        logits.accumulate(g * onehot_sub * keep[..., None] / count)

    return Tensor(loss, True, (logits,), bwd)


def rel_scores(q, table, idx):
    """Attention score bias from clipped-offset key vectors: q_i . w[idx[i,j]]."""
    q, table = _as_tensor(q), _as_tensor(table)
    out_data = kernels.rel_scores(np.ascontiguousarray(q.data),
                                  np.ascontiguousarray(table.data), idx)
    if not _needs_grad(q, table):
        return Tensor(out_data)

    def bwd(g):
        dq, dtable = kernels.rel_scores_grads(
            np.ascontiguousarray(g), np.ascontiguousarray(q.data),
            np.ascontiguousarray(table.data), idx)
        q.accumulate(dq)
        table.accumulate(dtable)

    return Tensor(out_data, True, (q, table), bwd)


def rel_values(attn, table, idx):
    """Weighted sum of clipped-offset value vectors: sum_j a_ij * w[idx[i,j]]."""
    attn, table = _as_tensor(attn), _as_tensor(table)
    out_data = kernels.rel_values(np.ascontiguousarray(attn.data),
                                  np.ascontiguousarray(table.data), idx)
    if not _needs_grad(attn, table):
        return Tensor(out_data)

    def bwd(g):
        dattn, dtable = kernels.rel_values_grads(
            np.ascontiguousarray(g), np.ascontiguousarray(attn.data),
            np.ascontiguousarray(table.data), idx)
        attn.accumulate(dattn)
        table.accumulate(dtable)

    return Tensor(out_data, True, (attn, table), bwd)


def gru_sequence(xg, h0, wh, bh):
    """GRU over a sequence of precomputed input-gate activations.

    xg: (B, T, 3H) tensor, h0: (B, H) array, wh/bh: recurrent weights.
    Returns the full hidden-state sequence (B, T, H).
    """
    xg, wh, bh = _as_tensor(xg), _as_tensor(wh), _as_tensor(bh)
    h0 = np.asarray(h0, dtype=np.float64)
    hs, cache = kernels.gru_forward(np.ascontiguousarray(xg.data), h0,
                                    np.ascontiguousarray(wh.data),
                                    np.ascontiguousarray(bh.data))
    if not _needs_grad(xg, wh, bh):
        return Tensor(hs)

    def bwd(g):
        dxg, _dh0, dwh, dbh = kernels.gru_backward(
            np.ascontiguousarray(g), np.ascontiguousarray(xg.data), h0,
            np.ascontiguousarray(wh.data), hs, cache)
        xg.accumulate(dxg)
        wh.accumulate(dwh)
        bh.accumulate(dbh)

    return Tensor(hs, True, (xg, wh, bh), bwd)
