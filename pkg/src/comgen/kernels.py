"""Numeric hot-path kernels with a numba backend and a pure-numpy fallback.

The JIT backend is selected once at import time.  Set ``COMGEN_NUMBA=0`` in the
environment to force the numpy fallback (useful for debugging and for the
benchmark in ``benchmarks/bench_kernels.py``, which times both paths).  Both
backends compute bit-identical float64 results up to summation order.

Kernels:
  * clipped-offset attention bias terms (scores and values) and their grads
  * GRU recurrence over a full sequence, forward and backward-through-time
  * longest-common-subsequence length for ROUGE-L
"""

import os

import numpy as np

_env = os.environ.get("COMGEN_NUMBA", "1").strip().lower()
_want_numba = _env not in {"0", "false", "off", "no"}

if _want_numba:
    try:
        from numba import njit
    except ImportError:
        _want_numba = False

BACKEND = "numba" if _want_numba else "numpy"


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _rel_scores_np(q, table, idx):
    # out[b,h,i,j] = q[b,h,i,:] . table[idx[i,j],:]
    return np.einsum("bhid,ijd->bhij", q, table[idx], optimize=True)


def _rel_scores_grads_np(g, q, table, idx):
    gathered = table[idx]
    dq = np.einsum("bhij,ijd->bhid", g, gathered, optimize=True)
    per_pos = np.einsum("bhij,bhid->ijd", g, q, optimize=True)
    dtable = np.zeros_like(table)
    np.add.at(dtable, idx.ravel(), per_pos.reshape(-1, table.shape[1]))
    return dq, dtable


def _rel_values_np(attn, table, idx):
    # out[b,h,i,:] = sum_j attn[b,h,i,j] * table[idx[i,j],:]
    return np.einsum("bhij,ijd->bhid", attn, table[idx], optimize=True)


def _rel_values_grads_np(g, attn, table, idx):
    gathered = table[idx]
    dattn = np.einsum("bhid,ijd->bhij", g, gathered, optimize=True)
    per_pos = np.einsum("bhij,bhid->ijd", attn, g, optimize=True)
    dtable = np.zeros_like(table)
    np.add.at(dtable, idx.ravel(), per_pos.reshape(-1, table.shape[1]))
    return dattn, dtable


def _gru_forward_np(xg, h0, wh, bh):
    """Run a GRU over a sequence of precomputed input gates.

    xg: (B, T, 3H) input projections x@Wx+bx, gate order (update, reset, new).
    Returns hidden states (B, T, H) and per-step cache (B, T, 4H) holding
    (z, r, n, hn) needed by the backward pass.
    """
    b, t, h3 = xg.shape
    h = h3 // 3
    hs = np.empty((b, t, h))
    cache = np.empty((b, t, 4 * h))
    hprev = h0
    for step in range(t):
        hg = hprev @ wh + bh
        z = _sigmoid(xg[:, step, :h] + hg[:, :h])
        r = _sigmoid(xg[:, step, h:2 * h] + hg[:, h:2 * h])
        hn = hg[:, 2 * h:]
        n = np.tanh(xg[:, step, 2 * h:] + r * hn)
        hprev = (1.0 - z) * n + z * hprev
        hs[:, step] = hprev
        cache[:, step, :h] = z
        cache[:, step, h:2 * h] = r
        cache[:, step, 2 * h:3 * h] = n
        cache[:, step, 3 * h:] = hn
    return hs, cache


def _gru_backward_np(g, xg, h0, wh, hs, cache):
    """Backward-through-time for _gru_forward_np.

    g: (B, T, H) gradient w.r.t. every hidden state.
    Returns (dxg, dh0, dwh, dbh).
    """
    b, t, h3 = xg.shape
    h = h3 // 3
    dxg = np.zeros_like(xg)
    dwh = np.zeros_like(wh)
    dbh = np.zeros(3 * h)
    dh = np.zeros((b, h))
    for step in range(t - 1, -1, -1):
        dh = dh + g[:, step]
        z = cache[:, step, :h]
        r = cache[:, step, h:2 * h]
        n = cache[:, step, 2 * h:3 * h]
        hn = cache[:, step, 3 * h:]
        hprev = hs[:, step - 1] if step > 0 else h0
        dz = dh * (hprev - n)
        dn = dh * (1.0 - z)
        dhprev = dh * z
        dn_pre = dn * (1.0 - n * n)
        dr = dn_pre * hn
        dhn = dn_pre * r
        dz_pre = dz * z * (1.0 - z)
        dr_pre = dr * r * (1.0 - r)
        dxg[:, step, :h] = dz_pre
        dxg[:, step, h:2 * h] = dr_pre
        dxg[:, step, 2 * h:] = dn_pre
        dhg = np.concatenate([dz_pre, dr_pre, dhn], axis=1)
        dwh += hprev.T @ dhg
        dbh += dhg.sum(axis=0)
        dh = dhprev + dhg @ wh.T
    return dxg, dh, dwh, dbh


def _lcs_length_py(a, b):
    n, m = len(a), len(b)
    prev = [0] * (m + 1)
    for i in range(n):
        cur = [0] * (m + 1)
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = prev[j + 1] if prev[j + 1] >= cur[j] else cur[j]
        prev = cur
    return prev[m]


# ---------------------------------------------------------------------------
# numba implementations (compiled lazily, cached on disk)
# ---------------------------------------------------------------------------

if BACKEND == "numba":

    @njit(cache=True)
    def _rel_scores_nb(q, table, idx):
        nb, nh, lq, dk = q.shape
        lk = idx.shape[1]
        out = np.zeros((nb, nh, lq, lk))
        for b in range(nb):
            for h in range(nh):
                for i in range(lq):
                    for j in range(lk):
                        row = idx[i, j]
                        acc = 0.0
                        for d in range(dk):
                            acc += q[b, h, i, d] * table[row, d]
                        out[b, h, i, j] = acc
        return out

    @njit(cache=True)
    def _rel_scores_grads_nb(g, q, table, idx):
        nb, nh, lq, dk = q.shape
        lk = idx.shape[1]
        dq = np.zeros_like(q)
        dtable = np.zeros_like(table)
        for b in range(nb):
            for h in range(nh):
                for i in range(lq):
                    for j in range(lk):
                        row = idx[i, j]
                        gij = g[b, h, i, j]
                        for d in range(dk):
                            dq[b, h, i, d] += gij * table[row, d]
                            dtable[row, d] += gij * q[b, h, i, d]
        return dq, dtable

    @njit(cache=True)
    def _rel_values_nb(attn, table, idx):
        nb, nh, lq, lk = attn.shape
        dv = table.shape[1]
        out = np.zeros((nb, nh, lq, dv))
        for b in range(nb):
            for h in range(nh):
                for i in range(lq):
                    for j in range(lk):
                        row = idx[i, j]
                        aij = attn[b, h, i, j]
                        for d in range(dv):
                            out[b, h, i, d] += aij * table[row, d]
        return out

    @njit(cache=True)
    def _rel_values_grads_nb(g, attn, table, idx):
        nb, nh, lq, lk = attn.shape
        dv = table.shape[1]
        dattn = np.zeros_like(attn)
        dtable = np.zeros_like(table)
        for b in range(nb):
            for h in range(nh):
                for i in range(lq):
                    for j in range(lk):
                        row = idx[i, j]
                        acc = 0.0
                        for d in range(dv):
                            acc += g[b, h, i, d] * table[row, d]
                            dtable[row, d] += attn[b, h, i, j] * g[b, h, i, d]
                        dattn[b, h, i, j] = acc
        return dattn, dtable

    @njit(cache=True)
    def _gru_forward_nb(xg, h0, wh, bh):
        b, t, h3 = xg.shape
        h = h3 // 3
        hs = np.empty((b, t, h))
        cache = np.empty((b, t, 4 * h))
        hprev = h0.copy()
        for step in range(t):
            hg = np.dot(hprev, wh) + bh
            z = 1.0 / (1.0 + np.exp(-(xg[:, step, :h] + hg[:, :h])))
            r = 1.0 / (1.0 + np.exp(-(xg[:, step, h:2 * h] + hg[:, h:2 * h])))
            hn = hg[:, 2 * h:]
            n = np.tanh(xg[:, step, 2 * h:] + r * hn)
            hprev = (1.0 - z) * n + z * hprev
            hs[:, step, :] = hprev
            cache[:, step, :h] = z
            cache[:, step, h:2 * h] = r
            cache[:, step, 2 * h:3 * h] = n
            cache[:, step, 3 * h:] = hn
        return hs, cache

    @njit(cache=True)
    def _gru_backward_nb(g, xg, h0, wh, hs, cache):
        b, t, h3 = xg.shape
        h = h3 // 3
        dxg = np.zeros_like(xg)
        dwh = np.zeros_like(wh)
        dbh = np.zeros(3 * h)
        dh = np.zeros((b, h))
        dhg = np.empty((b, 3 * h))
        for step in range(t - 1, -1, -1):
            dhk = dh + g[:, step, :]
            z = cache[:, step, :h]
            r = cache[:, step, h:2 * h]
            n = cache[:, step, 2 * h:3 * h]
            hn = cache[:, step, 3 * h:]
            hp = hs[:, step - 1, :] if step > 0 else h0
            dz = dhk * (hp - n)
            dn = dhk * (1.0 - z)
            dn_pre = dn * (1.0 - n * n)
            dr = dn_pre * hn
            dhn = dn_pre * r
            dz_pre = dz * z * (1.0 - z)
            dr_pre = dr * r * (1.0 - r)
            dxg[:, step, :h] = dz_pre
            dxg[:, step, h:2 * h] = dr_pre
            dxg[:, step, 2 * h:] = dn_pre
            dhg[:, :h] = dz_pre
            dhg[:, h:2 * h] = dr_pre
            dhg[:, 2 * h:] = dhn
            dwh += np.dot(hp.T.copy(), dhg)
            dbh += dhg.sum(axis=0)
            dh = dhk * z + np.dot(dhg, wh.T.copy())
        return dxg, dh, dwh, dbh

    @njit(cache=True)
    def _lcs_length_nb(a, b):
        n, m = a.shape[0], b.shape[0]
        prev = np.zeros(m + 1, dtype=np.int64)
        cur = np.zeros(m + 1, dtype=np.int64)
        for i in range(n):
            for j in range(m):
                if a[i] == b[j]:
                    cur[j + 1] = prev[j] + 1
                else:
                    cur[j + 1] = max(prev[j + 1], cur[j])
            tmp = prev
            prev = cur
            cur = tmp
        return prev[m]

    rel_scores = _rel_scores_nb
    rel_scores_grads = _rel_scores_grads_nb
    rel_values = _rel_values_nb
    rel_values_grads = _rel_values_grads_nb

    def lcs_length(a, b):
        if len(a) == 0 or len(b) == 0:
            return 0
        return int(_lcs_length_nb(np.asarray(a, dtype=np.int64),
                                  np.asarray(b, dtype=np.int64)))

else:
    rel_scores = _rel_scores_np
    rel_scores_grads = _rel_scores_grads_np
    rel_values = _rel_values_np
    rel_values_grads = _rel_values_grads_np

    def lcs_length(a, b):
        return _lcs_length_py(list(a), list(b))

# The GRU recurrence is BLAS-bound at training shapes (the per-step matmul
# dominates), so the JIT version loses to numpy's threaded BLAS; see
# benchmarks/bench_kernels.py.  Both backends therefore use the numpy path;
# the compiled variant stays available for the benchmark.
gru_forward = _gru_forward_np
gru_backward = _gru_backward_np


def warmup():
    """Trigger JIT compilation of every kernel (no-op on the numpy backend)."""
    q = np.ones((1, 1, 2, 2))
    table = np.ones((3, 2))
    idx = np.zeros((2, 2), dtype=np.int64)
    s = rel_scores(q, table, idx)
    rel_scores_grads(s, q, table, idx)
    v = rel_values(s, table, idx)
    rel_values_grads(v, s, table, idx)
    xg = np.ones((1, 2, 6))
    h0 = np.zeros((1, 2))
    wh = np.ones((2, 6))
    bh = np.zeros(6)
    hs, cache = gru_forward(xg, h0, wh, bh)
    gru_backward(np.ones_like(hs), xg, h0, wh, hs, cache)
    if BACKEND == "numba":
        hs2, cache2 = _gru_forward_nb(xg, h0, wh, bh)
        _gru_backward_nb(np.ones_like(hs2), xg, h0, wh, hs2, cache2)
    lcs_length(np.array([1, 2], dtype=np.int64), np.array([2, 1], dtype=np.int64))
