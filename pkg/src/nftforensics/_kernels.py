"""Integer kernels for the hot loops: SCC labelling, union-find, edit distance
and Hamming pair search.

Each kernel has a numba-compiled path and a pure-numpy path.  The numba path is
used when numba imports and ``NFTFORENSICS_JIT`` is not set to ``0``/``off``.
Both paths return identical results; ``benchmarks/bench_kernels.py`` times them
against each other.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

_FLAG = os.environ.get("NFTFORENSICS_JIT", "1").strip().lower()

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

JIT_ENABLED = njit is not None and _FLAG not in {"0", "off", "false", "no"}


# ---------------------------------------------------------------- SCC (Tarjan)

def _scc_labels_impl(n, indptr, indices):
    # Iterative Tarjan over CSR adjacency; explicit call stack avoids recursion.
    index = np.full(n, -1, np.int64)
    low = np.zeros(n, np.int64)
    onstack = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    call_node = np.empty(n, np.int64)
    call_edge = np.empty(n, np.int64)
    labels = np.full(n, -1, np.int64)
    sp = 0
    cp = 0
    counter = 0
    ncomp = 0
    for root in range(n):
        if index[root] != -1:
            continue
        index[root] = counter
        low[root] = counter
        counter += 1
        stack[sp] = root
        sp += 1
        onstack[root] = True
        call_node[cp] = root
        call_edge[cp] = indptr[root]
        cp += 1
        while cp > 0:
            v = call_node[cp - 1]
            e = call_edge[cp - 1]
            if e < indptr[v + 1]:
                call_edge[cp - 1] = e + 1
                w = indices[e]
                if index[w] == -1:
                    index[w] = counter
                    low[w] = counter
                    counter += 1
                    stack[sp] = w
                    sp += 1
                    onstack[w] = True
                    call_node[cp] = w
                    call_edge[cp] = indptr[w]
                    cp += 1
                elif onstack[w] and index[w] < low[v]:
                    low[v] = index[w]
            else:
                cp -= 1
                if low[v] == index[v]:
                    while True:
                        sp -= 1
                        w = stack[sp]
                        onstack[w] = False
                        labels[w] = ncomp
                        if w == v:
                            break
                    ncomp += 1
                if cp > 0:
                    u = call_node[cp - 1]
                    if low[v] < low[u]:
                        low[u] = low[v]
    return labels


def _scc_labels_py(n, indptr, indices):
    # Same algorithm on Python lists; scalar indexing into ndarrays is ~5x slower.
    indptr = indptr.tolist()
    indices = indices.tolist()
    index = [-1] * n
    low = [0] * n
    onstack = [False] * n
    labels = [-1] * n
    stack = []
    counter = 0
    ncomp = 0
    for root in range(n):
        if index[root] != -1:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        onstack[root] = True
        calls = [[root, indptr[root]]]
        while calls:
            frame = calls[-1]
            v, e = frame
            if e < indptr[v + 1]:
                frame[1] = e + 1
                w = indices[e]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    onstack[w] = True
                    calls.append([w, indptr[w]])
                elif onstack[w] and index[w] < low[v]:
                    low[v] = index[w]
            else:
                calls.pop()
                if low[v] == index[v]:
                    while True:
                        w = stack.pop()
                        onstack[w] = False
                        labels[w] = ncomp
                        if w == v:
                            break
                    ncomp += 1
                if calls:
                    u = calls[-1][0]
                    if low[v] < low[u]:
                        low[u] = low[v]
    return np.asarray(labels, dtype=np.int64)


# ------------------------------------------------------------ WCC (union-find)

def _wcc_labels_impl(n, src, dst, keep):
    parent = np.arange(n)
    for e in range(src.shape[0]):
        a = src[e]
        b = dst[e]
        if not keep[a] or not keep[b]:
            continue
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a < b:
            parent[b] = a
        elif b < a:
            parent[a] = b
    for v in range(n):
        r = v
        while parent[r] != r:
            r = parent[r]
        parent[v] = r
    return parent


def _wcc_labels_np(n, src, dst, keep):
    # Min-label propagation with pointer jumping; converges to the smallest
    # node index in each component, same as the union-find path.
    labels = np.arange(n)
    mask = keep[src] & keep[dst]
    s = src[mask]
    d = dst[mask]
    if s.size == 0:
        return labels
    while True:
        m = np.minimum(labels[s], labels[d])
        new = labels.copy()
        np.minimum.at(new, s, m)
        np.minimum.at(new, d, m)
        while True:
            jumped = new[new]
            if np.array_equal(jumped, new):
                break
            new = jumped
        if np.array_equal(new, labels):
            return labels
        labels = new


# --------------------------------------------------------------- edit distance

def _edit_distance_impl(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.arange(m + 1)
    cur = np.empty(m + 1, np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            best = prev[j - 1] + cost
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def _edit_distance_np(a, b):
    # Row recurrence row[j] = min(cand[j], row[j-1] + 1) is a running minimum
    # of (cand[j] - j) shifted back by j.
    m = b.shape[0]
    ramp = np.arange(m + 1)
    prev = ramp.copy()
    for i in range(1, a.shape[0] + 1):
        cand = np.minimum(prev[:-1] + (b != a[i - 1]), prev[1:] + 1)
        shifted = np.concatenate(([i], cand)) - ramp
        prev = np.minimum.accumulate(shifted) + ramp
    return int(prev[m])


# ------------------------------------------------------------- Hamming search

def _popcount64(x, m1, m2, m4, h01):
    x = x - ((x >> np.uint64(1)) & m1)
    x = (x & m2) + ((x >> np.uint64(2)) & m2)
    x = (x + (x >> np.uint64(4))) & m4
    return np.int64((x * h01) >> np.uint64(56))


def _hamming_pairs_impl(hashes, threshold):
    # SWAR popcount.  A counting pass then a filling pass keeps the inner loop
    # free of allocation so it vectorizes.
    m1 = np.uint64(0x5555555555555555)
    m2 = np.uint64(0x3333333333333333)
    m4 = np.uint64(0x0F0F0F0F0F0F0F0F)
    h01 = np.uint64(0x0101010101010101)
    n = hashes.shape[0]
    per_row = np.zeros(n, np.int64)
    for i in range(n):
        hi = hashes[i]
        c = 0
        for j in range(i + 1, n):
            if _popcount64(hi ^ hashes[j], m1, m2, m4, h01) <= threshold:
                c += 1
        per_row[i] = c
    total = per_row.sum()
    out_i = np.empty(total, np.int64)
    out_j = np.empty(total, np.int64)
    out_d = np.empty(total, np.int64)
    k = 0
    for i in range(n):
        if per_row[i] == 0:
            continue
        hi = hashes[i]
        for j in range(i + 1, n):
            d = _popcount64(hi ^ hashes[j], m1, m2, m4, h01)
            if d <= threshold:
                out_i[k] = i
                out_j[k] = j
                out_d[k] = d
                k += 1
    return out_i, out_j, out_d


def _hamming_pairs_np(hashes, threshold):
    parts_i, parts_j, parts_d = [], [], []
    for i in range(hashes.shape[0] - 1):
        d = np.bitwise_count(hashes[i] ^ hashes[i + 1:]).astype(np.int64)
        hit = np.flatnonzero(d <= threshold)
        if hit.size:
            parts_i.append(np.full(hit.size, i, np.int64))
            parts_j.append(hit + i + 1)
            parts_d.append(d[hit])
    if not parts_i:
        empty = np.empty(0, np.int64)
        return empty, empty.copy(), empty.copy()
    return np.concatenate(parts_i), np.concatenate(parts_j), np.concatenate(parts_d)


# ---------------------------------------------------------------- dispatch

numpy_kernels = SimpleNamespace(
    scc_labels=_scc_labels_py,
    wcc_labels=_wcc_labels_np,
    edit_distance=_edit_distance_np,
    hamming_pairs=_hamming_pairs_np,
)

if njit is not None:
    _jit = njit(cache=True, nogil=True)
    _popcount64 = _jit(_popcount64)
    numba_kernels = SimpleNamespace(
        scc_labels=_jit(_scc_labels_impl),
        wcc_labels=_jit(_wcc_labels_impl),
        edit_distance=_jit(_edit_distance_impl),
        hamming_pairs=_jit(_hamming_pairs_impl),
    )
else:  # pragma: no cover
    numba_kernels = None

active = numba_kernels if JIT_ENABLED else numpy_kernels


def scc_labels(n: int, indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Raw (non-canonical) SCC label per node of a CSR digraph."""
    if n == 0:
        return np.empty(0, np.int64)
    return np.asarray(active.scc_labels(n, indptr, indices))


def wcc_labels(n: int, src: np.ndarray, dst: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Smallest node index of each node's weak component; dropped nodes map to themselves."""
    if n == 0:
        return np.empty(0, np.int64)
    return np.asarray(active.wcc_labels(n, src, dst, keep))


def edit_distance(a: np.ndarray, b: np.ndarray) -> int:
    if a.shape[0] == 0:
        return int(b.shape[0])
    if b.shape[0] == 0:
        return int(a.shape[0])
    return int(active.edit_distance(a, b))


def hamming_pairs(hashes: np.ndarray, threshold: int):
    """Index pairs (i < j) whose 64-bit hashes differ in at most ``threshold`` bits."""
    if hashes.shape[0] < 2:
        empty = np.empty(0, np.int64)
        return empty, empty.copy(), empty.copy()
    return active.hamming_pairs(hashes.astype(np.uint64), int(threshold))
