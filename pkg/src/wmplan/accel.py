"""Backends for the greedy adjacent-merge kernel.

The hot loop of tree building re-scores every adjacent segment pair after
each merge (no stale heap entries), which is O(T^2) scalar work. The numba
path jit-compiles that loop; the numpy path vectorizes the per-step scan.
Set ``WM_NO_NUMBA=1`` to force the numpy path (the default is numba when it
imports cleanly). Both paths produce identical merge sequences.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["merge_sequence", "backend_name", "merge_sequence_numpy"]


def merge_sequence_numpy(sums: np.ndarray, counts: np.ndarray):
    """Greedy adjacent SSE-increase merging over sufficient statistics.

    ``sums`` is (T, d) per-segment vector sums, ``counts`` the per-segment
    frame counts. Returns (left_ids, right_ids, deltas): at step s the
    active segments with node ids left_ids[s], right_ids[s] (leaves are
    0..T-1, merge s creates node T+s) were adjacent and had the minimal
    merge cost deltas[s]; ties go to the leftmost pair.
    """
    T, _ = sums.shape
    ids = np.arange(T, dtype=np.int64)
    left_ids = np.empty(T - 1, dtype=np.int64)
    right_ids = np.empty(T - 1, dtype=np.int64)
    deltas = np.empty(T - 1, dtype=np.float64)
    s = sums.astype(np.float64).copy()
    c = counts.astype(np.float64).copy()
    for step in range(T - 1):
        mu = s / c[:, None]
        diff = mu[:-1] - mu[1:]
        w = c[:-1] * c[1:] / (c[:-1] + c[1:])
        cost = w * np.einsum("ij,ij->i", diff, diff)
        best = int(np.argmin(cost))
        left_ids[step] = ids[best]
        right_ids[step] = ids[best + 1]
        deltas[step] = cost[best]
        s[best] += s[best + 1]
        c[best] += c[best + 1]
        ids[best] = T + step
        s = np.delete(s, best + 1, axis=0)
        c = np.delete(c, best + 1)
        ids = np.delete(ids, best + 1)
    return left_ids, right_ids, deltas


def _build_numba_kernel():
    import numba

    @numba.njit(cache=True)
    def _kernel(sums, counts):  # pragma: no cover - exercised via merge_sequence
        T, d = sums.shape
        ids = np.arange(T, dtype=np.int64)
        left_ids = np.empty(T - 1, dtype=np.int64)
        right_ids = np.empty(T - 1, dtype=np.int64)
        deltas = np.empty(T - 1, dtype=np.float64)
        s = sums.copy()
        c = counts.copy()
        m = T
        for step in range(T - 1):
            best = 0
            best_cost = np.inf
            for i in range(m - 1):
                w = c[i] * c[i + 1] / (c[i] + c[i + 1])
                acc = 0.0
                for j in range(d):
                    diff = s[i, j] / c[i] - s[i + 1, j] / c[i + 1]
                    acc += diff * diff
                cost = w * acc
                if cost < best_cost:
                    best_cost = cost
                    best = i
            left_ids[step] = ids[best]
            right_ids[step] = ids[best + 1]
            deltas[step] = best_cost
            for j in range(d):
                s[best, j] += s[best + 1, j]
            c[best] += c[best + 1]
            ids[best] = T + step
            for i in range(best + 1, m - 1):
                for j in range(d):
                    s[i, j] = s[i + 1, j]
                c[i] = c[i + 1]
                ids[i] = ids[i + 1]
            m -= 1
        return left_ids, right_ids, deltas

    def merge_sequence_numba(sums, counts):
        return _kernel(np.ascontiguousarray(sums, dtype=np.float64),
                       np.ascontiguousarray(counts, dtype=np.float64))

    return merge_sequence_numba


def _select_backend():
    if os.environ.get("WM_NO_NUMBA", "").strip() not in ("", "0"):
        return merge_sequence_numpy, "numpy"
    try:
        return _build_numba_kernel(), "numba"
    except ImportError:
        return merge_sequence_numpy, "numpy"


_BACKEND, _BACKEND_NAME = _select_backend()


def merge_sequence(sums: np.ndarray, counts: np.ndarray):
    """Dispatch to the active merge-kernel backend."""
    return _BACKEND(sums, counts)


def backend_name() -> str:
    return _BACKEND_NAME
