"""Fluctuation, crossing and set-fluctuation counts.

All counters compute the maximal number of pairs in a chain
i_1 < j_1 <= i_2 < j_2 <= ... <= i_k < j_k < N whose pairs satisfy a relation.
Taking, at every stage, the admissible pair with the smallest right endpoint
is optimal (the usual exchange argument), so each counter keeps a summary of
the window since the last recorded endpoint and records a pair at the first j
that closes one.

Two oracles check the greedy counts: a recursive enumeration of chains
(``max_chain_enumerate``) and a dynamic program over a stack of pair-validity
matrices (``max_chain_table``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class CounterResult:
    count: int
    witness: tuple[tuple[int, int], ...] = ()


def _prepare(path: Sequence[float], N: int) -> np.ndarray:
    x = np.asarray(path, dtype=float)
    if not 0 <= N <= x.shape[0]:
        raise ValueError(f"N = {N} exceeds path length {x.shape[0]}")
    return x


def count_fluctuations(path: Sequence[float], eps: float, N: int) -> CounterResult:
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = _prepare(path, N)
    if N < 2:
        return CounterResult(0)
    pairs = []
    lo = hi = 0
    for j in range(1, N):
        if x[hi] - x[j] >= eps:
            pairs.append((hi, j))
        elif x[j] - x[lo] >= eps:
            pairs.append((lo, j))
        else:
            if x[j] < x[lo]:
                lo = j
            if x[j] > x[hi]:
                hi = j
            continue
        lo = hi = j
    return CounterResult(len(pairs), tuple(pairs))


def _crossings(x: np.ndarray, N: int, start_ok: Callable[[float], bool],
               end_ok: Callable[[float], bool]) -> CounterResult:
    pairs = []
    anchor = None
    for j in range(N):
        if anchor is not None and end_ok(x[j]):
            pairs.append((anchor, j))
            anchor = None
        if anchor is None and start_ok(x[j]):
            anchor = j
    return CounterResult(len(pairs), tuple(pairs))


def _interval(alpha: float, beta: float) -> None:
    if not alpha < beta:
        raise ValueError("need alpha < beta")


def count_downcrossings(path: Sequence[float], alpha: float, beta: float, N: int) -> CounterResult:
    _interval(alpha, beta)
    x = _prepare(path, N)
    return _crossings(x, N, lambda v: v >= beta, lambda v: v <= alpha)


def count_upcrossings(path: Sequence[float], alpha: float, beta: float, N: int) -> CounterResult:
    _interval(alpha, beta)
    x = _prepare(path, N)
    return _crossings(x, N, lambda v: v <= alpha, lambda v: v >= beta)


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), axis=-1)


def _anchor_series(points, anchors, G, distance) -> np.ndarray:
    """G(d(x_n, z)) for every anchor z: shape (len(anchors), len(points))."""
    if len(anchors) == 0:
        raise ValueError("anchor set must be nonempty")
    G = getattr(G, "G", G)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    rows = []
    for z in anchors:
        z = np.broadcast_to(np.asarray(z, dtype=float), pts.shape[1:])
        rows.append(np.asarray(G(distance(pts, z[None, ...])), dtype=float))
    return np.vstack(rows)


def count_set_fluctuations(points, anchors, G, k: int, N: int,
                           distance: Callable = euclidean_distance) -> CounterResult:
    """Chains whose every pair is separated by 1/(k+1) under G(d(., z)) for some anchor z."""
    series = _anchor_series(points, anchors, G, distance)
    if not 0 <= N <= series.shape[1]:
        raise ValueError(f"N = {N} exceeds path length {series.shape[1]}")
    gap = 1.0 / (k + 1)
    pairs = []
    lo = np.zeros(series.shape[0], dtype=int)
    hi = np.zeros(series.shape[0], dtype=int)
    rows = np.arange(series.shape[0])
    for j in range(1, N):
        col = series[:, j]
        down = series[rows, hi] - col >= gap
        up = col - series[rows, lo] >= gap
        if down.any() or up.any():
            z = int(np.argmax(down | up))
            pairs.append((int(hi[z]) if down[z] else int(lo[z]), j))
            lo[:] = j
            hi[:] = j
            continue
        lo = np.where(col < series[rows, lo], j, lo)
        hi = np.where(col > series[rows, hi], j, hi)
    return CounterResult(len(pairs), tuple(pairs))


# batch versions over the rows of a value matrix, same greedy rule


def fluctuations_batch(values: np.ndarray, eps: float, N: int) -> np.ndarray:
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(values, dtype=float)
    if not 0 <= N <= x.shape[1]:
        raise ValueError("N exceeds path length")
    count = np.zeros(x.shape[0], dtype=np.int64)
    if N < 2:
        return count
    lo = x[:, 0].copy()
    hi = x[:, 0].copy()
    for j in range(1, N):
        col = x[:, j]
        hit = (hi - col >= eps) | (col - lo >= eps)
        count += hit
        lo = np.where(hit, col, np.minimum(lo, col))
        hi = np.where(hit, col, np.maximum(hi, col))
    return count


def set_fluctuations_batch(series: np.ndarray, k: int, N: int) -> np.ndarray:
    """series[s, z, n] = G(d(x_n, z)) on path s; chains witnessed by any anchor z."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 3 or x.shape[1] == 0:
        raise ValueError("series must have shape (paths, anchors, length) with anchors")
    if not 0 <= N <= x.shape[2]:
        raise ValueError("N exceeds path length")
    gap = 1.0 / (k + 1)
    count = np.zeros(x.shape[0], dtype=np.int64)
    if N < 2:
        return count
    lo = x[:, :, 0].copy()
    hi = x[:, :, 0].copy()
    for j in range(1, N):
        col = x[:, :, j]
        hit = ((hi - col >= gap) | (col - lo >= gap)).any(axis=1)
        count += hit
        lo = np.where(hit[:, None], col, np.minimum(lo, col))
        hi = np.where(hit[:, None], col, np.maximum(hi, col))
    return count


def _crossings_batch(x: np.ndarray, N: int, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    count = np.zeros(x.shape[0], dtype=np.int64)
    armed = np.zeros(x.shape[0], dtype=bool)
    for j in range(N):
        hit = armed & end[:, j]
        count += hit
        armed = (armed & ~hit) | start[:, j]
    return count


def downcrossings_batch(values: np.ndarray, alpha: float, beta: float, N: int) -> np.ndarray:
    _interval(alpha, beta)
    x = np.asarray(values, dtype=float)[:, :N]
    return _crossings_batch(x, N, x >= beta, x <= alpha)


def upcrossings_batch(values: np.ndarray, alpha: float, beta: float, N: int) -> np.ndarray:
    _interval(alpha, beta)
    x = np.asarray(values, dtype=float)[:, :N]
    return _crossings_batch(x, N, x <= alpha, x >= beta)


# oracles


def max_chain_enumerate(valid: Callable[[int, int], bool], N: int) -> int:
    """Longest admissible chain, by recursion over every choice of next pair."""

    @lru_cache(maxsize=None)
    def best(start: int) -> int:
        result = 0
        for i in range(start, N):
            for j in range(i + 1, N):
                if valid(i, j):
                    result = max(result, 1 + best(j))
        return result

    return best(0)


def max_chain_table(valid: np.ndarray, N: int) -> np.ndarray:
    """Longest admissible chain for a stack of validity matrices valid[s, i, j].

    f(s) = max(f(s+1), max over valid (s, j) of 1 + f(j)) covers every chain
    whose first left endpoint is at least s.
    """
    valid = np.asarray(valid, dtype=bool)
    S = valid.shape[0]
    f = np.zeros((N + 1, S), dtype=np.int64)
    for s in range(N - 2, -1, -1):
        best = f[s + 1].copy()
        for j in range(s + 1, N):
            best = np.maximum(best, np.where(valid[:, s, j], 1 + f[j], 0))
        f[s] = best
    return f[0]


def fluctuation_pairs(values: np.ndarray, eps: float) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    return np.abs(x[:, :, None] - x[:, None, :]) >= eps


def downcrossing_pairs(values: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    return (x[:, :, None] >= beta) & (x[:, None, :] <= alpha)


def upcrossing_pairs(values: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    return (x[:, :, None] <= alpha) & (x[:, None, :] >= beta)


def set_fluctuation_pairs(points, anchors, G, k: int,
                          distance: Callable = euclidean_distance) -> np.ndarray:
    """Single-path validity matrix for set-fluctuations."""
    series = _anchor_series(points, anchors, G, distance)
    gap = 1.0 / (k + 1)
    return np.any(np.abs(series[:, :, None] - series[:, None, :]) >= gap, axis=0)
