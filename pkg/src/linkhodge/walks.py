"""Seeded Monte Carlo estimates of return probabilities for random walks.

Each walk draws from its own splitmix64 stream keyed by ``(seed, walk index)``,
so outcomes do not depend on how walks are split across threads.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass

import numba
import numpy as np
import scipy.sparse as sp
from numba import njit, prange
from scipy.sparse.csgraph import shortest_path
from scipy.stats import binomtest

__all__ = ["MCEstimate", "mc_return_probability", "set_threads"]

# The default layer probes TBB first and warns when the installed TBB is too old.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

RETURNED, ESCAPED, TIMED_OUT = 1, 2, 0

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _stream_start(seed, walk):
    return _mix(np.uint64(seed) ^ _mix(np.uint64(walk) * _GOLDEN + _GOLDEN))


@njit(cache=True, inline="always")
def _uniform(z):
    return np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(parallel=True, cache=True)
def _lattice_walks(d, n_walks, max_steps, radius2, seed):
    out = np.zeros(n_walks, dtype=np.uint8)
    two_d = np.uint64(2 * d)
    for w in prange(n_walks):
        state = _stream_start(seed, w)
        x = np.zeros(d, dtype=np.int64)
        r2 = 0
        code = TIMED_OUT
        for _ in range(max_steps):
            state = state + _GOLDEN
            k = np.int64((_mix(state) >> np.uint64(32)) % two_d)
            ax = k >> 1
            step = 1 if k & 1 else -1
            r2 += 2 * step * x[ax] + 1
            x[ax] += step
            if r2 == 0:
                code = RETURNED
                break
            if r2 >= radius2:
                code = ESCAPED
                break
        out[w] = code
    return out


@njit(parallel=True, cache=True)
def _graph_walks(indptr, indices, cumprob, escape_prob, absorbing, root, n_walks, max_steps, seed):
    out = np.zeros(n_walks, dtype=np.uint8)
    for w in prange(n_walks):
        state = _stream_start(seed, w)
        x = root
        code = TIMED_OUT
        for _ in range(max_steps):
            state = state + _GOLDEN
            r = _uniform(_mix(state))
            if r < escape_prob[x]:
                code = ESCAPED
                break
            r = (r - escape_prob[x]) / (1.0 - escape_prob[x])
            lo, hi = indptr[x], indptr[x + 1]
            j = lo
            while j < hi - 1 and cumprob[j] <= r:
                j += 1
            x = indices[j]
            if x == root:
                code = RETURNED
                break
            if absorbing[x]:
                code = ESCAPED
                break
        out[w] = code
    return out


@dataclass
class MCEstimate:
    probability: float
    ci_low: float
    ci_high: float
    n_walks: int
    returned: int
    escaped: int
    timed_out: int
    max_steps: int
    escape_radius: float | None
    seed: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    def to_json(self) -> dict:
        d = asdict(self)
        d["half_width"] = self.half_width
        return d


def set_threads(n: int | None) -> None:
    if n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _summarize(codes: np.ndarray, max_steps: int, radius, seed: int) -> MCEstimate:
    counts = np.bincount(codes, minlength=3)
    n = len(codes)
    k = int(counts[RETURNED])
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return MCEstimate(
        probability=k / n,
        ci_low=float(ci.low),
        ci_high=float(ci.high),
        n_walks=n,
        returned=k,
        escaped=int(counts[ESCAPED]),
        timed_out=int(counts[TIMED_OUT]),
        max_steps=int(max_steps),
        escape_radius=None if radius is None else float(radius),
        seed=int(seed),
    )


def mc_return_probability(
    graph: sp.spmatrix | None = None,
    *,
    lattice_dim: int | None = None,
    root: int = 0,
    ground: np.ndarray | None = None,
    n_walks: int = 100_000,
    max_steps: int = 10_000,
    escape_radius: float | None = None,
    seed: int = 0,
) -> MCEstimate:
    """Fraction of walks from ``root`` that return before escaping or timing out.

    Parameters
    ----------
    graph
        Symmetric conductance matrix. The walk moves from ``x`` to ``y`` with
        probability ``b(x, y) / sum_z b(x, z)``. Ignored when ``lattice_dim`` is set.
    lattice_dim
        Walk on the unit-conductance lattice ``Z^d`` started at the origin.
    ground
        Optional conductance from each vertex to an absorbing ground; a step
        into the ground counts as an escape.
    escape_radius
        Euclidean radius on the lattice, hop distance from ``root`` on a graph.
        Reaching it counts as an escape.

    Returns
    -------
    MCEstimate
        Point estimate with a 95% Wilson interval. Outcomes depend only on
        ``seed``, never on the thread count.
    """
    if n_walks < 1 or max_steps < 1:
        raise ValueError("n_walks and max_steps must be positive")
    if lattice_dim is not None:
        r2 = np.iinfo(np.int64).max if escape_radius is None else int(np.ceil(escape_radius**2))
        codes = _lattice_walks(int(lattice_dim), int(n_walks), int(max_steps), r2, np.uint64(seed))
        return _summarize(codes, max_steps, escape_radius, seed)
    if graph is None:
        raise ValueError("give either a graph or lattice_dim")
    b = sp.csr_matrix(graph, dtype=np.float64)
    b.sort_indices()
    n = b.shape[0]
    deg = np.asarray(b.sum(axis=1)).ravel()
    g = np.zeros(n) if ground is None else np.asarray(ground, dtype=np.float64)
    total = deg + g
    if np.any(total <= 0):
        raise ValueError("every vertex needs positive total conductance")
    escape = g / total
    row = np.repeat(np.arange(n), np.diff(b.indptr))
    cs = np.cumsum(b.data)
    before = np.concatenate([[0.0], cs])[b.indptr[:-1]]
    cum = (cs - before[row]) / np.where(deg > 0, deg, 1.0)[row]
    absorbing = np.zeros(n, dtype=np.bool_)
    if escape_radius is not None:
        dist = shortest_path(b, unweighted=True, indices=root)
        absorbing = dist >= escape_radius
    codes = _graph_walks(b.indptr.astype(np.int64), b.indices.astype(np.int64), cum, escape,
                         absorbing, int(root), int(n_walks), int(max_steps), np.uint64(seed))
    return _summarize(codes, max_steps, escape_radius, seed)
