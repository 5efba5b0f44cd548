"""Families of weighted complexes with nested finite truncations.

Finite families (``full_simplex``, ``octahedron``, ``torus_grid``) ignore the
level. Infinite families return the part of the complex within radius ``level``
of a base vertex, with interior flags marking simplices whose coface set is
already complete, and ``far_mass`` recording the exactly known weight of
absent cofaces for simplices with infinitely many cofaces.

Cone families realize a prescribed link at the apex ``rho = (0,)``: the
triangle ``{0, v, w}`` carries the link edge weight ``b(v, w)`` and the edge
``{0, v}`` carries a summable vertex measure.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .complex import Truncation, WeightedComplex

__all__ = ["FAMILIES", "ComplexGenerator", "generate", "lattice_ball", "closure_tables"]


def closure_tables(top: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    """All faces (dimension >= 0) of the given simplices, as unique sorted tables."""
    out: dict[int, list[np.ndarray]] = {}
    for k, rows in top.items():
        out.setdefault(k, []).append(np.asarray(rows, dtype=np.int64).reshape(-1, k + 1))
    kmax = max(out)
    tables: dict[int, np.ndarray] = {}
    for k in range(kmax, -1, -1):
        rows = np.unique(np.concatenate(out.get(k, [np.empty((0, k + 1), dtype=np.int64)])), axis=0)
        tables[k] = rows
        if k > 0 and len(rows):
            out.setdefault(k - 1, []).extend(np.delete(rows, i, axis=1) for i in range(k + 1))
    return tables


def _finite(tables: dict[int, np.ndarray], rule: Callable[[int, np.ndarray], np.ndarray],
            include_empty: bool, empty_weight: float) -> WeightedComplex:
    weights = {k: np.asarray(rule(k, t), dtype=np.float64) for k, t in tables.items()}
    return WeightedComplex(tables, weights, include_empty=include_empty, empty_weight=empty_weight)


def _weight_rule(name: str) -> Callable[[int, np.ndarray], np.ndarray]:
    if name == "unit":
        return lambda k, t: np.ones(len(t))
    if name == "dim_power":
        return lambda k, t: np.full(len(t), 2.0 ** (-k))
    raise ValueError(f"unknown weight rule {name!r} (expected 'unit' or 'dim_power')")


def full_simplex(level: int = 0, *, k: int = 2, weights: str = "unit",
                 include_empty: bool = False, empty_weight: float = 1.0) -> Truncation:
    if k < 0:
        raise ValueError("full_simplex needs k >= 0")
    tables = closure_tables({k: np.arange(k + 1, dtype=np.int64).reshape(1, -1)})
    cx = _finite(tables, _weight_rule(weights), include_empty, empty_weight)
    named = {"apex": (0,), "top": tuple(range(k + 1))}
    if include_empty:
        named["empty"] = ()
    return Truncation(cx, level, "full_simplex", {"k": k, "weights": weights}, named)


def octahedron(level: int = 0, *, weights: str = "unit", include_empty: bool = False,
               empty_weight: float = 1.0) -> Truncation:
    tris = np.array(list(itertools.product((0, 1), (2, 3), (4, 5))), dtype=np.int64)
    cx = _finite(closure_tables({2: tris}), _weight_rule(weights), include_empty, empty_weight)
    return Truncation(cx, level, "octahedron", {"weights": weights}, {"apex": (0,)})


def torus_grid(level: int = 0, *, p: int = 7, q: int = 7, weights: str = "unit",
               include_empty: bool = False, empty_weight: float = 1.0) -> Truncation:
    if p < 3 or q < 3:
        raise ValueError("torus_grid needs p, q >= 3")
    i, j = np.meshgrid(np.arange(p), np.arange(q), indexing="ij")
    i, j = i.ravel(), j.ravel()

    def vid(a, b):
        return (a % p) * q + (b % q)

    t1 = np.stack([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)], axis=1)
    t2 = np.stack([vid(i, j), vid(i, j + 1), vid(i + 1, j + 1)], axis=1)
    tris = np.sort(np.concatenate([t1, t2]), axis=1)
    cx = _finite(closure_tables({2: tris}), _weight_rule(weights), include_empty, empty_weight)
    return Truncation(cx, level, "torus_grid", {"p": p, "q": q, "weights": weights}, {"apex": (0,)})


def lattice_ball(d: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Points of Z^d with Euclidean norm <= n in the global stable order.

    Points are sorted by squared norm and then lexicographically, so the ball of
    radius ``n`` is a prefix of the ball of radius ``n + 1``. Returns the
    coordinates and the sorted edge list ``(a, b)`` of unit-step neighbours as
    rank pairs with ``a < b``.
    """
    if d < 1:
        raise ValueError("lattice dimension must be >= 1")
    if n < 0:
        raise ValueError("radius must be >= 0")
    axes = [np.arange(-n, n + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    r2 = (grid**2).sum(axis=1)
    grid, r2 = grid[r2 <= n * n], r2[r2 <= n * n]
    order = np.lexsort(tuple(grid.T[::-1]) + (r2,))
    pts = grid[order]
    side = 2 * n + 1
    rank = np.full(side**d, -1, dtype=np.int64)
    flat = np.ravel_multi_index(tuple((pts + n).T), (side,) * d)
    rank[flat] = np.arange(len(pts))
    edges = []
    for ax in range(d):
        nb = pts.copy()
        nb[:, ax] += 1
        ok = nb[:, ax] <= n
        j = np.full(len(pts), -1, dtype=np.int64)
        j[ok] = rank[np.ravel_multi_index(tuple((nb[ok] + n).T), (side,) * d)]
        a = np.arange(len(pts))[j >= 0]
        b = j[j >= 0]
        edges.append(np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1))
    e = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)
    e = e[np.lexsort((e[:, 1], e[:, 0]))]
    return pts, e


def _lattice_interior(pts: np.ndarray, edges: np.ndarray, d: int) -> np.ndarray:
    deg = np.bincount(edges.ravel(), minlength=len(pts))
    return deg == 2 * d


def cone_over_lattice(level: int = 4, *, d: int = 3) -> Truncation:
    """Cone with apex 0 over the lattice ball; link of the apex is the Z^d graph."""
    if level < 1:
        raise ValueError("cone families need level >= 1")
    pts, e = lattice_ball(d, level)
    nv = len(pts)
    ids = np.arange(1, nv + 1, dtype=np.int64)
    full = _lattice_interior(pts, e, d)
    apex_w = 2.0 ** (-np.abs(pts).sum(axis=1))
    cells = {
        0: np.concatenate([[0], ids]).reshape(-1, 1),
        1: np.concatenate([np.stack([np.zeros(nv, dtype=np.int64), ids], axis=1), e + 1]),
        2: np.concatenate([np.zeros((len(e), 1), dtype=np.int64), e + 1], axis=1),
    }
    weights = {
        0: np.ones(nv + 1),
        1: np.concatenate([apex_w, np.ones(len(e))]),
        2: np.ones(len(e)),
    }
    interior = {
        0: np.concatenate([[False], full]),
        1: np.concatenate([full, np.ones(len(e), dtype=bool)]),
        2: np.ones(len(e), dtype=bool),
    }
    far = {(0,): 3.0**d - apex_w.sum()}
    cx = WeightedComplex(cells, weights, interior=interior, far_mass=far, validate=False)
    family = "cone_over_path" if d == 1 else "cone_over_lattice"
    named = {"apex": (0,), "v0": (1,), "root_edge": (0, 1)}
    return Truncation(cx, level, family, {"d": d}, named)


def cone_over_path(level: int = 4) -> Truncation:
    return cone_over_lattice(level, d=1)


def skeleton_lattice(level: int = 4, *, d: int = 3, include_empty: bool = True,
                     empty_weight: float = 1.0) -> Truncation:
    """1-skeleton of Z^d with vertex weights 2^-|x|_1 and unit edge weights."""
    pts, e = lattice_ball(d, level)
    nv = len(pts)
    vw = 2.0 ** (-np.abs(pts).sum(axis=1))
    full = _lattice_interior(pts, e, d)
    cells = {0: np.arange(nv, dtype=np.int64).reshape(-1, 1), 1: e}
    weights = {0: vw, 1: np.ones(len(e))}
    interior = {-1: np.array([False]), 0: full, 1: np.ones(len(e), dtype=bool)}
    far = {(): 3.0**d - vw.sum()} if include_empty else {}
    cx = WeightedComplex(cells, weights, include_empty=include_empty, empty_weight=empty_weight,
                         interior=interior, far_mass=far, validate=False)
    named = {"root": (0,), "v0": (0,)}
    if include_empty:
        named["empty"] = ()
    return Truncation(cx, level, "skeleton_lattice", {"d": d, "include_empty": include_empty}, named)


def cone_over_tree(level: int = 4, *, branching: int = 2) -> Truncation:
    """Cone with apex 0 over the rooted ``branching``-ary tree to depth ``level``.

    Tree vertices are numbered breadth-first from 1 (the root). The apex edge to
    a vertex at depth ``k`` has weight ``(2 * branching) ** -k`` so the apex is
    locally summable.
    """
    if level < 1:
        raise ValueError("cone families need level >= 1")
    if branching < 1:
        raise ValueError("branching must be >= 1")
    b = branching
    counts = b ** np.arange(level + 1)
    depth = np.repeat(np.arange(level + 1), counts)
    nv = len(depth)
    j = np.arange(1, nv)
    parent = (j - 1) // b
    ids = np.arange(1, nv + 1, dtype=np.int64)
    tree_e = np.stack([parent + 1, j + 1], axis=1).astype(np.int64)
    ne = len(tree_e)
    inner = depth < level
    cells = {
        0: np.concatenate([[0], ids]).reshape(-1, 1),
        1: np.concatenate([np.stack([np.zeros(nv, dtype=np.int64), ids], axis=1), tree_e]),
        2: np.concatenate([np.zeros((ne, 1), dtype=np.int64), tree_e], axis=1),
    }
    apex_w = (2.0 * b) ** (-depth.astype(np.float64))
    weights = {0: np.ones(nv + 1), 1: np.concatenate([apex_w, np.ones(ne)]), 2: np.ones(ne)}
    interior = {
        0: np.concatenate([[False], inner]),
        1: np.concatenate([inner, np.ones(ne, dtype=bool)]),
        2: np.ones(ne, dtype=bool),
    }
    far = {(0,): 2.0 ** (-level)}
    cx = WeightedComplex(cells, weights, interior=interior, far_mass=far, validate=False)
    named = {"apex": (0,), "v0": (1,), "root_edge": (0, 1)}
    return Truncation(cx, level, "cone_over_tree", {"branching": b}, named)


def star_link(level: int = 4, *, ratio: float = 0.5) -> Truncation:
    """Cone over an infinite star: hub 1 joined to leaves with weights ratio**i.

    The link of the apex has totally summable edge weights. The hub and the
    apex have infinitely many cofaces (not locally finite); their absent
    coface mass is recorded in ``far_mass``.
    """
    if level < 1:
        raise ValueError("star_link needs level >= 1")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    i = np.arange(1, level + 1)
    leaves = (i + 1).astype(np.int64)
    w = ratio ** i.astype(np.float64)
    n = len(i)
    zeros, ones = np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)
    cells = {
        0: np.concatenate([[0, 1], leaves]).reshape(-1, 1),
        1: np.concatenate([[[0, 1]], np.stack([zeros, leaves], 1), np.stack([ones, leaves], 1)]),
        2: np.stack([zeros, ones, leaves], axis=1),
    }
    weights = {0: np.ones(n + 2), 1: np.concatenate([[1.0], w, w]), 2: w.copy()}
    interior = {
        0: np.concatenate([[False, False], np.ones(n, dtype=bool)]),
        1: np.concatenate([[False], np.ones(2 * n, dtype=bool)]),
        2: np.ones(n, dtype=bool),
    }
    tail = ratio ** (level + 1) / (1 - ratio)
    far = {(0,): tail, (1,): tail, (0, 1): tail}
    cx = WeightedComplex(cells, weights, interior=interior, far_mass=far, validate=False)
    named = {"apex": (0,), "v0": (1,), "hub": (1,), "root_edge": (0, 1)}
    return Truncation(cx, level, "star_link", {"ratio": ratio}, named)


FAMILIES: dict[str, Callable[..., Truncation]] = {
    "full_simplex": full_simplex,
    "octahedron": octahedron,
    "torus_grid": torus_grid,
    "cone_over_path": cone_over_path,
    "cone_over_tree": cone_over_tree,
    "cone_over_lattice": cone_over_lattice,
    "skeleton_lattice": skeleton_lattice,
    "star_link": star_link,
}

FINITE_FAMILIES = frozenset({"full_simplex", "octahedron", "torus_grid"})

# Known link behaviour at the apex (or at the empty simplex for skeleton_lattice).
ANALYTIC_LINK_VERDICT = {
    "cone_over_path": "Recurrent",
    "cone_over_tree": "Transient",
    "star_link": "Recurrent",
}


def _lattice_verdict(params: dict) -> str:
    return "Recurrent" if params.get("d", 3) <= 2 else "Transient"


@dataclass(frozen=True)
class ComplexGenerator:
    """A family identifier plus parameters; produces nested truncations."""

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {sorted(FAMILIES)}")

    @property
    def finite(self) -> bool:
        return self.family in FINITE_FAMILIES

    def truncation(self, level: int) -> Truncation:
        try:
            return FAMILIES[self.family](level, **self.params)
        except TypeError as exc:
            raise ValueError(f"invalid parameters for {self.family}: {exc}") from None

    def analytic_verdict(self) -> str | None:
        if self.family in ("cone_over_lattice", "skeleton_lattice"):
            return _lattice_verdict(self.params)
        if self.finite:
            return "Recurrent"
        return ANALYTIC_LINK_VERDICT.get(self.family)


def generate(family: str, level: int = 0, **params) -> Truncation:
    """Truncation of ``family`` at ``level``."""
    return ComplexGenerator(family, params).truncation(level)
