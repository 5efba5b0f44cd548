"""Link graphs of simplices and the maps that localize the boundary to them.

For a simplex ``rho`` the link is the set of vertices ``v`` with ``v + rho`` a
simplex. It carries the vertex measure ``m_rho(v) = m(v rho)`` and the edge
weight ``b_rho(v, w) = m(v w rho)``. ``lift`` turns a link function into a
cochain supported on the cofaces of ``rho``; ``restrict`` goes back.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .complex import Simplex, WeightedComplex
from .operators import Cochain, DegreeMismatchError, boundary, coboundary, q_plus, random_cochain

__all__ = [
    "LinkGraph",
    "TruncationWarning",
    "components",
    "lift",
    "link_energy",
    "link_laplacian",
    "link_of",
    "restrict",
    "verify_localization",
]


class TruncationWarning(UserWarning):
    """Quantity evaluated where a truncation does not see the full coface set."""


@dataclass
class LinkGraph:
    """Weighted graph over ``lk(rho)``.

    Arrays are aligned with ``verts`` (sorted vertex ids). ``coface`` holds the
    index of ``v rho`` among the ``(dim rho + 1)``-simplices and ``theta`` the
    orientation sign of ``rho`` inside it. ``interior`` marks link vertices whose
    row of ``b`` is complete; ``far`` is the known weight of absent link edges.
    """

    complex: WeightedComplex
    base: Simplex
    verts: np.ndarray
    m_rho: np.ndarray
    b: sp.csr_matrix
    coface: np.ndarray
    theta: np.ndarray
    interior: np.ndarray
    far: np.ndarray

    @property
    def size(self) -> int:
        return len(self.verts)

    @property
    def degree(self) -> int:
        return len(self.base)

    def volume(self) -> float:
        return float(self.m_rho.sum())

    def position(self, v: int) -> int:
        i = int(np.searchsorted(self.verts, v))
        if i >= len(self.verts) or self.verts[i] != v:
            raise KeyError(f"vertex {v} is not in the link of {self.base}")
        return i

    def edges(self) -> np.ndarray:
        """Rows ``(v, w, b)`` with ``v < w``, sorted."""
        up = sp.triu(self.b, k=1).tocoo()
        order = np.lexsort((up.col, up.row))
        r, c = up.row[order], up.col[order]
        return np.column_stack([self.verts[r], self.verts[c], up.data[order]])

    def to_json(self) -> dict:
        e = self.edges()
        return {
            "base": list(self.base),
            "verts": self.verts.tolist(),
            "m_rho": self.m_rho.tolist(),
            "edges": [[int(v), int(w), float(x)] for v, w, x in e],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _coface_rows(cx: WeightedComplex, rho: Simplex) -> tuple[np.ndarray, np.ndarray]:
    k = len(rho) - 1
    if k == -1:
        n = cx.count(0)
        return np.arange(n, dtype=np.int64), np.ones(n, dtype=np.int64)
    return cx.coface_indices(k, cx.index(rho))


def link_of(rho: Simplex, cx: WeightedComplex, *, warn: bool = True) -> LinkGraph:
    """Extract the link graph of ``rho``.

    Warns with :class:`TruncationWarning` when ``rho`` is neither interior nor
    carries a known far mass, since the link is then incomplete.
    """
    rho = tuple(rho)
    k = len(rho) - 1
    if k == -1 and not cx.include_empty:
        raise KeyError("empty simplex is not part of this complex")
    idx, theta = _coface_rows(cx, rho)
    order_tab = cx.table(k + 1)[idx]
    rho_sum = sum(rho)
    verts = order_tab.sum(axis=1) - rho_sum
    order = np.argsort(verts, kind="stable")
    idx, theta, verts = idx[order], theta[order], verts[order]
    n = len(verts)

    if warn and k >= 0:
        i = cx.index(rho)
        if not cx.interior_mask(k)[i] and rho not in cx.far_mass:
            warnings.warn(f"link of {rho} is truncated", TruncationWarning, stacklevel=2)
    if warn and k == -1 and not cx.interior_mask(-1)[0] and () not in cx.far_mass:
        warnings.warn("link of the empty simplex is truncated", TruncationWarning, stacklevel=2)

    # (k+2)-simplices sigma containing rho arise as cofaces of each v rho;
    # the other link vertex is sigma minus (v rho).
    if n and cx.count(k + 2):
        csc = cx._cob_by_column(k + 1)
        sub = csc[:, idx].tocoo()
        sig = sub.row
        col = sub.col
        other = cx.table(k + 2)[sig].sum(axis=1) - cx.table(k + 1)[idx[col]].sum(axis=1)
        j = np.searchsorted(verts, other)
        b = sp.csr_matrix((cx.weights(k + 2)[sig], (col, j)), shape=(n, n))
        b.sum_duplicates()
        b.sort_indices()
    else:
        b = sp.csr_matrix((n, n))
    interior = cx.interior_mask(k + 1)[idx].copy()
    far = np.zeros(n)
    if cx.far_mass:
        for p, v in enumerate(verts):
            s = tuple(sorted(rho + (int(v),)))
            if s in cx.far_mass:
                far[p] = cx.far_mass[s]
    return LinkGraph(
        complex=cx,
        base=rho,
        verts=verts.astype(np.int64),
        m_rho=cx.weights(k + 1)[idx].copy(),
        b=b,
        coface=idx,
        theta=theta.astype(np.int64),
        interior=interior,
        far=far,
    )


def _as_array(link: LinkGraph, u) -> np.ndarray:
    if isinstance(u, dict):
        arr = np.zeros(link.size, dtype=np.complex128 if any(isinstance(x, complex) for x in u.values()) else np.float64)
        for v, x in u.items():
            arr[link.position(int(v))] = x
        return arr
    arr = np.asarray(u)
    if arr.shape != (link.size,):
        raise ValueError(f"link function needs {link.size} values, got shape {arr.shape}")
    return arr


def lift(link: LinkGraph, u) -> Cochain:
    """``(pi^rho u)(tau) = u(tau - rho) * sign(rho, tau)`` for ``tau`` a coface of ``rho``, else 0."""
    u = _as_array(link, u)
    cx, k = link.complex, link.degree
    vals = np.zeros(cx.count(k), dtype=u.dtype)
    vals[link.coface] = link.theta * u
    return Cochain(cx, k, vals)


def restrict(link: LinkGraph, omega: Cochain) -> np.ndarray:
    """``(pi_rho omega)(v) = sign(rho, v rho) * omega(v rho)``."""
    if omega.degree != link.degree:
        raise DegreeMismatchError(f"restriction to the link of {link.base} needs degree {link.degree}")
    return link.theta * omega.values[link.coface]


def link_laplacian(link: LinkGraph, u) -> np.ndarray:
    """``(L u)(x) = (1/m_rho(x)) * sum_y b(x, y) * (u(x) - u(y))``."""
    u = _as_array(link, u)
    deg = np.asarray(link.b.sum(axis=1)).ravel()
    return (deg * u - link.b @ u) / link.m_rho


def link_energy(link: LinkGraph, u) -> float:
    """``(1/2) * sum_{x,y} b(x, y) |u(x) - u(y)|^2``."""
    u = _as_array(link, u)
    up = sp.triu(link.b, k=1).tocoo()
    return float(np.sum(up.data * np.abs(u[up.row] - u[up.col]) ** 2))


def components(link: LinkGraph) -> tuple[int, np.ndarray]:
    """Connected components of the positive-weight edges of ``b``."""
    adj = link.b.copy()
    adj.data = (adj.data > 0).astype(np.int8)
    adj.eliminate_zeros()
    return connected_components(adj, directed=False)


def _rel(lhs, rhs) -> float:
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    scale = max(1.0, float(np.max(np.abs(lhs), initial=0.0)), float(np.max(np.abs(rhs), initial=0.0)))
    return float(np.max(np.abs(lhs - rhs), initial=0.0)) / scale


def verify_localization(cx: WeightedComplex, rho: Simplex, trials: int = 20,
                        rng: np.random.Generator | None = None, complex_valued: bool = True) -> dict:
    """Maximum scaled residual of the localization identities over random inputs.

    Keys ``a`` to ``d`` hold the residuals; ``e`` records the finite volume
    bookkeeping (always true on finite data).

    (a) ``m(rho) * d omega(rho) = sum m_rho * pi_rho omega``
    (b) ``sum m_rho * u = m(rho) * d(pi^rho u)(rho)``
    (c) ``Q_rho(u) = Q+(pi^rho u)``
    (d) ``pi^rho L u = d delta pi^rho u`` on the cofaces of ``rho``
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    rho = tuple(rho)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        link = link_of(rho, cx)
    k = len(rho) - 1
    m_r = cx.empty_weight if k == -1 else cx.weight(rho)
    r_idx = 0 if k == -1 else cx.index(rho)
    res = {"a": 0.0, "b": 0.0, "c": 0.0, "d": 0.0}
    for _ in range(trials):
        omega = random_cochain(cx, k + 1, rng, complex_valued)
        u = rng.standard_normal(link.size)
        if complex_valued:
            u = u + 1j * rng.standard_normal(link.size)
        lhs_a = m_r * boundary(omega).values[r_idx]
        rhs_a = np.sum(link.m_rho * restrict(link, omega))
        res["a"] = max(res["a"], _rel(lhs_a, rhs_a))

        lifted = lift(link, u)
        lhs_b = np.sum(link.m_rho * u)
        rhs_b = m_r * boundary(lifted).values[r_idx]
        res["b"] = max(res["b"], _rel(lhs_b, rhs_b))

        res["c"] = max(res["c"], _rel(link_energy(link, u), q_plus(lifted)))

        lhs_d = link.theta * link_laplacian(link, u)
        rhs_d = boundary(coboundary(lifted)).values[link.coface]
        res["d"] = max(res["d"], _rel(lhs_d, rhs_d))
    res["e"] = bool(np.isfinite(link.volume()))
    res["trials"] = trials
    return res
