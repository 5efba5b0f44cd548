"""Coboundary, boundary, weighted inner products and quadratic forms.

Cochains are dense vectors over the ``k``-simplices of a complex (absent
entries are zero). The coboundary only reads faces and is exact everywhere.
The boundary reads cofaces, so on a truncation its value is flagged as exact
only at interior simplices.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .complex import Simplex, UnknownSimplexError, WeightedComplex

__all__ = [
    "Cochain",
    "DegreeMismatchError",
    "DegreeOperatorPair",
    "DegreeUnderflowError",
    "assemble",
    "boundary",
    "boundary_matrix",
    "chain_defects",
    "coboundary",
    "export_coo",
    "inner",
    "q_hodge",
    "q_minus",
    "q_plus",
    "random_cochain",
]


class DegreeMismatchError(ValueError):
    pass


class DegreeUnderflowError(ValueError):
    pass


@dataclass
class Cochain:
    """Function on the ``degree``-simplices of ``complex`` (indexed like ``complex.table(degree)``).

    ``exact`` optionally flags entries that are authoritative for the infinite
    complex a truncation approximates; ``None`` means all entries are.
    """

    complex: WeightedComplex
    degree: int
    values: np.ndarray
    exact: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        n = self.complex.count(self.degree)
        if self.values.shape != (n,):
            raise ValueError(f"degree-{self.degree} cochain needs {n} values, got shape {self.values.shape}")

    @classmethod
    def zeros(cls, cx: WeightedComplex, degree: int, dtype=np.float64) -> Cochain:
        return cls(cx, degree, np.zeros(cx.count(degree), dtype=dtype))

    @classmethod
    def indicator(cls, cx: WeightedComplex, s: Simplex) -> Cochain:
        c = cls.zeros(cx, len(s) - 1)
        c.values[cx.index(s)] = 1.0
        return c

    @classmethod
    def from_dict(cls, cx: WeightedComplex, degree: int, values: Mapping[Simplex, complex]) -> Cochain:
        dtype = np.complex128 if any(isinstance(v, complex) for v in values.values()) else np.float64
        c = cls.zeros(cx, degree, dtype)
        for s, v in values.items():
            if len(s) - 1 != degree:
                raise DegreeMismatchError(f"{s} is not a {degree}-simplex")
            c.values[cx.index(tuple(s))] = v
        return c

    def to_dict(self, tol: float = 0.0) -> dict[Simplex, complex]:
        idx = np.flatnonzero(np.abs(self.values) > tol)
        tab = self.complex.table(self.degree)
        return {tuple(int(v) for v in tab[i]): self.values[i].item() for i in idx}

    def __getitem__(self, s: Simplex):
        if len(s) - 1 != self.degree:
            raise DegreeMismatchError(f"{s} is not a {self.degree}-simplex")
        try:
            return self.values[self.complex.index(s)].item()
        except UnknownSimplexError:
            return 0.0

    def _like(self, values: np.ndarray) -> Cochain:
        return Cochain(self.complex, self.degree, values, self.exact)

    def _check(self, other: Cochain) -> None:
        if other.degree != self.degree or other.complex is not self.complex:
            raise DegreeMismatchError("cochains live in different degrees or complexes")

    def __add__(self, other: Cochain) -> Cochain:
        self._check(other)
        return self._like(self.values + other.values)

    def __sub__(self, other: Cochain) -> Cochain:
        self._check(other)
        return self._like(self.values - other.values)

    def __mul__(self, c: complex) -> Cochain:
        return self._like(self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> Cochain:
        return self._like(-self.values)

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self).real))

    def support(self) -> list[Simplex]:
        return list(self.to_dict())


def random_cochain(cx: WeightedComplex, degree: int, rng: np.random.Generator,
                   complex_valued: bool = False, density: float = 1.0) -> Cochain:
    n = cx.count(degree)
    v = rng.standard_normal(n)
    if complex_valued:
        v = v + 1j * rng.standard_normal(n)
    if density < 1.0:
        v = v * (rng.random(n) < density)
    return Cochain(cx, degree, v)


def boundary_matrix(cx: WeightedComplex, k: int) -> sp.csr_matrix:
    """Matrix of the boundary from degree ``k + 1`` to ``k``: ``M_k^{-1} D_k^T M_{k+1}``."""
    D = cx.coboundary_matrix(k)
    wk, wk1 = cx.weights(k), cx.weights(k + 1)
    return (sp.diags(1.0 / wk) @ D.T.astype(np.float64) @ sp.diags(wk1)).tocsr()


def coboundary(omega: Cochain) -> Cochain:
    """``(delta omega)(sigma) = sum over faces tau of sign(tau, sigma) * omega(tau)``."""
    cx, k = omega.complex, omega.degree
    return Cochain(cx, k + 1, cx.coboundary_matrix(k) @ omega.values)


def boundary(omega: Cochain) -> Cochain:
    """Weighted adjoint of the coboundary.

    ``(d omega)(rho) = (1/m(rho)) * sum over cofaces tau of m(tau) * sign(rho, tau) * omega(tau)``.
    Entries at non-interior simplices of a truncation are flagged inexact.
    """
    cx, k = omega.complex, omega.degree - 1
    if k < -1 or (k == -1 and not cx.include_empty):
        raise DegreeUnderflowError(f"no boundary of a degree-{omega.degree} cochain in this complex")
    D = cx.coboundary_matrix(k)
    vals = (D.T @ (cx.weights(k + 1) * omega.values)) / cx.weights(k)
    return Cochain(cx, k, vals, exact=cx.interior_mask(k).copy())


def inner(f: Cochain, g: Cochain) -> complex:
    """``<f, g> = sum m * f * conj(g)``."""
    if f.degree != g.degree:
        raise DegreeMismatchError(f"degrees {f.degree} and {g.degree} differ")
    r = np.sum(f.complex.weights(f.degree) * f.values * np.conj(g.values))
    return complex(r) if np.iscomplexobj(r) else float(r)


def q_plus(omega: Cochain) -> float:
    d = coboundary(omega)
    return float(np.sum(d.complex.weights(d.degree) * np.abs(d.values) ** 2))


def q_minus(omega: Cochain) -> float:
    """``sum m |d omega|^2`` over interior simplices (all of them on a finite complex)."""
    d = boundary(omega)
    mask = d.exact if d.exact is not None else slice(None)
    return float(np.sum(d.complex.weights(d.degree)[mask] * np.abs(d.values[mask]) ** 2))


def _graded(omega: Cochain | Sequence[Cochain]) -> list[Cochain]:
    if isinstance(omega, Cochain):
        return [omega]
    return list(omega)


def q_hodge(omega: Cochain | Sequence[Cochain]) -> float:
    """``sum m |(delta + d) omega|^2`` for a homogeneous or graded cochain."""
    parts = _graded(omega)
    acc: dict[int, np.ndarray] = {}
    masks: dict[int, np.ndarray] = {}
    cx = parts[0].complex
    for p in parts:
        dp = coboundary(p)
        acc[dp.degree] = acc.get(dp.degree, 0) + dp.values
        if p.degree - 1 >= -1 and not (p.degree == 0 and not cx.include_empty):
            bp = boundary(p)
            acc[bp.degree] = acc.get(bp.degree, 0) + bp.values
            masks[bp.degree] = bp.exact
    total = 0.0
    for k, v in acc.items():
        w = cx.weights(k)
        m = masks.get(k)
        if m is not None:
            w, v = w[m], np.asarray(v)[m]
        total += float(np.sum(w * np.abs(v) ** 2))
    return total


@dataclass
class DegreeOperatorPair:
    """Coboundary ``D`` (degree k -> k+1) and boundary ``B`` (k+1 -> k) with index maps."""

    degree: int
    D: sp.csr_matrix
    B: sp.csr_matrix
    lower: np.ndarray
    upper: np.ndarray
    m_lower: np.ndarray
    m_upper: np.ndarray

    def weighted_transpose_residual(self) -> float:
        """Max relative entrywise gap between ``B`` and ``M_k^{-1} D^T M_{k+1}``."""
        ref = (sp.diags(1.0 / self.m_lower) @ self.D.T.astype(np.float64) @ sp.diags(self.m_upper)).tocsr()
        diff = abs(self.B - ref)
        if diff.nnz == 0:
            return 0.0
        scale = abs(ref).max()
        return float(diff.max() / scale) if scale else float(diff.max())

    def index_of_upper(self, i: int) -> Simplex:
        return tuple(int(v) for v in self.upper[i])

    def index_of_lower(self, j: int) -> Simplex:
        return tuple(int(v) for v in self.lower[j])


def assemble(cx: WeightedComplex, k: int) -> DegreeOperatorPair:
    return DegreeOperatorPair(
        degree=k,
        D=cx.coboundary_matrix(k),
        B=boundary_matrix(cx, k),
        lower=cx.table(k),
        upper=cx.table(k + 1),
        m_lower=cx.weights(k),
        m_upper=cx.weights(k + 1),
    )


def chain_defects(cx: WeightedComplex) -> dict[int, int]:
    """Max absolute entry of the integer product ``D_{k+1} D_k`` for every k."""
    lo = -1 if cx.include_empty else 0
    out = {}
    for k in range(lo, cx.dim - 1):
        prod = cx.coboundary_matrix(k + 1) @ cx.coboundary_matrix(k)
        prod.eliminate_zeros()
        out[k] = int(abs(prod).max()) if prod.nnz else 0
    return out


def _write_coo(path: Path, mat: sp.spmatrix, fmt: str) -> None:
    coo = mat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"% {mat.shape[0]} {mat.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:{fmt}}\n")


def export_coo(pair: DegreeOperatorPair, prefix: str | Path) -> list[Path]:
    """Write ``D`` and ``B`` as ``row col value`` text plus a JSON row/column index."""
    prefix = Path(prefix)
    paths = [prefix.with_suffix(".D.coo"), prefix.with_suffix(".B.coo"), prefix.with_suffix(".index.json")]
    _write_coo(paths[0], pair.D, "d")
    _write_coo(paths[1], pair.B, ".17g")
    index = {
        "degree": pair.degree,
        "D_rows": pair.upper.tolist(),
        "D_cols": pair.lower.tolist(),
        "B_rows": pair.lower.tolist(),
        "B_cols": pair.upper.tolist(),
    }
    paths[2].write_text(json.dumps(index) + "\n")
    return paths


def load_coo(path: str | Path) -> sp.coo_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        shape = (int(header[1]), int(header[2]))
        data = np.loadtxt(fh, ndmin=2) if shape[0] and shape[1] else np.empty((0, 3))
    if len(data) == 0:
        return sp.coo_matrix(shape)
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)


def graded_apply(parts: Iterable[Cochain]) -> dict[int, Cochain]:
    """Apply ``delta + d`` to a graded cochain, collecting the result by degree."""
    out: dict[int, Cochain] = {}
    for p in parts:
        pieces = [coboundary(p)]
        if p.degree >= 1 or (p.degree == 0 and p.complex.include_empty):
            pieces.append(boundary(p))
        for q in pieces:
            if q.degree in out:
                out[q.degree] = Cochain(q.complex, q.degree, out[q.degree].values + q.values)
            else:
                out[q.degree] = Cochain(q.complex, q.degree, q.values.copy())
    return out
