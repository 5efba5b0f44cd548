"""Hodge Laplacians, weak Hodge decomposition, Betti numbers and spectra on finite complexes.

The up Laplacian on degree ``k`` is ``d delta`` and the down Laplacian is
``delta d``; both are self-adjoint for the weighted inner product, so
eigenproblems are solved for the symmetrized ``M^{1/2} Delta M^{-1/2}``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .complex import Simplex, Truncation, WeightedComplex
from .operators import Cochain, DegreeUnderflowError, boundary, boundary_matrix, coboundary, inner

__all__ = [
    "BettiMismatchError",
    "EigenformReport",
    "HodgeSplit",
    "Spectrum",
    "betti",
    "betti_numbers",
    "exact_rank",
    "harmonic_eigenform_check",
    "hodge_decompose",
    "laplacian_apply",
    "laplacian_matrix",
    "spectrum",
    "summability_profile",
    "supersymmetry_gap",
]

TAGS = ("up", "down", "hodge")
DENSE_LIMIT = 2000
KERNEL_THRESHOLD = 1e-8


class BettiMismatchError(RuntimeError):
    """Exact rank and numerical kernel dimension disagree."""


def _cx(obj: WeightedComplex | Truncation) -> WeightedComplex:
    return obj.complex if isinstance(obj, Truncation) else obj


def _lowest(cx: WeightedComplex) -> int:
    return -1 if cx.include_empty else 0


def _check_degree(cx: WeightedComplex, k: int) -> None:
    if not _lowest(cx) <= k <= cx.dim:
        raise ValueError(f"degree {k} outside {_lowest(cx)}..{cx.dim}")


def laplacian_matrix(cx: WeightedComplex | Truncation, tag: str, k: int) -> sp.csr_matrix:
    """Matrix of the ``tag`` Laplacian on degree ``k`` (acting on value vectors)."""
    cx = _cx(cx)
    _check_degree(cx, k)
    n = cx.count(k)
    out = sp.csr_matrix((n, n))
    if tag not in TAGS:
        raise ValueError(f"tag must be one of {TAGS}")
    if tag in ("up", "hodge") and k < cx.dim:
        out = out + boundary_matrix(cx, k) @ cx.coboundary_matrix(k).astype(np.float64)
    if tag in ("down", "hodge") and k > _lowest(cx):
        out = out + cx.coboundary_matrix(k - 1).astype(np.float64) @ boundary_matrix(cx, k - 1)
    return sp.csr_matrix(out)


def symmetrized(cx: WeightedComplex | Truncation, tag: str, k: int) -> sp.csr_matrix:
    cx = _cx(cx)
    s = np.sqrt(cx.weights(k))
    L = sp.diags(s) @ laplacian_matrix(cx, tag, k) @ sp.diags(1.0 / s)
    return sp.csr_matrix(0.5 * (L + L.T))


def laplacian_apply(tag: str, f: Cochain) -> Cochain:
    """``up = d delta f``, ``down = delta d f``, ``hodge`` their sum; degree is preserved."""
    cx, k = f.complex, f.degree
    _check_degree(cx, k)
    if tag not in TAGS:
        raise ValueError(f"tag must be one of {TAGS}")
    out = np.zeros_like(f.values, dtype=np.result_type(f.values, np.float64))
    if tag in ("up", "hodge") and k < cx.dim:
        out = out + boundary(coboundary(f)).values
    if tag in ("down", "hodge") and k > _lowest(cx):
        try:
            out = out + coboundary(boundary(f)).values
        except DegreeUnderflowError:
            pass
    return Cochain(cx, k, out)


# decomposition ---------------------------------------------------------------


@dataclass
class HodgeSplit:
    degree: int
    harmonic: Cochain
    exact: Cochain
    coexact: Cochain
    orthogonality: float
    reconstruction: float
    harmonic_residual: float

    def norms(self) -> dict[str, float]:
        return {"harmonic": self.harmonic.norm(), "exact": self.exact.norm(), "coexact": self.coexact.norm()}


def _weighted_lstsq(A: sp.spmatrix, w_rows: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Minimize ``|| sqrt(w) (A x - rhs) ||``."""
    s = np.sqrt(w_rows)
    As = sp.diags(s) @ A
    bs = s * rhs
    if max(A.shape) <= DENSE_LIMIT:
        return np.linalg.lstsq(As.toarray(), bs, rcond=None)[0]
    parts = []
    for part in (bs.real, bs.imag) if np.iscomplexobj(bs) else (bs,):
        parts.append(spla.lsqr(As, part, atol=1e-15, btol=1e-15, iter_lim=20 * max(A.shape))[0])
    return parts[0] + 1j * parts[1] if len(parts) == 2 else parts[0]


def hodge_decompose(f: Cochain) -> HodgeSplit:
    """Orthogonal split of ``f`` into harmonic, exact (range of delta) and coexact (range of d) parts."""
    cx, k = f.complex, f.degree
    _check_degree(cx, k)
    vals = f.values.astype(np.result_type(f.values, np.float64))
    wk = cx.weights(k)
    exact = np.zeros_like(vals)
    coexact = np.zeros_like(vals)
    if k > _lowest(cx) and cx.count(k - 1):
        D = cx.coboundary_matrix(k - 1).astype(np.float64)
        exact = D @ _weighted_lstsq(D, wk, vals)
    if k < cx.dim and cx.count(k + 1):
        B = boundary_matrix(cx, k)
        coexact = B @ _weighted_lstsq(B, wk, vals)
    harmonic = vals - exact - coexact
    parts = [Cochain(cx, k, x) for x in (harmonic, exact, coexact)]
    scale = max(f.norm(), 1e-300)
    ortho = max(abs(inner(parts[i], parts[j])) for i, j in ((0, 1), (0, 2), (1, 2))) / scale**2
    recon = float(np.sqrt(np.sum(wk * np.abs(vals - harmonic - exact - coexact) ** 2))) / scale
    hres = laplacian_apply("hodge", parts[0]).norm() / scale
    return HodgeSplit(k, parts[0], parts[1], parts[2], float(ortho), recon, float(hres))


# Betti numbers ---------------------------------------------------------------


def exact_rank(mat: sp.spmatrix) -> int:
    """Rank over the rationals by sparse Gaussian elimination with exact fractions."""
    coo = sp.coo_matrix(mat)
    rows: dict[int, dict[int, Fraction]] = {}
    for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
        val = Fraction(int(v)) if float(v).is_integer() else Fraction(float(v))
        row = rows.setdefault(r, {})
        row[c] = row.get(c, Fraction(0)) + val
    pivots: dict[int, dict[int, Fraction]] = {}
    rank = 0
    for r in sorted(rows):
        row = {c: v for c, v in rows[r].items() if v}
        while row:
            c = min(row)
            piv = pivots.get(c)
            if piv is None:
                pivots[c] = row
                rank += 1
                break
            factor = row[c] / piv[c]
            for cc, pv in piv.items():
                nv = row.get(cc, Fraction(0)) - factor * pv
                if nv:
                    row[cc] = nv
                else:
                    row.pop(cc, None)
    return rank


def _numeric_kernel_dim(cx: WeightedComplex, k: int) -> int:
    if cx.count(k) == 0:
        return 0
    ev = spectrum(cx, "hodge", k).eigenvalues
    radius = max(float(np.max(np.abs(ev))), 1e-300)
    return int(np.sum(ev < KERNEL_THRESHOLD * radius))


def betti(cx: WeightedComplex | Truncation, k: int, *, cross_check: bool = True) -> int:
    """``dim ker D_k - rank D_{k-1}`` from exact ranks.

    With ``include_empty`` the complex is augmented by the empty simplex and the
    numbers are the reduced Betti numbers. The harmonic dimension of the Hodge
    Laplacian must agree; a mismatch raises :class:`BettiMismatchError`.
    """
    cx = _cx(cx)
    _check_degree(cx, k)
    n = cx.count(k)
    rank_out = exact_rank(cx.coboundary_matrix(k)) if k < cx.dim else 0
    rank_in = exact_rank(cx.coboundary_matrix(k - 1)) if k > _lowest(cx) else 0
    b = n - rank_out - rank_in
    if cross_check:
        num = _numeric_kernel_dim(cx, k)
        if num != b:
            raise BettiMismatchError(f"degree {k}: exact Betti {b} but numerical kernel dimension {num}")
    return b


def betti_numbers(cx: WeightedComplex | Truncation, *, cross_check: bool = True) -> list[int]:
    cx = _cx(cx)
    return [betti(cx, k, cross_check=cross_check) for k in range(0, cx.dim + 1)]


# spectra ---------------------------------------------------------------------


@dataclass
class Spectrum:
    degree: int
    tag: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    method: str = "dense"
    tolerance: float = 0.0

    def nonzero(self, rel: float = KERNEL_THRESHOLD) -> np.ndarray:
        radius = max(float(np.max(np.abs(self.eigenvalues), initial=0.0)), 1e-300)
        return self.eigenvalues[self.eigenvalues > rel * radius]

    def to_json(self) -> dict:
        return {"degree": self.degree, "tag": self.tag, "method": self.method, "tolerance": self.tolerance,
                "eigenvalues": [float(x) for x in self.eigenvalues]}


def spectrum(cx: WeightedComplex | Truncation, tag: str, k: int, count: int | None = None,
             method: str = "auto", vectors: bool = False, tol: float = 1e-8) -> Spectrum:
    """Ascending eigenvalues of the ``tag`` Laplacian on degree ``k``.

    Dense symmetric eigensolve up to dimension 2000 (or with ``method="dense"``);
    otherwise the ``count`` smallest eigenvalues from shift-invert Lanczos.
    Eigenvectors are returned in the weighted (unsymmetrized) coordinates.
    """
    cx = _cx(cx)
    S = symmetrized(cx, tag, k)
    n = S.shape[0]
    if count is not None and not 0 < count <= n:
        raise ValueError(f"count must lie in 1..{n}")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"
    s_inv = 1.0 / np.sqrt(cx.weights(k))
    if method == "dense":
        if vectors:
            ev, vec = np.linalg.eigh(S.toarray())
            vec = s_inv[:, None] * vec
        else:
            ev, vec = np.linalg.eigvalsh(S.toarray()), None
        if count is not None:
            ev = ev[:count]
            vec = vec[:, :count] if vec is not None else None
        return Spectrum(k, tag, ev, vec, "dense", 0.0)
    if method != "lanczos":
        raise ValueError("method must be auto, dense or lanczos")
    want = count or min(n - 1, 20)
    shift = -1e-6 * max(float(abs(S).sum(axis=1).max()), 1.0)
    ev, vec = spla.eigsh(S, k=want, sigma=shift, which="LM", tol=tol)
    order = np.argsort(ev)
    ev, vec = ev[order], vec[:, order]
    return Spectrum(k, tag, ev, s_inv[:, None] * vec if vectors else None, "lanczos", tol)


def supersymmetry_gap(cx: WeightedComplex | Truncation, k: int) -> float:
    """Largest gap between the nonzero spectra of the up Laplacian on ``k`` and the down Laplacian on ``k + 1``."""
    cx = _cx(cx)
    a = spectrum(cx, "up", k).nonzero()
    b = spectrum(cx, "down", k + 1).nonzero()
    if len(a) != len(b):
        return math.inf
    return float(np.max(np.abs(np.sort(a) - np.sort(b)), initial=0.0))


# harmonic eigenforms -------------------------------------------------------------


@dataclass
class EigenformReport:
    rho: list[int]
    has_coface: bool
    coboundary_norm: float
    up_residual: float | None
    down_residual: float | None
    degenerate: bool = field(default=False)


def harmonic_eigenform_check(cx: WeightedComplex | Truncation, rho: Simplex) -> EigenformReport:
    """Check that ``delta 1_rho`` is killed by the up Laplacian and ``d 1_rho`` by the down Laplacian."""
    cx = _cx(cx)
    rho = tuple(rho)
    k = len(rho) - 1
    ind = Cochain.zeros(cx, k)
    ind.values[0 if k == -1 else cx.index(rho)] = 1.0
    d1 = coboundary(ind)
    nrm = d1.norm()
    has_coface = nrm > 0
    up = laplacian_apply("up", d1).norm() / max(nrm, 1e-300) if has_coface and d1.degree <= cx.dim else None
    down = None
    if k >= 1:
        b1 = boundary(ind)
        down = laplacian_apply("down", b1).norm() / max(b1.norm(), 1e-300)
    return EigenformReport(list(rho), bool(has_coface), float(nrm), up, down, degenerate=not has_coface)


# summability diagnostic ------------------------------------------------------------


def summability_profile(truncations: Sequence[Truncation], k: int) -> list[float]:
    """Per level, the max over interior ``k``-simplices ``tau`` of ``sum_{sigma > tau} sum_{tau' < sigma} m(sigma)^2 / m(tau')``.

    Growth across levels signals that the up Laplacian may fail to map finitely
    supported cochains into square-summable ones.
    """
    out = []
    for t in truncations:
        cx = t.complex
        D = cx.coboundary_matrix(k)
        absD = abs(D).astype(np.float64)
        ms = cx.weights(k + 1)
        inner_sum = ms**2 * (absD @ (1.0 / cx.weights(k)))
        per_tau = absD.T @ inner_sum
        mask = cx.interior_mask(k)
        out.append(float(per_tau[mask].max(initial=0.0)))
    return out
