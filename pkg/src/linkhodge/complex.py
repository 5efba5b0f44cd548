"""Weighted simplicial complexes stored as sorted per-dimension vertex tables.

A simplex is a strictly increasing tuple of non-negative vertex ids; the empty
tuple is the (-1)-dimensional simplex. Orientation comes from the global
ordering of vertex ids: dropping the vertex at position ``i`` of ``sigma``
gives a face with sign ``(-1)**i``.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "EMPTY",
    "ComplexBuilder",
    "ComplexError",
    "NotAFaceError",
    "Simplex",
    "Truncation",
    "UnknownSimplexError",
    "WeightedComplex",
    "dim",
    "faces",
    "sign",
    "simplex",
]

Simplex = tuple[int, ...]
EMPTY: Simplex = ()

WeightRule = float | Callable[[Simplex], float]


_TINY = float(np.finfo(np.float64).tiny)


class ComplexError(ValueError):
    """Raised when a complex violates face closure, ordering, or weight positivity."""


class NotAFaceError(ValueError):
    pass


class UnknownSimplexError(KeyError):
    pass


def simplex(vertices: Iterable[int]) -> Simplex:
    """Normalize an iterable of vertex ids to a sorted simplex tuple."""
    s = tuple(sorted(int(v) for v in vertices))
    if any(v < 0 for v in s):
        raise ComplexError(f"negative vertex id in {s}")
    if any(a == b for a, b in zip(s, s[1:])):
        raise ComplexError(f"duplicate vertex in {s}")
    return s


def dim(s: Simplex) -> int:
    return len(s) - 1


def sign(tau: Simplex, sigma: Simplex) -> int:
    """Orientation sign of ``tau`` inside ``sigma`` for a codimension-1 face.

    Returns ``(-1)**i`` where ``i`` is the position of the missing vertex in
    ``sigma``.

    >>> sign((1, 3), (1, 2, 3))
    -1
    >>> sign((), (7,))
    1
    """
    if len(sigma) != len(tau) + 1:
        raise NotAFaceError(f"{tau} is not a codimension-1 face of {sigma}")
    for i, v in enumerate(sigma):
        if i == len(tau) or tau[i] != v:
            if tau != sigma[:i] + sigma[i + 1:]:
                raise NotAFaceError(f"{tau} is not a face of {sigma}")
            return -1 if i % 2 else 1
    raise NotAFaceError(f"{tau} is not a face of {sigma}")  # pragma: no cover


def faces(sigma: Simplex, include_empty: bool = False) -> list[Simplex]:
    """Codimension-1 faces of ``sigma``, ordered by the position of the dropped vertex."""
    if len(sigma) == 0:
        return []
    if len(sigma) == 1:
        return [EMPTY] if include_empty else []
    return [sigma[:i] + sigma[i + 1:] for i in range(len(sigma))]


def _lexsort_rows(rows: np.ndarray) -> np.ndarray:
    if rows.shape[0] == 0 or rows.shape[1] == 0:
        return np.arange(rows.shape[0])
    return np.lexsort(rows.T[::-1])


class WeightedComplex:
    """Finite, face-closed, positively weighted simplicial complex.

    Simplices of dimension ``k`` live in a lexicographically sorted integer table
    ``cells[k]`` of shape ``(N_k, k + 1)``. The empty simplex is present only when
    ``include_empty`` is set, with weight ``empty_weight``.

    Instances are immutable; operators are assembled lazily and cached.

    ``interior`` optionally marks, per dimension, the simplices whose coface set
    is complete (relevant when the complex is a truncation of an infinite one).
    ``far_mass`` records the known total weight of absent cofaces for simplices
    that are not interior but whose missing mass is known exactly.
    """

    def __init__(
        self,
        cells: Mapping[int, np.ndarray],
        weights: Mapping[int, np.ndarray],
        *,
        include_empty: bool = False,
        empty_weight: float = 1.0,
        interior: Mapping[int, np.ndarray] | None = None,
        far_mass: Mapping[Simplex, float] | None = None,
        validate: bool = True,
    ) -> None:
        self.include_empty = bool(include_empty)
        self.empty_weight = float(empty_weight)
        self._cells: dict[int, np.ndarray] = {}
        self._weights: dict[int, np.ndarray] = {}
        self._interior: dict[int, np.ndarray] = {}
        top = max((k for k, c in cells.items() if len(c)), default=-1)
        for k in range(top + 1):
            rows = np.asarray(cells.get(k, np.empty((0, k + 1))), dtype=np.int64).reshape(-1, k + 1)
            w = np.asarray(weights.get(k, np.empty(0)), dtype=np.float64).reshape(-1)
            if len(w) != len(rows):
                raise ComplexError(f"dimension {k}: {len(rows)} simplices but {len(w)} weights")
            order = _lexsort_rows(rows)
            self._cells[k] = np.ascontiguousarray(rows[order])
            self._weights[k] = w[order]
            if interior is not None and k in interior:
                self._interior[k] = np.asarray(interior[k], dtype=bool)[order]
            else:
                self._interior[k] = np.ones(len(rows), dtype=bool)
            # always checked: a zero or subnormal weight makes the boundary operator overflow
            if not np.all((w >= _TINY) & np.isfinite(w)):
                raise ComplexError(f"dimension {k}: weights must be finite and at least {_TINY:.3g}")
            self._cells[k].setflags(write=False)
            self._weights[k].setflags(write=False)
        self._empty_interior = True
        if interior is not None and -1 in interior:
            self._empty_interior = bool(np.asarray(interior[-1]).reshape(-1)[0])
        self.far_mass: dict[Simplex, float] = dict(far_mass or {})
        self.dim = top
        self._nvert = int(self._cells[0][:, 0].max()) + 1 if top >= 0 and len(self._cells[0]) else 1
        self._keys: dict[int, np.ndarray] = {}
        self._cob: dict[int, sp.csr_matrix] = {}
        self._cob_csc: dict[int, sp.csc_matrix] = {}
        if validate:
            self.validate()

    # construction -------------------------------------------------------

    @classmethod
    def from_simplices(
        cls,
        weighted: Mapping[Simplex, float] | Iterable[tuple[Simplex, float]],
        *,
        include_empty: bool = False,
        empty_weight: float = 1.0,
        validate: bool = True,
    ) -> WeightedComplex:
        items = weighted.items() if isinstance(weighted, Mapping) else weighted
        by_dim: dict[int, list[Simplex]] = {}
        w_dim: dict[int, list[float]] = {}
        for s, w in items:
            s = tuple(int(v) for v in s)
            if len(s) == 0:
                include_empty = True
                empty_weight = float(w)
                continue
            by_dim.setdefault(len(s) - 1, []).append(s)
            w_dim.setdefault(len(s) - 1, []).append(float(w))
        cells = {k: np.array(v, dtype=np.int64).reshape(-1, k + 1) for k, v in by_dim.items()}
        weights = {k: np.array(v, dtype=np.float64) for k, v in w_dim.items()}
        return cls(cells, weights, include_empty=include_empty, empty_weight=empty_weight, validate=validate)

    def validate(self) -> None:
        """Check ordering, uniqueness, positivity and face closure; raise ComplexError."""
        if self.include_empty and not self.empty_weight > 0:
            raise ComplexError("empty simplex weight must be positive")
        for k in range(self.dim + 1):
            rows = self._cells[k]
            if len(rows) == 0:
                continue
            if np.any(rows < 0):
                raise ComplexError(f"negative vertex id in dimension {k}")
            if k > 0 and np.any(np.diff(rows, axis=1) <= 0):
                bad = rows[np.any(np.diff(rows, axis=1) <= 0, axis=1)][0]
                raise ComplexError(f"simplex {tuple(bad)} is not strictly sorted")
            if np.any(np.all(rows[1:] == rows[:-1], axis=1)):
                raise ComplexError(f"duplicate simplices in dimension {k}")
            if k > 0:
                for i in range(k + 1):
                    face = np.delete(rows, i, axis=1)
                    missing = self.lookup(k - 1, face) < 0
                    if np.any(missing):
                        s = tuple(int(v) for v in rows[np.argmax(missing)])
                        raise ComplexError(f"face closure violated: face of {s} missing")

    # indexing -----------------------------------------------------------

    def count(self, k: int) -> int:
        if k == -1:
            return 1 if self.include_empty else 0
        return len(self._cells[k]) if 0 <= k <= self.dim else 0

    def __len__(self) -> int:
        return sum(self.count(k) for k in range(-1, self.dim + 1))

    def table(self, k: int) -> np.ndarray:
        """Sorted vertex table of the ``k``-simplices, shape ``(N_k, k + 1)``."""
        if k == -1:
            return np.empty((self.count(-1), 0), dtype=np.int64)
        if 0 <= k <= self.dim:
            return self._cells[k]
        return np.empty((0, k + 1), dtype=np.int64)

    def weights(self, k: int) -> np.ndarray:
        if k == -1:
            return np.full(self.count(-1), self.empty_weight)
        if 0 <= k <= self.dim:
            return self._weights[k]
        return np.empty(0)

    def interior_mask(self, k: int) -> np.ndarray:
        if k == -1:
            return np.full(self.count(-1), self._empty_interior)
        if 0 <= k <= self.dim:
            return self._interior[k]
        return np.empty(0, dtype=bool)

    def simplices(self, k: int) -> list[Simplex]:
        return [tuple(int(v) for v in r) for r in self.table(k)]

    def __iter__(self) -> Iterator[Simplex]:
        for k in range(-1, self.dim + 1):
            yield from self.simplices(k)

    def _key_table(self, k: int) -> np.ndarray:
        if k not in self._keys:
            rows = self._cells[k]
            if k == 0:
                keys = rows[:, 0].copy()
            else:
                if self.count(k - 1) * self._nvert >= 2**62:
                    raise ComplexError("complex too large for 64-bit simplex keys")
                prefix = self.lookup(k - 1, rows[:, :-1])
                keys = prefix * self._nvert + rows[:, -1]
            self._keys[k] = keys
        return self._keys[k]

    def lookup(self, k: int, rows: np.ndarray) -> np.ndarray:
        """Vectorized index lookup; returns -1 for rows that are not ``k``-simplices."""
        rows = np.asarray(rows, dtype=np.int64)
        if k == -1:
            n = rows.shape[0] if rows.ndim == 2 else 1
            return np.zeros(n, dtype=np.int64) if self.include_empty else np.full(n, -1, dtype=np.int64)
        rows = rows.reshape(-1, k + 1)
        if not 0 <= k <= self.dim or len(rows) == 0 or self.count(k) == 0:
            return np.full(len(rows), -1, dtype=np.int64)
        if k == 0:
            q = rows[:, 0]
        else:
            prefix = self.lookup(k - 1, rows[:, :-1])
            last = rows[:, -1]
            q = np.where((prefix >= 0) & (last >= 0) & (last < self._nvert), prefix * self._nvert + last, -1)
        keys = self._key_table(k)
        pos = np.searchsorted(keys, q)
        pos_c = np.minimum(pos, len(keys) - 1)
        found = (pos < len(keys)) & (keys[pos_c] == q) & (q >= 0)
        return np.where(found, pos_c, -1).astype(np.int64)

    def index(self, s: Simplex) -> int:
        i = int(self.lookup(len(s) - 1, np.array([s], dtype=np.int64).reshape(1, len(s)))[0])
        if i < 0:
            raise UnknownSimplexError(s)
        return i

    def __contains__(self, s: object) -> bool:
        if not isinstance(s, tuple):
            return False
        if len(s) == 0:
            return self.include_empty
        return self.lookup(len(s) - 1, np.array([s], dtype=np.int64))[0] >= 0

    def weight(self, s: Simplex) -> float:
        return float(self.weights(len(s) - 1)[self.index(s)])

    def is_interior(self, s: Simplex) -> bool:
        return bool(self.interior_mask(len(s) - 1)[self.index(s)])

    # incidence ----------------------------------------------------------

    def coboundary_matrix(self, k: int) -> sp.csr_matrix:
        """Integer matrix of the coboundary from degree ``k`` to ``k + 1``.

        Shape ``(N_{k+1}, N_k)``; entry ``(s, t)`` is ``sign(t, s)`` when ``t`` is a
        face of ``s``.
        """
        if k not in self._cob:
            n_out, n_in = self.count(k + 1), self.count(k)
            if n_out == 0 or n_in == 0:
                mat = sp.csr_matrix((n_out, n_in), dtype=np.int64)
            elif k == -1:
                mat = sp.csr_matrix(np.ones((n_out, 1), dtype=np.int64))
            else:
                rows = self._cells[k + 1]
                r_idx, c_idx, vals = [], [], []
                for i in range(k + 2):
                    cols = self.lookup(k, np.delete(rows, i, axis=1))
                    r_idx.append(np.arange(n_out))
                    c_idx.append(cols)
                    vals.append(np.full(n_out, -1 if i % 2 else 1, dtype=np.int64))
                mat = sp.csr_matrix(
                    (np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))),
                    shape=(n_out, n_in),
                )
                mat.sort_indices()
            self._cob[k] = mat
        return self._cob[k]

    def _cob_by_column(self, k: int) -> sp.csc_matrix:
        if k not in self._cob_csc:
            self._cob_csc[k] = self.coboundary_matrix(k).tocsc()
        return self._cob_csc[k]

    def coface_indices(self, k: int, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices of the (k+1)-cofaces of the ``i``-th k-simplex and their signs."""
        csc = self._cob_by_column(k)
        lo, hi = csc.indptr[i], csc.indptr[i + 1]
        return csc.indices[lo:hi].astype(np.int64), csc.data[lo:hi]

    def cofaces(self, tau: Simplex) -> list[tuple[Simplex, float]]:
        k = len(tau) - 1
        idx, _ = self.coface_indices(k, self.index(tau))
        rows = self.table(k + 1)[idx]
        w = self.weights(k + 1)[idx]
        return [(tuple(int(v) for v in r), float(x)) for r, x in zip(rows, w)]

    def coface_mass(self, tau: Simplex) -> float:
        """Total weight of the cofaces of ``tau`` present in this complex."""
        k = len(tau) - 1
        idx, _ = self.coface_indices(k, self.index(tau))
        return float(self.weights(k + 1)[idx].sum())

    def faces_of(self, sigma: Simplex) -> list[Simplex]:
        return faces(sigma, include_empty=self.include_empty)

    # derived complexes --------------------------------------------------

    def reweighted(self, rule: Callable[[int, np.ndarray, np.ndarray], np.ndarray], empty_weight: float | None = None) -> WeightedComplex:
        """New complex with weights ``rule(k, table, weights)`` per dimension."""
        return WeightedComplex(
            self._cells,
            {k: rule(k, self._cells[k], self._weights[k]) for k in self._cells},
            include_empty=self.include_empty,
            empty_weight=self.empty_weight if empty_weight is None else empty_weight,
            interior=self._interior,
            far_mass=self.far_mass,
        )

    def scaled(self, c: float) -> WeightedComplex:
        return self.reweighted(lambda k, t, w: w * c, empty_weight=self.empty_weight * c)

    def to_dict(self) -> dict[Simplex, float]:
        out: dict[Simplex, float] = {}
        if self.include_empty:
            out[EMPTY] = self.empty_weight
        for k in range(self.dim + 1):
            for r, w in zip(self._cells[k], self._weights[k]):
                out[tuple(int(v) for v in r)] = float(w)
        return out

    def f_vector(self) -> list[int]:
        return [self.count(k) for k in range(self.dim + 1)]

    def __repr__(self) -> str:
        return f"WeightedComplex(f={self.f_vector()}, include_empty={self.include_empty})"


class ComplexBuilder:
    """Mutable, single-writer builder; ``build()`` freezes into a WeightedComplex."""

    def __init__(self, include_empty: bool = False, empty_weight: float = 1.0) -> None:
        self.include_empty = include_empty
        self.empty_weight = empty_weight
        self._w: dict[Simplex, float] = {}

    def __len__(self) -> int:
        return len(self._w) + (1 if self.include_empty else 0)

    def __contains__(self, s: Simplex) -> bool:
        return s in self._w or (s == EMPTY and self.include_empty)

    def insert_closed(self, sigma: Iterable[int], weight_rule: WeightRule = 1.0) -> ComplexBuilder:
        """Insert ``sigma`` with all missing faces; existing weights are kept."""
        s = simplex(sigma)
        rule = weight_rule if callable(weight_rule) else (lambda _s, c=float(weight_rule): c)
        for r in range(len(s), 0, -1):
            for face in itertools.combinations(s, r):
                if face in self._w:
                    continue
                w = float(rule(face))
                if not w > 0:
                    raise ComplexError(f"non-positive weight {w} for {face}")
                self._w[face] = w
        return self

    def build(self) -> WeightedComplex:
        return WeightedComplex.from_simplices(
            self._w, include_empty=self.include_empty, empty_weight=self.empty_weight
        )


@dataclass
class Truncation:
    """Finite level of an infinite complex produced by a generator."""

    complex: WeightedComplex
    level: int
    family: str
    params: dict = field(default_factory=dict)
    named: dict[str, Simplex] = field(default_factory=dict)

    def simplex(self, name_or_simplex: str | Simplex) -> Simplex:
        """Resolve a name such as ``apex``, a vertex list ``"0,3"``, or ``"empty"``."""
        if not isinstance(name_or_simplex, str):
            return tuple(int(v) for v in name_or_simplex)
        if name_or_simplex in self.named:
            return self.named[name_or_simplex]
        text = name_or_simplex.strip()
        if text in ("", "empty", "()"):
            return EMPTY
        try:
            return simplex(int(x) for x in text.strip("()[]").split(",") if x.strip())
        except ValueError:
            raise UnknownSimplexError(name_or_simplex) from None

    def interior(self, k: int) -> list[Simplex]:
        t = self.complex.table(k)[self.complex.interior_mask(k)]
        return [tuple(int(v) for v in r) for r in t]
