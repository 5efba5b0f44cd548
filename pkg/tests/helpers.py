from __future__ import annotations

import itertools

import numpy as np
from hypothesis import strategies as st

from linkhodge.complex import ComplexBuilder, WeightedComplex


def random_complex(seed: int, n_vertices: int = 7, n_top: int = 6, max_dim: int = 3,
                   include_empty: bool = False, log_span: float = 0.0) -> WeightedComplex:
    """Face closure of random simplices; weights log-uniform over ``10**(+-log_span/2)``."""
    rng = np.random.default_rng(seed)
    b = ComplexBuilder(include_empty=include_empty, empty_weight=float(10 ** rng.uniform(-log_span / 2, log_span / 2)))
    for _ in range(n_top):
        k = int(rng.integers(0, max_dim + 1))
        verts = rng.choice(n_vertices, size=min(k + 1, n_vertices), replace=False)
        b.insert_closed(verts, lambda s: float(10 ** rng.uniform(-log_span / 2, log_span / 2)))
    return b.build()


@st.composite
def complexes(draw, include_empty=None, log_span: float = 6.0, max_dim: int = 3):
    seed = draw(st.integers(0, 2**32 - 1))
    n_vertices = draw(st.integers(2, 8))
    n_top = draw(st.integers(1, 8))
    empty = draw(st.booleans()) if include_empty is None else include_empty
    return random_complex(seed, n_vertices, n_top, max_dim, empty, log_span)


def brute_sign(tau, sigma) -> int:
    """Sign from the parity of the permutation sorting (missing vertex, tau)."""
    missing = [v for v in sigma if v not in tau]
    assert len(missing) == 1
    perm = missing + list(tau)
    inversions = sum(1 for i, j in itertools.combinations(range(len(perm)), 2) if perm[i] > perm[j])
    return -1 if inversions % 2 else 1


def rank_mod_p(mat: np.ndarray, p: int = 1_000_003) -> int:
    """Rank over GF(p) by dense elimination; equals the rational rank for small integer matrices."""
    a = np.array(mat, dtype=np.int64) % p
    rows, cols = a.shape
    rank = 0
    for c in range(cols):
        piv = next((r for r in range(rank, rows) if a[r, c]), None)
        if piv is None:
            continue
        a[[rank, piv]] = a[[piv, rank]]
        inv = pow(int(a[rank, c]), p - 2, p)
        a[rank] = (a[rank] * inv) % p
        for r in range(rows):
            if r != rank and a[r, c]:
                a[r] = (a[r] - a[r, c] * a[rank]) % p
        rank += 1
    return rank


def weighted_norm(cx: WeightedComplex, k: int, v: np.ndarray) -> float:
    return float(np.sqrt(np.sum(cx.weights(k) * np.abs(v) ** 2)))


# acceptance results by criterion number, printed in the terminal summary
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    print(f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail
