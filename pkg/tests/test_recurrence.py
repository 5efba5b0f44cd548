from __future__ import annotations

import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from linkhodge.generators import ComplexGenerator
from linkhodge.recurrence import (
    ClassificationPolicy,
    GraphExhaustion,
    GraphLevel,
    classify,
    cutoff_energy,
    effective_resistance,
    lattice_exhaustion,
    link_exhaustion,
    solve_monopole,
    tree_exhaustion,
)


def tree_resistance_oracle(branching: int, depth: int) -> Fraction:
    """Series-parallel reduction: each child edge in series with its subtree, children in parallel."""
    r = Fraction(0)
    for _ in range(depth):
        r = (1 + r) / branching
    return r


def dense_lattice_resistance(d: int, n: int) -> float:
    """Dirichlet solve built from scratch on the ball ``|x| <= n``.

    Unknowns are ball points with all ``2d`` neighbours in the ball; the other
    ball points are held at potential 0.
    """
    ball = {p for p in itertools.product(range(-n, n + 1), repeat=d) if sum(x * x for x in p) <= n * n}

    def neighbours(p):
        for axis in range(d):
            for step in (-1, 1):
                q = list(p)
                q[axis] += step
                yield tuple(q)

    inside = sorted(p for p in ball if all(q in ball for q in neighbours(p)))
    pos = {p: i for i, p in enumerate(inside)}
    L = np.zeros((len(inside), len(inside)))
    for p, i in pos.items():
        for q in neighbours(p):
            L[i, i] += 1.0
            if q in pos:
                L[i, pos[q]] -= 1.0
    root = pos[(0,) * d]
    others = [i for i in range(len(inside)) if i != root]
    h = np.zeros(len(inside))
    h[root] = 1.0
    h[others] = np.linalg.solve(L[np.ix_(others, others)], -L[others, root])
    return 1.0 / float(L[root] @ h)


@pytest.mark.parametrize("depth", [1, 2, 5, 8])
def test_full_tree_matches_series_parallel(depth):
    sol = effective_resistance(tree_exhaustion(2).level(depth))
    assert sol.resistance == pytest.approx(float(tree_resistance_oracle(2, depth)), rel=1e-10)


@pytest.mark.parametrize("branching", [2, 3])
def test_lumped_tree_matches_series_parallel(branching):
    for depth in (3, 10, 30):
        sol = effective_resistance(tree_exhaustion(branching, lumped=True).level(depth))
        assert sol.resistance == pytest.approx(float(tree_resistance_oracle(branching, depth)), rel=1e-10)


def test_lumped_and_full_tree_agree():
    for depth in (2, 4, 7):
        full = effective_resistance(tree_exhaustion(3).level(depth))
        lumped = effective_resistance(tree_exhaustion(3, lumped=True).level(depth))
        assert full.resistance == pytest.approx(lumped.resistance, rel=1e-10)


def test_integer_line_resistance_is_half_level():
    exh = lattice_exhaustion(1)
    for n in (1, 2, 7, 40):
        assert effective_resistance(exh.level(n)).resistance == pytest.approx(n / 2, rel=1e-10)


@pytest.mark.parametrize("d,n", [(2, 4), (2, 7), (3, 3)])
def test_lattice_matches_dense_oracle(d, n):
    sol = effective_resistance(lattice_exhaustion(d).level(n))
    assert sol.resistance == pytest.approx(dense_lattice_resistance(d, n), rel=1e-9)


def test_capacity_is_reciprocal_resistance():
    for exh, n in [(lattice_exhaustion(2), 9), (tree_exhaustion(2), 6)]:
        sol = effective_resistance(exh.level(n))
        assert sol.capacity == pytest.approx(1.0 / sol.resistance, rel=1e-9)
        assert cutoff_energy(exh.level(n)) == pytest.approx(sol.capacity, rel=1e-12)


def test_resistance_nondecreasing_in_level():
    exh = lattice_exhaustion(2)
    R = [effective_resistance(exh.level(n)).resistance for n in range(1, 15)]
    assert all(b >= a - 1e-12 for a, b in zip(R, R[1:]))


def _random_level(seed: int, n: int) -> GraphLevel:
    rng = np.random.default_rng(seed)
    dense = np.triu(rng.random((n, n)) < 0.5, 1) * 10 ** rng.uniform(-2, 2, (n, n))
    dense = dense + dense.T
    ground = np.where(rng.random(n) < 0.4, 10 ** rng.uniform(-2, 2, n), 0.0)
    ground[-1] = max(ground[-1], 1.0)
    return GraphLevel(0, np.arange(n), sp.csr_matrix(dense), ground, np.ones(n), 0)


def _dense_resistance(level: GraphLevel) -> float:
    A = level.operator().toarray()
    # on a grounded component the resistance is the root diagonal entry of the inverse grounded Laplacian
    lab = level.component_labels()[1]
    keep = np.flatnonzero(lab == lab[level.root])
    Ak = A[np.ix_(keep, keep)]
    lost = level.conductance.toarray()[keep].sum(axis=1) - level.conductance.toarray()[np.ix_(keep, keep)].sum(axis=1)
    assert np.allclose(lost, 0)
    if level.ground[keep].sum() == 0:
        return math.inf
    r = int(np.flatnonzero(keep == level.root)[0])
    return float(np.linalg.inv(Ak)[r, r])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_resistance_matches_green_function(seed, n):
    lvl = _random_level(seed, n)
    assert effective_resistance(lvl).resistance == pytest.approx(_dense_resistance(lvl), rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.floats(1.0, 100.0))
def test_rayleigh_monotonicity(seed, n, factor):
    lvl = _random_level(seed, n)
    R0 = effective_resistance(lvl).resistance
    boosted = GraphLevel(0, lvl.vertices, lvl.conductance * factor, lvl.ground, lvl.measure, 0)
    assert effective_resistance(boosted).resistance <= R0 * (1 + 1e-9)
    grounded = GraphLevel(0, lvl.vertices, lvl.conductance, lvl.ground + 1.0, lvl.measure, 0)
    assert effective_resistance(grounded).resistance <= R0 * (1 + 1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.floats(1e-3, 1e3))
def test_resistance_scaling(seed, n, c):
    lvl = _random_level(seed, n)
    R = effective_resistance(lvl).resistance
    Rc = effective_resistance(lvl.scaled(c)).resistance
    if math.isinf(R):
        assert math.isinf(Rc)
    else:
        assert Rc == pytest.approx(R / c, rel=1e-8)


def test_monopole_single_vertex():
    lvl = GraphLevel(0, np.array([0]), sp.csr_matrix((1, 1)), np.array([1.0]), np.array([1.0]), 0)
    sol = solve_monopole(lvl)
    assert sol.u[0] == pytest.approx(1.0)
    assert sol.energy == pytest.approx(1.0)


def test_monopole_energy_equals_root_value():
    # Q(u) = <A u, u> = m(root) u(root) for the grounded monopole
    lvl = _random_level(5, 9)
    sol = solve_monopole(lvl)
    r = int(np.flatnonzero(sol.vertices == lvl.root_id)[0])
    assert sol.energy == pytest.approx(lvl.measure[lvl.root] * sol.u[r], rel=1e-9)
    assert sol.residual < 1e-8


def test_monopole_energy_bounded_on_tree_and_growing_on_line():
    tree = [solve_monopole(tree_exhaustion(2).level(n)).energy for n in (4, 8, 12)]
    assert max(tree) < 1.0
    line = [solve_monopole(lattice_exhaustion(1).level(n)).energy for n in (10, 20, 40)]
    assert line == pytest.approx([5.0, 10.0, 20.0], rel=1e-9)


def test_ungrounded_monopole_is_compatible():
    C = sp.csr_matrix(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float))
    lvl = GraphLevel(0, np.arange(3), C, np.zeros(3), np.ones(3), 0)
    sol = solve_monopole(lvl)
    assert not sol.grounded
    assert sol.residual < 1e-10
    assert math.isinf(effective_resistance(lvl).resistance)


def test_classify_line_recurrent():
    report = classify(lattice_exhaustion(1), 256)
    assert report.verdict == "Recurrent"
    assert all(abs(c * n - 2) <= 1e-10 for n, c in zip(report.components[0].levels, report.capacity_seq))


def test_classify_tree_transient():
    report = classify(tree_exhaustion(2, lumped=True), 30)
    assert report.verdict == "Transient"
    assert report.analytic == "Transient"


def test_classify_plane_is_not_transient():
    report = classify(lattice_exhaustion(2), 30)
    assert report.verdict in ("Undetermined", "Recurrent")


def test_classify_octahedron_link_recurrent():
    exh = link_exhaustion(ComplexGenerator("octahedron"), (0,))
    report = classify(exh, [0])
    assert report.verdict == "Recurrent"
    assert report.resistance_seq == [math.inf]
    assert json.loads(report.dumps())["components"][0]["resistance_seq"] == ["inf"]


def test_classify_star_link_recurrent():
    report = classify(link_exhaustion(ComplexGenerator("star_link"), "apex"), 12)
    assert report.verdict == "Recurrent"


def test_per_component_roots_are_smallest_ids():
    C = sp.csr_matrix(np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float))

    def build(n):
        return GraphLevel(n, np.array([3, 5, 8, 9]), C, np.array([0, 1.0, 0, 1.0]), np.ones(4), 0)

    report = classify(GraphExhaustion("two", build, 5), [1, 2, 3], monopole=False)
    assert [c.root for c in report.components] == [5, 8]


def test_report_csv_has_header():
    report = classify(tree_exhaustion(2, lumped=True), 8, monopole=False)
    lines = report.to_csv().splitlines()
    assert lines[0] == "component_root,level,R_n,cap_n,Q_u_n"
    assert len(lines) == 9


def test_policy_thresholds_are_respected():
    strict = ClassificationPolicy(capacity_threshold=1e-6)
    report = classify(lattice_exhaustion(1), 40, strict, monopole=False)
    assert report.verdict == "Undetermined"
