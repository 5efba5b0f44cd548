"""Recurrence and transience of weighted graphs through grounded exhaustions.

An exhaustion level is a finite set of unknown vertices with symmetric
conductances among them and a ground conductance to everything outside (the
boundary, held at potential zero). From it we get the effective resistance
between the root and the boundary, the minimal cutoff energy (its inverse),
and the grounded monopole ``L u = 1_{v0}``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, cg

from .complex import Simplex
from .generators import ComplexGenerator, lattice_ball
from .links import LinkGraph, TruncationWarning, link_of
from .walks import MCEstimate

__all__ = [
    "ClassificationPolicy",
    "ClassificationReport",
    "ComponentReport",
    "GraphExhaustion",
    "GraphLevel",
    "MonopoleSolution",
    "ResistanceSolution",
    "SolverError",
    "classify",
    "cutoff_energy",
    "effective_resistance",
    "lattice_exhaustion",
    "level_from_link",
    "link_exhaustion",
    "solve_monopole",
    "tree_exhaustion",
]

DEFAULT_TOL = 1e-12


class SolverError(RuntimeError):
    def __init__(self, message: str, iterations: int, condition_estimate: float) -> None:
        super().__init__(f"{message} (iterations={iterations}, condition estimate={condition_estimate:.3g})")
        self.iterations = iterations
        self.condition_estimate = condition_estimate


@dataclass
class GraphLevel:
    """One level of a grounded exhaustion.

    ``vertices`` are the ids of the unknowns (sorted); ``conductance`` is the
    symmetric weight matrix among them; ``ground`` the total conductance from
    each unknown to the boundary; ``measure`` the vertex measure used by the
    monopole equation.
    """

    level: int
    vertices: np.ndarray
    conductance: sp.csr_matrix
    ground: np.ndarray
    measure: np.ndarray
    root: int

    @property
    def size(self) -> int:
        return len(self.vertices)

    @property
    def root_id(self) -> int:
        return int(self.vertices[self.root])

    def operator(self) -> sp.csr_matrix:
        """Grounded Laplacian ``diag(deg + ground) - conductance``."""
        deg = np.asarray(self.conductance.sum(axis=1)).ravel()
        return (sp.diags(deg + self.ground) - self.conductance).tocsr()

    def component_labels(self) -> tuple[int, np.ndarray]:
        adj = self.conductance.copy()
        adj.data = (adj.data > 0).astype(np.int8)
        adj.eliminate_zeros()
        return connected_components(adj, directed=False)

    def restricted(self, keep: np.ndarray) -> GraphLevel:
        keep = np.flatnonzero(keep) if keep.dtype == bool else np.asarray(keep)
        pos = np.full(self.size, -1)
        pos[keep] = np.arange(len(keep))
        if pos[self.root] < 0:
            raise ValueError("restriction drops the root")
        sub = self.conductance[keep][:, keep].tocsr()
        # conductance to dropped vertices becomes ground
        lost = np.asarray(self.conductance[keep].sum(axis=1)).ravel() - np.asarray(sub.sum(axis=1)).ravel()
        return GraphLevel(self.level, self.vertices[keep], sub, self.ground[keep] + lost,
                          self.measure[keep], int(pos[self.root]))

    def root_component(self) -> GraphLevel:
        _, labels = self.component_labels()
        return self.restricted(labels == labels[self.root])

    def with_root(self, vertex_id: int) -> GraphLevel:
        i = int(np.searchsorted(self.vertices, vertex_id))
        if i >= self.size or self.vertices[i] != vertex_id:
            raise KeyError(f"vertex {vertex_id} is not an unknown at level {self.level}")
        return GraphLevel(self.level, self.vertices, self.conductance, self.ground, self.measure, i)

    def scaled(self, c: float) -> GraphLevel:
        return GraphLevel(self.level, self.vertices, self.conductance * c, self.ground * c,
                          self.measure, self.root)


@dataclass
class GraphExhaustion:
    """Nested grounded levels produced by ``build(n)``, rooted at ``root_id``."""

    name: str
    build: Callable[[int], GraphLevel]
    root_id: int = 0
    analytic: str | None = None
    min_level: int = 1

    def level(self, n: int) -> GraphLevel:
        if n < self.min_level:
            raise ValueError(f"{self.name} starts at level {self.min_level}")
        return self.build(n).with_root(self.root_id)

    def rooted_at(self, vertex_id: int) -> GraphExhaustion:
        return GraphExhaustion(self.name, self.build, int(vertex_id), self.analytic, self.min_level)


# exhaustions -------------------------------------------------------------


def _from_edges(level: int, n: int, edges: np.ndarray, weights: np.ndarray, keep: np.ndarray,
                ids: np.ndarray, measure: np.ndarray) -> GraphLevel:
    """Ground every vertex outside ``keep``; conductance to them becomes ground."""
    full = sp.coo_matrix((np.concatenate([weights, weights]),
                          (np.concatenate([edges[:, 0], edges[:, 1]]),
                           np.concatenate([edges[:, 1], edges[:, 0]]))), shape=(n, n)).tocsr()
    k = np.flatnonzero(keep)
    sub = full[k][:, k].tocsr()
    ground = np.asarray(full[k].sum(axis=1)).ravel() - np.asarray(sub.sum(axis=1)).ravel()
    order = np.argsort(ids[k], kind="stable")
    sub = sub[order][:, order].tocsr()
    return GraphLevel(level, ids[k][order], sub, ground[order], measure[k][order], 0)


def lattice_exhaustion(d: int, *, conductance: float = 1.0) -> GraphExhaustion:
    """``Z^d`` exhausted by Euclidean balls; unknowns are points with all neighbours in the ball.

    Vertex ids are ranks in the global stable order, so the origin is vertex 0.
    For ``d = 1`` level ``n`` grounds ``+-n`` and ``R_n = n / 2``.
    """

    def build(n: int) -> GraphLevel:
        pts, e = lattice_ball(d, n)
        deg = np.bincount(e.ravel(), minlength=len(pts))
        keep = deg == 2 * d
        return _from_edges(n, len(pts), e, np.full(len(e), conductance), keep,
                           np.arange(len(pts)), np.ones(len(pts)))

    analytic = "Recurrent" if d <= 2 else "Transient"
    return GraphExhaustion(f"lattice(d={d})", build, 0, analytic)


def tree_exhaustion(branching: int = 2, *, lumped: bool = False, conductance: float = 1.0,
                    measure_ratio: float = 1.0) -> GraphExhaustion:
    """Rooted ``branching``-ary tree; level ``n`` keeps depths below ``n`` and grounds depth ``n``.

    With unit conductances and branching 2 the resistance is ``1 - 2**-n``.
    ``lumped`` replaces each depth layer by a single vertex, which is exact for
    root-to-boundary quantities by symmetry and makes deep levels cheap.
    ``measure_ratio`` sets ``m(v) = measure_ratio ** depth``.
    """
    b = branching
    if b < 1:
        raise ValueError("branching must be >= 1")

    def build_lumped(n: int) -> GraphLevel:
        depth = np.arange(n)
        cond = conductance * float(b) ** (depth[:-1] + 1)
        C = sp.diags([cond, cond], [1, -1], shape=(n, n), format="csr")
        ground = np.zeros(n)
        ground[-1] = conductance * float(b) ** n
        measure = (float(b) * measure_ratio) ** depth
        return GraphLevel(n, depth.astype(np.int64), C, ground, measure, 0)

    def build_full(n: int) -> GraphLevel:
        nv = sum(b**k for k in range(n))
        depth = np.repeat(np.arange(n), [b**k for k in range(n)])
        j = np.arange(1, nv)
        parent = (j - 1) // b
        w = np.full(len(j), conductance)
        C = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([parent, j]), np.concatenate([j, parent]))),
                          shape=(nv, nv)).tocsr()
        ground = np.where(depth == n - 1, b * conductance, 0.0)
        return GraphLevel(n, np.arange(nv, dtype=np.int64), C, ground, measure_ratio ** depth.astype(float), 0)

    analytic = "Transient" if b >= 2 else "Recurrent"
    name = f"tree(b={b}{', lumped' if lumped else ''})"
    return GraphExhaustion(name, build_lumped if lumped else build_full, 0, analytic)


def level_from_link(link: LinkGraph, level: int = 0) -> GraphLevel:
    """Grounded level over a link graph from a truncation.

    Unknowns are link vertices whose row of ``b`` is complete or whose absent
    weight is known; the rest are grounded. Known absent weight becomes ground.
    """
    keep = link.interior | (link.far > 0)
    k = np.flatnonzero(keep)
    sub = link.b[k][:, k].tocsr()
    ground = np.asarray(link.b[k].sum(axis=1)).ravel() - np.asarray(sub.sum(axis=1)).ravel() + link.far[k]
    return GraphLevel(level, link.verts[k], sub, ground, link.m_rho[k], 0)


def link_exhaustion(generator: ComplexGenerator, rho: str | Simplex, root: int | None = None) -> GraphExhaustion:
    """Exhaustion of the link of ``rho`` through the generator's truncations."""

    def build(n: int) -> GraphLevel:
        trunc = generator.truncation(n)
        r = trunc.simplex(rho)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            return level_from_link(link_of(r, trunc.complex), n)

    min_level = 0 if generator.finite else 1
    if root is None:
        trunc = generator.truncation(max(min_level, 1))
        r = trunc.simplex(rho)
        v0 = trunc.named.get("v0")
        if v0 is not None and len(v0) == len(r) + 1 and set(r) <= set(v0):
            root = int(set(v0).difference(r).pop())
        else:
            lvl = build(max(min_level, 1))
            if lvl.size == 0:
                raise ValueError(f"link of {r} has no unknowns")
            root = int(lvl.vertices[0])
    verdict = generator.analytic_verdict()
    return GraphExhaustion(f"link({generator.family}, {rho})", build, int(root), verdict, min_level)


# solves ------------------------------------------------------------------


def _pcg(A: sp.csr_matrix, rhs: np.ndarray, tol: float, maxiter: int | None) -> tuple[np.ndarray, int]:
    n = A.shape[0]
    if n == 0:
        return np.zeros(0), 0
    diag = A.diagonal()
    if n <= 2:
        return np.linalg.solve(A.toarray(), rhs), 1
    M = LinearOperator((n, n), matvec=lambda x: x / diag, dtype=np.float64)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = cg(A, rhs, rtol=tol, atol=0.0, maxiter=maxiter or 20 * n + 100, M=M, callback=cb)
    if info != 0:
        raise SolverError("conjugate gradient did not converge", count[0], float(diag.max() / diag.min()))
    return x, count[0]


@dataclass
class ResistanceSolution:
    level: int
    resistance: float
    capacity: float
    energy: float
    potential: np.ndarray
    iterations: int
    residual: float


def effective_resistance(level: GraphLevel, tol: float = DEFAULT_TOL, maxiter: int | None = None) -> ResistanceSolution:
    """Resistance between the root and the grounded boundary.

    Solves ``h(root) = 1``, ``h`` harmonic at the other unknowns, ``h = 0`` on
    the boundary, with Jacobi-preconditioned conjugate gradients.
    ``resistance = 1 / flux`` with the flux out of the root, and ``energy`` is
    the Dirichlet energy of ``h`` (the capacity). A root component with no
    ground has infinite resistance.
    """
    lvl = level.root_component()
    if lvl.ground.sum() <= 0:
        return ResistanceSolution(level.level, math.inf, 0.0, 0.0, np.zeros(lvl.size), 0, 0.0)
    A = lvl.operator()
    r = lvl.root
    others = np.flatnonzero(np.arange(lvl.size) != r)
    A_ii = A[others][:, others].tocsr()
    rhs = lvl.conductance[others][:, [r]].toarray().ravel()
    x, iters = _pcg(A_ii, rhs, tol, maxiter)
    h = np.zeros(lvl.size)
    h[r] = 1.0
    h[others] = x
    residual = float(np.linalg.norm(A_ii @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)) if len(others) else 0.0
    row = lvl.conductance[r]
    flux = float(np.sum(row.data * (1.0 - h[row.indices]))) + lvl.ground[r]
    energy = _energy(lvl, h)
    return ResistanceSolution(level.level, 1.0 / flux, energy, energy, h, iters, residual)


def _energy(lvl: GraphLevel, u: np.ndarray) -> float:
    up = sp.triu(lvl.conductance, k=1).tocoo()
    return float(np.sum(up.data * (u[up.row] - u[up.col]) ** 2) + np.sum(lvl.ground * u**2))


def cutoff_energy(level: GraphLevel, tol: float = DEFAULT_TOL) -> float:
    """Minimal energy of a cutoff equal to 1 at the root and 0 on the boundary."""
    return effective_resistance(level, tol).energy


@dataclass
class MonopoleSolution:
    level: int
    vertices: np.ndarray
    u: np.ndarray
    energy: float
    residual: float
    grounded: bool
    iterations: int

    def as_link_function(self, link: LinkGraph) -> np.ndarray:
        """Spread onto all link vertices (zero off the unknowns)."""
        out = np.zeros(link.size)
        out[np.searchsorted(link.verts, self.vertices)] = self.u
        return out


def solve_monopole(level: GraphLevel, tol: float = DEFAULT_TOL, maxiter: int | None = None) -> MonopoleSolution:
    """Solve ``(1/m(x)) * (sum_y b(x,y)(u(x) - u(y)) + g(x) u(x)) = 1_{root}(x)``.

    On a component without ground the right-hand side is replaced by the
    compatible ``1_{root} - m(root) / vol`` and ``u`` is pinned at one vertex.
    The energy ``sum b |du|^2 + sum g u^2`` is reported.
    """
    lvl = level.root_component()
    A = lvl.operator()
    r = lvl.root
    m0 = lvl.measure[r]
    rhs = np.zeros(lvl.size)
    rhs[r] = m0
    grounded = lvl.ground.sum() > 0
    if grounded:
        u, iters = _pcg(A, rhs, tol, maxiter)
    else:
        rhs = rhs - m0 * lvl.measure / lvl.measure.sum()
        u = np.zeros(lvl.size)
        iters = 0
        if lvl.size > 1:
            pin = lvl.size - 1 if r != lvl.size - 1 else 0
            free = np.flatnonzero(np.arange(lvl.size) != pin)
            x, iters = _pcg(A[free][:, free].tocsr(), rhs[free], tol, maxiter)
            u[free] = x
    residual = float(np.max(np.abs((A @ u - rhs) / lvl.measure), initial=0.0))
    return MonopoleSolution(level.level, lvl.vertices, u, _energy(lvl, u), residual, bool(grounded), iters)


# classification ----------------------------------------------------------


@dataclass
class ClassificationPolicy:
    """Thresholds turning finite sequences into a verdict.

    Transient: the last ``window`` relative resistance increments are below
    ``eps`` and the increments decay faster than ``level ** -(1 + summable_margin)``.
    Recurrent: capacity below ``capacity_threshold``, non-increasing, with a
    negative fitted log-log slope; or a component with no ground at all.
    """

    eps: float = 1e-3
    window: int = 5
    capacity_threshold: float = 1e-2
    summable_margin: float = 0.25
    fit_fraction: float = 0.5
    tol: float = DEFAULT_TOL


@dataclass
class ComponentReport:
    root: int
    levels: list[int]
    resistance_seq: list[float]
    capacity_seq: list[float]
    monopole_energy_seq: list[float]
    verdict: str
    details: dict = field(default_factory=dict)


@dataclass
class ClassificationReport:
    exhaustion: str
    verdict: str
    components: list[ComponentReport]
    analytic: str | None = None
    mc_return_estimate: dict | None = None
    policy: dict = field(default_factory=dict)

    @property
    def resistance_seq(self) -> list[float]:
        return self.components[0].resistance_seq

    @property
    def capacity_seq(self) -> list[float]:
        return self.components[0].capacity_seq

    def to_json(self) -> dict:
        return _jsonable(asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, allow_nan=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component_root", "level", "R_n", "cap_n", "Q_u_n"])
        for c in self.components:
            for row in zip(c.levels, c.resistance_seq, c.capacity_seq, c.monopole_energy_seq):
                w.writerow([c.root, row[0], repr(row[1]), repr(row[2]), repr(row[3])])
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _loglog_slope(levels: Sequence[float], values: Sequence[float]) -> float | None:
    x = np.asarray(levels, dtype=float)
    y = np.asarray(values, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 3:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _verdict(levels: list[int], R: list[float], cap: list[float], policy: ClassificationPolicy) -> tuple[str, dict]:
    details: dict = {}
    if all(math.isinf(r) for r in R):
        details["reason"] = "root component has no boundary (finite component)"
        return "Recurrent", details
    Ra = np.asarray(R, dtype=float)
    tol = 1e-9 * np.maximum(np.abs(Ra[1:]), 1.0)
    details["rayleigh_monotone"] = bool(np.all(np.diff(Ra) >= -tol))
    tail = max(3, int(math.ceil(policy.fit_fraction * len(levels))))
    cap_slope = _loglog_slope(levels[-tail:], cap[-tail:])
    details["capacity_loglog_slope"] = cap_slope
    if (cap[-1] < policy.capacity_threshold and cap_slope is not None and cap_slope < 0
            and details["rayleigh_monotone"]):
        details["reason"] = f"capacity {cap[-1]:.3g} below {policy.capacity_threshold} and decaying"
        return "Recurrent", details
    if len(levels) > policy.window:
        inc = np.diff(Ra)
        rel = inc / Ra[1:]
        details["last_relative_increments"] = rel[-policy.window:].tolist()
        stable = bool(np.all(rel[-policy.window:] < policy.eps))
        inc_tail = max(3, int(math.ceil(policy.fit_fraction * len(inc))))
        lv = np.asarray(levels[1:], dtype=float)[-inc_tail:]
        iv = inc[-inc_tail:]
        inc_slope = _loglog_slope(lv, iv)
        details["increment_loglog_slope"] = inc_slope
        vanished = bool(np.all(np.abs(iv) <= 1e-14 * np.abs(Ra[-1])))
        summable = vanished or (inc_slope is not None and inc_slope < -(1.0 + policy.summable_margin))
        if stable and summable:
            details["reason"] = "resistance stabilized with summable-looking increments"
            return "Transient", details
    details["reason"] = "neither criterion met at the levels computed"
    return "Undetermined", details


def _classify_component(exh: GraphExhaustion, levels: list[int], policy: ClassificationPolicy,
                        monopole: bool) -> ComponentReport:
    R, cap, Q = [], [], []
    for n in levels:
        lvl = exh.level(n)
        sol = effective_resistance(lvl, policy.tol)
        R.append(float(sol.resistance))
        cap.append(float(sol.capacity))
        Q.append(solve_monopole(lvl, policy.tol).energy if monopole else math.nan)
    verdict, details = _verdict(levels, R, cap, policy)
    if not details.get("rayleigh_monotone", True):
        warnings.warn(f"resistance not monotone for {exh.name}", RuntimeWarning, stacklevel=3)
    return ComponentReport(exh.root_id, list(levels), R, cap, Q, verdict, details)


def classify(exh: GraphExhaustion, levels: Iterable[int] | int, policy: ClassificationPolicy | None = None,
             *, monopole: bool = True, per_component: bool = True,
             mc: MCEstimate | None = None) -> ClassificationReport:
    """Classify the components seen at the first level as Recurrent, Transient or Undetermined.

    Each component is followed through later levels by its smallest vertex id.
    The overall verdict is Transient if any component is, Recurrent if all
    are, and Undetermined otherwise.
    """
    policy = policy or ClassificationPolicy()
    if isinstance(levels, int):
        levels = range(exh.min_level if exh.min_level > 0 else 1, levels + 1)
    levels = sorted(set(int(n) for n in levels))
    roots = [exh.root_id]
    if per_component:
        first = exh.build(levels[0])
        ncomp, labels = first.component_labels()
        roots = sorted({int(first.vertices[labels == c].min()) for c in range(ncomp)})
        if exh.root_id in first.vertices:
            lab = labels[np.searchsorted(first.vertices, exh.root_id)]
            roots = [exh.root_id] + [r for r in roots if labels[np.searchsorted(first.vertices, r)] != lab]
    comps = [_classify_component(exh.rooted_at(r), levels, policy, monopole) for r in roots]
    verdicts = {c.verdict for c in comps}
    if "Transient" in verdicts:
        overall = "Transient"
    elif verdicts == {"Recurrent"}:
        overall = "Recurrent"
    else:
        overall = "Undetermined"
    return ClassificationReport(
        exhaustion=exh.name,
        verdict=overall,
        components=comps,
        analytic=exh.analytic,
        mc_return_estimate=mc.to_json() if mc is not None else None,
        policy=asdict(policy),
    )
