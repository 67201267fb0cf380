"""Structure of optimal solutions: rate intervals, Rates-LP pair, non-degeneracy.

On (0, T) an optimal primal/dual pair has finitely many intervals of constant
rates (u, p). On each of them u solves

    Rates-LP   max c'u   s.t. A u + xdot = b
    Rates-LP*  min b'p   s.t. A'p - qdot = c

with sign restrictions fixed by the supports of u and p.
"""
import itertools
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import qr

from src.config import settings
from src.errors import (
    DimensionMismatch, InfeasibleResult, NonMonotoneSlope, NumericalFailure, SupportOutOfRange,
)
from src.lp_core import (
    Direction, LpProblem, LpStatus, Relation, SignRestriction,
    canonical_form, lp_allclose, lp_dual, solve_lp,
)
from src.model import MeasureSolution, ProblemData, check_feasible_measure, evaluate_objective


@dataclass(frozen=True)
class SupportSets:
    """Indices (0-based) of positive primal rates and positive dual rates."""
    J_set: FrozenSet[int]
    K_set: FrozenSet[int]
    borderline_J: FrozenSet[int] = frozenset()
    borderline_K: FrozenSet[int] = frozenset()


@dataclass
class RateInterval:
    t_lo: float
    t_hi: float
    u_rate: np.ndarray
    p_rate: np.ndarray
    support: SupportSets
    objective_slope: float

    @property
    def length(self) -> float:
        return self.t_hi - self.t_lo


@dataclass
class TransitionCell:
    """One discretization cell between two rate intervals whose rates no Rates-LP pair explains.

    This is how an interior atom, or a regime change inside the cell, shows up
    in a discrete optimum: the mass stays put while the cell shrinks with N.
    u_atom and p_atom are the masses in excess of the larger neighbouring rate.
    """
    t_lo: float
    t_hi: float
    u_mass: np.ndarray
    p_mass: np.ndarray
    u_atom: np.ndarray
    p_atom: np.ndarray

    @property
    def length(self) -> float:
        return self.t_hi - self.t_lo


@dataclass
class RateStructure:
    intervals: List[RateInterval]
    transitions: List[TransitionCell] = field(default_factory=list)

    def primal_atom_mass(self) -> float:
        return float(sum(cell.u_atom.sum() for cell in self.transitions))

    def dual_atom_mass(self) -> float:
        return float(sum(cell.p_atom.sum() for cell in self.transitions))


@dataclass
class RatesVerification:
    ok: bool
    violations: List[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.ok)


def _support(rate: np.ndarray) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    threshold = settings.support_threshold * (1.0 + np.abs(rate).max(initial=0.0))
    support = frozenset(int(i) for i in np.flatnonzero(rate > threshold))
    borderline = frozenset(int(i) for i in np.flatnonzero((rate > threshold / 10) & (rate <= threshold * 10)))
    return support, borderline


def _same_rate(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    scale = 1.0 + max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    return bool(np.all(np.abs(a - b) <= max(tol, settings.rate_merge_floor) * scale))


def _rate_interval(p: ProblemData, group: dict) -> RateInterval:
    u_rate = group["u"] / group["length"]
    p_rate = group["p"] / group["length"]
    J_set, borderline_J = _support(u_rate)
    K_set, borderline_K = _support(p_rate)
    return RateInterval(
        t_lo=float(group["lo"]),
        t_hi=float(group["hi"]),
        u_rate=u_rate,
        p_rate=p_rate,
        support=SupportSets(J_set, K_set, borderline_J, borderline_K),
        objective_slope=float(p.c_rate @ u_rate),
    )


def _transition_cell(cell: RateInterval, before: RateInterval, after: RateInterval) -> TransitionCell:
    width = cell.length
    u_cap = np.maximum(before.u_rate, after.u_rate) * width
    p_cap = np.maximum(before.p_rate, after.p_rate) * width
    u_mass, p_mass = cell.u_rate * width, cell.p_rate * width
    return TransitionCell(
        t_lo=cell.t_lo,
        t_hi=cell.t_hi,
        u_mass=u_mass,
        p_mass=p_mass,
        u_atom=np.maximum(u_mass - u_cap, 0.0),
        p_atom=np.maximum(p_mass - p_cap, 0.0),
    )


def detect_rate_structure(p: ProblemData, primal: MeasureSolution, dual: MeasureSolution,
                          tol: Optional[float] = None) -> RateStructure:
    """Rate intervals of a near-optimal pair plus the transition cells between them.

    The dual density is read at dual time T - t. Adjacent pieces whose rates
    agree within tol * (1 + |rate|) are merged with length-weighted averages.
    A single-cell piece that fails verify_rates_pair while both neighbours
    pass is a transition cell, not a rate interval.

    Raises:
        NonMonotoneSlope: if c'u increases by more than 10 * tol between intervals.
    """
    tol = settings.default_tol if tol is None else tol
    if primal.dimension != p.J or dual.dimension != p.K:
        raise DimensionMismatch(f"expected primal of dimension {p.J} and dual of dimension {p.K}")
    T = p.horizon

    points = np.union1d(primal.partition, np.clip(T - dual.partition, 0.0, T))
    points = points[np.concatenate([[True], np.diff(points) > 1e-12 * T])]
    points[-1] = T
    lo, hi = points[:-1], points[1:]
    mid = 0.5 * (lo + hi)
    u_idx = np.clip(np.searchsorted(primal.partition, mid, side="right") - 1, 0, primal.n_intervals - 1)
    p_idx = np.clip(np.searchsorted(dual.partition, T - mid, side="right") - 1, 0, dual.n_intervals - 1)
    u_rates = primal.densities[u_idx]
    p_rates = dual.densities[p_idx]

    groups = []
    for k in range(mid.size):
        length = hi[k] - lo[k]
        if groups:
            g = groups[-1]
            if _same_rate(g["u"] / g["length"], u_rates[k], tol) and _same_rate(g["p"] / g["length"], p_rates[k], tol):
                g["hi"] = hi[k]
                g["u"] = g["u"] + length * u_rates[k]
                g["p"] = g["p"] + length * p_rates[k]
                g["length"] += length
                g["pieces"] += 1
                continue
        groups.append({"lo": lo[k], "hi": hi[k], "u": length * u_rates[k], "p": length * p_rates[k],
                       "length": length, "pieces": 1})

    candidates = [_rate_interval(p, g) for g in groups]
    verdicts = {}

    def passes(i: int) -> bool:
        if i not in verdicts:
            verdicts[i] = bool(verify_rates_pair(p, candidates[i], tol))
        return verdicts[i]

    intervals, transitions = [], []
    for i, candidate in enumerate(candidates):
        interior = 0 < i < len(candidates) - 1
        if interior and groups[i]["pieces"] == 1 and not passes(i) and passes(i - 1) and passes(i + 1):
            cell = _transition_cell(candidate, candidates[i - 1], candidates[i + 1])
            logger.info(f"Transition cell ({cell.t_lo:.6g}, {cell.t_hi:.6g}): "
                        f"atom mass u {cell.u_atom.sum():.3e}, p {cell.p_atom.sum():.3e}")
            transitions.append(cell)
            continue
        support = candidate.support
        if support.borderline_J or support.borderline_K:
            logger.warning(f"Borderline support on ({candidate.t_lo:.6g}, {candidate.t_hi:.6g}): "
                           f"u {sorted(support.borderline_J)}, p {sorted(support.borderline_K)}")
        intervals.append(candidate)

    slopes = np.array([interval.objective_slope for interval in intervals])
    slack = 10 * tol * (1.0 + np.abs(slopes).max(initial=0.0))
    for k in range(1, slopes.size):
        if slopes[k] > slopes[k - 1] + slack:
            raise NonMonotoneSlope(
                f"objective slope rises from {slopes[k - 1]:.9g} to {slopes[k]:.9g} at t={intervals[k].t_lo:.9g}"
            )
    logger.debug(f"Detected {len(intervals)} rate intervals and {len(transitions)} transition cells")
    return RateStructure(intervals=intervals, transitions=transitions)


def detect_rate_intervals(p: ProblemData, primal: MeasureSolution, dual: MeasureSolution,
                          tol: Optional[float] = None) -> List[RateInterval]:
    """Maximal intervals of constant (u, p) from a near-optimal pair; transition cells are left out."""
    return detect_rate_structure(p, primal, dual, tol).intervals


def slope_change_points(p: ProblemData, intervals: Sequence[RateInterval], tol: Optional[float] = None) -> List[float]:
    """0, T and every boundary across which c'u changes.

    When a transition cell separates two intervals the change point is taken
    at the middle of the cell.
    """
    tol = settings.default_tol if tol is None else tol
    points = [0.0]
    for before, after in zip(intervals, intervals[1:]):
        scale = 1.0 + max(abs(before.objective_slope), abs(after.objective_slope))
        if abs(before.objective_slope - after.objective_slope) > tol * scale:
            points.append(0.5 * (before.t_hi + after.t_lo))
    points.append(p.horizon)
    return points


def _check_support(p: ProblemData, support: SupportSets):
    for name, indices, size in (("J_set", support.J_set, p.J), ("K_set", support.K_set, p.K)):
        bad = [i for i in indices if not 0 <= i < size]
        if bad:
            raise SupportOutOfRange(f"{name} indices {bad} outside 0..{size - 1}")


def build_rates_lp_pair(p: ProblemData, support: SupportSets) -> Tuple[LpProblem, LpProblem]:
    """Rates-LP over (u, xdot) and Rates-LP* over (p, qdot) for the given supports."""
    _check_support(p, support)
    K, J = p.K, p.J
    on_J = [j in support.J_set for j in range(J)]
    on_K = [k in support.K_set for k in range(K)]
    P, Z, U = SignRestriction.P, SignRestriction.Z, SignRestriction.U

    rates = LpProblem(
        direction=Direction.MAXIMIZE,
        objective=np.concatenate([p.c_rate, np.zeros(K)]),
        constraint_matrix=np.hstack([p.A, np.eye(K)]),
        rhs=p.b_rate,
        relations=(Relation.EQ,) * K,
        restrictions=tuple(P if on else Z for on in on_J) + tuple(P if on else U for on in on_K),
    )
    rates_star = LpProblem(
        direction=Direction.MINIMIZE,
        objective=np.concatenate([p.b_rate, np.zeros(J)]),
        constraint_matrix=np.hstack([p.A.T, -np.eye(J)]),
        rhs=p.c_rate,
        relations=(Relation.EQ,) * J,
        restrictions=tuple(P if on else Z for on in on_K) + tuple(P if on else U for on in on_J),
    )

    folded = lp_dual(canonical_form(rates, range(J, J + K)))
    folded_star = canonical_form(rates_star, range(K, K + J))
    if not lp_allclose(folded, folded_star):
        raise NumericalFailure("Rates-LP and Rates-LP* are not an LP-dual pair")
    return rates, rates_star


def verify_rates_pair(p: ProblemData, interval: RateInterval, tol: Optional[float] = None) -> RatesVerification:
    """Check that (u, p) of an interval are feasible, complementary and optimal for the Rates-LP pair."""
    tol = settings.default_tol if tol is None else tol
    u, q = interval.u_rate, interval.p_rate
    support = interval.support
    x_dot = p.b_rate - p.A @ u
    q_dot = p.A.T @ q - p.c_rate
    scale = 1.0 + max(np.abs(u).max(), np.abs(q).max(), np.abs(p.b_rate).max(), np.abs(p.c_rate).max())
    limit = tol * scale
    violations = []

    if u.min() < -limit or q.min() < -limit:
        violations.append("negative rate")
    off_J = [j for j in range(p.J) if j not in support.J_set]
    off_K = [k for k in range(p.K) if k not in support.K_set]
    if off_J and np.abs(u[off_J]).max() > limit:
        violations.append("u positive outside its support")
    if off_K and np.abs(q[off_K]).max() > limit:
        violations.append("p positive outside its support")
    on_K = sorted(support.K_set)
    on_J = sorted(support.J_set)
    if on_K and x_dot[on_K].min() < -limit:
        violations.append(f"xdot negative on K_set: {x_dot[on_K].min():.3e}")
    if on_J and q_dot[on_J].min() < -limit:
        violations.append(f"qdot negative on J_set: {q_dot[on_J].min():.3e}")
    if abs(q_dot @ u) > limit * scale:
        violations.append(f"qdot'u = {q_dot @ u:.3e}")
    if abs(x_dot @ q) > limit * scale:
        violations.append(f"xdot'p = {x_dot @ q:.3e}")

    rates, rates_star = build_rates_lp_pair(p, support)
    primal = solve_lp(rates)
    dual = solve_lp(rates_star)
    if primal.status is not LpStatus.OPTIMAL or dual.status is not LpStatus.OPTIMAL:
        violations.append(f"Rates-LP {primal.status.value}, Rates-LP* {dual.status.value}")
    else:
        if abs(p.c_rate @ u - primal.objective_value) > limit * (1.0 + abs(primal.objective_value)):
            violations.append(f"c'u = {p.c_rate @ u:.9g} but Rates-LP optimum is {primal.objective_value:.9g}")
        if abs(p.b_rate @ q - dual.objective_value) > limit * (1.0 + abs(dual.objective_value)):
            violations.append(f"b'p = {p.b_rate @ q:.9g} but Rates-LP* optimum is {dual.objective_value:.9g}")

    if violations:
        logger.debug(f"Interval ({interval.t_lo:.6g}, {interval.t_hi:.6g}) fails: {violations}")
    return RatesVerification(ok=not violations, violations=violations)


def _rank(matrix: np.ndarray, tol: float) -> int:
    if matrix.size == 0:
        return 0
    _, R, _ = qr(matrix, mode="economic", pivoting=True)
    diagonal = np.abs(np.diag(R))
    if diagonal.size == 0 or diagonal[0] == 0.0:
        return 0
    return int(np.sum(diagonal > tol * max(diagonal[0], np.linalg.norm(matrix))))


def _in_span(columns: np.ndarray, c: np.ndarray, tol: float) -> bool:
    augmented = np.hstack([columns, c[:, None]])
    return _rank(columns, tol) == _rank(augmented, tol)


def check_nondegeneracy(A, c) -> bool:
    """True iff c is not a combination of any J - 1 columns of [A' | I]."""
    A = np.asarray(A, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    if A.ndim != 2 or c.size != A.shape[1]:
        raise DimensionMismatch(f"c has length {c.size}, A has shape {A.shape}")
    K, J = A.shape
    tol = settings.nondegeneracy_rank_tol
    if J == 1:
        return bool(np.abs(c).max() > tol * (1.0 + np.abs(A).max()))

    columns = np.hstack([A.T, np.eye(J)])
    n_columns = K + J
    if n_columns > settings.nondegeneracy_max_columns:
        logger.warning(f"Non-degeneracy check enumerates subsets of {n_columns} columns; this may be slow")

    rng = np.random.default_rng(settings.nondegeneracy_seed)
    for _ in range(settings.nondegeneracy_precheck):
        subset = rng.choice(n_columns, size=J - 1, replace=False)
        if _in_span(columns[:, subset], c, tol):
            return False
    for subset in itertools.combinations(range(n_columns), J - 1):
        if _in_span(columns[:, list(subset)], c, tol):
            return False
    return True


def piecewise_linearize(p: ProblemData, sol: MeasureSolution, breakpoints: Sequence[float],
                        tol: Optional[float] = None) -> MeasureSolution:
    """Interpolate U linearly between breakpoints, keeping the atoms at 0 and T.

    Raises:
        InfeasibleResult: if the interpolated measure is infeasible.
    """
    T = p.horizon
    points = np.union1d(np.clip(np.asarray(breakpoints, dtype=np.float64), 0.0, T), [0.0, T])
    values = np.vstack([
        sol.cumulative(0.0)[None, :],
        sol.cumulative_many(points[1:-1]),
        sol.cumulative_left(T)[None, :],
    ])
    result = MeasureSolution(
        atom_start=sol.atom_start,
        partition=points,
        densities=np.diff(values, axis=0) / np.diff(points)[:, None],
        atom_end=sol.atom_end,
    )
    feasibility = check_feasible_measure(p, result, tol)
    if not feasibility.feasible:
        raise InfeasibleResult(
            f"linearized solution violates constraints by {feasibility.worst_violation:.3e} at t={feasibility.worst_t}"
        )
    before, after = evaluate_objective(p, sol), evaluate_objective(p, result)
    if abs(before - after) > 1e-9 * (1.0 + abs(before)):
        logger.warning(f"linearization changed the objective from {before:.12g} to {after:.12g}")
    return result
