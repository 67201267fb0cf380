"""Dense two-phase simplex for LPs with per-variable sign restrictions.

Every variable is tagged Z (fixed at zero), P (non-negative) or U (free); rows
are <=, = or >=. Internally a problem is rewritten as

    min c'z  s.t.  Bz = b,  z >= 0,  b >= 0

(U variables split in two, Z variables dropped, inequality rows given a slack)
and solved on a full tableau. Duals and certificates are mapped back to the
original row orientation.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.config import settings
from src.errors import MalformedProblem, NumericalFailure


class SignRestriction(str, Enum):
    """Sign restriction of one LP variable."""
    Z = "Z"
    P = "P"
    U = "U"


class Relation(str, Enum):
    """Row relation."""
    LE = "<="
    EQ = "="
    GE = ">="


class Direction(str, Enum):
    """Optimization direction."""
    MAXIMIZE = "max"
    MINIMIZE = "min"

    @property
    def opposite(self) -> "Direction":
        return Direction.MINIMIZE if self is Direction.MAXIMIZE else Direction.MAXIMIZE


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_matrix(values, n_rows: int, n_cols: int) -> np.ndarray:
    matrix = np.array(values, dtype=np.float64)
    if matrix.size == 0:
        return np.zeros((n_rows, n_cols))
    if matrix.ndim != 2:
        raise MalformedProblem(f"constraint matrix must be 2-D, got {matrix.ndim}-D")
    return matrix


@dataclass(frozen=True, eq=False)
class LpProblem:
    """Finite LP: optimize objective'x subject to per-row relations and per-variable restrictions."""
    direction: Direction
    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    relations: Tuple[Relation, ...]
    restrictions: Tuple[SignRestriction, ...]

    def __post_init__(self):
        objective = np.array(self.objective, dtype=np.float64).reshape(-1)
        rhs = np.array(self.rhs, dtype=np.float64).reshape(-1)
        matrix = _as_matrix(self.constraint_matrix, rhs.size, objective.size)
        try:
            direction = Direction(self.direction)
            relations = tuple(Relation(r) for r in self.relations)
            restrictions = tuple(SignRestriction(r) for r in self.restrictions)
        except ValueError as e:
            raise MalformedProblem(str(e)) from e

        if matrix.shape != (rhs.size, objective.size):
            raise MalformedProblem(
                f"constraint matrix is {matrix.shape}, expected ({rhs.size}, {objective.size})"
            )
        if len(relations) != rhs.size:
            raise MalformedProblem(f"{len(relations)} relations for {rhs.size} rows")
        if len(restrictions) != objective.size:
            raise MalformedProblem(f"{len(restrictions)} restrictions for {objective.size} variables")
        for name, array in (("objective", objective), ("constraint_matrix", matrix), ("rhs", rhs)):
            if not np.all(np.isfinite(array)):
                raise MalformedProblem(f"{name} has non-finite entries")

        for array in (objective, matrix, rhs):
            array.setflags(write=False)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "constraint_matrix", matrix)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "relations", relations)
        object.__setattr__(self, "restrictions", restrictions)

    @property
    def n_rows(self) -> int:
        return self.rhs.size

    @property
    def n_cols(self) -> int:
        return self.objective.size

    def max_violation(self, x: np.ndarray) -> float:
        """Largest violation of rows and sign restrictions at x."""
        residual = self.constraint_matrix @ x - self.rhs
        worst = 0.0
        for relation in Relation:
            mask = np.array([r is relation for r in self.relations], dtype=bool)
            if not mask.any():
                continue
            if relation is Relation.LE:
                worst = max(worst, float(np.max(residual[mask])))
            elif relation is Relation.GE:
                worst = max(worst, float(np.max(-residual[mask])))
            else:
                worst = max(worst, float(np.max(np.abs(residual[mask]))))
        for j, restriction in enumerate(self.restrictions):
            if restriction is SignRestriction.P:
                worst = max(worst, -float(x[j]))
            elif restriction is SignRestriction.Z:
                worst = max(worst, abs(float(x[j])))
        return max(worst, 0.0)


@dataclass
class LpOutcome:
    """Result of solve_lp.

    dual satisfies rhs'dual == objective_value at an optimum. For a max problem
    dual >= 0 on <= rows and <= 0 on >= rows (mirrored for min). certificate is
    a Farkas vector y (y'rhs < 0, y'A >= 0 on P columns, = 0 on U columns,
    y >= 0 on <= rows, y <= 0 on >= rows) when infeasible, and an improving ray
    when unbounded.
    """
    status: LpStatus
    objective_value: float
    primal: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None
    basis: Tuple[str, ...] = ()
    certificate: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass
class _StandardForm:
    body: np.ndarray
    rhs: np.ndarray
    cost: np.ndarray
    row_sign: np.ndarray
    column_var: np.ndarray
    column_sign: np.ndarray
    labels: List[str]
    initial_basis: np.ndarray
    artificial: np.ndarray = field(repr=False)


def _standardize(lp: LpProblem) -> _StandardForm:
    m = lp.n_rows
    matrix = lp.constraint_matrix
    cost = -lp.objective if lp.direction is Direction.MAXIMIZE else lp.objective

    kept = [j for j, r in enumerate(lp.restrictions) if r is not SignRestriction.Z]
    free = [j for j, r in enumerate(lp.restrictions) if r is SignRestriction.U]
    inequalities = [i for i, r in enumerate(lp.relations) if r is not Relation.EQ]

    slacks = np.zeros((m, len(inequalities)))
    for k, i in enumerate(inequalities):
        slacks[i, k] = 1.0 if lp.relations[i] is Relation.LE else -1.0

    row_sign = np.where(lp.rhs < 0, -1.0, 1.0)
    columns = np.hstack([matrix[:, kept], -matrix[:, free], slacks]) * row_sign[:, None]
    column_cost = np.concatenate([cost[kept], -cost[free], np.zeros(len(inequalities))])
    column_var = np.array(kept + free + [-1] * len(inequalities), dtype=int)
    column_sign = np.concatenate([np.ones(len(kept)), -np.ones(len(free)), np.zeros(len(inequalities))])
    labels = [f"x{j}" for j in kept] + [f"x{j}-" for j in free] + [f"s{i}" for i in inequalities]

    # A slack whose coefficient stays +1 after sign normalization starts basic.
    initial_basis = np.full(m, -1, dtype=int)
    first_slack = len(kept) + len(free)
    for k, i in enumerate(inequalities):
        if columns[i, first_slack + k] > 0:
            initial_basis[i] = first_slack + k

    artificial_rows = np.flatnonzero(initial_basis < 0)
    n_struct = columns.shape[1]
    artificials = np.zeros((m, artificial_rows.size))
    artificials[artificial_rows, np.arange(artificial_rows.size)] = 1.0
    initial_basis[artificial_rows] = n_struct + np.arange(artificial_rows.size)
    labels += [f"a{i}" for i in artificial_rows]

    artificial = np.zeros(n_struct + artificial_rows.size, dtype=bool)
    artificial[n_struct:] = True
    return _StandardForm(
        body=np.hstack([columns, artificials]),
        rhs=np.abs(lp.rhs).astype(np.float64),
        cost=np.concatenate([column_cost, np.zeros(artificial_rows.size)]),
        row_sign=row_sign,
        column_var=column_var,
        column_sign=column_sign,
        labels=labels,
        initial_basis=initial_basis,
        artificial=artificial,
    )


class _Tableau:
    """Full simplex tableau; the basis inverse sits in the columns of the initial basis."""

    def __init__(self, form: _StandardForm):
        self.body = form.body.copy()
        self.rhs = form.rhs.copy()
        self.basis = form.initial_basis.copy()
        self.initial_basis = form.initial_basis
        self.iterations = 0

    @property
    def basis_inverse(self) -> np.ndarray:
        return self.body[:, self.initial_basis]

    def pivot(self, row: int, col: int):
        pivot_row = self.body[row] / self.body[row, col]
        pivot_rhs = self.rhs[row] / self.body[row, col]
        column = self.body[:, col].copy()
        column[row] = 0.0
        touched = np.flatnonzero(column)
        if touched.size:
            self.body[touched] -= np.outer(column[touched], pivot_row)
            self.rhs[touched] -= column[touched] * pivot_rhs
        self.body[row] = pivot_row
        self.rhs[row] = pivot_rhs
        self.basis[row] = col
        tiny = (self.rhs < 0) & (self.rhs > -settings.tol_feas * (1.0 + np.abs(self.rhs).max(initial=0.0)))
        self.rhs[tiny] = 0.0
        self.iterations += 1

    def run(self, cost: np.ndarray, allowed: np.ndarray) -> Tuple[LpStatus, Optional[int]]:
        """Iterate to optimality; returns (status, entering column of an unbounded ray)."""
        m, n = self.body.shape
        optimality_tol = settings.tol_feas * (1.0 + np.abs(cost).max(initial=0.0))
        degenerate_limit = settings.bland_degenerate_factor * (m + n)
        degenerate_run = 0
        bland = False

        while True:
            if self.iterations >= settings.lp_max_iterations:
                raise NumericalFailure(f"simplex exceeded {settings.lp_max_iterations} iterations")

            reduced = cost - cost[self.basis] @ self.body
            candidates = np.flatnonzero(allowed & (reduced < -optimality_tol))
            if candidates.size == 0:
                return LpStatus.OPTIMAL, None
            entering = int(candidates[0]) if bland else int(candidates[np.argmin(reduced[candidates])])

            direction = self.body[:, entering]
            eligible = np.flatnonzero(direction > settings.pivot_tol)
            if eligible.size == 0:
                return LpStatus.UNBOUNDED, entering
            ratios = self.rhs[eligible] / direction[eligible]
            theta = ratios.min()
            ties = eligible[ratios <= theta + settings.pivot_tol * (1.0 + theta)]
            if bland:
                leaving = int(ties[np.argmin(self.basis[ties])])
            else:
                leaving = int(ties[np.argmax(direction[ties])])

            if theta <= settings.pivot_tol:
                degenerate_run += 1
                if not bland and degenerate_run >= degenerate_limit:
                    logger.debug(f"Switching to Bland's rule after {degenerate_run} degenerate pivots")
                    bland = True
            else:
                degenerate_run = 0
            self.pivot(leaving, entering)


def _to_original(form: _StandardForm, z: np.ndarray, n_cols: int) -> np.ndarray:
    x = np.zeros(n_cols)
    structural = form.column_var >= 0
    np.add.at(x, form.column_var[structural], form.column_sign[structural] * z[: structural.size][structural])
    return x


def _farkas_certificate(form: _StandardForm, tableau: _Tableau, phase_one_cost: np.ndarray) -> np.ndarray:
    multipliers = phase_one_cost[tableau.basis] @ tableau.basis_inverse
    certificate = -form.row_sign * multipliers
    scale = np.abs(certificate).max(initial=0.0)
    return certificate / scale if scale > 0 else certificate


def _drive_out_artificials(form: _StandardForm, tableau: _Tableau):
    for row in range(tableau.basis.size):
        if not form.artificial[tableau.basis[row]]:
            continue
        candidates = np.abs(np.where(form.artificial, 0.0, tableau.body[row]))
        col = int(np.argmax(candidates)) if candidates.size else -1
        if col < 0 or candidates[col] <= settings.pivot_tol:
            # Redundant row; its artificial stays basic at zero.
            continue
        tableau.rhs[row] = 0.0
        tableau.pivot(row, col)


def solve_lp(lp: LpProblem) -> LpOutcome:
    """Solve an LP with the two-phase simplex method.

    Args:
        lp: Problem to solve.

    Returns:
        LpOutcome with primal, dual and basis when optimal, a Farkas certificate
        when infeasible, or an improving ray when unbounded.
    """
    form = _standardize(lp)
    tableau = _Tableau(form)
    m, n = lp.n_rows, lp.n_cols
    rhs_scale = 1.0 + np.abs(lp.rhs).max(initial=0.0)

    if form.artificial.any():
        phase_one_cost = form.artificial.astype(np.float64)
        tableau.run(phase_one_cost, np.ones(form.artificial.size, dtype=bool))
        infeasibility = float(phase_one_cost[tableau.basis] @ tableau.rhs)
        if infeasibility > settings.tol_feas * rhs_scale:
            certificate = _farkas_certificate(form, tableau, phase_one_cost)
            logger.debug(f"LP infeasible ({m}x{n}): phase-one value {infeasibility:.3e}")
            return LpOutcome(
                status=LpStatus.INFEASIBLE,
                objective_value=float("nan"),
                certificate=certificate,
                iterations=tableau.iterations,
            )
        _drive_out_artificials(form, tableau)

    status, entering = tableau.run(form.cost, ~form.artificial)

    z = np.zeros(form.artificial.size)
    z[tableau.basis] = tableau.rhs
    primal = _to_original(form, z, n)
    basis = tuple(form.labels[c] for c in tableau.basis)

    if status is LpStatus.UNBOUNDED:
        step = np.zeros(form.artificial.size)
        step[entering] = 1.0
        step[tableau.basis] = -tableau.body[:, entering]
        ray = _to_original(form, step, n)
        ray /= max(np.abs(ray).max(initial=0.0), 1e-300)
        value = float("inf") if lp.direction is Direction.MAXIMIZE else float("-inf")
        logger.debug(f"LP unbounded ({m}x{n}) after {tableau.iterations} iterations")
        return LpOutcome(
            status=LpStatus.UNBOUNDED,
            objective_value=value,
            primal=primal,
            basis=basis,
            certificate=ray,
            iterations=tableau.iterations,
        )

    multipliers = form.cost[tableau.basis] @ tableau.basis_inverse
    dual = form.row_sign * multipliers
    if lp.direction is Direction.MAXIMIZE:
        dual = -dual

    for j, restriction in enumerate(lp.restrictions):
        if restriction is SignRestriction.P and primal[j] < 0:
            primal[j] = 0.0

    violation = lp.max_violation(primal)
    if violation > 1e3 * settings.tol_feas * rhs_scale:
        raise NumericalFailure(f"returned basis violates constraints by {violation:.3e}")
    if violation > settings.tol_feas * rhs_scale:
        logger.warning(f"LP solution violates constraints by {violation:.3e}")

    value = float(lp.objective @ primal)
    logger.debug(f"LP optimal ({m}x{n}) value {value:.12g} in {tableau.iterations} iterations")
    return LpOutcome(
        status=LpStatus.OPTIMAL,
        objective_value=value,
        primal=primal,
        dual=dual,
        basis=basis,
        iterations=tableau.iterations,
    )


def lp_dual(lp: LpProblem) -> LpProblem:
    """Standard LP dual under the Z/P/U convention.

    Rows are first oriented (<= for max, >= for min); then an inequality row
    becomes a P variable, an equality row a U variable, a P variable a dual
    inequality row, a U variable a dual equality row, and a Z variable nothing.
    Row and variable order is preserved, so lp_dual(lp_dual(lp)) == lp for
    problems already oriented and without Z variables.
    """
    maximize = lp.direction is Direction.MAXIMIZE
    against = Relation.GE if maximize else Relation.LE
    flip = np.array([-1.0 if r is against else 1.0 for r in lp.relations])
    matrix = lp.constraint_matrix * flip[:, None]
    rhs = lp.rhs * flip

    kept = [j for j, r in enumerate(lp.restrictions) if r is not SignRestriction.Z]
    dual_row = Relation.GE if maximize else Relation.LE
    relations = tuple(
        Relation.EQ if lp.restrictions[j] is SignRestriction.U else dual_row for j in kept
    )
    restrictions = tuple(
        SignRestriction.U if r is Relation.EQ else SignRestriction.P for r in lp.relations
    )
    return LpProblem(
        direction=lp.direction.opposite,
        objective=rhs,
        constraint_matrix=matrix[:, kept].T,
        rhs=lp.objective[kept],
        relations=relations,
        restrictions=restrictions,
    )


def canonical_form(lp: LpProblem, slack_columns: Sequence[int] = ()) -> LpProblem:
    """Fold explicit slack columns into inequality rows and drop Z columns.

    A slack column must have a single nonzero entry, in an equality row, and a
    zero objective coefficient. A P slack turns its row into <= or >= by the
    sign of its coefficient; a U slack makes its row vacuous, so the row is
    dropped. Rows are finally oriented <= for max and >= for min.
    """
    matrix = lp.constraint_matrix
    relations = list(lp.relations)
    keep_rows = np.ones(lp.n_rows, dtype=bool)
    keep_cols = np.array([r is not SignRestriction.Z for r in lp.restrictions], dtype=bool)

    for j in slack_columns:
        keep_cols[j] = False
        if lp.restrictions[j] is SignRestriction.Z:
            continue
        rows = np.flatnonzero(matrix[:, j])
        if rows.size != 1 or lp.relations[rows[0]] is not Relation.EQ or lp.objective[j] != 0:
            raise MalformedProblem(f"column {j} is not a slack column")
        i = int(rows[0])
        if lp.restrictions[j] is SignRestriction.U:
            keep_rows[i] = False
        else:
            relations[i] = Relation.LE if matrix[i, j] > 0 else Relation.GE

    maximize = lp.direction is Direction.MAXIMIZE
    against = Relation.GE if maximize else Relation.LE
    preferred = Relation.LE if maximize else Relation.GE
    flip = np.array([-1.0 if r is against else 1.0 for r in relations])
    oriented = [Relation.EQ if r is Relation.EQ else preferred for r in relations]

    rows = np.flatnonzero(keep_rows)
    cols = np.flatnonzero(keep_cols)
    return LpProblem(
        direction=lp.direction,
        objective=lp.objective[cols],
        constraint_matrix=(matrix * flip[:, None])[np.ix_(rows, cols)],
        rhs=(lp.rhs * flip)[rows],
        relations=tuple(oriented[i] for i in rows),
        restrictions=tuple(lp.restrictions[j] for j in cols),
    )


def permute_lp(lp: LpProblem, row_order: Sequence[int], col_order: Sequence[int]) -> LpProblem:
    """Reorder rows and columns."""
    rows = np.asarray(row_order, dtype=int)
    cols = np.asarray(col_order, dtype=int)
    return LpProblem(
        direction=lp.direction,
        objective=lp.objective[cols],
        constraint_matrix=lp.constraint_matrix[np.ix_(rows, cols)],
        rhs=lp.rhs[rows],
        relations=tuple(lp.relations[i] for i in rows),
        restrictions=tuple(lp.restrictions[j] for j in cols),
    )


def lp_allclose(first: LpProblem, second: LpProblem, atol: float = 1e-12) -> bool:
    """Structural equality of two LPs up to floating tolerance."""
    if first.direction is not second.direction:
        return False
    if first.relations != second.relations or first.restrictions != second.restrictions:
        return False
    if first.constraint_matrix.shape != second.constraint_matrix.shape:
        return False
    return (
        np.allclose(first.objective, second.objective, rtol=atol, atol=atol)
        and np.allclose(first.constraint_matrix, second.constraint_matrix, rtol=atol, atol=atol)
        and np.allclose(first.rhs, second.rhs, rtol=atol, atol=atol)
    )
