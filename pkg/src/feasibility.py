"""Feasibility and strict feasibility of M-CLP through the finite Test-LP.

An M-CLP is feasible iff some (u, U) >= 0 satisfies A u <= beta and
A u + A U <= beta + b T; the measure with atom u at 0 and constant density
U/T is then feasible, since its slack is a convex combination of the two
corner slacks.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from src.config import settings
from src.errors import DimensionMismatch, InfeasibleWitness
from src.lp_core import Direction, LpProblem, LpStatus, Relation, SignRestriction, solve_lp
from src.model import MeasureSolution, ProblemData


@dataclass
class FeasibilityReport:
    """Outcome of the Test-LP and of the strict-margin LP."""
    feasible: bool
    strict_margin: float
    witness: Optional[Tuple[np.ndarray, np.ndarray]] = None
    certificate: Optional[np.ndarray] = None

    @property
    def strictly_feasible(self) -> bool:
        return self.strict_margin > 0


def _corner_rows(p: ProblemData) -> Tuple[np.ndarray, np.ndarray]:
    K, J = p.K, p.J
    matrix = np.block([[p.A, np.zeros((K, J))], [p.A, p.A]])
    rhs = np.concatenate([p.beta, p.beta + p.b_rate * p.horizon])
    return matrix, rhs


def build_test_lp(p: ProblemData) -> LpProblem:
    """max (gamma + c T)'u + gamma'U  s.t.  A u <= beta,  A u + A U <= beta + b T,  (u, U) >= 0."""
    matrix, rhs = _corner_rows(p)
    return LpProblem(
        direction=Direction.MAXIMIZE,
        objective=np.concatenate([p.gamma + p.c_rate * p.horizon, p.gamma]),
        constraint_matrix=matrix,
        rhs=rhs,
        relations=(Relation.LE,) * (2 * p.K),
        restrictions=(SignRestriction.P,) * (2 * p.J),
    )


def build_margin_lp(p: ProblemData) -> LpProblem:
    """max alpha subject to the Test-LP rows with a common margin alpha added to every row."""
    matrix, rhs = _corner_rows(p)
    return LpProblem(
        direction=Direction.MAXIMIZE,
        objective=np.concatenate([np.zeros(2 * p.J), [1.0]]),
        constraint_matrix=np.hstack([matrix, np.ones((2 * p.K, 1))]),
        rhs=rhs,
        relations=(Relation.LE,) * (2 * p.K),
        restrictions=(SignRestriction.P,) * (2 * p.J) + (SignRestriction.U,),
    )


def strict_margin(p: ProblemData) -> float:
    """Largest common slack of the Test-LP rows; +inf when unbounded."""
    outcome = solve_lp(build_margin_lp(p))
    if outcome.status is LpStatus.UNBOUNDED:
        return float("inf")
    return outcome.objective_value


def check_feasibility(p: ProblemData) -> FeasibilityReport:
    """Feasibility from the Test-LP, Slater margin from the margin LP."""
    outcome = solve_lp(build_test_lp(p))
    margin = strict_margin(p)

    if outcome.status is LpStatus.INFEASIBLE:
        logger.info(f"Test-LP infeasible for {p!r} (margin {margin:.6g})")
        return FeasibilityReport(feasible=False, strict_margin=margin, certificate=outcome.certificate)

    witness = (outcome.primal[: p.J].copy(), outcome.primal[p.J:].copy())
    logger.debug(f"Test-LP {outcome.status.value} for {p!r}, strict margin {margin:.6g}")
    return FeasibilityReport(feasible=True, strict_margin=margin, witness=witness)


def test_solution_to_measure(p: ProblemData, u, U, tol: Optional[float] = None) -> MeasureSolution:
    """Measure with atom u at 0 and density U/T on (0, T) from a Test-LP witness."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    U = np.asarray(U, dtype=np.float64).reshape(-1)
    if u.size != p.J or U.size != p.J:
        raise DimensionMismatch(f"witness sizes {u.size}, {U.size}; expected {p.J}")

    matrix, rhs = _corner_rows(p)
    point = np.concatenate([u, U])
    if tol is None:
        tol = settings.tol_feas * (1.0 + np.abs(rhs).max() + np.abs(point).max(initial=0.0))
    violation = max(float(np.max(matrix @ point - rhs)), float(-point.min()))
    if violation > tol:
        raise InfeasibleWitness(f"witness violates Test-LP by {violation:.3e}")

    return MeasureSolution(
        atom_start=np.maximum(u, 0.0),
        partition=np.array([0.0, p.horizon]),
        densities=(np.maximum(U, 0.0) / p.horizon)[None, :],
        atom_end=np.zeros(p.J),
    )


# Keep pytest from collecting it when imported into test modules.
test_solution_to_measure.__test__ = False
