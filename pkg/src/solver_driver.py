"""Top-level solve loop: feasibility gate, N-doubling refinement, certified gap."""
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.config import settings
from src.discretization import CoarseBounds, LevelResult, Partition, coarse_bounds, solve_level, tableau_bytes
from src.errors import InfeasibleDual, InfeasiblePrimal, ToleranceNotReached, UnboundedPrimal
from src.extension import extend_discrete
from src.feasibility import check_feasibility
from src.lp_core import LpStatus
from src.model import (
    MeasureSolution, ProblemData, complementary_slackness_residual, dual_problem, evaluate_objective,
)


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    GAP_NOT_CERTIFIED = "gap_not_certified"
    UNBOUNDED = "unbounded"


@dataclass
class LevelRecord:
    n: int
    prior_bound: float
    posterior_gap: float


@dataclass
class SolveReport:
    """Primal and dual measures with the bracket [v_low, v_high] that certifies them.

    The dual measure lives in dual time.
    """
    status: SolveStatus
    primal: Optional[MeasureSolution] = None
    dual: Optional[MeasureSolution] = None
    v_low: float = float("nan")
    v_high: float = float("nan")
    certified_gap: float = float("nan")
    prior_bounds_history: List[LevelRecord] = field(default_factory=list)
    n_final: int = 0
    slater_primal: float = float("nan")
    slater_dual: float = float("nan")
    certificate: Optional[np.ndarray] = None
    coarse: Optional[CoarseBounds] = None
    cs_residual: float = float("nan")
    runtime: float = 0.0

    @property
    def objective(self) -> float:
        return self.v_low

    def raise_for_status(self):
        """Raise the matching error unless the solve is certified optimal."""
        if self.status is SolveStatus.INFEASIBLE:
            raise InfeasiblePrimal("M-CLP is infeasible", self.certificate)
        if self.status is SolveStatus.DUAL_INFEASIBLE:
            raise InfeasibleDual("M-CLP* is infeasible", self.certificate)
        if self.status is SolveStatus.UNBOUNDED:
            raise UnboundedPrimal("M-CLP objective is unbounded")
        if self.status is SolveStatus.GAP_NOT_CERTIFIED:
            raise ToleranceNotReached(
                f"gap {self.certified_gap:.3e} not certified by N={self.n_final}", report=self
            )


def _gate(p: ProblemData, report: SolveReport) -> bool:
    primal_check = check_feasibility(p)
    dual_check = check_feasibility(dual_problem(p))
    report.slater_primal = primal_check.strict_margin
    report.slater_dual = dual_check.strict_margin
    logger.info(f"Slater margins: primal {report.slater_primal:.6g}, dual {report.slater_dual:.6g}")

    if not primal_check.feasible:
        report.status = SolveStatus.INFEASIBLE
        report.certificate = primal_check.certificate
        logger.debug(f"Farkas certificate for the Test-LP: {report.certificate}")
        return False
    if not dual_check.feasible:
        report.status = SolveStatus.DUAL_INFEASIBLE
        report.certificate = dual_check.certificate
        logger.debug(f"Farkas certificate for the dual Test-LP: {report.certificate}")
        return False
    for side, margin in (("primal", report.slater_primal), ("dual", report.slater_dual)):
        if margin <= settings.slater_warning_threshold:
            logger.warning(f"{side} Slater margin {margin:.3e} is not positive; gap certification may stall")
    return True


def _check_level(level: LevelResult, report: SolveReport, previous: Optional[Tuple[float, float]]):
    cert = level.certificate
    tol = settings.tol_obj * (1.0 + abs(cert.v_low))
    if cert.posterior_gap < -tol:
        logger.warning(f"N={level.partition.N}: dCLP1 value exceeds dCLP2 value by {-cert.posterior_gap:.3e}")
    if np.isfinite(cert.upsilon):
        if cert.upsilon < -tol:
            logger.error(f"N={level.partition.N}: negative Upsilon {cert.upsilon:.3e}")
        if cert.posterior_gap > cert.prior_bound + tol:
            logger.warning(f"N={level.partition.N}: posterior gap {cert.posterior_gap:.3e} "
                           f"above prior bound {cert.prior_bound:.3e}")
    if previous is not None:
        low, high = previous
        if cert.v_low < low - tol or cert.v_high > high + tol:
            logger.warning(f"N={level.partition.N}: bracket not monotone under refinement "
                           f"([{low:.12g}, {high:.12g}] -> [{cert.v_low:.12g}, {cert.v_high:.12g}])")
    md = level.outcomes.get("mdclp")
    if report.coarse is not None and md is not None and md.is_optimal:
        if not report.coarse.contains(md.objective_value, tol):
            logger.warning(f"N={level.partition.N}: mdCLP value {md.objective_value:.12g} outside "
                           f"[{report.coarse.v_lower:.12g}, {report.coarse.v_upper:.12g}]")


def _assemble(p: ProblemData, level: LevelResult, report: SolveReport):
    part = level.partition
    report.primal = extend_discrete(level.primal, part)
    report.dual = extend_discrete(level.dual, part.reversed())
    report.v_low = level.certificate.v_low
    report.v_high = level.certificate.v_high
    report.certified_gap = level.certificate.posterior_gap
    report.n_final = part.N
    report.cs_residual = complementary_slackness_residual(p, report.primal, report.dual)

    drift = abs(evaluate_objective(p, report.primal) - report.v_low)
    if drift > 1e-9 * (1.0 + abs(report.v_low)):
        logger.warning(f"extended primal objective differs from dCLP1 value by {drift:.3e}")


def solve(p: ProblemData, tol: Optional[float] = None, n_max: Optional[int] = None,
          workers: Optional[int] = None) -> SolveReport:
    """Solve an M-CLP and its dual to a certified gap.

    Args:
        p: Problem instance.
        tol: Relative gap tolerance; stop once v_high - v_low <= tol * (1 + |v_low|).
        n_max: Largest number of intervals to try (N = 1, 2, 4, ...).
        workers: Threads for the four LPs of each level.

    Returns:
        SolveReport; its status says whether the gap was certified.
    """
    tol = settings.default_tol if tol is None else tol
    n_max = settings.default_max_n if n_max is None else n_max
    if tol <= 0 or n_max < 1:
        raise ValueError(f"need tol > 0 and n_max >= 1, got tol={tol}, n_max={n_max}")

    start = time.time()
    report = SolveReport(status=SolveStatus.GAP_NOT_CERTIFIED)
    logger.info(f"Solving {p!r} to tol={tol:g}, n_max={n_max}")
    n_top = 1 << (n_max.bit_length() - 1)
    tableau_gb = tableau_bytes(p, n_top) / 2 ** 30
    if tableau_gb > settings.tableau_warning_gb:
        logger.warning(f"N={n_top} needs a dense tableau of about {tableau_gb:.1f} GB; "
                       f"lower n_max if the gap does not close earlier")
    if not _gate(p, report):
        logger.info(f"Stopped at feasibility gate: {report.status.value}")
        report.runtime = time.time() - start
        return report
    report.coarse = coarse_bounds(p)

    best: Optional[LevelResult] = None
    previous = None
    n = 1
    while n <= n_max:
        level = solve_level(p, Partition.uniform(p.horizon, n), workers)
        if level.outcomes["dclp1"].status is LpStatus.UNBOUNDED:
            logger.info(f"dCLP1 unbounded at N={n}")
            report.status = SolveStatus.UNBOUNDED
            report.n_final = n
            report.runtime = time.time() - start
            return report
        if level.certificate is None:
            statuses = {name: outcome.status.value for name, outcome in level.outcomes.items()}
            logger.error(f"N={n}: discretizations not both optimal: {statuses}")
            break

        cert = level.certificate
        report.prior_bounds_history.append(LevelRecord(n=n, prior_bound=cert.prior_bound,
                                                        posterior_gap=cert.posterior_gap))
        _check_level(level, report, previous)
        previous = (cert.v_low, cert.v_high)
        if best is None or cert.posterior_gap < best.certificate.posterior_gap:
            best = level

        logger.info(f"N={n}: [{cert.v_low:.12g}, {cert.v_high:.12g}] gap {cert.posterior_gap:.3e} "
                    f"(prior {cert.prior_bound:.3e})")
        if cert.posterior_gap <= tol * (1.0 + abs(cert.v_low)):
            report.status = SolveStatus.OPTIMAL
            best = level
            break
        n *= 2

    if best is not None:
        _assemble(p, best, report)
    if report.status is not SolveStatus.OPTIMAL:
        logger.warning(f"Gap not certified by N={n_max}; best gap {report.certified_gap:.3e}")
    report.runtime = time.time() - start
    logger.info(f"Finished with status {report.status.value} in {report.runtime:.3f}s")
    return report


def value_brackets(p: ProblemData, n_list: Sequence[int], workers: Optional[int] = None
                   ) -> List[Tuple[int, float, float]]:
    """(N, V(dCLP1), V(dCLP2)) on equidistant partitions for each N."""
    brackets = []
    for n in n_list:
        level = solve_level(p, Partition.uniform(p.horizon, n), workers)
        if level.certificate is None:
            statuses = {name: outcome.status.value for name, outcome in level.outcomes.items()}
            if level.outcomes["dclp1"].status is LpStatus.INFEASIBLE:
                raise InfeasiblePrimal(f"dCLP1 infeasible at N={n}", level.outcomes["dclp1"].certificate)
            if level.outcomes["dclp2"].status is LpStatus.INFEASIBLE:
                raise InfeasibleDual(f"dCLP2 infeasible at N={n}", level.outcomes["dclp2"].certificate)
            raise UnboundedPrimal(f"discretization not bounded at N={n}: {statuses}")
        brackets.append((n, level.certificate.v_low, level.certificate.v_high))
    return brackets
