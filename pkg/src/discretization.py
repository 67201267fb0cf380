"""Finite LP discretizations of M-CLP and M-CLP* over a time partition.

Every discretization is a staircase LP over increments: an atom at the
start, one increment per interval, an atom at the end, and N + 2 cumulative
row blocks evaluated at t_0, t_1, ..., t_N and again at T. The primal side
lives in primal time; the dual side is built the same way in dual time on
the reversed partition.

    dCLP1      primal, <= rows, midpoint weights
    dCLP2      dual,   >= rows, midpoint weights
    mdCLP      primal, <= rows, left-endpoint weights  } an LP-dual pair
    mdCLP*     dual,   >= rows, left-endpoint weights  }

dCLP1 and dCLP2 bracket the continuous value; the mdCLP pair prices the
discretization error.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.config import settings
from src.errors import InfeasibleDual, InfeasiblePrimal, InvalidMeasure, NotEquidistant, NumericalFailure
from src.lp_core import (
    Direction, LpOutcome, LpProblem, LpStatus, Relation, SignRestriction,
    lp_allclose, lp_dual, permute_lp, solve_lp,
)
from src.model import ProblemData

MIDPOINT = "midpoint"
LEFT = "left"


@dataclass(frozen=True, eq=False)
class Partition:
    """Breakpoints 0 = t_0 < t_1 < ... < t_N = T."""
    breakpoints: np.ndarray
    equidistant: bool = field(init=False)

    def __post_init__(self):
        points = np.array(self.breakpoints, dtype=np.float64).reshape(-1)
        if points.size < 2 or points[0] != 0.0 or np.any(np.diff(points) <= 0):
            raise InvalidMeasure("partition must start at 0 and be strictly increasing")
        points.setflags(write=False)
        n = points.size - 1
        uniform = np.arange(n + 1) * (points[-1] / n)
        object.__setattr__(self, "breakpoints", points)
        object.__setattr__(self, "equidistant", bool(np.all(np.abs(points - uniform) <= 1e-12 * points[-1])))

    @classmethod
    def uniform(cls, horizon: float, n: int) -> "Partition":
        """Equidistant partition with N intervals of length 2 * epsilon = T / N."""
        if n < 1:
            raise ValueError(f"N must be >= 1, got {n}")
        return cls(np.linspace(0.0, horizon, n + 1))

    @classmethod
    def from_breakpoints(cls, points: Sequence[float]) -> "Partition":
        return cls(np.asarray(points, dtype=np.float64))

    @property
    def N(self) -> int:
        return self.breakpoints.size - 1

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.breakpoints[1:] + self.breakpoints[:-1])

    @property
    def epsilon(self) -> float:
        if not self.equidistant:
            raise NotEquidistant("epsilon is defined for equidistant partitions only")
        return self.horizon / (2 * self.N)

    def reversed(self) -> "Partition":
        """The same partition seen in dual time s = T - t."""
        T = self.horizon
        points = T - self.breakpoints[::-1]
        points[0], points[-1] = 0.0, T
        return Partition(points)

    def refine(self) -> "Partition":
        """Bisect every interval."""
        points = np.empty(2 * self.N + 1)
        points[0::2] = self.breakpoints
        points[1::2] = self.midpoints
        return Partition(points)

    def __repr__(self):
        return f"<Partition(N={self.N}, T={self.horizon}, equidistant={self.equidistant})>"


@dataclass
class DiscreteSolution:
    """(atom at start, interval increments, atom at end) with staircase slacks.

    Dual-side solutions are indexed in dual time: atom_start is the dual atom
    at primal time T.
    """
    atom_start: np.ndarray
    interval_increments: np.ndarray
    atom_end: np.ndarray
    slacks: np.ndarray
    value: float
    side: str = "primal"

    @property
    def n_intervals(self) -> int:
        return self.interval_increments.shape[0]

    @property
    def dimension(self) -> int:
        return self.atom_start.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.atom_start, self.interval_increments.reshape(-1), self.atom_end])

    def rates(self, part: Partition) -> np.ndarray:
        """Densities u^n = dU^n / (t_n - t_{n-1})."""
        return self.interval_increments / part.lengths[:, None]

    @classmethod
    def from_vector(cls, lp: LpProblem, vector: np.ndarray, n_intervals: int, dimension: int,
                    side: str = "primal") -> "DiscreteSolution":
        vector = np.asarray(vector, dtype=np.float64)
        rows = lp.n_rows // (n_intervals + 2)
        residual = lp.rhs - lp.constraint_matrix @ vector
        if lp.relations and lp.relations[0] is Relation.GE:
            residual = -residual
        d = dimension
        return cls(
            atom_start=vector[:d].copy(),
            interval_increments=vector[d: d * (n_intervals + 1)].reshape(n_intervals, d).copy(),
            atom_end=vector[d * (n_intervals + 1):].copy(),
            slacks=residual.reshape(n_intervals + 2, rows),
            value=float(lp.objective @ vector),
            side=side,
        )

    @classmethod
    def from_outcome(cls, lp: LpProblem, outcome: LpOutcome, n_intervals: int, dimension: int,
                     side: str = "primal") -> "DiscreteSolution":
        return cls.from_vector(lp, outcome.primal, n_intervals, dimension, side)


@dataclass
class GapBound:
    upsilon: float
    prior_bound: float


@dataclass
class GapCertificate:
    """Bracket [v_low, v_high] of one level with the a-priori gap predictor."""
    v_low: float
    v_high: float
    posterior_gap: float
    upsilon: float
    prior_bound: float


@dataclass
class CoarseBounds:
    v_lower: float
    v_upper: float

    def contains(self, value: float, tol: float) -> bool:
        return bool(self.v_lower - tol <= value <= self.v_upper + tol)


def _staircase_lp(matrix: np.ndarray, r0: np.ndarray, r1: np.ndarray, g: np.ndarray, h: np.ndarray,
                  part: Partition, relation: Relation, direction: Direction, weights: str) -> LpProblem:
    """Cumulative-row LP with rhs r0 + r1 * tau_n and weights g + (T - tau) h."""
    rows, d = matrix.shape
    n = part.N
    T = part.horizon
    times = np.concatenate([part.breakpoints, [T]])
    tau = part.midpoints if weights == MIDPOINT else part.breakpoints[:-1]
    objective = np.concatenate([
        g + T * h,
        (g[None, :] + (T - tau)[:, None] * h[None, :]).reshape(-1),
        g,
    ])
    return LpProblem(
        direction=direction,
        objective=objective,
        constraint_matrix=np.kron(np.tril(np.ones((n + 2, n + 2))), matrix),
        rhs=(r0[None, :] + times[:, None] * r1[None, :]).reshape(-1),
        relations=(relation,) * (rows * (n + 2)),
        restrictions=(SignRestriction.P,) * (d * (n + 2)),
    )


def _primal_lp(p: ProblemData, part: Partition, weights: str) -> LpProblem:
    return _staircase_lp(p.A, p.beta, p.b_rate, p.gamma, p.c_rate, part,
                         Relation.LE, Direction.MAXIMIZE, weights)


def _dual_lp(p: ProblemData, part: Partition, weights: str) -> LpProblem:
    return _staircase_lp(p.A.T, p.gamma, p.c_rate, p.beta, p.b_rate, part.reversed(),
                         Relation.GE, Direction.MINIMIZE, weights)


def _check_horizon(p: ProblemData, part: Partition):
    if abs(part.horizon - p.horizon) > 1e-12 * p.horizon:
        raise InvalidMeasure(f"partition ends at {part.horizon}, expected T={p.horizon}")


def build_dclp1(p: ProblemData, part: Partition) -> LpProblem:
    """Discretized M-CLP with midpoint objective weights gamma + (T - t_mid) c.

    Variables are the start atom, the N interval increments and the end atom,
    all non-negative; rows are A U(t_n) <= beta + b t_n for n = 0..N and
    A U(T) <= beta + b T including the end atom.
    """
    _check_horizon(p, part)
    return _primal_lp(p, part, MIDPOINT)


def build_dclp2(p: ProblemData, part: Partition) -> LpProblem:
    """Discretized M-CLP* in dual time with midpoint weights beta + t_mid b."""
    _check_horizon(p, part)
    return _dual_lp(p, part, MIDPOINT)


def tableau_bytes(p: ProblemData, n: int) -> int:
    """Upper bound on the dense simplex tableau of the larger of dCLP1 and dCLP2 at N = n.

    Counts structural columns plus one slack and one artificial column per row.
    """
    primal_rows, dual_rows = (n + 2) * p.K, (n + 2) * p.J
    primal = primal_rows * (dual_rows + 2 * primal_rows)
    dual = dual_rows * (primal_rows + 2 * dual_rows)
    return 8 * max(primal, dual)


def _block_reversal(n_blocks: int, size: int) -> np.ndarray:
    return np.concatenate([np.arange(size) + k * size for k in reversed(range(n_blocks))])


def build_mdclp_pair(p: ProblemData, part: Partition) -> Tuple[LpProblem, LpProblem]:
    """mdCLP (weights gamma + (T - t_{n-1}) c) and mdCLP* (weights beta + t_n b).

    The two are LP duals of each other once row and column blocks are
    reversed; this is checked on every build.
    """
    _check_horizon(p, part)
    if not part.equidistant:
        raise NotEquidistant("mdCLP is defined on equidistant partitions only")
    primal = _primal_lp(p, part, LEFT)
    dual = _dual_lp(p, part, LEFT)

    n_blocks = part.N + 2
    dualized = permute_lp(lp_dual(primal), _block_reversal(n_blocks, p.J), _block_reversal(n_blocks, p.K))
    scale = 1.0 + p.horizon * max(np.abs(p.b_rate).max(), np.abs(p.c_rate).max()) \
        + max(np.abs(p.beta).max(), np.abs(p.gamma).max())
    if not lp_allclose(dualized, dual, atol=1e-12 * scale):
        raise NumericalFailure("mdCLP and mdCLP* are not an LP-dual pair")
    return primal, dual


def gap_bound(c: np.ndarray, b: np.ndarray, dU: np.ndarray, dP: np.ndarray, epsilon: float) -> GapBound:
    """Upsilon(N) = c' sum dU* - b' sum dP* and the a-priori bound Upsilon(N) * epsilon."""
    upsilon = float(np.asarray(c) @ np.asarray(dU).reshape(-1, len(c)).sum(axis=0)
                    - np.asarray(b) @ np.asarray(dP).reshape(-1, len(b)).sum(axis=0))
    return GapBound(upsilon=upsilon, prior_bound=upsilon * epsilon)


def coarse_bounds(p: ProblemData) -> CoarseBounds:
    """Bounds V_L <= V(M-CLP) <= V_U from the mdCLP pair on a single interval."""
    part = Partition.uniform(p.horizon, 1)
    primal_lp, dual_lp = build_mdclp_pair(p, part)
    primal = solve_lp(primal_lp)
    dual = solve_lp(dual_lp)
    if primal.status is LpStatus.INFEASIBLE:
        raise InfeasiblePrimal("mdCLP on one interval is infeasible", primal.certificate)
    if dual.status is LpStatus.INFEASIBLE:
        raise InfeasibleDual("mdCLP* on one interval is infeasible", dual.certificate)

    T = p.horizon
    J, K = p.J, p.K
    if primal.status is LpStatus.OPTIMAL:
        u, U, u_end = primal.primal[:J], primal.primal[J:2 * J], primal.primal[2 * J:]
        c_plus, c_minus = np.maximum(p.c_rate, 0.0), np.maximum(-p.c_rate, 0.0)
        v_lower = float((p.gamma + p.c_rate * T) @ u + p.gamma @ U
                        + (c_plus * T / 2 - c_minus * T) @ U + p.gamma @ u_end)
    else:
        v_lower = float("inf")
    if dual.status is LpStatus.OPTIMAL:
        q, P, q_end = dual.primal[:K], dual.primal[K:2 * K], dual.primal[2 * K:]
        b_plus, b_minus = np.maximum(p.b_rate, 0.0), np.maximum(-p.b_rate, 0.0)
        v_upper = float((p.beta + p.b_rate * T) @ q + p.beta @ P
                        + (b_plus * T - b_minus * T / 2) @ P + p.beta @ q_end)
    else:
        v_upper = float("-inf")
    logger.debug(f"Coarse bounds for {p!r}: [{v_lower:.12g}, {v_upper:.12g}]")
    return CoarseBounds(v_lower=v_lower, v_upper=v_upper)


@dataclass
class LevelResult:
    """The four LP solves of one partition and what they certify."""
    partition: Partition
    outcomes: Dict[str, LpOutcome]
    primal: Optional[DiscreteSolution] = None
    dual: Optional[DiscreteSolution] = None
    certificate: Optional[GapCertificate] = None


def _solve_all(lps: Dict[str, LpProblem], workers: int) -> Dict[str, LpOutcome]:
    if workers <= 1 or len(lps) == 1:
        return {name: solve_lp(lp) for name, lp in lps.items()}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {name: pool.submit(solve_lp, lp) for name, lp in lps.items()}
        return {name: future.result() for name, future in futures.items()}


def solve_level(p: ProblemData, part: Partition, workers: Optional[int] = None) -> LevelResult:
    """Solve dCLP1, dCLP2 and (on equidistant partitions) the mdCLP pair."""
    workers = settings.lp_workers if workers is None else workers
    lps = {"dclp1": build_dclp1(p, part), "dclp2": build_dclp2(p, part)}
    if part.equidistant:
        lps["mdclp"], lps["mdclp_star"] = build_mdclp_pair(p, part)
    outcomes = _solve_all(lps, workers)

    result = LevelResult(partition=part, outcomes=outcomes)
    if outcomes["dclp1"].is_optimal:
        result.primal = DiscreteSolution.from_outcome(lps["dclp1"], outcomes["dclp1"], part.N, p.J, "primal")
    if outcomes["dclp2"].is_optimal:
        result.dual = DiscreteSolution.from_outcome(lps["dclp2"], outcomes["dclp2"], part.N, p.K, "dual")

    if result.primal is not None and result.dual is not None:
        upsilon, prior = float("nan"), float("nan")
        if part.equidistant and outcomes["mdclp"].is_optimal and outcomes["mdclp_star"].is_optimal:
            md = DiscreteSolution.from_outcome(lps["mdclp"], outcomes["mdclp"], part.N, p.J)
            md_star = DiscreteSolution.from_outcome(lps["mdclp_star"], outcomes["mdclp_star"], part.N, p.K, "dual")
            bound = gap_bound(p.c_rate, p.b_rate, md.interval_increments, md_star.interval_increments,
                              part.epsilon)
            upsilon, prior = bound.upsilon, bound.prior_bound
        result.certificate = GapCertificate(
            v_low=result.primal.value,
            v_high=result.dual.value,
            posterior_gap=result.dual.value - result.primal.value,
            upsilon=upsilon,
            prior_bound=prior,
        )
    return result
