"""Separated continuous LPs and their M-CLP extensions.

An SCLP instance

    max   int_0^T (gamma + (T - t) c)'u(t) + d'x(t) dt
    s.t.  int_0^t G u(s) ds + F x(t) <= alpha + a t
          H u(t) <= b,   x, u >= 0

is embedded in an M-CLP over U = [U*, U_s, U+, U-] (controls, slacks of
H u <= b, and the two monotone parts of the state x).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger

from src.config import settings
from src.discretization import Partition
from src.errors import AtomsPresent, DimensionMismatch, MalformedProblem
from src.extension import PiecewiseLinearFunction, StepFunction
from src.model import MeasureSolution, ProblemData, evaluate_objective


def _block(values, rows: int, cols: int, name: str) -> np.ndarray:
    matrix = np.array(values, dtype=np.float64)
    if matrix.size == 0:
        return np.zeros((rows, cols))
    if matrix.shape != (rows, cols):
        raise DimensionMismatch(f"{name} has shape {matrix.shape}, expected ({rows}, {cols})")
    return matrix


@dataclass(frozen=True, eq=False)
class SclpData:
    """SCLP instance; J2 and K2 may be zero."""
    G: np.ndarray
    F: np.ndarray
    H: np.ndarray
    alpha: np.ndarray
    a: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    c: np.ndarray
    d: np.ndarray
    horizon: float

    def __post_init__(self):
        vectors = {name: np.array(getattr(self, name), dtype=np.float64).reshape(-1)
                   for name in ("alpha", "a", "b", "gamma", "c", "d")}
        K1, J1 = vectors["alpha"].size, vectors["gamma"].size
        J2, K2 = vectors["d"].size, vectors["b"].size
        if J1 < 1:
            raise MalformedProblem("SCLP needs at least one control (gamma is empty)")
        if vectors["a"].size != K1:
            raise DimensionMismatch(f"a has length {vectors['a'].size}, expected {K1}")
        if vectors["c"].size != J1:
            raise DimensionMismatch(f"c has length {vectors['c'].size}, expected {J1}")
        if K1 + J2 + K2 == 0:
            raise MalformedProblem("SCLP has no constraints")
        G = _block(self.G, K1, J1, "G")
        F = _block(self.F, K1, J2, "F")
        H = _block(self.H, K2, J1, "H")
        horizon = float(self.horizon)
        if not np.isfinite(horizon) or horizon <= 0:
            raise MalformedProblem(f"horizon must be positive and finite, got {horizon}")
        for name, array in [("G", G), ("F", F), ("H", H)] + list(vectors.items()):
            if not np.all(np.isfinite(array)):
                raise MalformedProblem(f"{name} has non-finite entries")
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, "horizon", horizon)

    @property
    def K1(self) -> int:
        return self.alpha.size

    @property
    def J1(self) -> int:
        return self.gamma.size

    @property
    def J2(self) -> int:
        return self.d.size

    @property
    def K2(self) -> int:
        return self.b.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, SclpData):
            return NotImplemented
        names = ("G", "F", "H", "alpha", "a", "b", "gamma", "c", "d")
        return self.horizon == other.horizon and all(
            getattr(self, n).shape == getattr(other, n).shape and np.array_equal(getattr(self, n), getattr(other, n))
            for n in names
        )

    def __repr__(self):
        return f"<SclpData(K1={self.K1}, J1={self.J1}, J2={self.J2}, K2={self.K2}, T={self.horizon})>"


@dataclass
class SclpSolution:
    """SCLP controls u (step) and state x (piecewise linear).

    objective is the value of the M-CLP extension, which the translation
    preserves; integral_objective is int (gamma + (T-t) c)'u + d'x dt.
    """
    u: StepFunction
    x: PiecewiseLinearFunction
    objective: float
    integral_objective: float

    @property
    def partition(self) -> Partition:
        return self.u.partition


def sclp_to_mclp(s: SclpData) -> ProblemData:
    """The M-CLP extension: row blocks (K1, J2, K2, K2), column blocks (J1, K2, J2, J2)."""
    K1, J1, J2, K2 = s.K1, s.J1, s.J2, s.K2
    I_J2, I_K2 = np.eye(J2), np.eye(K2)
    A = np.block([
        [s.G, np.zeros((K1, K2)), s.F, -s.F],
        [np.zeros((J2, J1)), np.zeros((J2, K2)), -I_J2, I_J2],
        [s.H, I_K2, np.zeros((K2, J2)), np.zeros((K2, J2))],
        [-s.H, -I_K2, np.zeros((K2, J2)), np.zeros((K2, J2))],
    ])
    return ProblemData(
        A=A,
        beta=np.concatenate([s.alpha, np.zeros(J2 + 2 * K2)]),
        b_rate=np.concatenate([s.a, np.zeros(J2), s.b, -s.b]),
        gamma=np.concatenate([s.gamma, np.zeros(K2), s.d, -s.d]),
        c_rate=np.concatenate([s.c, np.zeros(K2 + 2 * J2)]),
        horizon=s.horizon,
    )


def extract_sclp(p: ProblemData, k1: int, j1: int, j2: int, k2: int) -> SclpData:
    """Read the SCLP blocks back out of an M-CLP extension."""
    if p.K != k1 + j2 + 2 * k2 or p.J != j1 + k2 + 2 * j2:
        raise DimensionMismatch(f"{p!r} does not have the block sizes K1={k1}, J1={j1}, J2={j2}, K2={k2}")
    F_cols = slice(j1 + k2, j1 + k2 + j2)
    H_rows = slice(k1 + j2, k1 + j2 + k2)
    s = SclpData(
        G=p.A[:k1, :j1],
        F=p.A[:k1, F_cols],
        H=p.A[H_rows, :j1],
        alpha=p.beta[:k1],
        a=p.b_rate[:k1],
        b=p.b_rate[H_rows],
        gamma=p.gamma[:j1],
        c=p.c_rate[:j1],
        d=p.gamma[F_cols],
        horizon=p.horizon,
    )
    if sclp_to_mclp(s) != p:
        raise MalformedProblem(f"{p!r} is not the M-CLP extension of an SCLP")
    return s


def sclp_dual(s: SclpData) -> SclpData:
    """The symmetric SCLP dual, rewritten as an SCLP (maximization) instance.

    p plays the role of the control and q that of the state.
    """
    return SclpData(
        G=-s.G.T,
        F=-s.H.T,
        H=-s.F.T,
        alpha=-s.gamma,
        a=-s.c,
        b=-s.d,
        gamma=-s.alpha,
        c=-s.a,
        d=-s.b,
        horizon=s.horizon,
    )


def mclp_solution_to_sclp(s: SclpData, sol: MeasureSolution, tol: Optional[float] = None) -> SclpSolution:
    """u = density of U*, x = U+ - U- on the solution's partition.

    Raises:
        AtomsPresent: if U* or U_s carry atoms above tol.
    """
    J1, K2, J2 = s.J1, s.K2, s.J2
    if sol.dimension != J1 + K2 + 2 * J2:
        raise DimensionMismatch(f"solution has dimension {sol.dimension}, expected {J1 + K2 + 2 * J2}")
    if tol is None:
        tol = settings.atom_tolerance * (1.0 + float(sol.total_mass().sum()))

    continuous = slice(0, J1 + K2)
    atoms = np.concatenate([
        sol.atom_start[continuous], sol.atom_end[continuous], sol.atom_masses[:, continuous].reshape(-1),
    ])
    largest = float(atoms.max(initial=0.0))
    if largest > tol:
        raise AtomsPresent(f"atom of mass {largest:.3e} in the control or slack blocks")

    part = Partition(sol.partition)
    cumulative = sol.cumulative_many(part.breakpoints)
    plus = slice(J1 + K2, J1 + K2 + J2)
    minus = slice(J1 + K2 + J2, J1 + K2 + 2 * J2)
    states = cumulative[:, plus] - cumulative[:, minus]
    u = StepFunction(sol.densities[:, :J1], part)
    x = PiecewiseLinearFunction(states, part)

    T = s.horizon
    weights = s.gamma[None, :] + (T - part.midpoints)[:, None] * s.c[None, :]
    control_part = float(np.sum(weights * sol.densities[:, :J1] * part.lengths[:, None]))
    state_part = float(np.sum(0.5 * part.lengths[:, None] * (states[:-1] + states[1:]) * s.d[None, :]))
    objective = evaluate_objective(sclp_to_mclp(s), sol)
    logger.debug(f"Translated M-CLP solution to SCLP: objective {objective:.12g}")
    return SclpSolution(u=u, x=x, objective=objective, integral_objective=control_part + state_part)
