"""Piecewise extensions of grid values and the discrete <-> measure conversions."""
from typing import Optional

import numpy as np

from src.config import settings
from src.discretization import DiscreteSolution, Partition, build_dclp1
from src.errors import DimensionMismatch, InfeasibleDiscrete, InfeasibleMeasure, LengthMismatch
from src.model import MeasureSolution, ProblemData, check_feasible_measure


class StepFunction:
    """f(t) = values[i] on [t_{i-1}, t_i); f(T) is the last interval's value."""

    def __init__(self, values, part: Partition):
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != part.N:
            raise LengthMismatch(f"{values.shape[0]} values for {part.N} intervals")
        self.values = values
        self.partition = part

    def __call__(self, t):
        idx = np.clip(np.searchsorted(self.partition.breakpoints, t, side="right") - 1, 0, self.partition.N - 1)
        return self.values[idx]


class PiecewiseLinearFunction:
    """Linear interpolation of values[i] at t_i; exact at every breakpoint."""

    def __init__(self, values, part: Partition):
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != part.N + 1:
            raise LengthMismatch(f"{values.shape[0]} values for {part.N + 1} breakpoints")
        self.values = values
        self.partition = part

    def __call__(self, t):
        points = self.partition.breakpoints
        t = np.asarray(t, dtype=np.float64)
        idx = np.clip(np.searchsorted(points, t, side="right") - 1, 0, self.partition.N - 1)
        weight = (t - points[idx]) / (points[idx + 1] - points[idx])
        if self.values.ndim > 1:
            weight = weight[..., None]
        left, right = self.values[idx], self.values[idx + 1]
        return np.where(weight >= 1.0, right, left + weight * (right - left))


def piecewise_constant_extension(values, part: Partition) -> StepFunction:
    return StepFunction(values, part)


def piecewise_linear_extension(values, part: Partition) -> PiecewiseLinearFunction:
    return PiecewiseLinearFunction(values, part)


def extend_discrete(sol: DiscreteSolution, part: Partition, tol: Optional[float] = None) -> MeasureSolution:
    """Measure with the discrete atoms at 0 and T and density dU^n / (t_n - t_{n-1}).

    For a dual-side solution pass the dual-time partition.
    """
    if sol.n_intervals != part.N:
        raise LengthMismatch(f"solution has {sol.n_intervals} intervals, partition has {part.N}")
    parts = [sol.atom_start, sol.interval_increments, sol.atom_end]
    if tol is None:
        scale = 1.0 + max(np.abs(x).max(initial=0.0) for x in parts + [sol.slacks])
        tol = settings.extension_tol * scale
    worst = min(float(x.min(initial=0.0)) for x in parts + [sol.slacks])
    if worst < -tol:
        raise InfeasibleDiscrete(f"discrete solution has a negative component {worst:.3e}")

    return MeasureSolution(
        atom_start=np.maximum(sol.atom_start, 0.0),
        partition=part.breakpoints,
        densities=np.maximum(sol.interval_increments, 0.0) / part.lengths[:, None],
        atom_end=np.maximum(sol.atom_end, 0.0),
    )


def restrict_measure(sol: MeasureSolution, part: Partition, p: Optional[ProblemData] = None) -> DiscreteSolution:
    """Integrate a measure over the intervals [t_{n-1}, t_n) of a partition.

    The atom at 0 stays the start atom and the atom at T the end atom; an atom
    at an interior breakpoint t_n is counted in interval n + 1. With p given
    the measure is checked for feasibility first and the result carries the
    dCLP1 slacks and value; otherwise slacks are empty and value is NaN.
    """
    if abs(sol.horizon - part.horizon) > 1e-12 * part.horizon:
        raise DimensionMismatch(f"measure horizon {sol.horizon} differs from partition end {part.horizon}")
    if p is not None:
        feasibility = check_feasible_measure(p, sol)
        if not feasibility.feasible:
            raise InfeasibleMeasure(
                f"measure violates constraints by {feasibility.worst_violation:.3e} at t={feasibility.worst_t}"
            )

    points = part.breakpoints
    lower = np.vstack([sol.cumulative(0.0)[None, :], sol.cumulative_many(points[1:-1], left=True)])
    upper = sol.cumulative_many(points[1:], left=True)
    increments = upper - lower
    vector = np.concatenate([sol.atom_start, increments.reshape(-1), sol.atom_end])

    if p is None:
        return DiscreteSolution(
            atom_start=sol.atom_start.copy(),
            interval_increments=increments,
            atom_end=sol.atom_end.copy(),
            slacks=np.zeros((part.N + 2, 0)),
            value=float("nan"),
        )
    return DiscreteSolution.from_vector(build_dclp1(p, part), vector, part.N, p.J)
