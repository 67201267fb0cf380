"""M-CLP instances and measure-valued solutions.

An instance (A, beta, b, gamma, c, T) defines

    max   int_[0,T] (gamma + (T - t) c)' dU(t)
    s.t.  A U(t) <= beta + b t,   0 <= t <= T,

over non-decreasing right-continuous U with U(0-) = 0, together with its
symmetric dual over P in reversed time. Solutions are represented by an atom
at 0, a piecewise-constant density over a partition of (0, T), an atom at T,
and optionally atoms at interior instants. Every quantity here is evaluated in
closed form; nothing is integrated numerically.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from src.config import settings
from src.errors import DimensionMismatch, InvalidMeasure, MalformedProblem, TOutOfRange


def _vector(values, name: str) -> np.ndarray:
    vector = np.array(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(vector)):
        raise MalformedProblem(f"{name} has non-finite entries")
    return vector


def _freeze(*arrays: np.ndarray):
    for array in arrays:
        array.setflags(write=False)


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Constant-coefficient M-CLP instance."""
    A: np.ndarray
    beta: np.ndarray
    b_rate: np.ndarray
    gamma: np.ndarray
    c_rate: np.ndarray
    horizon: float

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise MalformedProblem(f"A must be a non-empty K x J matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise MalformedProblem("A has non-finite entries")
        K, J = A.shape
        beta = _vector(self.beta, "beta")
        b_rate = _vector(self.b_rate, "b_rate")
        gamma = _vector(self.gamma, "gamma")
        c_rate = _vector(self.c_rate, "c_rate")
        for name, vector, size in (("beta", beta, K), ("b_rate", b_rate, K),
                                   ("gamma", gamma, J), ("c_rate", c_rate, J)):
            if vector.size != size:
                raise DimensionMismatch(f"{name} has length {vector.size}, expected {size}")
        horizon = float(self.horizon)
        if not np.isfinite(horizon) or horizon <= 0:
            raise MalformedProblem(f"horizon must be positive and finite, got {horizon}")

        _freeze(A, beta, b_rate, gamma, c_rate)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "b_rate", b_rate)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "c_rate", c_rate)
        object.__setattr__(self, "horizon", horizon)

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def J(self) -> int:
        return self.A.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProblemData):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.A.shape == other.A.shape
            and all(np.array_equal(getattr(self, name), getattr(other, name))
                    for name in ("A", "beta", "b_rate", "gamma", "c_rate"))
        )

    def __repr__(self):
        return f"<ProblemData(K={self.K}, J={self.J}, T={self.horizon})>"


@dataclass(frozen=True, eq=False)
class MeasureSolution:
    """Control measure: atoms at 0 and T, step density on a partition, optional interior atoms.

    Dual-side solutions use the same type and live in dual time.
    """
    atom_start: np.ndarray
    partition: np.ndarray
    densities: np.ndarray
    atom_end: np.ndarray
    atom_times: Optional[np.ndarray] = None
    atom_masses: Optional[np.ndarray] = None

    def __post_init__(self):
        atom_start = np.array(self.atom_start, dtype=np.float64).reshape(-1)
        atom_end = np.array(self.atom_end, dtype=np.float64).reshape(-1)
        partition = np.array(self.partition, dtype=np.float64).reshape(-1)
        d = atom_start.size
        if d < 1 or atom_end.size != d:
            raise InvalidMeasure(f"atom vectors have sizes {atom_start.size} and {atom_end.size}")
        if partition.size < 2 or partition[0] != 0.0 or np.any(np.diff(partition) <= 0):
            raise InvalidMeasure("partition must start at 0 and be strictly increasing")
        n = partition.size - 1
        densities = np.array(self.densities, dtype=np.float64)
        if densities.size != n * d:
            raise InvalidMeasure(f"expected {n} density vectors of length {d}")
        densities = densities.reshape(n, d)

        atom_times = np.zeros(0) if self.atom_times is None else np.array(self.atom_times, dtype=np.float64).reshape(-1)
        if self.atom_masses is None:
            atom_masses = np.zeros((atom_times.size, d))
        else:
            atom_masses = np.array(self.atom_masses, dtype=np.float64)
            if atom_masses.size != atom_times.size * d:
                raise InvalidMeasure(f"expected {atom_times.size} atom mass vectors of length {d}")
            atom_masses = atom_masses.reshape(atom_times.size, d)
        horizon = partition[-1]
        if atom_times.size and (atom_times[0] <= 0 or atom_times[-1] >= horizon or np.any(np.diff(atom_times) <= 0)):
            raise InvalidMeasure("interior atom times must be strictly increasing inside (0, T)")

        parts = (atom_start, densities, atom_end, atom_masses)
        if not all(np.all(np.isfinite(x)) for x in parts):
            raise InvalidMeasure("measure has non-finite entries")
        scale = 1.0 + max(np.abs(x).max(initial=0.0) for x in parts)
        tolerance = settings.tol_feas * scale
        for x in parts:
            if x.size and x.min() < -tolerance:
                raise InvalidMeasure(f"negative mass {x.min():.3e} in measure")
            np.maximum(x, 0.0, out=x)

        _freeze(atom_start, partition, densities, atom_end, atom_times, atom_masses)
        object.__setattr__(self, "atom_start", atom_start)
        object.__setattr__(self, "partition", partition)
        object.__setattr__(self, "densities", densities)
        object.__setattr__(self, "atom_end", atom_end)
        object.__setattr__(self, "atom_times", atom_times)
        object.__setattr__(self, "atom_masses", atom_masses)

    @classmethod
    def zero(cls, dimension: int, horizon: float) -> "MeasureSolution":
        return cls(
            atom_start=np.zeros(dimension),
            partition=np.array([0.0, horizon]),
            densities=np.zeros((1, dimension)),
            atom_end=np.zeros(dimension),
        )

    @property
    def dimension(self) -> int:
        return self.atom_start.size

    @property
    def horizon(self) -> float:
        return float(self.partition[-1])

    @property
    def n_intervals(self) -> int:
        return self.partition.size - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.partition)

    @property
    def increments(self) -> np.ndarray:
        """Mass of the density part on each interval."""
        return self.densities * self.lengths[:, None]

    def knots(self) -> np.ndarray:
        """Partition points and interior atom times, sorted."""
        return np.union1d(self.partition, self.atom_times)

    def total_mass(self) -> np.ndarray:
        return self.atom_start + self.increments.sum(axis=0) + self.atom_masses.sum(axis=0) + self.atom_end

    def interior_atom_mass(self) -> float:
        return float(self.atom_masses.sum())

    def cumulative_many(self, times: Union[float, Sequence[float], np.ndarray], left: bool = False) -> np.ndarray:
        """U(t) (or U(t-) when left) for each t; returns shape (len(times), dimension)."""
        t = np.atleast_1d(np.asarray(times, dtype=np.float64))
        lengths = self.lengths
        idx = np.clip(np.searchsorted(self.partition, t, side="right") - 1, 0, self.n_intervals - 1)
        before = np.vstack([np.zeros(self.dimension), np.cumsum(self.increments, axis=0)])
        inside = np.clip(t - self.partition[idx], 0.0, lengths[idx])
        values = before[idx] + inside[:, None] * self.densities[idx]

        if left:
            values += np.where(t > 0.0, 1.0, 0.0)[:, None] * self.atom_start
            passed = np.searchsorted(self.atom_times, t, side="left")
        else:
            values += np.where(t >= 0.0, 1.0, 0.0)[:, None] * self.atom_start
            values += np.where(t >= self.horizon, 1.0, 0.0)[:, None] * self.atom_end
            passed = np.searchsorted(self.atom_times, t, side="right")
        if self.atom_times.size:
            masses = np.vstack([np.zeros(self.dimension), np.cumsum(self.atom_masses, axis=0)])
            values += masses[passed]
        return values

    def cumulative(self, t: float) -> np.ndarray:
        """Right-continuous cumulative U(t); atoms at t are included."""
        return self.cumulative_many([t])[0]

    def cumulative_left(self, t: float) -> np.ndarray:
        """Left limit U(t-); U(0-) = 0 and U(T-) excludes the atom at T."""
        return self.cumulative_many([t], left=True)[0]


@dataclass(frozen=True)
class TrajectoryPoint:
    """Cumulative control and slack at one instant."""
    t: float
    U: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class MeasureFeasibility:
    feasible: bool
    worst_violation: float
    worst_t: float

    def __bool__(self) -> bool:
        return bool(self.feasible)


def _check_measure(p: ProblemData, sol: MeasureSolution, dimension: int):
    if sol.dimension != dimension:
        raise DimensionMismatch(f"measure has dimension {sol.dimension}, expected {dimension}")
    if abs(sol.horizon - p.horizon) > 1e-12 * p.horizon:
        raise DimensionMismatch(f"measure horizon {sol.horizon} differs from T={p.horizon}")


def dual_problem(p: ProblemData) -> ProblemData:
    """M-CLP* of p rewritten as an M-CLP: (-A', -gamma, -c, -beta, -b, T).

    Its value is -V(M-CLP*(p)) and its feasible set is that of M-CLP*(p).
    """
    return ProblemData(
        A=-p.A.T,
        beta=-p.gamma,
        b_rate=-p.c_rate,
        gamma=-p.beta,
        c_rate=-p.b_rate,
        horizon=p.horizon,
    )


def evaluate_objective(p: ProblemData, sol: MeasureSolution) -> float:
    """Closed-form objective of a primal measure."""
    _check_measure(p, sol, p.J)
    T = p.horizon
    midpoints = 0.5 * (sol.partition[1:] + sol.partition[:-1])
    weights = p.gamma[None, :] + (T - midpoints)[:, None] * p.c_rate[None, :]
    value = (p.gamma + p.c_rate * T) @ sol.atom_start
    value += float(np.sum(weights * sol.increments))
    value += p.gamma @ sol.atom_end
    if sol.atom_times.size:
        atom_weights = p.gamma[None, :] + (T - sol.atom_times)[:, None] * p.c_rate[None, :]
        value += float(np.sum(atom_weights * sol.atom_masses))
    return float(value)


def dual_objective(p: ProblemData, dual: MeasureSolution) -> float:
    """M-CLP* objective int (beta + (T - t) b)' dP of a dual-time measure."""
    return -evaluate_objective(dual_problem(p), dual)


def slack_many(p: ProblemData, sol: MeasureSolution, times, left: bool = False):
    """Cumulative values and slacks beta + b t - A U(t) at many times."""
    t = np.atleast_1d(np.asarray(times, dtype=np.float64))
    U = sol.cumulative_many(t, left=left)
    x = p.beta[None, :] + t[:, None] * p.b_rate[None, :] - U @ p.A.T
    return U, x


def slack_at(p: ProblemData, sol: MeasureSolution, t: float, left: bool = False) -> TrajectoryPoint:
    """U(t) and x(t) = beta + b t - A U(t); with left=True the left limits at t."""
    _check_measure(p, sol, p.J)
    if not 0.0 <= t <= p.horizon:
        raise TOutOfRange(f"t={t} outside [0, {p.horizon}]")
    U, x = slack_many(p, sol, [t], left=left)
    return TrajectoryPoint(t=float(t), U=U[0], x=x[0])


def check_feasible_measure(p: ProblemData, sol: MeasureSolution, tol: Optional[float] = None) -> MeasureFeasibility:
    """Decide feasibility from the slack at every knot, from the left and from the right.

    Slacks are piecewise linear between knots, so their minimum over [0, T]
    is attained at one of these one-sided limits.
    """
    _check_measure(p, sol, p.J)
    if tol is None:
        tol = settings.tol_feas * (1.0 + np.abs(p.beta).max() + np.abs(p.b_rate).max() * p.horizon)
    knots = sol.knots()
    _, right = slack_many(p, sol, knots)
    interior = knots[knots > 0.0]
    _, left = slack_many(p, sol, interior, left=True)

    times = np.concatenate([knots, interior])
    worst_per_time = np.concatenate([right.min(axis=1), left.min(axis=1)])
    k = int(np.argmin(worst_per_time))
    violation = max(0.0, -float(worst_per_time[k]))
    return MeasureFeasibility(
        feasible=bool(violation <= tol),
        worst_violation=violation,
        worst_t=float(times[k]) if violation > 0 else 0.0,
    )


def _cross_term(pd: ProblemData, a: MeasureSolution, B: MeasureSolution) -> float:
    """int_[0,T] x_a(T - s)' dB(s), x_a the slack of a under pd."""
    T = pd.horizon
    value = 0.0
    _, x_end = slack_many(pd, a, [T])
    _, x_start = slack_many(pd, a, [0.0])
    value += float(x_end[0] @ B.atom_start) + float(x_start[0] @ B.atom_end)
    if B.atom_times.size:
        _, x_atoms = slack_many(pd, a, np.clip(T - B.atom_times, 0.0, T))
        value += float(np.sum(x_atoms * B.atom_masses))

    points = np.union1d(B.partition, np.clip(T - a.knots(), 0.0, T))
    points = points[np.concatenate([[True], np.diff(points) > 1e-14 * T])]
    points[-1] = T
    lo, hi = points[:-1], points[1:]
    idx = np.clip(np.searchsorted(B.partition, 0.5 * (lo + hi), side="right") - 1, 0, B.n_intervals - 1)
    _, x_lo = slack_many(pd, a, np.clip(T - lo, 0.0, T), left=True)
    _, x_hi = slack_many(pd, a, np.clip(T - hi, 0.0, T))
    value += float(np.sum(0.5 * (hi - lo)[:, None] * (x_lo + x_hi) * B.densities[idx]))
    return value


def complementary_slackness_residual(p: ProblemData, primal: MeasureSolution, dual: MeasureSolution) -> float:
    """int x(T-t)' dP(t) + int q(T-t)' dU(t) for a primal measure and a dual-time measure."""
    _check_measure(p, primal, p.J)
    _check_measure(p, dual, p.K)
    return _cross_term(p, primal, dual) + _cross_term(dual_problem(p), dual, primal)
