"""Shared instances, random generators and oracles for the test suite."""
import itertools
from typing import Optional

import numpy as np
import pytest

from src.lp_core import Direction, LpProblem, Relation, SignRestriction
from src.model import MeasureSolution, ProblemData
from src.sclp_bridge import SclpData


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size acceptance sweeps")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_problem(A, beta, b, gamma, c, T=1.0) -> ProblemData:
    return ProblemData(A=A, beta=beta, b_rate=b, gamma=gamma, c_rate=c, horizon=T)


@pytest.fixture
def p1() -> ProblemData:
    return make_problem([[1.0]], [1.0], [0.0], [1.0], [0.0])


@pytest.fixture
def p2() -> ProblemData:
    return make_problem([[1.0]], [1.0], [1.0], [0.0], [1.0])


@pytest.fixture
def p3() -> ProblemData:
    return make_problem([[1.0]], [-1.0], [0.0], [0.0], [0.0])


@pytest.fixture
def p4() -> ProblemData:
    return make_problem([[1.0]], [0.0], [1.0], [0.0], [0.0])


@pytest.fixture
def two_regime() -> ProblemData:
    return make_problem([[1.0]], [1.0], [1.0], [0.0], [1.0], T=2.0)


@pytest.fixture
def p2_optimum() -> MeasureSolution:
    """Atom 1 at 0 plus density 1 on (0, 1)."""
    return MeasureSolution(atom_start=[1.0], partition=[0.0, 1.0], densities=[[1.0]], atom_end=[0.0])


@pytest.fixture
def p2_dual_optimum() -> MeasureSolution:
    return MeasureSolution(atom_start=[0.0], partition=[0.0, 1.0], densities=[[1.0]], atom_end=[0.0])


@pytest.fixture
def p2_sclp() -> SclpData:
    return SclpData(G=[[1.0]], F=[], H=[], alpha=[1.0], a=[1.0], b=[], gamma=[0.0], c=[1.0], d=[],
                    horizon=1.0)


@pytest.fixture
def fluid_sclp() -> SclpData:
    """Two buffers drained by one server; value 9.5 with slopes 2, 1, 0 on (0,1), (1,2), (2,4)."""
    return SclpData(G=np.eye(2), F=[], H=[[1.0, 1.0]], alpha=[1.0, 1.0], a=[0.0, 0.0], b=[1.0],
                    gamma=[0.0, 0.0], c=[2.0, 1.0], d=[], horizon=4.0)


def with_rate_cap(s: SclpData, W: float) -> SclpData:
    """Append u <= W rows to H."""
    J1 = s.J1
    H = np.vstack([s.H.reshape(s.K2, J1), np.eye(J1)])
    return SclpData(G=s.G, F=s.F, H=H, alpha=s.alpha, a=s.a, b=np.concatenate([s.b, np.full(J1, W)]),
                    gamma=s.gamma, c=s.c, d=s.d, horizon=s.horizon)


def random_problem(rng: np.random.Generator, K: Optional[int] = None, J: Optional[int] = None,
                   strict: bool = False) -> ProblemData:
    """Random instance; with strict=True both it and its dual have a positive Slater margin
    (A > 0 and beta, beta + b T > 0)."""
    K = K or int(rng.integers(1, 4))
    J = J or int(rng.integers(1, 4))
    T = float(rng.uniform(0.5, 2.0))
    if strict:
        A = rng.uniform(0.2, 1.0, size=(K, J))
        beta = rng.uniform(0.5, 1.5, size=K)
        b = rng.uniform(-0.2, 1.0, size=K)
        gamma = rng.uniform(-1.0, 1.0, size=J)
        c = rng.uniform(-0.5, 1.0, size=J)
        return make_problem(A, beta, b, gamma, c, T)
    A = rng.uniform(-1.0, 1.0, size=(K, J))
    beta = rng.uniform(-0.5, 1.5, size=K)
    b = rng.uniform(-1.0, 1.0, size=K)
    gamma = rng.uniform(-1.0, 1.0, size=J)
    c = rng.uniform(-1.0, 1.0, size=J)
    return make_problem(A, beta, b, gamma, c, T)


def random_lp(rng: np.random.Generator, m: int, n: int) -> LpProblem:
    """Random bounded-or-not LP with mixed relations and non-negative variables."""
    options = (Relation.LE, Relation.GE, Relation.EQ)
    relations = tuple(options[i] for i in rng.choice(3, size=m, p=[0.6, 0.25, 0.15]))
    return LpProblem(
        direction=Direction.MAXIMIZE if rng.random() < 0.5 else Direction.MINIMIZE,
        objective=np.round(rng.uniform(-3, 3, size=n), 2),
        constraint_matrix=np.round(rng.uniform(-2, 3, size=(m, n)), 2),
        rhs=np.round(rng.uniform(-1, 4, size=m), 2),
        relations=relations,
        restrictions=(SignRestriction.P,) * n,
    )


def vertex_oracle(lp: LpProblem, tol: float = 1e-9):
    """Best objective over all basic feasible points, or None when there is none.

    Only valid for LPs with P variables and a bounded optimum.
    """
    n = lp.n_cols
    rows = [lp.constraint_matrix, np.eye(n)]
    rhs = [lp.rhs, np.zeros(n)]
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    best = None
    for subset in itertools.combinations(range(G.shape[0]), n):
        M = G[list(subset)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, h[list(subset)])
        if lp.max_violation(x) > tol * (1.0 + np.abs(x).max()):
            continue
        value = float(lp.objective @ x)
        if best is None:
            best = value
        elif lp.direction is Direction.MAXIMIZE:
            best = max(best, value)
        else:
            best = min(best, value)
    return best


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
