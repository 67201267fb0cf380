"""Tests for the Test-LP, the Slater margin and witness measures."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.discretization import Partition, build_dclp1
from src.errors import InfeasibleWitness
from src.feasibility import build_test_lp, check_feasibility, strict_margin
from src.feasibility import test_solution_to_measure as witness_measure
from src.lp_core import LpStatus, solve_lp
from src.model import check_feasible_measure, dual_problem, evaluate_objective
from tests.conftest import make_problem, random_problem


class TestTestLp:
    def test_p1_value(self, p1):
        outcome = solve_lp(build_test_lp(p1))
        assert outcome.objective_value == pytest.approx(1.0)

    def test_p2_value(self, p2):
        outcome = solve_lp(build_test_lp(p2))
        assert outcome.objective_value == pytest.approx(1.0)

    def test_p3_is_infeasible(self, p3):
        outcome = solve_lp(build_test_lp(p3))
        assert outcome.status is LpStatus.INFEASIBLE


class TestCheckFeasibility:
    def test_p2_strictly_feasible(self, p2):
        report = check_feasibility(p2)
        assert report.feasible
        assert report.strict_margin == pytest.approx(1.0)
        assert report.strictly_feasible
        assert report.witness is not None

    def test_p4_feasible_not_strict(self, p4):
        report = check_feasibility(p4)
        assert report.feasible
        assert report.strict_margin == pytest.approx(0.0, abs=1e-12)
        assert not report.strictly_feasible

    def test_p3_infeasible_with_certificate(self, p3):
        report = check_feasibility(p3)
        assert not report.feasible
        assert report.strict_margin < 0
        lp = build_test_lp(p3)
        y = report.certificate
        assert y @ lp.rhs < 0
        assert np.all(y @ lp.constraint_matrix >= -1e-12)

    def test_dual_of_p2_has_unbounded_margin(self, p2):
        assert check_feasibility(dual_problem(p2)).strict_margin == math.inf

    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 2.0))
    @settings(max_examples=40, deadline=None)
    def test_margin_shifts_with_beta(self, seed, shift):
        p = random_problem(np.random.default_rng(seed))
        shifted = make_problem(p.A, p.beta + shift, p.b_rate, p.gamma, p.c_rate, p.horizon)
        before, after = strict_margin(p), strict_margin(shifted)
        if math.isinf(before):
            assert math.isinf(after)
        else:
            assert after == pytest.approx(before + shift, abs=1e-8 * (1.0 + abs(before)))


class TestWitnessMeasure:
    def test_p1_witness(self, p1):
        sol = witness_measure(p1, [1.0], [0.0])
        assert sol.atom_start[0] == 1.0
        assert sol.densities[0, 0] == 0.0
        assert check_feasible_measure(p1, sol).feasible
        assert evaluate_objective(p1, sol) == pytest.approx(1.0)

    def test_p2_witness_is_the_optimum(self, p2):
        sol = witness_measure(p2, [1.0], [1.0])
        assert sol.atom_start[0] == 1.0
        assert sol.densities[0, 0] == pytest.approx(1.0)
        assert evaluate_objective(p2, sol) == pytest.approx(1.5)

    def test_rejects_infeasible_witness(self, p1):
        with pytest.raises(InfeasibleWitness):
            witness_measure(p1, [2.0], [0.0])

    def test_witness_from_report_is_feasible(self, rng):
        for _ in range(20):
            p = random_problem(rng)
            report = check_feasibility(p)
            if not report.feasible:
                continue
            sol = witness_measure(p, *report.witness)
            assert check_feasible_measure(p, sol).feasible


def _agrees_with_dclp1(p, n_values):
    feasible = check_feasibility(p).feasible
    for n in n_values:
        status = solve_lp(build_dclp1(p, Partition.uniform(p.horizon, n))).status
        assert (status is not LpStatus.INFEASIBLE) == feasible


class TestFeasibilityEquivalence:
    def test_matches_discretization(self, rng):
        for _ in range(40):
            _agrees_with_dclp1(random_problem(rng), (1, 4))

    @pytest.mark.slow
    def test_matches_discretization_full(self, rng):
        for _ in range(500):
            _agrees_with_dclp1(random_problem(rng), (1, 4, 16))
