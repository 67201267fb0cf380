"""Tests for problem data, measures and their evaluation."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import DimensionMismatch, InvalidMeasure, MalformedProblem, TOutOfRange
from src.feasibility import check_feasibility
from src.feasibility import test_solution_to_measure as witness_measure
from src.model import (
    MeasureSolution, check_feasible_measure, complementary_slackness_residual, dual_objective,
    dual_problem, evaluate_objective, slack_at,
)
from tests.conftest import make_problem, random_problem


def atom_at_zero(mass, T=1.0):
    return MeasureSolution(atom_start=[mass], partition=[0.0, T], densities=[[0.0]], atom_end=[0.0])


class TestProblemData:
    def test_dimensions(self, p2):
        assert (p2.K, p2.J) == (1, 1)
        assert p2.horizon == 1.0
        assert "K=1" in repr(p2)

    def test_arrays_are_read_only(self, p2):
        with pytest.raises(ValueError):
            p2.A[0, 0] = 3.0

    @pytest.mark.parametrize("kwargs", [
        dict(A=[[1.0]], beta=[1.0, 2.0], b=[0.0], gamma=[1.0], c=[0.0]),
        dict(A=[[1.0]], beta=[1.0], b=[0.0], gamma=[1.0, 2.0], c=[0.0]),
        dict(A=[[1.0, 2.0]], beta=[1.0], b=[0.0], gamma=[1.0], c=[0.0]),
    ])
    def test_rejects_dimension_mismatch(self, kwargs):
        with pytest.raises(DimensionMismatch):
            make_problem(**kwargs)

    @pytest.mark.parametrize("T", [0.0, -1.0, float("inf")])
    def test_rejects_bad_horizon(self, T):
        with pytest.raises(MalformedProblem):
            make_problem([[1.0]], [1.0], [0.0], [1.0], [0.0], T=T)

    def test_rejects_non_finite_entries(self):
        with pytest.raises(MalformedProblem):
            make_problem([[np.nan]], [1.0], [0.0], [1.0], [0.0])

    def test_dual_problem(self, p2):
        d = dual_problem(p2)
        np.testing.assert_array_equal(d.A, -p2.A.T)
        np.testing.assert_array_equal(d.beta, -p2.gamma)
        np.testing.assert_array_equal(d.b_rate, -p2.c_rate)
        np.testing.assert_array_equal(d.gamma, -p2.beta)
        np.testing.assert_array_equal(d.c_rate, -p2.b_rate)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_dual_problem_is_an_involution(self, seed):
        p = random_problem(np.random.default_rng(seed))
        assert dual_problem(dual_problem(p)) == p


class TestMeasureSolution:
    def test_zero_measure(self):
        sol = MeasureSolution.zero(3, 2.0)
        assert sol.dimension == 3 and sol.horizon == 2.0 and sol.n_intervals == 1
        np.testing.assert_array_equal(sol.total_mass(), np.zeros(3))

    def test_cumulative_with_interior_atom(self):
        sol = MeasureSolution(
            atom_start=[1.0], partition=[0.0, 1.0, 2.0], densities=[[1.0], [0.0]], atom_end=[2.0],
            atom_times=[1.5], atom_masses=[[3.0]],
        )
        assert sol.cumulative(0.0)[0] == 1.0
        assert sol.cumulative_left(0.0)[0] == 0.0
        assert sol.cumulative(0.5)[0] == pytest.approx(1.5)
        assert sol.cumulative_left(1.5)[0] == pytest.approx(2.0)
        assert sol.cumulative(1.5)[0] == pytest.approx(5.0)
        assert sol.cumulative_left(2.0)[0] == pytest.approx(5.0)
        assert sol.cumulative(2.0)[0] == pytest.approx(7.0)
        np.testing.assert_allclose(sol.total_mass(), [7.0])
        np.testing.assert_allclose(sol.knots(), [0.0, 1.0, 1.5, 2.0])
        assert sol.interior_atom_mass() == 3.0

    def test_small_negative_entries_are_clipped(self):
        sol = MeasureSolution(atom_start=[-1e-14], partition=[0.0, 1.0], densities=[[1.0]], atom_end=[0.0])
        assert sol.atom_start[0] == 0.0

    def test_rejects_negative_mass(self):
        with pytest.raises(InvalidMeasure):
            MeasureSolution(atom_start=[0.0], partition=[0.0, 1.0], densities=[[-0.5]], atom_end=[0.0])

    @pytest.mark.parametrize("partition", [[0.0], [0.5, 1.0], [0.0, 1.0, 1.0]])
    def test_rejects_bad_partition(self, partition):
        with pytest.raises(InvalidMeasure):
            MeasureSolution(atom_start=[0.0], partition=partition, densities=[[0.0]] * (len(partition) - 1 or 1),
                            atom_end=[0.0])

    def test_rejects_atom_outside_open_interval(self):
        with pytest.raises(InvalidMeasure):
            MeasureSolution(atom_start=[0.0], partition=[0.0, 1.0], densities=[[0.0]], atom_end=[0.0],
                            atom_times=[1.0], atom_masses=[[1.0]])

    def test_rejects_wrong_density_count(self):
        with pytest.raises(InvalidMeasure):
            MeasureSolution(atom_start=[0.0, 0.0], partition=[0.0, 1.0], densities=[[0.0]], atom_end=[0.0, 0.0])


class TestEvaluation:
    def test_objective_of_atom_only(self, p1):
        assert evaluate_objective(p1, atom_at_zero(1.0)) == pytest.approx(1.0)

    def test_objective_of_p2_optimum(self, p2, p2_optimum):
        assert evaluate_objective(p2, p2_optimum) == pytest.approx(1.5, abs=1e-12)

    def test_objective_counts_interior_atoms(self, p2):
        sol = MeasureSolution(atom_start=[0.0], partition=[0.0, 1.0], densities=[[0.0]], atom_end=[0.0],
                              atom_times=[0.25], atom_masses=[[2.0]])
        assert evaluate_objective(p2, sol) == pytest.approx(1.5)

    def test_dual_objective(self, p2, p2_dual_optimum):
        assert dual_objective(p2, p2_dual_optimum) == pytest.approx(1.5)

    @pytest.mark.parametrize("t, U, x", [(0.0, 1.0, 0.0), (0.5, 1.5, 0.0), (1.0, 2.0, 0.0)])
    def test_slack_at_p2_optimum(self, p2, p2_optimum, t, U, x):
        point = slack_at(p2, p2_optimum, t)
        assert point.U[0] == pytest.approx(U)
        assert point.x[0] == pytest.approx(x, abs=1e-12)

    def test_slack_at_left_limit(self, p2, p2_optimum):
        point = slack_at(p2, p2_optimum, 0.0, left=True)
        assert point.U[0] == 0.0
        assert point.x[0] == 1.0

    def test_slack_of_zero_solution(self, p1):
        point = slack_at(p1, MeasureSolution.zero(1, 1.0), 1.0)
        assert point.U[0] == 0.0 and point.x[0] == 1.0

    def test_slack_at_outside_horizon(self, p1):
        with pytest.raises(TOutOfRange):
            slack_at(p1, MeasureSolution.zero(1, 1.0), 1.5)

    def test_measure_dimension_is_checked(self, p1):
        with pytest.raises(DimensionMismatch):
            evaluate_objective(p1, MeasureSolution.zero(2, 1.0))


class TestFeasibleMeasure:
    def test_p2_optimum_is_feasible(self, p2, p2_optimum):
        result = check_feasible_measure(p2, p2_optimum)
        assert result.feasible and result
        assert result.worst_violation == pytest.approx(0.0, abs=1e-12)

    def test_violation_at_start(self, p1):
        result = check_feasible_measure(p1, atom_at_zero(2.0))
        assert not result.feasible
        assert result.worst_violation == pytest.approx(1.0)
        assert result.worst_t == 0.0

    def test_interior_atom_violation_is_seen(self, p1):
        sol = MeasureSolution(atom_start=[0.0], partition=[0.0, 1.0], densities=[[0.0]], atom_end=[0.0],
                              atom_times=[0.5], atom_masses=[[1.5]])
        result = check_feasible_measure(p1, sol)
        assert not result.feasible
        assert result.worst_violation == pytest.approx(0.5)
        assert result.worst_t == 0.5

    def test_verdict_is_a_python_bool(self, p1, p2, p2_optimum):
        feasible = check_feasible_measure(p2, p2_optimum)
        infeasible = check_feasible_measure(p1, atom_at_zero(2.0))

        assert type(feasible.feasible) is bool and type(infeasible.feasible) is bool
        assert bool(feasible) is True
        assert bool(infeasible) is False
        assert [r for r in (feasible, infeasible) if r] == [feasible]


class TestComplementarySlackness:
    def test_p2_optimal_pair(self, p2, p2_optimum, p2_dual_optimum):
        assert complementary_slackness_residual(p2, p2_optimum, p2_dual_optimum) == pytest.approx(0.0, abs=1e-12)

    def test_p1_optimal_pair(self, p1):
        assert complementary_slackness_residual(p1, atom_at_zero(1.0), atom_at_zero(1.0)) == pytest.approx(0.0)

    def test_p1_zero_primal(self, p1):
        residual = complementary_slackness_residual(p1, MeasureSolution.zero(1, 1.0), atom_at_zero(1.0))
        assert residual == pytest.approx(1.0)


def _feasible_pair(p):
    primal = check_feasibility(p)
    dual = check_feasibility(dual_problem(p))
    if not (primal.feasible and dual.feasible):
        return None
    return (witness_measure(p, *primal.witness),
            witness_measure(dual_problem(p), *dual.witness))


class TestWeakDuality:
    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_primal_below_dual(self, seed):
        p = random_problem(np.random.default_rng(seed), strict=seed % 2 == 0)
        pair = _feasible_pair(p)
        if pair is None:
            return
        primal, dual = pair
        low, high = evaluate_objective(p, primal), dual_objective(p, dual)
        scale = 1.0 + abs(low) + abs(high)
        assert low <= high + 1e-8 * scale

    @pytest.mark.slow
    def test_primal_below_dual_full(self, rng):
        for _ in range(500):
            p = random_problem(rng, K=int(rng.integers(1, 6)), J=int(rng.integers(1, 6)))
            pair = _feasible_pair(p)
            if pair is None:
                continue
            low, high = evaluate_objective(p, pair[0]), dual_objective(p, pair[1])
            assert low <= high + 1e-8 * (1.0 + abs(low) + abs(high))
