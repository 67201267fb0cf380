"""Tests for rate-interval detection, the Rates-LP pair and non-degeneracy."""
import numpy as np
import pytest

from src.discretization import Partition, solve_level
from src.errors import DimensionMismatch, InfeasibleResult, NonMonotoneSlope, SupportOutOfRange
from src.extension import extend_discrete
from src.lp_core import Direction, LpStatus, SignRestriction, solve_lp
from src.model import MeasureSolution, evaluate_objective
from src.sclp_bridge import sclp_to_mclp
from src.structure import (
    RateInterval, SupportSets, build_rates_lp_pair, check_nondegeneracy, detect_rate_intervals,
    detect_rate_structure, piecewise_linearize, slope_change_points, verify_rates_pair,
)
from tests.conftest import random_problem


def level_pair(p, n):
    part = Partition.uniform(p.horizon, n)
    level = solve_level(p, part)
    return extend_discrete(level.primal, part), extend_discrete(level.dual, part.reversed())


class TestDetectRateIntervals:
    def test_p2_single_interval(self, p2, p2_optimum, p2_dual_optimum):
        intervals = detect_rate_intervals(p2, p2_optimum, p2_dual_optimum)

        assert len(intervals) == 1
        interval = intervals[0]
        assert (interval.t_lo, interval.t_hi) == (0.0, 1.0)
        assert interval.u_rate[0] == pytest.approx(1.0)
        assert interval.p_rate[0] == pytest.approx(1.0)
        assert interval.objective_slope == pytest.approx(1.0)
        assert interval.support.J_set == {0} and interval.support.K_set == {0}

    def test_p1_atoms_only(self, p1):
        atom = MeasureSolution(atom_start=[1.0], partition=[0.0, 1.0], densities=[[0.0]], atom_end=[0.0])
        intervals = detect_rate_intervals(p1, atom, atom)

        assert len(intervals) == 1
        assert intervals[0].u_rate[0] == 0.0 and intervals[0].p_rate[0] == 0.0
        assert intervals[0].objective_slope == 0.0
        assert intervals[0].support == SupportSets(frozenset(), frozenset())

    def test_merges_discretization_intervals(self, p2):
        primal, dual = level_pair(p2, 8)
        intervals = detect_rate_intervals(p2, primal, dual)
        assert len(intervals) == 1
        assert intervals[0].length == pytest.approx(1.0)

    def test_consistent_under_refinement(self, two_regime):
        coarse = detect_rate_intervals(two_regime, *level_pair(two_regime, 16))
        fine = detect_rate_intervals(two_regime, *level_pair(two_regime, 32))

        assert len(coarse) == len(fine)
        for a, b in zip(coarse, fine):
            assert a.objective_slope == pytest.approx(b.objective_slope, abs=1e-5)
            np.testing.assert_allclose(a.u_rate, b.u_rate, atol=1e-5)

    def test_fluid_regimes(self, fluid_sclp):
        p = sclp_to_mclp(fluid_sclp)
        part = Partition.uniform(4.0, 4)
        primal = extend_discrete(solve_level(p, part).primal, part)
        intervals = detect_rate_intervals(p, primal, MeasureSolution.zero(p.K, 4.0))

        assert [(i.t_lo, i.t_hi) for i in intervals] == [(0.0, 1.0), (1.0, 2.0), (2.0, 4.0)]
        assert [i.objective_slope for i in intervals] == pytest.approx([2.0, 1.0, 0.0])
        assert [i.support.J_set for i in intervals] == [{0}, {1}, {2}]
        assert slope_change_points(p, intervals) == pytest.approx([0.0, 1.0, 2.0, 4.0])

    def test_rising_slope_is_rejected(self, p2):
        primal = MeasureSolution(atom_start=[0.0], partition=[0.0, 0.5, 1.0], densities=[[0.0], [1.0]],
                                 atom_end=[0.0])
        with pytest.raises(NonMonotoneSlope):
            detect_rate_intervals(p2, primal, MeasureSolution.zero(1, 1.0))

    def test_borderline_support_is_reported(self, p2):
        primal = MeasureSolution(atom_start=[0.0], partition=[0.0, 1.0], densities=[[2e-7]], atom_end=[0.0])
        interval = detect_rate_intervals(p2, primal, MeasureSolution.zero(1, 1.0))[0]
        assert interval.support.borderline_J == {0}


def p2_with_dual_spike():
    quarters = [0.0, 0.25, 0.5, 0.75, 1.0]
    primal = MeasureSolution(atom_start=[1.0], partition=quarters, densities=[[1.0]] * 4, atom_end=[0.0])
    # dual cell (0.5, 0.75) sits on primal time (0.25, 0.5)
    dual = MeasureSolution(atom_start=[0.0], partition=quarters, densities=[[1.0], [1.0], [5.0], [1.0]],
                           atom_end=[0.0])
    return primal, dual


class TestTransitionCells:
    def test_dual_spike_is_not_an_interval(self, p2):
        structure = detect_rate_structure(p2, *p2_with_dual_spike())

        assert [(i.t_lo, i.t_hi) for i in structure.intervals] == [(0.0, 0.25), (0.5, 1.0)]
        assert all(verify_rates_pair(p2, interval) for interval in structure.intervals)
        assert len(structure.transitions) == 1
        cell = structure.transitions[0]
        assert (cell.t_lo, cell.t_hi) == (0.25, 0.5)
        assert cell.length == pytest.approx(0.25)
        np.testing.assert_allclose(cell.p_mass, [1.25])
        np.testing.assert_allclose(cell.p_atom, [1.0])
        np.testing.assert_allclose(cell.u_atom, [0.0])
        assert structure.dual_atom_mass() == pytest.approx(1.0)
        assert structure.primal_atom_mass() == 0.0

    def test_detect_rate_intervals_leaves_out_transitions(self, p2):
        intervals = detect_rate_intervals(p2, *p2_with_dual_spike())
        assert len(intervals) == 2

    def test_spike_at_the_edge_stays_an_interval(self, p2):
        primal, _ = p2_with_dual_spike()
        # dual cell (0.75, 1) sits on primal time (0, 0.25)
        dual = MeasureSolution(atom_start=[0.0], partition=[0.0, 0.25, 0.5, 0.75, 1.0],
                               densities=[[1.0], [1.0], [1.0], [5.0]], atom_end=[0.0])
        structure = detect_rate_structure(p2, primal, dual)
        assert structure.transitions == []
        assert len(structure.intervals) == 2

    def test_change_point_at_middle_of_transition(self, p2):
        support = SupportSets(frozenset({0}), frozenset({0}))
        before = RateInterval(t_lo=0.0, t_hi=0.25, u_rate=np.array([2.0]), p_rate=np.array([1.0]),
                              support=support, objective_slope=2.0)
        after = RateInterval(t_lo=0.5, t_hi=1.0, u_rate=np.array([1.0]), p_rate=np.array([1.0]),
                             support=support, objective_slope=1.0)
        assert slope_change_points(p2, [before, after]) == pytest.approx([0.0, 0.375, 1.0])

    @pytest.mark.slow
    def test_random_non_degenerate_instances(self, rng):
        checked = 0
        while checked < 40:
            p = random_problem(rng, strict=True)
            if not (check_nondegeneracy(p.A, p.c_rate) and check_nondegeneracy(p.A.T, p.b_rate)):
                continue
            primal, dual = level_pair(p, 128)
            coarse = detect_rate_structure(p, *level_pair(p, 64))
            fine = detect_rate_structure(p, primal, dual)

            assert len(coarse.intervals) == len(fine.intervals)
            for interval in fine.intervals:
                assert verify_rates_pair(p, interval)
            assert fine.primal_atom_mass() <= 1e-7 * (1.0 + primal.total_mass().sum())
            checked += 1


class TestRatesLpPair:
    def test_p2_full_support(self, p2):
        rates, rates_star = build_rates_lp_pair(p2, SupportSets(frozenset({0}), frozenset({0})))

        assert rates.direction is Direction.MAXIMIZE
        assert rates.restrictions == (SignRestriction.P, SignRestriction.P)
        assert solve_lp(rates).objective_value == pytest.approx(1.0)
        assert solve_lp(rates_star).objective_value == pytest.approx(1.0)

    def test_empty_supports(self, p2):
        rates, rates_star = build_rates_lp_pair(p2, SupportSets(frozenset(), frozenset()))

        assert rates.restrictions == (SignRestriction.Z, SignRestriction.U)
        outcome = solve_lp(rates)
        assert outcome.status is LpStatus.OPTIMAL and outcome.objective_value == 0.0
        assert solve_lp(rates_star).objective_value == 0.0

    def test_support_out_of_range(self, p2):
        with pytest.raises(SupportOutOfRange):
            build_rates_lp_pair(p2, SupportSets(frozenset({1}), frozenset()))


def p2_interval(u_rate):
    support = SupportSets(frozenset({0}), frozenset({0}))
    return RateInterval(t_lo=0.0, t_hi=1.0, u_rate=np.array([u_rate]), p_rate=np.array([1.0]),
                        support=support, objective_slope=u_rate)


class TestVerifyRatesPair:
    def test_p2_interval(self, p2):
        result = verify_rates_pair(p2, p2_interval(1.0))
        assert result.ok and bool(result) is True
        assert result.violations == []

    def test_perturbed_rate_fails(self, p2):
        result = verify_rates_pair(p2, p2_interval(0.5))
        assert not result
        assert any("Rates-LP optimum" in v for v in result.violations)

    def test_zero_interval_of_p1(self, p1):
        interval = RateInterval(t_lo=0.0, t_hi=1.0, u_rate=np.zeros(1), p_rate=np.zeros(1),
                                support=SupportSets(frozenset(), frozenset()), objective_slope=0.0)
        assert verify_rates_pair(p1, interval)

    def test_every_detected_interval_passes(self, two_regime):
        for interval in detect_rate_intervals(two_regime, *level_pair(two_regime, 16)):
            assert verify_rates_pair(two_regime, interval)


class TestNondegeneracy:
    def test_single_column(self):
        assert check_nondegeneracy([[1.0]], [1.0])
        assert not check_nondegeneracy([[1.0]], [0.0])

    def test_identity(self):
        assert check_nondegeneracy(np.eye(2), [1.0, 1.0])

    def test_parallel_column(self):
        assert not check_nondegeneracy(np.eye(2), [2.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            check_nondegeneracy(np.eye(2), [1.0, 1.0, 1.0])


class TestPiecewiseLinearize:
    def test_already_linear(self, p2, p2_optimum):
        result = piecewise_linearize(p2, p2_optimum, [0.0, 1.0])
        np.testing.assert_allclose(result.densities, [[1.0]])
        assert result.atom_start[0] == 1.0
        assert evaluate_objective(p2, result) == pytest.approx(1.5)

    def test_collapses_discrete_optimum(self, p2):
        primal, _ = level_pair(p2, 8)
        result = piecewise_linearize(p2, primal, [0.0, 1.0])
        assert result.n_intervals == 1
        assert evaluate_objective(p2, result) == pytest.approx(1.5)

    def test_merges_equal_slopes(self, p2):
        sol = MeasureSolution(atom_start=[1.0], partition=[0.0, 0.5, 1.0], densities=[[1.0], [1.0]],
                              atom_end=[0.0])
        result = piecewise_linearize(p2, sol, [0.0, 1.0])
        assert result.n_intervals == 1
        assert evaluate_objective(p2, result) == pytest.approx(evaluate_objective(p2, sol))

    def test_infeasible_input(self, p1):
        sol = MeasureSolution(atom_start=[2.0], partition=[0.0, 1.0], densities=[[0.0]], atom_end=[0.0])
        with pytest.raises(InfeasibleResult):
            piecewise_linearize(p1, sol, [0.0, 1.0])
