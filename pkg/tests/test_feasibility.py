import math

import numpy as np
import pytest

from app.feasibility import ConicProgram, FeasibilityEngine, SolveStatus


@pytest.fixture
def engine():
    return FeasibilityEngine()


def _box(n=2, lower=None, upper=None):
    program = ConicProgram()
    program.add_variable("z", n, lower=lower, upper=upper)
    return program


class TestLinearPrograms:
    def test_optimum_and_witness(self, engine):
        program = _box(lower=0.0)
        program.add_inequality(program.row(z=[-1.0, 0.0]), -1.0)
        result = engine.solve(program, [1.0, 1.0])
        assert result.status is SolveStatus.OPTIMAL
        assert result.backend == "highs"
        assert result.value == pytest.approx(1.0)
        assert np.allclose(result.witness["z"], [1.0, 0.0])

    def test_infeasible(self, engine):
        program = _box(n=1)
        program.add_inequality(program.row(z=[1.0]), 0.0)
        program.add_inequality(program.row(z=[-1.0]), -1.0)
        result = engine.solve(program, [0.0])
        assert result.status is SolveStatus.INFEASIBLE
        assert not result.optimal

    def test_unbounded_is_not_optimal(self, engine):
        program = _box(n=1, lower=0.0)
        result = engine.solve(program, [-1.0])
        assert not result.optimal

    def test_equality_rhs_is_reusable(self, engine):
        program = _box(lower=0.0, upper=10.0)
        program.add_equality(program.row(z=[1.0, 1.0]), 1.0)
        first = engine.solve(program, [-1.0, 0.0])
        second = engine.solve(program, [-1.0, 0.0], eq_rhs=[3.0])
        assert first.value == pytest.approx(-1.0)
        assert second.value == pytest.approx(-3.0)
        assert engine.solve_count == 2

    def test_blocks_are_split(self, engine):
        program = ConicProgram()
        program.add_variable("a", 2, lower=-1.0, upper=1.0)
        program.add_variable("t", 1, lower=0.0)
        program.add_equality(program.row(a=[1.0, 0.0], t=[-1.0]), 0.0)
        result = engine.solve(program, program.row(a=[-1.0, 0.0]))
        assert set(result.witness) == {"a", "t"}
        assert result.witness["t"][0] == pytest.approx(1.0)


class TestPolyhedralCones:
    def test_l1_ball(self, engine):
        program = _box()
        program.add_norm_cone(1, np.eye(2), np.zeros(2), c0=1.0)
        assert program.polyhedral
        result = engine.solve(program, [-1.0, -1.0])
        assert result.value == pytest.approx(-1.0)

    def test_linf_ball(self, engine):
        program = _box()
        program.add_norm_cone(np.inf, np.eye(2), np.zeros(2), c0=1.0)
        result = engine.solve(program, [-1.0, -1.0])
        assert result.value == pytest.approx(-2.0)
        assert np.allclose(result.witness["z"], [1.0, 1.0])

    def test_shifted_cone(self, engine):
        # ||z - (2, 0)||_1 <= 1
        program = _box()
        program.add_norm_cone(1, np.eye(2), np.zeros(2), m0=[-2.0, 0.0], c0=1.0)
        result = engine.solve(program, [1.0, 0.0])
        assert result.value == pytest.approx(1.0)


class TestConicPrograms:
    def test_second_order_cone(self, engine):
        pytest.importorskip("cvxpy")
        if not engine.health_check()["conic_solver_available"]:
            pytest.skip("configured conic solver is not installed")
        program = _box()
        program.add_norm_cone(2, np.eye(2), np.zeros(2), c0=1.0)
        assert not program.polyhedral
        result = engine.solve(program, [1.0, 1.0])
        assert result.status is SolveStatus.OPTIMAL
        assert result.value == pytest.approx(-math.sqrt(2.0), abs=1e-6)

    def test_conic_equality_rhs(self, engine):
        pytest.importorskip("cvxpy")
        if not engine.health_check()["conic_solver_available"]:
            pytest.skip("configured conic solver is not installed")
        program = _box()
        program.add_equality(program.row(z=[1.0, 0.0]), 0.0)
        program.add_norm_cone(2, np.eye(2), np.zeros(2), c0=1.0)
        assert engine.solve(program, [0.0, 1.0]).value == pytest.approx(-1.0, abs=1e-6)
        shifted = engine.solve(program, [0.0, 1.0], eq_rhs=[0.6])
        assert shifted.value == pytest.approx(-0.8, abs=1e-6)

    def test_conic_infeasible(self, engine):
        pytest.importorskip("cvxpy")
        if not engine.health_check()["conic_solver_available"]:
            pytest.skip("configured conic solver is not installed")
        program = _box()
        program.add_inequality(program.row(z=[-1.0, 0.0]), -2.0)
        program.add_norm_cone(2, np.eye(2), np.zeros(2), c0=1.0)
        assert engine.solve(program, [0.0, 0.0]).status is SolveStatus.INFEASIBLE


class TestProgramBuilding:
    def test_variables_before_rows(self):
        program = _box()
        program.add_inequality(program.row(z=[1.0, 0.0]), 0.0)
        with pytest.raises(RuntimeError):
            program.add_variable("late", 1)

    def test_duplicate_block(self):
        program = _box()
        with pytest.raises(ValueError):
            program.add_variable("z", 1)

    def test_health_check(self, engine):
        health = engine.health_check()
        assert health["highs"] is True
        assert health["conic_solver"] == "CLARABEL"
        assert health["solve_count"] == 0
        assert health["failure_count"] == 0
