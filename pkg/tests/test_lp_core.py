import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdbwk.errors import RejectedInputError, StructuralError
from pdbwk.lp_core import (
    LinearProgram,
    Status,
    check_optimality,
    enumerate_vertices_oracle,
    primal_lp,
    solve_dense,
    solve_lp,
)

F1_C = [[0.5, 0.5, 0.5], [0.8, 0.2, 0.0]]
F1_MU = [0.8, 0.5, 0.0]


def test_single_variable_ratio():
    sol = solve_lp(primal_lp([1.0], [[0.5]], [2.5]))
    assert sol.status is Status.OPTIMAL
    assert sol.primal == pytest.approx([5.0])
    assert sol.objective_value == pytest.approx(5.0)
    assert sol.dual == pytest.approx([2.0])


def test_separable_box():
    sol = solve_lp(primal_lp([1, 1], [[1, 0], [0, 1]], [1, 1]))
    assert sol.primal == pytest.approx([1, 1])
    assert sol.objective_value == pytest.approx(2)
    assert sol.dual == pytest.approx([1, 1])


def test_f1_primal():
    lp = primal_lp(F1_MU, F1_C, [50, 50])
    sol = solve_lp(lp)
    assert sol.objective_value == pytest.approx(65)
    np.testing.assert_allclose(sol.primal, [50, 50, 0], atol=1e-9)
    np.testing.assert_allclose(sol.dual, [0.8, 0.5], atol=1e-9)
    assert sol.basis == frozenset({0, 1})
    oracle = enumerate_vertices_oracle(lp)
    assert oracle.objective_value == pytest.approx(65)
    np.testing.assert_allclose(oracle.primal, [50, 50, 0], atol=1e-9)


def test_infeasible_bounds():
    lp = LinearProgram([1.0], [[-1.0], [1.0]], [-1.0, 0.0])
    assert solve_lp(lp).status is Status.INFEASIBLE
    assert enumerate_vertices_oracle(lp).status is Status.INFEASIBLE


def test_unbounded():
    lp = primal_lp([1.0, 1.0], [[1.0, 0.0]], [1.0])
    sol = solve_lp(lp)
    assert sol.status is Status.UNBOUNDED and sol.objective_value == np.inf
    assert enumerate_vertices_oracle(lp).status is Status.UNBOUNDED
    status, _, _, value = solve_dense(np.array([1.0, 1.0]), np.array([[1.0, 0.0]]), np.array([1.0]))
    assert status is Status.UNBOUNDED and value == np.inf


def test_duplicated_row_degenerate():
    A = [[1, 1], [1, 1], [1, 0]]
    lp = primal_lp([2, 1], A, [4, 4, 3])
    assert solve_lp(lp).objective_value == pytest.approx(enumerate_vertices_oracle(lp).objective_value)


def test_fixed_to_zero_reinflates():
    sol = solve_lp(primal_lp(F1_MU, F1_C, [50, 50], fixed_to_zero=[0]))
    assert sol.primal[0] == 0.0
    assert sol.objective_value == pytest.approx(50)


def test_minimize_ge_form():
    # min 2y1 + 3y2  s.t. y1 + y2 >= 1 ; optimum 2 at y = (1, 0)
    lp = LinearProgram([2.0, 3.0], [[1.0, 1.0]], [1.0], sense=(">=",), maximize=False)
    sol = solve_lp(lp)
    assert sol.objective_value == pytest.approx(2.0)
    assert sol.dual[0] == pytest.approx(2.0)
    assert all(v <= 1e-9 for v in check_optimality(lp, sol).values())


def test_offset_added():
    lp = LinearProgram([1.0], [[1.0]], [3.0], offset=-2.0)
    assert solve_lp(lp).objective_value == pytest.approx(1.0)


@pytest.mark.parametrize("kwargs", [
    dict(objective=[1, 2], constraint_matrix=[[1, 1]], rhs=[1, 2]),
    dict(objective=[1], constraint_matrix=[[1, 1]], rhs=[1]),
    dict(objective=[1], constraint_matrix=[[1]], rhs=[np.inf]),
    dict(objective=[1], constraint_matrix=[[1]], rhs=[1], fixed_to_zero=frozenset({3})),
    dict(objective=[1], constraint_matrix=[[1]], rhs=[1], sense=("<",)),
])
def test_structural_errors(kwargs):
    with pytest.raises(StructuralError):
        LinearProgram(**kwargs)


def test_oracle_size_guard():
    lp = primal_lp(np.ones(10), np.ones((7, 10)), np.ones(7))
    with pytest.raises(RejectedInputError):
        enumerate_vertices_oracle(lp)


def test_homogeneity_lambda_7():
    base = solve_lp(primal_lp(F1_MU, F1_C, [50, 50]))
    scaled = solve_lp(primal_lp(F1_MU, F1_C, [350, 350]))
    assert scaled.objective_value == pytest.approx(7 * base.objective_value)
    np.testing.assert_allclose(scaled.dual, base.dual, atol=1e-9)


def test_deterministic():
    lp = primal_lp(F1_MU, F1_C, [50, 50])
    a, b = solve_lp(lp), solve_lp(lp)
    assert a.basis == b.basis and np.array_equal(a.primal, b.primal) and np.array_equal(a.dual, b.dual)


lp_shapes = st.tuples(st.integers(1, 5), st.integers(1, 5))


@settings(max_examples=150, deadline=None)
@given(shape=lp_shapes, seed=st.integers(0, 2**31 - 1), neg=st.booleans())
def test_matches_oracle_property(shape, seed, neg):
    """Random LPs (possibly with negative rhs) agree with brute force on status and value."""
    n, k = shape
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1 if neg else 0, 1, (k, n))
    b = rng.uniform(-0.5 if neg else 0, 1, k)
    c = rng.uniform(-1, 1, n)
    lp = primal_lp(c, A, b)
    sol, ref = solve_lp(lp), enumerate_vertices_oracle(lp)
    assert sol.status is ref.status
    if sol.optimal:
        assert abs(sol.objective_value - ref.objective_value) <= 1e-6 * (1 + abs(ref.objective_value))
        res = check_optimality(lp, sol)
        assert max(res.values()) <= 1e-6, res
