import numpy as np
import pytest

from pdbwk.environment import (
    KnapsackState,
    Outcome,
    OutcomeStream,
    policy_rng,
    remaining_ratio,
    sample_outcome,
    step,
)
from pdbwk.errors import ContractViolation, RejectedInputError
from pdbwk.instance import fixture_f1


def test_point_mass_outcome():
    inst = fixture_f1("deterministic")
    out = sample_outcome(inst, 0, np.random.default_rng(0))
    assert out.reward == 0.8
    np.testing.assert_array_equal(out.consumption, [0.5, 0.8])


def test_null_arm_law():
    inst = fixture_f1()
    rng = np.random.default_rng(1)
    for _ in range(50):
        out = sample_outcome(inst, 2, rng)
        assert out.reward == 0.0
        np.testing.assert_array_equal(out.consumption, [0.5, 0.0])


def test_bernoulli_means():
    inst = fixture_f1()
    rng = np.random.default_rng(2)
    n = 100_000
    outs = [sample_outcome(inst, 1, rng) for _ in range(n)]
    r = np.mean([o.reward for o in outs])
    c = np.mean([o.consumption for o in outs], axis=0)
    assert abs(r - 0.5) < 3 * np.sqrt(0.25 / n)
    assert c[0] == 0.5
    assert abs(c[1] - 0.2) < 3 * np.sqrt(0.16 / n)


def test_arm_out_of_range():
    with pytest.raises(RejectedInputError):
        sample_outcome(fixture_f1(), 3, np.random.default_rng(0))


def test_stream_is_order_independent():
    inst = fixture_f1()
    a, b = OutcomeStream(inst, 5), OutcomeStream(inst, 5)
    first = [a.outcome(t, t % 3) for t in range(10)]
    b.outcome(9000, 1)  # touch another block first
    second = [b.outcome(t, t % 3) for t in range(10)]
    for x, y in zip(first, second):
        assert x.reward == y.reward and np.array_equal(x.consumption, y.consumption)
    assert OutcomeStream(inst, 6).uniforms(0, 0).tolist() != a.uniforms(0, 0).tolist()


def test_policy_rng_independent_of_outcomes():
    assert policy_rng(3).random() == policy_rng(3).random()


def test_violation_stops_without_credit():
    s = KnapsackState(np.array([1.0, 0.3]), T=10, t=6)
    step(s, Outcome(1.0, np.array([0.5, 0.4])))
    assert s.stopped == 6 and s.cumulative_reward == 0.0
    np.testing.assert_array_equal(s.remaining, [1.0, 0.3])
    with pytest.raises(ContractViolation):
        step(s, Outcome(0.0, np.array([0.0, 0.0])))


def test_exact_exhaustion_is_feasible():
    s = KnapsackState(np.array([0.5]), T=5)
    step(s, Outcome(1.0, np.array([0.5])))
    assert s.stopped is None and s.remaining[0] == 0.0 and s.cumulative_reward == 1.0


def test_deterministic_balanced_run():
    inst = fixture_f1("deterministic")
    T = 100
    rng = np.random.default_rng(0)
    s = KnapsackState.initial(inst, T)
    while s.stopped is None:
        if s.t % 2 == 0 and s.t < T:  # balanced after each (arm 0, arm 1) pair
            np.testing.assert_allclose(remaining_ratio(s), [0.5, 0.5])
        step(s, sample_outcome(inst, s.t % 2, rng))
    assert s.stopped == T
    np.testing.assert_allclose(s.remaining, [0, 0], atol=1e-9)
    assert s.cumulative_reward == pytest.approx(65)


def test_remaining_ratio():
    s = KnapsackState(np.array([30.0, 20.0]), T=60, t=10)
    np.testing.assert_allclose(remaining_ratio(s), [0.6, 0.4])
    s.t = 60
    with pytest.raises(RejectedInputError):
        remaining_ratio(s)


def test_telescoping():
    inst = fixture_f1()
    stream = OutcomeStream(inst, 0)
    s = KnapsackState.initial(inst, 500)
    total = np.zeros(inst.d)
    for t in range(200):
        out = stream.outcome(t, t % 3)
        step(s, out)
        if s.stopped is not None:
            break
        total += out.consumption
    np.testing.assert_allclose(np.full(inst.d, 250.0) - s.remaining, total, atol=1e-9 * 200)
