"""Stochastic BwK environment: outcome sampling and the knapsack process."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ContractViolation, RejectedInputError
from .instance import ProblemInstance

# Absorbs float drift when a consumption exactly exhausts a budget.
VIOLATION_EPS = 1e-9
BLOCK = 4096


class Outcome(NamedTuple):
    reward: float
    consumption: np.ndarray


def outcome_from_uniforms(inst: ProblemInstance, arm: int, u: np.ndarray) -> Outcome:
    """Map ``d + 1`` uniforms to one outcome of ``arm``.

    ``u[0]`` drives the reward and ``u[j]`` resource ``j``; row 0 (time) always
    consumes exactly ``b``.
    """
    if inst.dist == "deterministic":
        return Outcome(float(inst.mu[arm]), inst.C[:, arm].copy())
    cons = (u[1:] < inst.C[:, arm]).astype(float)
    cons[0] = inst.b
    return Outcome(float(u[0] < inst.mu[arm]), cons)


def sample_outcome(inst: ProblemInstance, arm: int, rng: np.random.Generator) -> Outcome:
    if not 0 <= arm < inst.m:
        raise RejectedInputError(f"arm {arm} out of range({inst.m})")
    return outcome_from_uniforms(inst, arm, rng.random(inst.d + 1))


class OutcomeStream:
    """Counter-based uniforms indexed by ``(t, arm)`` for one episode seed.

    Uniforms are produced in blocks of ``BLOCK`` rounds, each block drawn from
    its own child of ``SeedSequence(seed)``, so the value at ``(t, arm)`` never
    depends on which arms were played before.
    """

    def __init__(self, inst: ProblemInstance, seed: int):
        self.inst = inst
        self.seed = int(seed)
        self._block_id = -1
        self._block: Optional[np.ndarray] = None

    def uniforms(self, t: int, arm: int) -> np.ndarray:
        block_id, offset = divmod(t, BLOCK)
        if block_id != self._block_id:
            ss = np.random.SeedSequence(self.seed, spawn_key=(0, block_id))
            self._block = np.random.default_rng(ss).random((BLOCK, self.inst.m, self.inst.d + 1))
            self._block_id = block_id
        return self._block[offset, arm]

    def outcome(self, t: int, arm: int) -> Outcome:
        return outcome_from_uniforms(self.inst, arm, self.uniforms(t, arm))


def policy_rng(seed: int) -> np.random.Generator:
    """Generator for a policy's own randomization, independent of the outcome stream."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))


@dataclass
class KnapsackState:
    """Remaining budgets ``B^(t)`` after ``t`` completed rounds.

    ``stopped`` holds the stopping time once the episode is over; after that
    the state is frozen.
    """

    remaining: np.ndarray
    T: int
    t: int = 0
    stopped: Optional[int] = None
    cumulative_reward: float = 0.0

    @classmethod
    def initial(cls, inst: ProblemInstance, T: int) -> "KnapsackState":
        return cls(np.full(inst.d, T * inst.b), int(T))


def step(state: KnapsackState, outcome: Outcome) -> KnapsackState:
    """Apply one round in place and return ``state``.

    A round whose consumption would overdraw any budget stops the episode at
    the current ``t`` without crediting its reward or charging its consumption.
    """
    if state.stopped is not None:
        raise ContractViolation(f"episode already stopped at tau = {state.stopped}")
    after = state.remaining - outcome.consumption
    if after.min() < -VIOLATION_EPS:
        state.stopped = state.t
        return state
    state.remaining = after
    state.cumulative_reward += outcome.reward
    state.t += 1
    if state.t >= state.T:
        state.stopped = state.T
    return state


def remaining_ratio(state: KnapsackState) -> np.ndarray:
    """Average remaining budget per remaining period, ``B^(t) / (T - t)``."""
    if state.t >= state.T:
        raise RejectedInputError("remaining ratio is undefined at t = T")
    return state.remaining / (state.T - state.t)
