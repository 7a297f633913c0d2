"""
One player's radically uncoupled Q-learning dynamics.

A learner sees the current state, its own action and its own reward. It is
built from its own action counts, the discount factor and the bound D, and
never receives the game, the opponent's actions or the opponent's rewards.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .errors import UsageError
from .schedules import ScheduleConfig, alpha, beta, clamp_inactive, tau

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


def smoothed_best_response(q: np.ndarray, temperature: float) -> np.ndarray:
    """Entropy-smoothed best response: softmax(q / temperature)."""
    if not temperature > 0:
        raise UsageError(f"temperature must be positive, got {temperature}")
    q = np.asarray(q, dtype=float)
    weights = np.exp((q - q.max()) / temperature)
    # exp underflows to 0 for gaps beyond ~700 temperatures
    weights = np.maximum(weights, _TINY)
    return weights / weights.sum()


def _clip(x: float, bound: float) -> float:
    # the convex combinations below stay in [-D, D] up to one rounding step
    return min(max(x, -bound), bound)


@dataclass
class PendingUpdate:
    """Data from the previous stage for the one-stage-lookahead q update."""

    state: int
    action: int
    action_prob: float
    alpha_count: int
    reward: float


class PendingSnapshot(BaseModel):
    state: int
    action: int
    action_prob: float
    alpha_count: int
    reward: float


class AgentSnapshot(BaseModel):
    """JSON form of an AgentState for checkpoint/resume."""

    q_hat: List[List[float]]
    v_hat: List[float]
    visits: List[int]
    pi_avg: List[List[float]]
    pending: Optional[PendingSnapshot] = None
    gamma: float
    d_bound: float
    last_step: Optional[float] = None


@dataclass
class AgentState:
    """One player's local view of the game."""

    q_hat: List[np.ndarray]
    v_hat: np.ndarray
    visits: np.ndarray
    pi_avg: List[np.ndarray]
    gamma: float
    d_bound: float
    pending: Optional[PendingUpdate] = None
    # step size applied by the most recent deferred q update
    last_step: Optional[float] = None

    @classmethod
    def initial(
        cls,
        action_counts: Sequence[int],
        gamma: float,
        d_bound: float,
        q_init: Optional[Sequence[Sequence[float]]] = None,
        v_init: Optional[Sequence[float]] = None,
    ) -> "AgentState":
        """Fresh agent: q and v from the given initial values (zeros by default),
        uniform weighted-average strategy, no visits."""
        n = len(action_counts)
        q_hat = [np.zeros(k) for k in action_counts]
        if q_init is not None:
            q_hat = [np.array(q, dtype=float) for q in q_init]
            if [len(q) for q in q_hat] != list(action_counts):
                raise UsageError("q_init does not match the action counts")
        v_hat = np.zeros(n) if v_init is None else np.array(v_init, dtype=float)
        if v_hat.shape != (n,):
            raise UsageError("v_init does not match the number of states")
        if any(np.abs(q).max() > d_bound for q in q_hat) or np.abs(v_hat).max() > d_bound:
            raise UsageError(f"initial estimates must lie in [-{d_bound}, {d_bound}]")
        return cls(
            q_hat=q_hat,
            v_hat=v_hat,
            visits=np.zeros(n, dtype=np.int64),
            pi_avg=[np.full(k, 1.0 / k) for k in action_counts],
            gamma=float(gamma),
            d_bound=float(d_bound),
        )

    @property
    def action_counts(self) -> List[int]:
        return [len(q) for q in self.q_hat]

    def to_snapshot(self) -> AgentSnapshot:
        pending = None
        if self.pending is not None:
            p = self.pending
            pending = PendingSnapshot(
                state=p.state,
                action=p.action,
                action_prob=p.action_prob,
                alpha_count=p.alpha_count,
                reward=p.reward,
            )
        return AgentSnapshot(
            q_hat=[q.tolist() for q in self.q_hat],
            v_hat=self.v_hat.tolist(),
            visits=[int(c) for c in self.visits],
            pi_avg=[p.tolist() for p in self.pi_avg],
            pending=pending,
            gamma=self.gamma,
            d_bound=self.d_bound,
            last_step=self.last_step,
        )

    @classmethod
    def from_snapshot(cls, snapshot: AgentSnapshot) -> "AgentState":
        pending = None
        if snapshot.pending is not None:
            pending = PendingUpdate(**snapshot.pending.model_dump())
        return cls(
            q_hat=[np.array(q, dtype=float) for q in snapshot.q_hat],
            v_hat=np.array(snapshot.v_hat, dtype=float),
            visits=np.array(snapshot.visits, dtype=np.int64),
            pi_avg=[np.array(p, dtype=float) for p in snapshot.pi_avg],
            gamma=snapshot.gamma,
            d_bound=snapshot.d_bound,
            pending=pending,
            last_step=snapshot.last_step,
        )


def current_temperature(agent: AgentState, schedules: ScheduleConfig, state: int) -> float:
    """tau at the state's counter (tau_1 for a state not yet visited)."""
    return tau(schedules, max(1, int(agent.visits[state])))


def begin_stage(agent: AgentState, current_state: int, schedules: ScheduleConfig) -> np.ndarray:
    """Deferred q update, counter increment, and the smoothed best response
    to draw this stage's action from."""
    pending = agent.pending
    if pending is not None:
        step = min(1.0, alpha(schedules, pending.alpha_count) / pending.action_prob)
        q = agent.q_hat[pending.state]
        target = pending.reward + agent.gamma * agent.v_hat[current_state]
        q[pending.action] = _clip(
            (1.0 - step) * q[pending.action] + step * target, agent.d_bound
        )
        agent.last_step = step
        agent.pending = None

    agent.visits[current_state] += 1
    count = int(agent.visits[current_state])
    return smoothed_best_response(agent.q_hat[current_state], tau(schedules, count))


def finish_stage(
    agent: AgentState,
    current_state: int,
    own_action: int,
    own_reward: float,
    pi_bar: np.ndarray,
    schedules: ScheduleConfig,
) -> None:
    """Slow value update, weighted-average strategy update, and the record
    for next stage's q update."""
    count = int(agent.visits[current_state])
    if count < 1:
        raise UsageError(f"finish_stage at state {current_state} without begin_stage")
    prob = float(pi_bar[own_action])
    if not prob > 0:
        raise UsageError(f"action {own_action} has zero probability under pi_bar")

    b = beta(schedules, count)
    expected = float(pi_bar @ agent.q_hat[current_state])
    agent.v_hat[current_state] = _clip(
        (1.0 - b) * agent.v_hat[current_state] + b * expected, agent.d_bound
    )

    a = alpha(schedules, count)
    agent.pi_avg[current_state] = (1.0 - a) * agent.pi_avg[current_state] + a * pi_bar

    agent.pending = PendingUpdate(
        state=current_state,
        action=int(own_action),
        action_prob=prob,
        alpha_count=count,
        reward=float(own_reward),
    )


def reduced_update_active(agent: AgentState, schedules: ScheduleConfig, state: int) -> bool:
    """True iff the min{1, .} clamp of the q update can no longer bind at `state`."""
    return clamp_inactive(schedules, int(agent.visits[state]), len(agent.q_hat[state]))


def greedy_action(agent: AgentState, state: int) -> int:
    return int(np.argmax(agent.q_hat[state]))


class QLearner:
    """An AgentState bound to its schedules."""

    def __init__(self, agent: AgentState, schedules: ScheduleConfig):
        self.agent = agent
        self.schedules = schedules

    def begin_stage(self, current_state: int) -> np.ndarray:
        return begin_stage(self.agent, current_state, self.schedules)

    def finish_stage(self, current_state: int, own_action: int, own_reward: float, pi_bar: np.ndarray) -> None:
        finish_stage(self.agent, current_state, own_action, own_reward, pi_bar, self.schedules)

    def reduced_update_active(self, state: int) -> bool:
        return reduced_update_active(self.agent, self.schedules, state)
