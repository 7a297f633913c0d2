"""
Verification instruments with full knowledge of the game.
Tracking error, zero-sum drift, the asymptotic bound constants, and a
numerical check of Lyapunov descent along the continuous-time flow.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from .eq_oracle import matrix_value, stage_matrix
from .errors import UsageError
from .game_model import MarkovGame
from .learner import AgentState, smoothed_best_response

logger = logging.getLogger(__name__)


def tracking_error(
    game: MarkovGame,
    agent_q: np.ndarray,
    agent_pibar: np.ndarray,
    all_vhat_of_that_agent: np.ndarray,
    state: int,
    player: int,
    tol: Optional[float] = None,
) -> float:
    """<pi_bar, q_hat> minus the minimax value of the global Q matrix the
    agent's own value estimates imply at `state`."""
    implied = stage_matrix(game, state, all_vhat_of_that_agent, player)
    return float(np.dot(agent_pibar, agent_q)) - matrix_value(implied, tol).value


def zero_sum_drift(agents: Tuple[AgentState, AgentState]) -> np.ndarray:
    first, second = agents
    return first.v_hat + second.v_hat


def g_factor(gamma: float, lam: float) -> float:
    return (2.0 + lam - lam * gamma) / ((1.0 - lam * gamma) * (1.0 - gamma))


def h_factor(gamma: float, lam: float) -> float:
    return (4.0 * gamma * g_factor(gamma, lam) + 2.0 * (1.0 + lam) / (1.0 - lam * gamma)) / (1.0 - gamma)


class BoundConstants(BaseModel):
    """Constants of the asymptotic value and exploitability bounds."""

    xi: float
    xi1: float
    xi2: float
    g_value: float
    h_value: float
    g_plus: float
    h_plus: float
    lam: float
    epsilon: float

    @property
    def value_band(self) -> float:
        """epsilon * xi * g+(gamma): limsup distance of v_hat from the equilibrium values."""
        return self.epsilon * self.xi * self.g_plus

    @property
    def exploitability_band(self) -> float:
        return self.epsilon * self.xi * self.h_plus

    def rationality_band(self, player: int) -> float:
        xi = self.xi1 if player == 1 else self.xi2
        return self.epsilon * xi * self.g_plus


def bound_constants(game: MarkovGame, lam: float, epsilon_limit: float) -> BoundConstants:
    gamma = game.gamma
    upper = math.inf if gamma == 0 else 1.0 / gamma
    if not 1.0 < lam < upper:
        raise UsageError(f"lambda must lie in (1, {upper:.6g}), got {lam}")

    counts1 = np.array(game.actions1, dtype=float)
    counts2 = np.array(game.actions2, dtype=float)
    return BoundConstants(
        xi=float(np.log(counts1 * counts2).max()),
        xi1=float(np.log(counts1).max()),
        xi2=float(np.log(counts2).max()),
        g_value=g_factor(gamma, lam),
        h_value=h_factor(gamma, lam),
        g_plus=g_factor(gamma, 1.0),
        h_plus=h_factor(gamma, 1.0),
        lam=lam,
        epsilon=epsilon_limit,
    )


@dataclass(frozen=True)
class FlowState:
    """A point of the higher-dimensional flow for one auxiliary stage game.

    Q1 is |A1| x |A2| and Q2 is |A2| x |A1|; both players maximize.
    """

    q1: np.ndarray
    q2: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    tau: float
    lam: float


def log_sum_exp(q: np.ndarray, temperature: float) -> float:
    """tau * log sum exp(q / tau): the entropy-smoothed maximum of q."""
    top = float(q.max())
    return top + temperature * math.log(float(np.exp((q - top) / temperature).sum()))


def lyapunov_terms(fs: FlowState) -> Tuple[float, float, float]:
    """(L, H, zeta): the smoothed-max bracket, the belief residual and zeta."""
    if not fs.tau > 0:
        raise UsageError(f"tau must be positive, got {fs.tau}")
    n1, n2 = fs.Q1.shape
    zeta = float(np.abs(fs.Q1 + fs.Q2.T).max()) + fs.tau * math.log(n1 * n2)
    bracket = log_sum_exp(fs.q1, fs.tau) + log_sum_exp(fs.q2, fs.tau) - fs.lam * zeta
    residual = float(
        np.sum((fs.q1 - fs.Q1 @ fs.pi2) ** 2) + np.sum((fs.q2 - fs.Q2 @ fs.pi1) ** 2)
    )
    return bracket, residual, zeta


def lyapunov_value(fs: FlowState) -> float:
    bracket, residual, _ = lyapunov_terms(fs)
    return max(bracket, 0.0) + residual


def flow_derivative(fs: FlowState) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    br1 = smoothed_best_response(fs.q1, fs.tau)
    br2 = smoothed_best_response(fs.q2, fs.tau)
    return fs.Q1 @ br2 - fs.q1, fs.Q2 @ br1 - fs.q2, br1 - fs.pi1, br2 - fs.pi2


def _shifted(fs: FlowState, derivative, h: float) -> FlowState:
    dq1, dq2, dpi1, dpi2 = derivative
    return replace(
        fs,
        q1=fs.q1 + h * dq1,
        q2=fs.q2 + h * dq2,
        pi1=fs.pi1 + h * dpi1,
        pi2=fs.pi2 + h * dpi2,
    )


def _renormalized(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def rk4_step(fs: FlowState, dt: float) -> FlowState:
    k1 = flow_derivative(fs)
    k2 = flow_derivative(_shifted(fs, k1, dt / 2))
    k3 = flow_derivative(_shifted(fs, k2, dt / 2))
    k4 = flow_derivative(_shifted(fs, k3, dt))
    slope = tuple((a + 2 * b + 2 * c + d) / 6 for a, b, c, d in zip(k1, k2, k3, k4))
    stepped = _shifted(fs, slope, dt)
    return replace(stepped, pi1=_renormalized(stepped.pi1), pi2=_renormalized(stepped.pi2))


def iterate_flow(fs: FlowState, horizon: float, dt: float) -> Iterator[FlowState]:
    """Yield the initial state and every RK4 step up to `horizon`."""
    if not dt > 0 or horizon < dt:
        raise UsageError(f"need dt > 0 and horizon >= dt, got dt={dt}, horizon={horizon}")
    steps = int(round(horizon / dt))
    yield fs
    for _ in range(steps):
        fs = rk4_step(fs, dt)
        yield fs


def integrate_flow(fs: FlowState, horizon: float, dt: float) -> List[FlowState]:
    """Classical RK4 integration of the flow with tau and Q held fixed."""
    return list(iterate_flow(fs, horizon, dt))


class DescentSummary(BaseModel):
    instances: int
    passed: int
    worst_increase: float
    worst_rate: float


def random_flow_state(
    rng: np.random.Generator,
    temperature: float,
    lam: float,
    perturbation: float = 0.0,
    max_actions: int = 4,
    bound: float = 1.0,
) -> FlowState:
    """Random flow instance: Q2 = -Q1^T plus an optional uniform perturbation."""
    n1, n2 = (int(k) for k in rng.integers(2, max_actions + 1, size=2))
    Q1 = rng.uniform(-bound, bound, size=(n1, n2))
    Q2 = -Q1.T
    if perturbation > 0:
        Q2 = np.clip(Q2 + rng.uniform(-perturbation, perturbation, size=Q2.shape), -bound, bound)
    return FlowState(
        q1=rng.uniform(-bound, bound, size=n1),
        q2=rng.uniform(-bound, bound, size=n2),
        pi1=rng.dirichlet(np.ones(n1)),
        pi2=rng.dirichlet(np.ones(n2)),
        Q1=Q1,
        Q2=Q2,
        tau=temperature,
        lam=lam,
    )


def descent_check(
    instances: int = 100,
    taus: Sequence[float] = (0.05, 0.5),
    lam: float = 1.1,
    dt: float = 1e-3,
    horizon: float = 20.0,
    seed: int = 0,
    slack: float = 1e-9,
    active_floor: float = 1e-6,
    min_rate: float = 1e-10,
) -> DescentSummary:
    """Integrate random instances and check that V never increases (up to
    `slack`) and strictly decreases at rate > min_rate while V > active_floor.

    Even instances are exactly zero-sum, odd ones perturbed.
    """
    rng = np.random.default_rng(seed)
    passed = 0
    worst_increase = -math.inf
    worst_rate = -math.inf
    for i in range(instances):
        fs = random_flow_state(
            rng,
            temperature=taus[i % len(taus)],
            lam=lam,
            perturbation=0.0 if i % 2 == 0 else 0.2,
        )
        ok = True
        previous = None
        for point in iterate_flow(fs, horizon, dt):
            value = lyapunov_value(point)
            if previous is not None:
                change = value - previous
                worst_increase = max(worst_increase, change)
                if change > slack:
                    ok = False
                if previous > active_floor:
                    rate = change / dt
                    worst_rate = max(worst_rate, rate)
                    if not rate < -min_rate:
                        ok = False
            previous = value
        passed += ok
        if not ok:
            logger.warning(f"Descent check failed on instance {i}")
    return DescentSummary(
        instances=instances,
        passed=passed,
        worst_increase=worst_increase,
        worst_rate=worst_rate,
    )
