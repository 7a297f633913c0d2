"""
Exact ground-truth solvers for zero-sum Markov games.
Matrix games are solved through the maximin linear program with a dense
simplex routine; Markov games through Shapley value iteration. Nothing in
this module is visible to the learning agents.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import settings
from .errors import OracleError, UsageError
from .game_model import MarkovGame, StationaryStrategy
from .timing import log_timing

logger = logging.getLogger(__name__)

PIVOT_EPS = 1e-12
MAX_SWEEPS = 100_000
DIRECT_SOLVE_MAX_STATES = 200


class MatrixGameSolution(NamedTuple):
    value: float
    row_strategy: np.ndarray
    col_strategy: np.ndarray


def _simplex_unit_packing(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """Maximize sum(y) s.t. A y <= 1, y >= 0 for a strictly positive A.

    Returns the primal y, the dual x (min sum(x) s.t. A^T x >= 1) read from
    the slack reduced costs, and the optimal objective. Bland's rule picks
    both the entering and the leaving variable.
    """
    m, n = A.shape
    tableau = np.zeros((m + 1, n + m + 1))
    tableau[:m, :n] = A
    tableau[:m, n:n + m] = np.eye(m)
    tableau[:m, -1] = 1.0
    tableau[m, :n] = -1.0
    basis = list(range(n, n + m))

    for _ in range(50 * (m + n) + 100):
        reduced = tableau[m, :-1]
        entering_candidates = np.nonzero(reduced < -PIVOT_EPS)[0]
        if entering_candidates.size == 0:
            break
        enter = int(entering_candidates[0])

        column = tableau[:m, enter]
        rows = np.nonzero(column > PIVOT_EPS)[0]
        if rows.size == 0:
            raise OracleError("maximin LP is unbounded")
        ratios = tableau[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + PIVOT_EPS * max(1.0, abs(best))]
        leave = int(min(tied, key=lambda r: basis[r]))

        tableau[leave] /= tableau[leave, enter]
        for r in range(m + 1):
            if r != leave and tableau[r, enter] != 0.0:
                tableau[r] -= tableau[r, enter] * tableau[leave]
        basis[leave] = enter
    else:
        raise OracleError("simplex did not terminate")

    y = np.zeros(n)
    for r, var in enumerate(basis):
        if var < n:
            y[var] = tableau[r, -1]
    x = tableau[m, n:n + m].copy()
    return y, x, float(tableau[m, -1])


def _to_simplex(weights: np.ndarray) -> np.ndarray:
    weights = np.clip(weights, 0.0, None)
    return weights / weights.sum()


def matrix_value(payoff, tol: Optional[float] = None) -> MatrixGameSolution:
    """Maximin value of a matrix game whose row player maximizes."""
    if tol is None:
        tol = settings.ORACLE_TOL
    if not tol > 0:
        raise OracleError(f"tol must be positive, got {tol}")
    P = np.asarray(payoff, dtype=float)
    if P.ndim != 2 or P.shape[0] < 1 or P.shape[1] < 1:
        raise OracleError(f"payoff must be a non-empty matrix, got shape {P.shape}")
    if not np.isfinite(P).all():
        raise OracleError("payoff has non-finite entries")

    shift = float(np.abs(P).max()) + 1.0
    y, x, total = _simplex_unit_packing(P + shift)
    col_strategy = _to_simplex(y)
    row_strategy = _to_simplex(x)
    value = 1.0 / total - shift

    gap = float((P @ col_strategy).max() - (row_strategy @ P).min())
    if gap > tol:
        raise OracleError(f"duality gap {gap:.3e} exceeds tol {tol:.3e}")
    return MatrixGameSolution(value, row_strategy, col_strategy)


def stage_matrix(game: MarkovGame, s: int, values: np.ndarray, player: int = 1) -> np.ndarray:
    """Auxiliary stage game r_s^i + gamma * sum_s' p(s'|s,.) values[s'],
    oriented so that `player` is the row (maximizing) player."""
    continuation = game.kernel[s] @ np.asarray(values, dtype=float)
    matrix = game.reward(s, player) + game.gamma * continuation
    return matrix if player == 1 else matrix.T


def shapley_operator(game: MarkovGame, values: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    return np.array([
        matrix_value(stage_matrix(game, s, values), tol).value
        for s in range(game.num_states)
    ])


def _stop_threshold(gamma: float, tol: float) -> float:
    return tol * (1.0 - gamma) / gamma if gamma > 0 else math.inf


@dataclass
class SolutionCertificate:
    """Equilibrium values, global Q-function and one equilibrium profile."""

    values1: np.ndarray
    q_star1: Tuple[np.ndarray, ...]
    strategy1: StationaryStrategy
    strategy2: StationaryStrategy
    bellman_residual: float
    iterations: int
    tol: float

    @property
    def values2(self) -> np.ndarray:
        return -self.values1

    def to_dict(self) -> dict:
        return {
            "values1": self.values1.tolist(),
            "values2": self.values2.tolist(),
            "q_star1": [q.tolist() for q in self.q_star1],
            "strategy1": [p.tolist() for p in self.strategy1],
            "strategy2": [p.tolist() for p in self.strategy2],
            "bellman_residual": self.bellman_residual,
            "iterations": self.iterations,
            "tol": self.tol,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


@log_timing
def shapley_solve(game: MarkovGame, tol: Optional[float] = None) -> SolutionCertificate:
    """Shapley value iteration from v = 0 to Bellman residual <= tol."""
    if tol is None:
        tol = settings.ORACLE_TOL
    if not tol > 0:
        raise OracleError(f"tol must be positive, got {tol}")

    threshold = _stop_threshold(game.gamma, tol)
    values = np.zeros(game.num_states)
    for iteration in range(1, MAX_SWEEPS + 1):
        updated = shapley_operator(game, values, tol)
        delta = float(np.abs(updated - values).max())
        values = updated
        if delta <= threshold:
            break
    else:
        raise OracleError(f"Shapley iteration did not converge in {MAX_SWEEPS} sweeps")

    q_star1 = tuple(stage_matrix(game, s, values) for s in range(game.num_states))
    solutions = [matrix_value(q, tol) for q in q_star1]
    residual = float(max(abs(values[s] - sol.value) for s, sol in enumerate(solutions)))
    logger.debug(f"Shapley iteration converged in {iteration} sweeps, residual {residual:.3e}")

    return SolutionCertificate(
        values1=values,
        q_star1=q_star1,
        strategy1=[sol.row_strategy for sol in solutions],
        strategy2=[sol.col_strategy for sol in solutions],
        bellman_residual=residual,
        iterations=iteration,
        tol=tol,
    )


def _profile_chain(
    game: MarkovGame,
    strat1: StationaryStrategy,
    strat2: StationaryStrategy,
) -> Tuple[np.ndarray, np.ndarray]:
    rewards = np.array([
        strat1[s] @ game.reward1[s] @ strat2[s] for s in range(game.num_states)
    ])
    transitions = np.array([
        np.einsum("i,j,ijk->k", strat1[s], strat2[s], game.kernel[s])
        for s in range(game.num_states)
    ])
    return rewards, transitions


def policy_eval(
    game: MarkovGame,
    strat1: StationaryStrategy,
    strat2: StationaryStrategy,
    tol: Optional[float] = None,
) -> np.ndarray:
    """Player 1's values v = r_pi + gamma P_pi v under a stationary profile."""
    if tol is None:
        tol = settings.ORACLE_TOL
    rewards, transitions = _profile_chain(game, strat1, strat2)
    n = game.num_states
    if n <= DIRECT_SOLVE_MAX_STATES:
        return np.linalg.solve(np.eye(n) - game.gamma * transitions, rewards)

    threshold = _stop_threshold(game.gamma, tol)
    values = np.zeros(n)
    for _ in range(MAX_SWEEPS):
        updated = rewards + game.gamma * transitions @ values
        delta = float(np.abs(updated - values).max())
        values = updated
        if delta <= threshold:
            return values
    raise OracleError("policy evaluation did not converge")


def _induced_mdp(
    game: MarkovGame,
    opponent: StationaryStrategy,
    for_player: int,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Per state: expected stage reward per own action and the own-action
    transition matrix, with the opponent's strategy marginalized out."""
    mdp = []
    for s in range(game.num_states):
        if for_player == 1:
            rewards = game.reward1[s] @ opponent[s]
            transitions = np.einsum("j,ijk->ik", opponent[s], game.kernel[s])
        else:
            rewards = opponent[s] @ game.reward2(s)
            transitions = np.einsum("i,ijk->jk", opponent[s], game.kernel[s])
        mdp.append((rewards, transitions))
    return mdp


def best_response_value(
    game: MarkovGame,
    opponent: StationaryStrategy,
    for_player: int,
    tol: Optional[float] = None,
) -> Tuple[np.ndarray, StationaryStrategy]:
    """Optimal values of `for_player` against a fixed opponent, and a greedy
    deterministic best response (ties to the lowest action index)."""
    if for_player not in (1, 2):
        raise UsageError(f"for_player must be 1 or 2, got {for_player}")
    if tol is None:
        tol = settings.ORACLE_TOL

    mdp = _induced_mdp(game, opponent, for_player)
    threshold = _stop_threshold(game.gamma, tol)
    values = np.zeros(game.num_states)
    for _ in range(MAX_SWEEPS):
        action_values = [r + game.gamma * (P @ values) for r, P in mdp]
        updated = np.array([q.max() for q in action_values])
        delta = float(np.abs(updated - values).max())
        values = updated
        if delta <= threshold:
            break
    else:
        raise OracleError("best-response value iteration did not converge")

    strategy = []
    for r, P in mdp:
        greedy = np.zeros(len(r))
        greedy[int(np.argmax(r + game.gamma * (P @ values)))] = 1.0
        strategy.append(greedy)
    return values, strategy


def exploitability(
    game: MarkovGame,
    strat1: StationaryStrategy,
    strat2: StationaryStrategy,
    tol: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-state best-response gain of each player against the profile."""
    values1 = policy_eval(game, strat1, strat2, tol)
    best1, _ = best_response_value(game, strat2, 1, tol)
    best2, _ = best_response_value(game, strat1, 2, tol)
    return best1 - values1, best2 + values1


def as_strategy(rows: Sequence[Sequence[float]]) -> StationaryStrategy:
    return [np.asarray(p, dtype=float) for p in rows]
