"""Shared game fixtures."""

import numpy as np
import pytest
from src.markov_qlearn.game_model import MarkovGame


def single_state_game(payoff, gamma=0.5, reward_bound=1.0):
    """A one-state game whose only transition is the self-loop."""
    payoff = np.asarray(payoff, dtype=float)
    n1, n2 = payoff.shape
    return MarkovGame(
        num_states=1,
        actions1=(n1,),
        actions2=(n2,),
        reward1=(payoff,),
        kernel=(np.ones((n1, n2, 1)),),
        gamma=gamma,
        reward_bound=reward_bound,
    )


def game_from_moves(moves, gamma=0.5, reward_bound=1.0, rewards=None):
    """Game built from per-state, per-joint-action next-state distributions.

    moves[s] has shape (|A1|, |A2|, |S|); rewards default to zero.
    """
    kernels = tuple(np.asarray(k, dtype=float) for k in moves)
    if rewards is None:
        rewards = tuple(np.zeros(k.shape[:2]) for k in kernels)
    return MarkovGame(
        num_states=len(kernels),
        actions1=tuple(k.shape[0] for k in kernels),
        actions2=tuple(k.shape[1] for k in kernels),
        reward1=tuple(np.asarray(r, dtype=float) for r in rewards),
        kernel=kernels,
        gamma=gamma,
        reward_bound=reward_bound,
    )


@pytest.fixture
def matching_pennies():
    """Matching pennies as a single-state game with gamma=0.5."""
    return single_state_game([[1.0, -1.0], [-1.0, 1.0]], gamma=0.5)


@pytest.fixture
def two_state_cycle():
    """Every joint action moves to the other state."""
    return game_from_moves([
        [[[0.0, 1.0]]],
        [[[1.0, 0.0]]],
    ])


@pytest.fixture
def small_game():
    """Three states, 2x2 actions, full-support kernel and mixed rewards."""
    rng = np.random.default_rng(3)
    kernel = rng.dirichlet(np.ones(3), size=(3, 2, 2)) * 0.97 + 0.01
    kernel /= kernel.sum(axis=3, keepdims=True)
    rewards = rng.uniform(-1.0, 1.0, size=(3, 2, 2))
    return game_from_moves(list(kernel), gamma=0.6, rewards=list(rewards))
