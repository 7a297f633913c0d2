"""Tests for the equilibrium oracle."""

import json

import numpy as np
import pytest
from src.markov_qlearn.eq_oracle import (
    as_strategy,
    best_response_value,
    exploitability,
    matrix_value,
    policy_eval,
    shapley_operator,
    shapley_solve,
    stage_matrix,
)
from src.markov_qlearn.errors import OracleError
from src.markov_qlearn.harness import GameSpec, KernelStyle, RewardStyle, generate_game

from .conftest import game_from_moves, single_state_game


def brute_force_value(payoff, step=1e-3):
    """Maximin value of a two-row game over a grid of row strategies."""
    p = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    mixed = np.outer(p, payoff[0]) + np.outer(1 - p, payoff[1])
    return mixed.min(axis=1).max()


@pytest.fixture
def case2_game():
    """A generated game with the case-2 shape."""
    return generate_game(GameSpec(
        num_states=5,
        num_actions=3,
        gamma=0.6,
        reward_style=RewardStyle.SCALED_EXP,
        kernel_style=KernelStyle.FULL_SUPPORT,
        seed=11,
    ))


def test_zero_matrix():
    """Test that every strategy of an all-zero game is worth 0."""
    assert matrix_value(np.zeros((3, 3))).value == pytest.approx(0.0, abs=1e-12)


def test_matching_pennies_matrix():
    """Test the symmetric mixed equilibrium."""
    solution = matrix_value([[1.0, -1.0], [-1.0, 1.0]])
    assert solution.value == pytest.approx(0.0, abs=1e-10)
    assert solution.row_strategy == pytest.approx([0.5, 0.5], abs=1e-10)
    assert solution.col_strategy == pytest.approx([0.5, 0.5], abs=1e-10)


@pytest.mark.parametrize("payoff,value", [
    ([[3.0, 0.0], [1.0, 2.0]], 1.5),
    ([[2.0, 1.0], [3.0, 4.0]], 3.0),
    ([[5.0]], 5.0),
])
def test_known_values(payoff, value):
    """Test mixed and pure saddle points."""
    assert matrix_value(payoff).value == pytest.approx(value, abs=1e-8)


def test_pure_saddle_strategies():
    """Test that the pure saddle is found at row 2, column 1."""
    solution = matrix_value([[2.0, 1.0], [3.0, 4.0]])
    assert solution.row_strategy == pytest.approx([0.0, 1.0], abs=1e-10)
    assert solution.col_strategy == pytest.approx([1.0, 0.0], abs=1e-10)


def test_matches_grid_search():
    """Test random 2 x k games against a brute-force grid."""
    rng = np.random.default_rng(0)
    for _ in range(50):
        payoff = rng.uniform(-1.0, 1.0, size=(2, int(rng.integers(2, 6))))
        assert matrix_value(payoff).value == pytest.approx(brute_force_value(payoff), abs=5e-3)


def three_row_grid_value(payoff, divisions=400):
    """Maximin value of a three-row game over a grid on the probability simplex."""
    i, j = np.meshgrid(np.arange(divisions + 1), np.arange(divisions + 1), indexing="ij")
    keep = i + j <= divisions
    weights = np.stack([i[keep], j[keep], divisions - i[keep] - j[keep]], axis=1) / divisions
    return (weights @ payoff).min(axis=1).max()


def test_matches_three_row_grid_search():
    """Test random 3 x k games against a brute-force simplex grid."""
    rng = np.random.default_rng(2)
    for _ in range(30):
        payoff = rng.uniform(-1.0, 1.0, size=(3, int(rng.integers(2, 6))))
        value = matrix_value(payoff).value
        grid = three_row_grid_value(payoff)
        assert grid <= value + 1e-9
        assert value - grid <= 1e-2


@pytest.mark.parametrize("scale,shift", [(2.0, 0.0), (0.5, -0.3), (3.0, 1.7)])
def test_value_is_shift_and_scale_equivariant(scale, shift):
    """Test val(a M + b) = a val(M) + b for a > 0."""
    rng = np.random.default_rng(3)
    for _ in range(20):
        payoff = rng.uniform(-1.0, 1.0, size=tuple(int(k) for k in rng.integers(2, 5, size=2)))
        expected = scale * matrix_value(payoff).value + shift
        assert matrix_value(scale * payoff + shift).value == pytest.approx(expected, abs=1e-8)


def test_strategies_certify_the_value():
    """Test the duality gap on random rectangular games."""
    rng = np.random.default_rng(1)
    for _ in range(50):
        m, n = (int(k) for k in rng.integers(2, 6, size=2))
        payoff = rng.uniform(-1.0, 1.0, size=(m, n))
        solution = matrix_value(payoff)
        assert (solution.row_strategy @ payoff).min() >= solution.value - 1e-9
        assert (payoff @ solution.col_strategy).max() <= solution.value + 1e-9
        assert solution.row_strategy.sum() == pytest.approx(1.0)


def test_rejects_bad_input():
    """Test non-finite entries and bad tolerances."""
    with pytest.raises(OracleError):
        matrix_value([[np.inf, 0.0]])
    with pytest.raises(OracleError):
        matrix_value([[1.0]], tol=0.0)
    with pytest.raises(OracleError):
        shapley_solve(single_state_game([[1.0]]), tol=-1.0)


def test_single_state_constant_shift():
    """Test v* = val(M)/(1-gamma) for a one-state game."""
    payoff = [[3.0, 0.0], [1.0, 2.0]]
    game = single_state_game(np.array(payoff) / 3.0, gamma=0.5)
    certificate = shapley_solve(game)
    assert certificate.values1[0] == pytest.approx(0.5 / 0.5, abs=1e-8)
    assert certificate.values2[0] == pytest.approx(-1.0, abs=1e-8)


def test_certificate_invariants(case2_game):
    """Test residual, bound and Q reconstruction."""
    certificate = shapley_solve(case2_game)
    assert certificate.bellman_residual <= 1e-10
    assert np.all(np.abs(certificate.values1) <= case2_game.d_bound)
    for s in range(case2_game.num_states):
        assert np.array_equal(certificate.q_star1[s], stage_matrix(case2_game, s, certificate.values1))
    doc = json.loads(certificate.to_json())
    assert doc["values2"] == pytest.approx([-v for v in doc["values1"]])


def test_equilibrium_is_unexploitable(case2_game):
    """Test that the certificate's profile leaves nothing on the table."""
    certificate = shapley_solve(case2_game)
    gains1, gains2 = exploitability(case2_game, certificate.strategy1, certificate.strategy2)
    assert np.all(gains1 <= 1e-7)
    assert np.all(gains2 <= 1e-7)
    assert np.all(gains1 >= -1e-7)


def test_policy_eval_matches_equilibrium_values(case2_game):
    """Test that evaluating the equilibrium profile recovers v*."""
    certificate = shapley_solve(case2_game)
    values = policy_eval(case2_game, certificate.strategy1, certificate.strategy2)
    assert values == pytest.approx(certificate.values1, abs=1e-8)


def test_best_response_against_biased_opponent(matching_pennies):
    """Test best responses to [0.75, 0.25] with gamma=0.5."""
    opponent = as_strategy([[0.75, 0.25]])
    values, greedy = best_response_value(matching_pennies, opponent, for_player=1)
    assert values[0] == pytest.approx(1.0, abs=1e-8)
    assert greedy[0].tolist() == [1.0, 0.0]

    values, greedy = best_response_value(matching_pennies, opponent, for_player=2)
    assert values[0] == pytest.approx(1.0, abs=1e-8)
    assert greedy[0].tolist() == [0.0, 1.0]


def test_pure_strategy_is_exploitable(matching_pennies):
    """Test that a pure player 1 gives player 2 a gain of 1/(1-gamma)."""
    gains1, gains2 = exploitability(matching_pennies, as_strategy([[1.0, 0.0]]), as_strategy([[0.5, 0.5]]))
    assert gains1[0] == pytest.approx(0.0, abs=1e-8)
    assert gains2[0] == pytest.approx(1.0 / (1.0 - 0.5), abs=1e-8)


def test_policy_eval_uniform_matching_pennies(matching_pennies):
    """Test that uniform play in matching pennies is worth 0."""
    uniform = as_strategy([[0.5, 0.5]])
    assert policy_eval(matching_pennies, uniform, uniform)[0] == pytest.approx(0.0, abs=1e-12)


def test_shapley_operator_is_a_contraction(case2_game):
    """Test |T(v) - T(w)| <= gamma |v - w| in the max norm on random pairs."""
    rng = np.random.default_rng(4)
    bound = case2_game.d_bound
    for _ in range(20):
        v, w = rng.uniform(-bound, bound, size=(2, case2_game.num_states))
        gap = np.abs(shapley_operator(case2_game, v) - shapley_operator(case2_game, w)).max()
        assert gap <= case2_game.gamma * np.abs(v - w).max() + 1e-9


def test_best_response_to_equilibrium_recovers_values(case2_game):
    """Test that player 1's best response to the equilibrium strategy2 is worth v*."""
    certificate = shapley_solve(case2_game)
    values, greedy = best_response_value(case2_game, certificate.strategy2, for_player=1, tol=certificate.tol)
    assert np.abs(values - certificate.values1).max() <= 2 * certificate.tol + 1e-12
    assert all(g.sum() == 1.0 for g in greedy)


def test_policy_eval_constant_reward():
    """Test v = 1/(1-gamma) = 2 everywhere when every reward is 1."""
    moves = [np.full((2, 3, 2), 0.5), np.full((2, 3, 2), 0.5)]
    game = game_from_moves(moves, gamma=0.5, rewards=[np.ones((2, 3)), np.ones((2, 3))])
    strat1 = as_strategy([[0.3, 0.7], [1.0, 0.0]])
    strat2 = as_strategy([[0.2, 0.2, 0.6], [0.0, 0.5, 0.5]])
    assert policy_eval(game, strat1, strat2) == pytest.approx([2.0, 2.0], abs=1e-12)
