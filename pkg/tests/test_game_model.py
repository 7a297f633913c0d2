"""Tests for the game model."""

import json

import numpy as np
import pytest
from src.markov_qlearn.errors import GameValidationError, UsageError
from src.markov_qlearn.game_model import (
    JointAction,
    MarkovGame,
    check_irreducible_pure,
    check_reach_exists,
    check_reach_universal,
    is_interior,
    sample_transition,
    uniform_strategy,
    unreachable_pairs,
    validate,
    validate_strategy,
)

from .conftest import game_from_moves, single_state_game


@pytest.fixture
def absorbing_game():
    """State 0 is absorbing; state 1 always moves to 0."""
    return game_from_moves([
        [[[1.0, 0.0]]],
        [[[1.0, 0.0]]],
    ])


@pytest.fixture
def advancing_chain():
    """Three states in a ring; player 1's action 0 advances, action 1 stays."""
    moves = []
    for s in range(3):
        kernel = np.zeros((2, 1, 3))
        kernel[0, 0, (s + 1) % 3] = 1.0
        kernel[1, 0, s] = 1.0
        moves.append(kernel)
    return game_from_moves(moves)


def test_valid_game_has_empty_report(matching_pennies):
    """Test that a well-formed game validates cleanly."""
    report = validate(matching_pennies)
    assert report.ok
    assert report.issues == []


def test_kernel_row_deviation_is_reported():
    """Test that a row summing to 0.9 is named with its deviation."""
    game = game_from_moves([[[[0.9]]]])
    report = validate(game)
    assert not report.ok
    assert any("(0,0,0)" in issue and "0.9" in issue for issue in report.issues)


def test_reward_above_bound_is_reported():
    """Test that |r| > R names the offending entry."""
    game = single_state_game([[1.5, 0.0], [0.0, 0.0]], reward_bound=1.0)
    report = validate(game)
    assert any("reward1[0][0][0]" in issue for issue in report.issues)


def test_bad_gamma_and_negative_probability_are_reported():
    """Test that several violations are all listed."""
    game = game_from_moves([[[[1.2, -0.2]]], [[[0.0, 1.0]]]], gamma=1.0)
    report = validate(game)
    assert any("gamma" in issue for issue in report.issues)
    assert any("negative" in issue for issue in report.issues)


def test_shape_mismatch_raises():
    """Test that inconsistent tensor shapes are rejected at construction."""
    with pytest.raises(GameValidationError):
        MarkovGame(
            num_states=1,
            actions1=(2,),
            actions2=(2,),
            reward1=(np.zeros((2, 3)),),
            kernel=(np.ones((2, 2, 1)),),
            gamma=0.5,
            reward_bound=1.0,
        )


def test_player_two_reward_is_exact_negation(small_game):
    """Test the zero-sum structure."""
    for s in range(small_game.num_states):
        assert np.array_equal(small_game.reward2(s), -small_game.reward1[s])
        assert np.array_equal(small_game.reward(s, 1) + small_game.reward(s, 2), np.zeros((2, 2)))


def test_d_bound(matching_pennies):
    """Test D = R/(1-gamma)."""
    assert matching_pennies.d_bound == pytest.approx(2.0)


def test_cycle_reachability(two_state_cycle):
    """Test that a deterministic 2-cycle reaches everything within 2 stages."""
    assert check_reach_exists(two_state_cycle) == (True, 2)
    assert check_reach_universal(two_state_cycle) == (True, 2)


def test_absorbing_state_blocks_reachability(absorbing_game):
    """Test that nothing leaves an absorbing state."""
    holds, horizon = check_reach_exists(absorbing_game)
    assert holds is False
    assert horizon is None
    assert (0, 1) in unreachable_pairs(absorbing_game)


def test_advancing_chain(advancing_chain):
    """Test the chain where only one action advances."""
    assert check_reach_exists(advancing_chain) == (True, 2)
    holds, _ = check_reach_universal(advancing_chain)
    assert holds is False


def test_return_to_the_start_counts_toward_the_horizon():
    """Test that a 3-state ring that always advances needs 3 stages to return."""
    moves = []
    for s in range(3):
        kernel = np.zeros((1, 1, 3))
        kernel[0, 0, (s + 1) % 3] = 1.0
        moves.append(kernel)
    game = game_from_moves(moves)
    assert check_reach_exists(game) == (True, 3)
    assert check_reach_universal(game) == (True, 3)


def test_universal_with_sticky_move():
    """Test two states where both actions move with probability at least 0.1."""
    moves = []
    for s in range(2):
        kernel = np.zeros((2, 1, 2))
        kernel[0, 0, s] = 0.9
        kernel[0, 0, 1 - s] = 0.1
        kernel[1, 0, 1 - s] = 1.0
        moves.append(kernel)
    game = game_from_moves(moves)
    assert check_reach_universal(game) == (True, 2)


def test_full_support_reaches_in_one_stage(small_game):
    """Test the full-support case."""
    assert check_reach_universal(small_game) == (True, 1)
    assert check_reach_exists(small_game) == (True, 1)


def test_reachability_is_monotone(small_game, two_state_cycle, advancing_chain, absorbing_game):
    """Test that universal reachability implies existential reachability."""
    for game in (small_game, two_state_cycle, advancing_chain, absorbing_game):
        if check_reach_universal(game)[0]:
            assert check_reach_exists(game)[0]


def test_irreducible_pure(small_game, advancing_chain):
    """Test pure-profile irreducibility."""
    assert check_irreducible_pure(small_game)
    assert not check_irreducible_pure(advancing_chain)


def test_irreducible_pure_refuses_large_games(small_game):
    """Test the enumeration cap."""
    with pytest.raises(UsageError):
        check_irreducible_pure(small_game, max_profiles=10)


def test_deterministic_transition():
    """Test a degenerate row."""
    game = game_from_moves([[[[0.0, 0.0, 1.0]]]] * 3)
    rng = np.random.default_rng(0)
    assert all(sample_transition(game, 0, JointAction(0, 0), rng) == 2 for _ in range(20))


def test_uniform_transition_frequencies():
    """Test the law of large numbers on a uniform row."""
    game = game_from_moves([[[np.full(4, 0.25)]]] * 4)
    rng = np.random.default_rng(1)
    draws = np.array([sample_transition(game, 0, JointAction(0, 0), rng) for _ in range(100_000)])
    frequencies = np.bincount(draws, minlength=4) / len(draws)
    assert np.all(np.abs(frequencies - 0.25) <= 0.01)


def test_sampling_is_deterministic(small_game):
    """Test that identical seeds give identical sequences."""
    def sequence():
        rng = np.random.default_rng(42)
        s, out = 0, []
        for k in range(200):
            s = sample_transition(small_game, s, JointAction(k % 2, (k // 2) % 2), rng)
            out.append(s)
        return out

    assert sequence() == sequence()


def test_out_of_range_indices(small_game):
    """Test that bad indices are usage faults."""
    rng = np.random.default_rng(0)
    with pytest.raises(UsageError):
        sample_transition(small_game, 3, JointAction(0, 0), rng)
    with pytest.raises(UsageError):
        sample_transition(small_game, 0, JointAction(2, 0), rng)


def test_save_and_load(small_game, tmp_path):
    """Test the JSON game file."""
    path = tmp_path / "game.json"
    small_game.save(path)
    loaded = MarkovGame.load(path)
    assert loaded.to_json() == small_game.to_json()
    doc = json.loads(path.read_text())
    assert set(doc) == {"num_states", "actions1", "actions2", "gamma", "reward_bound", "reward1", "kernel"}


def test_load_renormalizes_rounding(tmp_path, matching_pennies):
    """Test that rows within 1e-9 of summing to 1 are renormalized."""
    doc = matching_pennies.to_document().model_dump()
    doc["kernel"][0][0][0] = [1.0 + 5e-10]
    path = tmp_path / "game.json"
    path.write_text(json.dumps(doc))
    loaded = MarkovGame.load(path)
    assert loaded.kernel[0][0, 0, 0] == 1.0


def test_load_rejects_bad_rows(tmp_path, matching_pennies):
    """Test that rows far from summing to 1 are rejected."""
    doc = matching_pennies.to_document().model_dump()
    doc["kernel"][0][1][1] = [0.9]
    path = tmp_path / "game.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(GameValidationError):
        MarkovGame.load(path)


def test_load_rejects_malformed_json(tmp_path):
    """Test that unparseable files surface as validation errors."""
    path = tmp_path / "game.json"
    path.write_text("{not json")
    with pytest.raises(GameValidationError):
        MarkovGame.load(path)


def test_strategies():
    """Test strategy helpers."""
    uniform = uniform_strategy([2, 3])
    assert validate_strategy(uniform, [2, 3]) == []
    assert is_interior(uniform)
    assert not is_interior([np.array([1.0, 0.0])])
    assert validate_strategy([np.array([0.7, 0.2])], [2])
