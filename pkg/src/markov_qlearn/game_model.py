"""
Finite two-player zero-sum discounted Markov games.
Holds the immutable game tuple, its JSON document form, validation,
reachability predicates and transition sampling.
"""

import itertools
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .config import settings
from .errors import GameValidationError, UsageError

logger = logging.getLogger(__name__)

PROBABILITY_TOL = 1e-12

# One probability vector per state for a single player.
StationaryStrategy = List[np.ndarray]


class ValidationReport(BaseModel):
    """Report-style validation result: empty issues means valid."""

    issues: List[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, message: str) -> None:
        self.issues.append(message)


class JointAction(NamedTuple):
    a1: int
    a2: int


class GameDocument(BaseModel):
    """On-disk JSON form of a game."""

    num_states: int
    actions1: List[int]
    actions2: List[int]
    gamma: float
    reward_bound: float
    reward1: List[List[List[float]]]
    kernel: List[List[List[List[float]]]]


@dataclass(frozen=True, eq=False)
class MarkovGame:
    """Immutable tabular zero-sum Markov game.

    Only player 1's reward is stored; player 2's reward is its negation.
    reward1[s] has shape (|A_s^1|, |A_s^2|) and kernel[s] has shape
    (|A_s^1|, |A_s^2|, |S|).
    """

    num_states: int
    actions1: Tuple[int, ...]
    actions2: Tuple[int, ...]
    reward1: Tuple[np.ndarray, ...]
    kernel: Tuple[np.ndarray, ...]
    gamma: float
    reward_bound: float

    def __post_init__(self):
        actions1 = tuple(int(n) for n in self.actions1)
        actions2 = tuple(int(n) for n in self.actions2)
        if len(actions1) != self.num_states or len(actions2) != self.num_states:
            raise GameValidationError(
                f"action lists must have length {self.num_states}, "
                f"got {len(actions1)} and {len(actions2)}"
            )
        if len(self.reward1) != self.num_states or len(self.kernel) != self.num_states:
            raise GameValidationError("reward1 and kernel must have one entry per state")

        rewards = []
        kernels = []
        for s in range(self.num_states):
            reward = np.array(self.reward1[s], dtype=float)
            kernel = np.array(self.kernel[s], dtype=float)
            if reward.shape != (actions1[s], actions2[s]):
                raise GameValidationError(
                    f"reward1[{s}] has shape {reward.shape}, "
                    f"expected {(actions1[s], actions2[s])}"
                )
            if kernel.shape != (actions1[s], actions2[s], self.num_states):
                raise GameValidationError(
                    f"kernel[{s}] has shape {kernel.shape}, "
                    f"expected {(actions1[s], actions2[s], self.num_states)}"
                )
            reward.flags.writeable = False
            kernel.flags.writeable = False
            rewards.append(reward)
            kernels.append(kernel)

        object.__setattr__(self, "actions1", actions1)
        object.__setattr__(self, "actions2", actions2)
        object.__setattr__(self, "reward1", tuple(rewards))
        object.__setattr__(self, "kernel", tuple(kernels))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "reward_bound", float(self.reward_bound))

    @property
    def d_bound(self) -> float:
        """D = R/(1-gamma), the bound on every value-like quantity."""
        return self.reward_bound / (1.0 - self.gamma)

    def reward2(self, s: int) -> np.ndarray:
        """Player 2's reward matrix at state s, indexed [a1][a2]."""
        return -self.reward1[s]

    def reward(self, s: int, player: int) -> np.ndarray:
        if player == 1:
            return self.reward1[s]
        if player == 2:
            return self.reward2(s)
        raise UsageError(f"player must be 1 or 2, got {player}")

    def action_counts(self, player: int) -> Tuple[int, ...]:
        if player == 1:
            return self.actions1
        if player == 2:
            return self.actions2
        raise UsageError(f"player must be 1 or 2, got {player}")

    @cached_property
    def _cumulative_kernel(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.cumsum(k, axis=2) for k in self.kernel)

    def to_document(self) -> GameDocument:
        return GameDocument(
            num_states=self.num_states,
            actions1=list(self.actions1),
            actions2=list(self.actions2),
            gamma=self.gamma,
            reward_bound=self.reward_bound,
            reward1=[r.tolist() for r in self.reward1],
            kernel=[k.tolist() for k in self.kernel],
        )

    def to_json(self) -> str:
        """Canonical JSON text; identical games give identical text."""
        return json.dumps(self.to_document().model_dump(), indent=1)

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")
        logger.info(f"Game saved to {path}")

    @classmethod
    def from_document(
        cls,
        doc: GameDocument,
        renormalize_tol: Optional[float] = None,
    ) -> "MarkovGame":
        """Build a game from its document, renormalizing rows that are
        within renormalize_tol of summing to 1 and rejecting the rest."""
        if renormalize_tol is None:
            renormalize_tol = settings.LOAD_RENORMALIZE_TOL

        kernels = []
        for s, rows in enumerate(doc.kernel):
            kernel = np.array(rows, dtype=float)
            if kernel.ndim != 3:
                raise GameValidationError(f"kernel[{s}] must be a 3-level nested array")
            sums = kernel.sum(axis=2)
            bad = np.argwhere(np.abs(sums - 1.0) > renormalize_tol)
            if bad.size:
                a1, a2 = (int(i) for i in bad[0])
                raise GameValidationError(
                    f"kernel row ({s},{a1},{a2}) sums to {sums[a1, a2]!r}"
                )
            # rows already within PROBABILITY_TOL are kept bit-for-bit
            drifted = np.abs(sums - 1.0) > PROBABILITY_TOL
            kernels.append(np.where(drifted[:, :, None], kernel / sums[:, :, None], kernel))

        game = cls(
            num_states=doc.num_states,
            actions1=tuple(doc.actions1),
            actions2=tuple(doc.actions2),
            reward1=tuple(np.array(r, dtype=float) for r in doc.reward1),
            kernel=tuple(kernels),
            gamma=doc.gamma,
            reward_bound=doc.reward_bound,
        )
        report = validate(game)
        if not report.ok:
            raise GameValidationError("; ".join(report.issues))
        return game

    @classmethod
    def load(cls, path: Path) -> "MarkovGame":
        try:
            doc = GameDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
            return cls.from_document(doc)
        except GameValidationError as e:
            logger.error(f"Error loading game {path}: {e}")
            raise
        except (OSError, ValueError) as e:
            logger.error(f"Error loading game {path}: {e}")
            raise GameValidationError(str(e)) from e


def validate(game: MarkovGame) -> ValidationReport:
    """List every violated game invariant."""
    report = ValidationReport()
    if game.num_states < 1:
        report.add(f"num_states must be positive, got {game.num_states}")
    if not 0.0 <= game.gamma < 1.0:
        report.add(f"gamma must lie in [0, 1), got {game.gamma}")
    if not game.reward_bound > 0.0:
        report.add(f"reward_bound must be positive, got {game.reward_bound}")

    for s in range(game.num_states):
        if game.actions1[s] < 1 or game.actions2[s] < 1:
            report.add(f"state {s} needs at least one action per player")
            continue

        reward = game.reward1[s]
        for a1, a2 in zip(*np.nonzero(~np.isfinite(reward))):
            report.add(f"reward1[{s}][{a1}][{a2}] is not finite")
        for a1, a2 in zip(*np.nonzero(np.abs(reward) > game.reward_bound)):
            report.add(
                f"reward1[{s}][{a1}][{a2}] = {reward[a1, a2]!r} "
                f"exceeds reward_bound {game.reward_bound!r}"
            )

        kernel = game.kernel[s]
        for a1, a2, nxt in zip(*np.nonzero(~(kernel >= 0.0))):
            report.add(f"kernel[{s}][{a1}][{a2}][{nxt}] = {kernel[a1, a2, nxt]!r} is negative or NaN")
        sums = kernel.sum(axis=2)
        for a1, a2 in zip(*np.nonzero(~(np.abs(sums - 1.0) <= PROBABILITY_TOL))):
            report.add(
                f"kernel row ({s},{a1},{a2}) sums to {sums[a1, a2]!r} "
                f"(deviation {sums[a1, a2] - 1.0:+.3e})"
            )
    return report


def _first_passage_stages(game: MarkovGame, universal: bool) -> np.ndarray:
    """Matrix [s, t] of the smallest number of stages (>= 1) after which t is
    reached from s with positive probability; -1 when never.

    With universal=False some joint-action sequence must achieve it, with
    universal=True every joint-action sequence must.
    """
    n = game.num_states
    support = [k > 0.0 for k in game.kernel]
    stages = np.full((n, n), -1, dtype=int)
    for target in range(n):
        hit = np.zeros(n, dtype=bool)
        for k in range(1, n + 1):
            good = hit.copy()
            good[target] = True
            new_hit = np.empty(n, dtype=bool)
            for s in range(n):
                per_action = (support[s] & good).any(axis=2)
                new_hit[s] = per_action.all() if universal else per_action.any()
            # monotone boolean fixpoint
            new_hit |= hit
            fresh = new_hit & ~hit
            stages[fresh, target] = k
            if not fresh.any():
                break
            hit = new_hit
    return stages


def _horizon(stages: np.ndarray) -> Tuple[bool, Optional[int]]:
    if (stages < 0).any():
        return False, None
    return True, int(stages.max())


def check_reach_exists(game: MarkovGame) -> Tuple[bool, Optional[int]]:
    """Every state reaches every state under at least one action sequence.

    The horizon is the largest first-passage stage count over ordered pairs
    (s, t). For t = s it is the first return to s after at least one stage,
    so a 3-state ring that always advances has horizon 3, and the same ring
    with an extra stay action has horizon 2.
    """
    return _horizon(_first_passage_stages(game, universal=False))


def check_reach_universal(game: MarkovGame) -> Tuple[bool, Optional[int]]:
    """Every state reaches every state under every action sequence."""
    return _horizon(_first_passage_stages(game, universal=True))


def unreachable_pairs(game: MarkovGame, universal: bool = False) -> List[Tuple[int, int]]:
    """Ordered pairs (s, s') violating the chosen reachability predicate."""
    stages = _first_passage_stages(game, universal)
    return [(int(s), int(t)) for s, t in zip(*np.nonzero(stages < 0))]


def check_irreducible_pure(game: MarkovGame, max_profiles: int = 100_000) -> bool:
    """True iff every pure stationary profile induces an irreducible chain."""
    choices = [
        list(itertools.product(range(game.actions1[s]), range(game.actions2[s])))
        for s in range(game.num_states)
    ]
    count = int(np.prod([len(c) for c in choices], dtype=float))
    if count > max_profiles:
        raise UsageError(
            f"game has {count} pure stationary profiles, more than max_profiles={max_profiles}"
        )

    n = game.num_states
    for profile in itertools.product(*choices):
        adjacency = np.array(
            [game.kernel[s][a1, a2] > 0.0 for s, (a1, a2) in enumerate(profile)]
        )
        reach = adjacency | np.eye(n, dtype=bool)
        for _ in range(max(1, int(np.ceil(np.log2(n))) + 1)):
            reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
        if not reach.all():
            logger.debug(f"Pure profile {profile} induces a reducible chain")
            return False
    return True


def draw(cumulative: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a cumulative probability vector."""
    u = rng.random() * cumulative[-1]
    index = int(np.searchsorted(cumulative, u, side="right"))
    return min(index, len(cumulative) - 1)


def sample_transition(
    game: MarkovGame,
    s: int,
    joint: JointAction,
    rng: np.random.Generator,
) -> int:
    """Draw the next state from kernel[s][a1][a2][.]."""
    if not 0 <= s < game.num_states:
        raise UsageError(f"state {s} out of range [0, {game.num_states})")
    a1, a2 = joint
    if not (0 <= a1 < game.actions1[s] and 0 <= a2 < game.actions2[s]):
        raise UsageError(
            f"joint action ({a1},{a2}) out of range at state {s} "
            f"({game.actions1[s]}x{game.actions2[s]})"
        )
    return draw(game._cumulative_kernel[s][a1, a2], rng)


def uniform_strategy(counts: Sequence[int]) -> StationaryStrategy:
    return [np.full(n, 1.0 / n) for n in counts]


def validate_strategy(strategy: StationaryStrategy, counts: Sequence[int]) -> List[str]:
    """Problems with a stationary strategy for a player with the given action counts."""
    issues = []
    if len(strategy) != len(counts):
        return [f"strategy covers {len(strategy)} states, game has {len(counts)}"]
    for s, (probs, n) in enumerate(zip(strategy, counts)):
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (n,):
            issues.append(f"state {s}: expected {n} probabilities, got shape {probs.shape}")
        elif (probs < 0).any() or abs(probs.sum() - 1.0) > PROBABILITY_TOL:
            issues.append(f"state {s}: {probs.tolist()} is not a probability vector")
    return issues


def is_interior(strategy: StationaryStrategy) -> bool:
    """Full support on every state."""
    return all((np.asarray(p) > 0.0).all() for p in strategy)
