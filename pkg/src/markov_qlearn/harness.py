"""
Experiment orchestration.

Random game generation, the self-play and fixed-opponent simulation loops,
multi-seed batches and the built-in experiment presets. The harness is the
only place that holds both players; agents never see each other's data.
"""

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from .cache_manager import certificate_cache
from .checkpoint_manager import CheckpointManager, SimulationCheckpoint
from .config import settings
from .diagnostics import BoundConstants, bound_constants, tracking_error, zero_sum_drift
from .eq_oracle import SolutionCertificate, as_strategy, best_response_value, exploitability
from .errors import ConfigError, GenerationError
from .game_model import (
    JointAction,
    MarkovGame,
    check_reach_exists,
    check_reach_universal,
    draw,
    is_interior,
    sample_transition,
    validate,
    validate_strategy,
)
from .learner import AgentState, begin_stage, current_temperature, finish_stage, smoothed_best_response
from .schedules import ScheduleConfig, ScheduleMode, validate_schedule
from .timing import log_timing
from .trajectory import TrajectoryLog, aggregate

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int], None]


class RewardStyle(str, Enum):
    SCALED_EXP = "ScaledExp"
    PLAIN = "Plain"


class KernelStyle(str, Enum):
    FULL_SUPPORT = "FullSupport"
    EXISTENTIAL_ONLY = "ExistentialOnly"


class Mode(str, Enum):
    SELF_PLAY = "SelfPlay"
    RATIONALITY = "Rationality"


class GameSpec(BaseModel):
    num_states: int = Field(ge=1)
    num_actions: int = Field(ge=1)
    gamma: float = Field(ge=0.0, lt=1.0)
    reward_bound: float = Field(default=1.0, gt=0.0)
    reward_style: RewardStyle = RewardStyle.PLAIN
    kernel_style: KernelStyle = KernelStyle.FULL_SUPPORT
    seed: int = 0


def _rewards(spec: GameSpec, rng: np.random.Generator) -> np.ndarray:
    S, n = spec.num_states, spec.num_actions
    raw = rng.uniform(-1.0, 1.0, size=(S, n, n))
    if spec.reward_style == RewardStyle.SCALED_EXP:
        # exp(s^2) with 1-based s, divided by exp(S^2) to stay finite
        s = np.arange(1, S + 1, dtype=float)
        raw = raw * np.exp(s ** 2 - S ** 2)[:, None, None]
    scaled = raw * (spec.reward_bound / np.abs(raw).max())
    return np.clip(scaled, -spec.reward_bound, spec.reward_bound)


def _full_support_kernel(spec: GameSpec, rng: np.random.Generator, floor: float) -> np.ndarray:
    S, n = spec.num_states, spec.num_actions
    if S * floor >= 1.0:
        raise GenerationError(f"kernel floor {floor} is too large for {S} states")
    kernel = floor + (1.0 - S * floor) * rng.dirichlet(np.ones(S), size=(S, n, n))
    return kernel / kernel.sum(axis=3, keepdims=True)


def _sparse_kernel(spec: GameSpec, rng: np.random.Generator, floor: float) -> np.ndarray:
    """One or two successor states per (s, a1, a2)."""
    S, n = spec.num_states, spec.num_actions
    kernel = np.zeros((S, n, n, S))
    for s, a1, a2 in np.ndindex(S, n, n):
        size = int(rng.integers(1, 3))
        support = rng.choice(S, size=size, replace=False)
        kernel[s, a1, a2, support] = floor + (1.0 - size * floor) * rng.dirichlet(np.ones(size))
    return kernel / kernel.sum(axis=3, keepdims=True)


def _assemble(spec: GameSpec, rewards: np.ndarray, kernel: np.ndarray) -> MarkovGame:
    S, n = spec.num_states, spec.num_actions
    return MarkovGame(
        num_states=S,
        actions1=(n,) * S,
        actions2=(n,) * S,
        reward1=tuple(rewards),
        kernel=tuple(kernel),
        gamma=spec.gamma,
        reward_bound=spec.reward_bound,
    )


def generate_game(
    spec: GameSpec,
    rejection_attempts: Optional[int] = None,
    kernel_floor: Optional[float] = None,
) -> MarkovGame:
    """Random game from a GameSpec; identical specs give identical games."""
    attempts = settings.REJECTION_ATTEMPTS if rejection_attempts is None else rejection_attempts
    floor = settings.KERNEL_FLOOR if kernel_floor is None else kernel_floor
    rng = np.random.default_rng(spec.seed)
    rewards = _rewards(spec, rng)

    if spec.kernel_style == KernelStyle.FULL_SUPPORT:
        game = _assemble(spec, rewards, _full_support_kernel(spec, rng, floor))
    else:
        if spec.num_states < 2:
            raise GenerationError("ExistentialOnly kernels need at least 2 states")
        for attempt in range(1, attempts + 1):
            game = _assemble(spec, rewards, _sparse_kernel(spec, rng, floor))
            if check_reach_exists(game)[0] and not check_reach_universal(game)[0]:
                logger.debug(f"ExistentialOnly kernel accepted after {attempt} attempts")
                break
        else:
            raise GenerationError(f"no ExistentialOnly kernel found in {attempts} attempts")

    report = validate(game)
    if not report.ok:
        raise GenerationError("; ".join(report.issues))
    return game


class ExperimentConfig(BaseModel):
    """One experiment: a game source, schedules and the simulation settings."""

    game_path: Optional[Path] = None
    game_spec: Optional[GameSpec] = None
    schedule: ScheduleConfig
    schedule2: Optional[ScheduleConfig] = None  # player 2; defaults to `schedule`
    num_stages: int = Field(ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    log_every: int = Field(default_factory=lambda: settings.LOG_EVERY, ge=1)
    mode: Mode = Mode.SELF_PLAY
    opponent_strategy: Optional[List[List[float]]] = None
    learner_player: int = Field(default=1, ge=1, le=2)
    lambda_report: float = 1.01
    log_exploitability: bool = False
    checkpoint_every: Optional[int] = Field(default=None, ge=1)

    def config_hash(self) -> str:
        """Identity of the experiment; seeds, length and checkpointing excluded
        so that a run can be resumed for more stages."""
        payload = self.model_dump_json(exclude={"seeds", "num_stages", "checkpoint_every"})
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def load_experiment(path: Path) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValidationError) as e:
        logger.error(f"Error loading experiment config {path}: {e}")
        raise ConfigError(str(e)) from e


def resolve_game(cfg: ExperimentConfig) -> MarkovGame:
    if (cfg.game_path is None) == (cfg.game_spec is None):
        raise ConfigError("exactly one of game_path and game_spec must be given")
    if cfg.game_path is not None:
        return MarkovGame.load(cfg.game_path)
    return generate_game(cfg.game_spec)


def schedules_for(cfg: ExperimentConfig, game: MarkovGame) -> Tuple[ScheduleConfig, ScheduleConfig]:
    """Both players' schedules with D filled in from the game where unset."""

    def bound(schedule: ScheduleConfig) -> ScheduleConfig:
        return schedule if schedule.d_bound is not None else schedule.with_bound(game.d_bound)

    return bound(cfg.schedule), bound(cfg.schedule2 or cfg.schedule)


def check_experiment(cfg: ExperimentConfig, game: MarkovGame) -> None:
    for player, schedule in zip((1, 2), schedules_for(cfg, game)):
        report = validate_schedule(schedule)
        if not report.ok:
            raise ConfigError(f"schedule for player {player}: " + "; ".join(report.issues))

    upper = np.inf if game.gamma == 0 else 1.0 / game.gamma
    if not 1.0 < cfg.lambda_report < upper:
        raise ConfigError(f"lambda_report must lie in (1, {upper:.6g}), got {cfg.lambda_report}")

    if cfg.mode == Mode.RATIONALITY:
        if cfg.opponent_strategy is None:
            raise ConfigError("Rationality mode needs an opponent_strategy")
        opponent = as_strategy(cfg.opponent_strategy)
        issues = validate_strategy(opponent, game.action_counts(3 - cfg.learner_player))
        if issues:
            raise ConfigError("opponent strategy: " + "; ".join(issues))
        if not is_interior(opponent):
            raise ConfigError("opponent strategy must have full support on every state")


class Simulation:
    """One seeded run of the learning dynamics on one game.

    In SelfPlay both players learn; in Rationality only `learner_player`
    learns and the opponent samples its fixed stationary strategy.
    """

    def __init__(
        self,
        game: MarkovGame,
        cfg: ExperimentConfig,
        seed: int,
        certificate: Optional[SolutionCertificate] = None,
    ):
        check_experiment(cfg, game)
        self.game = game
        self.cfg = cfg
        self.seed = int(seed)
        self.schedules = dict(zip((1, 2), schedules_for(cfg, game)))
        self.rng = np.random.default_rng(self.seed)

        if cfg.mode == Mode.SELF_PLAY:
            self.learners: Tuple[int, ...] = (1, 2)
            self.opponent = None
        else:
            self.learners = (cfg.learner_player,)
            self.opponent = as_strategy(cfg.opponent_strategy)
            self._opponent_cumulative = [np.cumsum(p) for p in self.opponent]

        self.agents: Dict[int, AgentState] = {
            p: AgentState.initial(game.action_counts(p), game.gamma, game.d_bound)
            for p in self.learners
        }
        self.state = int(self.rng.integers(game.num_states))
        self.stage = 0

        self.bounds: BoundConstants = bound_constants(
            game, cfg.lambda_report, self.schedules[self.learners[0]].tau_limit
        )
        self.best_response = None
        self.targets = self._oracle_targets(certificate)
        self.log = TrajectoryLog(self._metadata())

    @property
    def run_id(self) -> str:
        return f"{self.cfg.config_hash()}-seed{self.seed}"

    def _oracle_targets(self, certificate: Optional[SolutionCertificate]) -> Dict[int, np.ndarray]:
        if self.opponent is None:
            certificate = certificate or certificate_cache.get_or_solve(self.game)
            return {1: certificate.values1, 2: certificate.values2}
        learner = self.learners[0]
        values, self.best_response = best_response_value(self.game, self.opponent, learner)
        return {learner: values}

    def _metadata(self) -> dict:
        metadata = {
            "config_hash": self.cfg.config_hash(),
            "seed": self.seed,
            "mode": self.cfg.mode.value,
            "d_bound": self.game.d_bound,
            "oracle_values": {str(p): v.tolist() for p, v in self.targets.items()},
            "lambda": self.bounds.lam,
            "g_plus": self.bounds.g_plus,
        }
        if self.opponent is None:
            metadata["value_band"] = self.bounds.value_band
            if self.cfg.log_exploitability:
                metadata["exploitability_band"] = self.bounds.exploitability_band
        else:
            metadata["value_band"] = self.bounds.rationality_band(self.learners[0])
            metadata["best_response"] = [int(np.argmax(p)) for p in self.best_response]
        return metadata

    def step(self) -> None:
        """Play one stage: deferred q updates and action draws, rewards, value
        and average-strategy updates, then the transition."""
        s = self.state
        strategies = {p: begin_stage(self.agents[p], s, self.schedules[p]) for p in self.learners}
        actions = {}
        for p in (1, 2):
            if p in strategies:
                actions[p] = draw(np.cumsum(strategies[p]), self.rng)
            else:
                actions[p] = draw(self._opponent_cumulative[s], self.rng)

        r = float(self.game.reward1[s][actions[1], actions[2]])
        rewards = {1: r, 2: -r}
        for p in self.learners:
            finish_stage(self.agents[p], s, actions[p], rewards[p], strategies[p], self.schedules[p])

        self.state = sample_transition(self.game, s, JointAction(actions[1], actions[2]), self.rng)
        self.stage += 1

    def row(self) -> Dict[str, float]:
        game = self.game
        states = range(game.num_states)
        row: Dict[str, float] = {"stage": self.stage, "state": self.state}
        for p in self.learners:
            for s in states:
                row[f"v{p}_s{s}"] = float(self.agents[p].v_hat[s])
        if self.opponent is None:
            drift = zero_sum_drift((self.agents[1], self.agents[2]))
            for s in states:
                row[f"sum_s{s}"] = float(drift[s])
        for p in self.learners:
            agent = self.agents[p]
            for s in states:
                pibar = smoothed_best_response(
                    agent.q_hat[s], current_temperature(agent, self.schedules[p], s)
                )
                row[f"err{p}_s{s}"] = tracking_error(game, agent.q_hat[s], pibar, agent.v_hat, s, p)
        if self.opponent is None and self.cfg.log_exploitability:
            gains1, gains2 = exploitability(game, self.agents[1].pi_avg, self.agents[2].pi_avg)
            for s in states:
                row[f"expl1_s{s}"] = float(gains1[s])
                row[f"expl2_s{s}"] = float(gains2[s])
        if self.opponent is not None:
            targets = self.targets[self.learners[0]]
            for s in states:
                row[f"br_s{s}"] = float(targets[s])
        return row

    def to_checkpoint(self) -> SimulationCheckpoint:
        return SimulationCheckpoint(
            run_id=self.run_id,
            stage=self.stage,
            state=self.state,
            agents={p: agent.to_snapshot() for p, agent in self.agents.items()},
            rng_state=json.dumps(self.rng.bit_generator.state),
            rows=list(self.log.rows),
        )

    def restore(self, checkpoint: SimulationCheckpoint) -> None:
        if checkpoint.run_id != self.run_id:
            raise ConfigError(f"checkpoint {checkpoint.run_id} does not belong to run {self.run_id}")
        if set(checkpoint.agents) != set(self.learners):
            raise ConfigError("checkpoint agents do not match the experiment mode")
        self.agents = {p: AgentState.from_snapshot(snap) for p, snap in checkpoint.agents.items()}
        self.rng.bit_generator.state = json.loads(checkpoint.rng_state)
        self.stage = checkpoint.stage
        self.state = checkpoint.state
        # the closing row of a shorter run is not on the log_every grid
        rows = [row for row in checkpoint.rows if row["stage"] % self.cfg.log_every == 0]
        self.log = TrajectoryLog(self._metadata(), rows)
        logger.info(f"Resumed {self.run_id} at stage {self.stage}")

    @log_timing
    def run(
        self,
        progress_callback: Optional[ProgressCallback] = None,
        checkpoints: Optional[CheckpointManager] = None,
    ) -> TrajectoryLog:
        """Play until num_stages, logging every log_every stages and the last one."""
        cfg = self.cfg
        logger.info(f"Starting {cfg.mode.value} run {self.run_id} at stage {self.stage}/{cfg.num_stages}")
        while self.stage < cfg.num_stages:
            self.step()
            if self.stage % cfg.log_every == 0 or self.stage == cfg.num_stages:
                self.log.add_row(self.row())
                if progress_callback:
                    progress_callback(self.stage, cfg.num_stages)
            if checkpoints is not None and cfg.checkpoint_every and self.stage % cfg.checkpoint_every == 0:
                checkpoints.save(self.to_checkpoint())
        if checkpoints is not None:
            checkpoints.save(self.to_checkpoint())
        logger.info(f"Finished run {self.run_id}")
        return self.log


def _simulate(
    game: MarkovGame,
    cfg: ExperimentConfig,
    seed: int,
    progress_callback: Optional[ProgressCallback],
    checkpoints: Optional[CheckpointManager],
    resume: bool,
    certificate: Optional[SolutionCertificate],
) -> TrajectoryLog:
    simulation = Simulation(game, cfg, seed, certificate)
    if resume:
        if checkpoints is None:
            raise ConfigError("resume needs a checkpoint manager")
        checkpoint = checkpoints.load(simulation.run_id)
        if checkpoint is not None:
            simulation.restore(checkpoint)
    return simulation.run(progress_callback, checkpoints)


def run_self_play(
    game: MarkovGame,
    cfg: ExperimentConfig,
    seed: int,
    progress_callback: Optional[ProgressCallback] = None,
    checkpoints: Optional[CheckpointManager] = None,
    resume: bool = False,
    certificate: Optional[SolutionCertificate] = None,
) -> TrajectoryLog:
    cfg = cfg.model_copy(update={"mode": Mode.SELF_PLAY})
    return _simulate(game, cfg, seed, progress_callback, checkpoints, resume, certificate)


def run_rationality(
    game: MarkovGame,
    cfg: ExperimentConfig,
    seed: int,
    progress_callback: Optional[ProgressCallback] = None,
    checkpoints: Optional[CheckpointManager] = None,
    resume: bool = False,
) -> TrajectoryLog:
    cfg = cfg.model_copy(update={"mode": Mode.RATIONALITY})
    return _simulate(game, cfg, seed, progress_callback, checkpoints, resume, None)


def final_error(log: TrajectoryLog) -> float:
    """max over players and states of |v_hat - oracle target| at the last row."""
    last = log.last
    return max(
        abs(last[f"v{p}_s{s}"] - target)
        for p, values in log.metadata["oracle_values"].items()
        for s, target in enumerate(values)
    )


@dataclass
class BatchSummary:
    aggregate: pd.DataFrame
    logs: Dict[int, TrajectoryLog]
    final_errors: Dict[int, float]
    bounds: BoundConstants
    oracle_values: Dict[str, List[float]]

    def write(self, output_dir: Path) -> Path:
        """Aggregate CSV, one CSV per seed and a JSON summary."""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        self.aggregate.to_csv(output_dir / "aggregate.csv", index=False, float_format="%.17g")
        for seed, log in self.logs.items():
            log.to_csv(output_dir / f"seed_{seed}.csv")
        summary = {
            "final_errors": {str(seed): err for seed, err in self.final_errors.items()},
            "mean_final_error": float(np.mean(list(self.final_errors.values()))),
            "value_band": self.bounds.value_band,
            "bounds": self.bounds.model_dump(),
            "oracle_values": self.oracle_values,
        }
        (output_dir / "summary.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")
        logger.info(f"Batch results written to {output_dir}")
        return output_dir


def _run_seed(job: Tuple[MarkovGame, ExperimentConfig, int, Optional[SolutionCertificate]]) -> TrajectoryLog:
    game, cfg, seed, certificate = job
    return Simulation(game, cfg, seed, certificate).run()


@log_timing
def batch(
    cfg: ExperimentConfig,
    game: Optional[MarkovGame] = None,
    workers: Optional[int] = None,
    progress_callback: Optional[ProgressCallback] = None,
) -> BatchSummary:
    """Run every seed of `cfg` independently and aggregate per stage."""
    game = game if game is not None else resolve_game(cfg)
    check_experiment(cfg, game)
    certificate = certificate_cache.get_or_solve(game) if cfg.mode == Mode.SELF_PLAY else None
    jobs = [(game, cfg, seed, certificate) for seed in cfg.seeds]
    workers = workers or settings.WORKERS

    logs: Dict[int, TrajectoryLog] = {}
    if workers <= 1 or len(jobs) == 1:
        results = map(_run_seed, jobs)
        for seed, log in zip(cfg.seeds, results):
            logs[seed] = log
            if progress_callback:
                progress_callback(len(logs), len(jobs))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for seed, log in zip(cfg.seeds, pool.map(_run_seed, jobs)):
                logs[seed] = log
                if progress_callback:
                    progress_callback(len(logs), len(jobs))

    first = next(iter(logs.values()))
    value_columns = [c for c in first.frame.columns if c.startswith(("v1_", "v2_", "sum_"))]
    return BatchSummary(
        aggregate=aggregate(logs.values(), value_columns),
        logs=logs,
        final_errors={seed: final_error(log) for seed, log in logs.items()},
        bounds=bound_constants(game, cfg.lambda_report, schedules_for(cfg, game)[0].tau_limit),
        oracle_values=first.metadata["oracle_values"],
    )


PRESETS: Dict[str, ExperimentConfig] = {
    "case1": ExperimentConfig(
        game_spec=GameSpec(
            num_states=5,
            num_actions=3,
            gamma=0.6,
            reward_bound=1.0,
            reward_style=RewardStyle.SCALED_EXP,
            kernel_style=KernelStyle.EXISTENTIAL_ONLY,
        ),
        schedule=ScheduleConfig(
            rho_alpha=0.9, rho_beta=1.0, epsilon=2e-4, tau_bar=4.5e4, mode=ScheduleMode.TO_EPSILON
        ),
        num_stages=1_000_000,
        seeds=list(range(20)),
    ),
    "case2": ExperimentConfig(
        game_spec=GameSpec(
            num_states=5,
            num_actions=3,
            gamma=0.6,
            reward_bound=1.0,
            reward_style=RewardStyle.SCALED_EXP,
            kernel_style=KernelStyle.FULL_SUPPORT,
        ),
        schedule=ScheduleConfig(
            rho_alpha=0.9, rho_beta=1.0, rho=0.7, tau_bar=0.07, mode=ScheduleMode.TO_ZERO
        ),
        num_stages=1_000_000,
        seeds=list(range(20)),
    ),
    "case3": ExperimentConfig(
        game_spec=GameSpec(
            num_states=20,
            num_actions=10,
            gamma=0.5,
            reward_bound=2.0,
            reward_style=RewardStyle.PLAIN,
            kernel_style=KernelStyle.EXISTENTIAL_ONLY,
        ),
        schedule=ScheduleConfig(
            rho_alpha=0.9, rho_beta=1.0, rho=0.85, epsilon=2e-2, tau_bar=0.1, mode=ScheduleMode.MAX_EPSILON
        ),
        num_stages=1_000_000,
        seeds=list(range(20)),
    ),
    "case4": ExperimentConfig(
        game_spec=GameSpec(
            num_states=20,
            num_actions=10,
            gamma=0.5,
            reward_bound=2.0,
            reward_style=RewardStyle.PLAIN,
            kernel_style=KernelStyle.FULL_SUPPORT,
        ),
        schedule=ScheduleConfig(
            rho_alpha=0.9, rho_beta=1.0, rho=0.85, tau_bar=0.1, mode=ScheduleMode.TO_ZERO
        ),
        num_stages=1_000_000,
        seeds=list(range(20)),
    ),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[name].model_copy(deep=True)
