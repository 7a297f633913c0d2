"""Command-line entry point: python -m src.markov_qlearn <command>."""

import argparse
import json
import logging
import math
from pathlib import Path
from typing import Optional, Sequence

from tqdm import tqdm

from .checkpoint_manager import CheckpointManager
from .config import settings
from .diagnostics import descent_check
from .eq_oracle import shapley_solve
from .errors import MarkovQLearnError, UsageError
from .game_model import (
    MarkovGame,
    check_irreducible_pure,
    check_reach_exists,
    check_reach_universal,
    unreachable_pairs,
    validate,
)
from .harness import (
    PRESETS,
    ExperimentConfig,
    GameSpec,
    KernelStyle,
    Mode,
    RewardStyle,
    batch,
    generate_game,
    load_experiment,
    preset,
    resolve_game,
    run_rationality,
    run_self_play,
    schedules_for,
)
from .schedules import prop2_threshold, validate_schedule
from .trajectory import TrajectoryLog, export_columns

logger = logging.getLogger(__name__)


def _emit(payload: dict, output: Optional[Path] = None) -> None:
    text = json.dumps(payload, indent=1)
    if output is None:
        print(text)
    else:
        Path(output).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {output}")


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    if args.preset:
        cfg = preset(args.preset)
    elif args.config:
        cfg = load_experiment(args.config)
    else:
        raise UsageError("give an experiment config file or --preset")
    update = {}
    if args.seed:
        update["seeds"] = args.seed
    if args.stages:
        update["num_stages"] = args.stages
    if getattr(args, "checkpoint_every", None):
        update["checkpoint_every"] = args.checkpoint_every
    return cfg.model_copy(update=update) if update else cfg


def cmd_generate(args: argparse.Namespace) -> None:
    if args.preset:
        spec = preset(args.preset).game_spec
        if args.seed is not None:
            spec = spec.model_copy(update={"seed": args.seed})
    else:
        spec = GameSpec(
            num_states=args.states,
            num_actions=args.actions,
            gamma=args.gamma,
            reward_bound=args.reward_bound,
            reward_style=args.reward_style,
            kernel_style=args.kernel_style,
            seed=args.seed or 0,
        )
    game = generate_game(spec)
    if args.output:
        game.save(args.output)
    else:
        print(game.to_json())


def cmd_check(args: argparse.Namespace) -> None:
    game = MarkovGame.load(args.game)
    exists, exists_horizon = check_reach_exists(game)
    universal, universal_horizon = check_reach_universal(game)
    report = {
        "issues": validate(game).issues,
        "d_bound": game.d_bound,
        "reach_exists": {"holds": exists, "horizon": exists_horizon},
        "reach_universal": {"holds": universal, "horizon": universal_horizon},
    }
    if not exists:
        report["reach_exists"]["unreachable"] = unreachable_pairs(game)
    if args.pure_profiles:
        try:
            report["irreducible_pure"] = check_irreducible_pure(game, args.pure_profiles)
        except UsageError as e:
            report["irreducible_pure"] = str(e)

    if args.config:
        cfg = load_experiment(args.config)
        n1, n2 = max(game.actions1), max(game.actions2)
        for player, schedule in zip((1, 2), schedules_for(cfg, game)):
            schedule_report = validate_schedule(schedule)
            entry = schedule_report.model_dump()
            if schedule_report.ok:
                try:
                    # C_s can exceed any float, so report log C_s
                    entry["prop2_log_threshold"] = math.log(prop2_threshold(schedule, n1, n2))
                except MarkovQLearnError as e:
                    entry["prop2_log_threshold"] = str(e)
            report[f"schedule{player}"] = entry
    _emit(report)


def cmd_solve(args: argparse.Namespace) -> None:
    game = MarkovGame.load(args.game)
    certificate = shapley_solve(game, args.tol)
    _emit(certificate.to_dict(), args.output)


def _runner(args: argparse.Namespace, mode: Mode) -> None:
    cfg = _experiment(args)
    game = resolve_game(cfg)
    checkpoints = None
    if args.resume or cfg.checkpoint_every:
        checkpoints = CheckpointManager(args.checkpoint_dir)
    output_dir = Path(args.output_dir or settings.OUTPUT_DIR)
    run = run_self_play if mode == Mode.SELF_PLAY else run_rationality

    for seed in cfg.seeds:
        with tqdm(total=cfg.num_stages, desc=f"seed {seed}", unit="stage", dynamic_ncols=True) as bar:
            log = run(
                game,
                cfg,
                seed,
                progress_callback=lambda done, _total: bar.update(done - bar.n),
                checkpoints=checkpoints,
                resume=args.resume,
            )
        log.to_csv(output_dir / f"seed_{seed}.csv")


def cmd_run(args: argparse.Namespace) -> None:
    _runner(args, Mode.SELF_PLAY)


def cmd_rationality(args: argparse.Namespace) -> None:
    _runner(args, Mode.RATIONALITY)


def cmd_batch(args: argparse.Namespace) -> None:
    cfg = _experiment(args)
    with tqdm(total=len(cfg.seeds), desc="seeds", unit="run", dynamic_ncols=True) as bar:
        summary = batch(
            cfg,
            workers=args.workers,
            progress_callback=lambda done, _total: bar.update(done - bar.n),
        )
    summary.write(Path(args.output_dir or settings.OUTPUT_DIR))
    print(f"mean final error {sum(summary.final_errors.values()) / len(summary.final_errors):.6g}, "
          f"bound band {summary.bounds.value_band:.6g}")


def cmd_lyapunov(args: argparse.Namespace) -> None:
    result = descent_check(
        instances=args.instances,
        taus=args.taus,
        lam=args.lam,
        dt=args.dt,
        horizon=args.horizon,
        seed=args.seed or 0,
    )
    status = "PASS" if result.passed == result.instances else "FAIL"
    print(
        f"{status}: {result.passed}/{result.instances} instances descend; "
        f"worst dV {result.worst_increase:.3e}, worst dV/dt while active {result.worst_rate:.3e}"
    )


def cmd_export(args: argparse.Namespace) -> None:
    log = TrajectoryLog.read_csv(args.log)
    columns = args.columns.split(",") if args.columns else None
    export_columns(log, args.output, columns)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markov_qlearn",
        description="Decentralized Q-learning in zero-sum Markov games",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", help="generate a random game")
    generate.add_argument("--preset", choices=sorted(PRESETS))
    generate.add_argument("--states", type=int, default=5)
    generate.add_argument("--actions", type=int, default=3)
    generate.add_argument("--gamma", type=float, default=0.6)
    generate.add_argument("--reward-bound", type=float, default=1.0)
    generate.add_argument("--reward-style", choices=[s.value for s in RewardStyle], default=RewardStyle.PLAIN.value)
    generate.add_argument("--kernel-style", choices=[s.value for s in KernelStyle], default=KernelStyle.FULL_SUPPORT.value)
    generate.add_argument("--seed", type=int)
    generate.add_argument("-o", "--output", type=Path)
    generate.set_defaults(func=cmd_generate)

    check = sub.add_parser("check", help="validate a game and report its assumptions")
    check.add_argument("game", type=Path)
    check.add_argument("--config", type=Path, help="also check this experiment's schedules")
    check.add_argument("--pure-profiles", type=int, metavar="MAX", help="enumerate pure profiles for irreducibility")
    check.set_defaults(func=cmd_check)

    solve = sub.add_parser("solve", help="solve a game with Shapley iteration")
    solve.add_argument("game", type=Path)
    solve.add_argument("--tol", type=float)
    solve.add_argument("-o", "--output", type=Path)
    solve.set_defaults(func=cmd_solve)

    for name, func, help_text in (
        ("run", cmd_run, "self-play runs, one CSV per seed"),
        ("rationality", cmd_rationality, "one learner against a fixed opponent"),
        ("batch", cmd_batch, "multi-seed runs with aggregation"),
    ):
        runner = sub.add_parser(name, help=help_text)
        runner.add_argument("config", type=Path, nargs="?")
        runner.add_argument("--preset", choices=sorted(PRESETS))
        runner.add_argument("--seed", type=int, nargs="+", help="override the config seeds")
        runner.add_argument("--stages", type=int, help="override num_stages")
        runner.add_argument("--output-dir", type=Path)
        if name == "batch":
            runner.add_argument("--workers", type=int, help=f"defaults to {settings.WORKERS}")
        else:
            runner.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
            runner.add_argument("--checkpoint-every", type=int)
            runner.add_argument("--checkpoint-dir", type=Path)
        runner.set_defaults(func=func)

    lyapunov = sub.add_parser("lyapunov", help="random-instance Lyapunov descent check")
    lyapunov.add_argument("--instances", type=int, default=100)
    lyapunov.add_argument("--taus", type=float, nargs="+", default=[0.05, 0.5])
    lyapunov.add_argument("--lam", type=float, default=1.1)
    lyapunov.add_argument("--dt", type=float, default=1e-3)
    lyapunov.add_argument("--horizon", type=float, default=20.0)
    lyapunov.add_argument("--seed", type=int)
    lyapunov.set_defaults(func=cmd_lyapunov)

    export = sub.add_parser("export", help="CSV log to gnuplot columns")
    export.add_argument("log", type=Path)
    export.add_argument("-o", "--output", type=Path, required=True)
    export.add_argument("--columns", help="comma-separated column names")
    export.set_defaults(func=cmd_export)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    # Configure logging
    logging.basicConfig(level=settings.LOG_LEVEL, format=settings.LOG_FORMAT)
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except MarkovQLearnError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    return 0
