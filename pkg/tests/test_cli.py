"""Tests for the command-line interface."""

import json

import pytest
from src.markov_qlearn.cli import main
from src.markov_qlearn.game_model import MarkovGame
from src.markov_qlearn.harness import ExperimentConfig, GameSpec
from src.markov_qlearn.schedules import ScheduleConfig, ScheduleMode
from src.markov_qlearn.trajectory import TrajectoryLog


@pytest.fixture
def game_file(tmp_path):
    path = tmp_path / "game.json"
    assert main(["generate", "--states", "3", "--actions", "2", "--gamma", "0.5", "--seed", "4", "-o", str(path)]) == 0
    return path


@pytest.fixture
def config_file(tmp_path):
    """A short experiment on a generated game."""
    cfg = ExperimentConfig(
        game_spec=GameSpec(num_states=3, num_actions=2, gamma=0.5, seed=4),
        schedule=ScheduleConfig(tau_bar=0.5, epsilon=0.05, mode=ScheduleMode.TO_EPSILON),
        num_stages=600,
        log_every=200,
    )
    path = tmp_path / "experiment.json"
    path.write_text(cfg.model_dump_json())
    return path


def test_generate(game_file, capsys):
    """Test writing a game file and printing one to stdout."""
    game = MarkovGame.load(game_file)
    assert game.num_states == 3
    assert main(["generate", "--states", "3", "--actions", "2", "--gamma", "0.5", "--seed", "4"]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads(game.to_json())


def test_check(game_file, config_file, capsys):
    """Test the assumption report."""
    assert main(["check", str(game_file), "--config", str(config_file), "--pure-profiles", "100000"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["issues"] == []
    assert report["reach_universal"] == {"holds": True, "horizon": 1}
    assert report["irreducible_pure"] is True
    assert report["schedule1"]["assumption"] == "2.2"
    assert report["schedule1"]["prop2_log_threshold"] > 0


def test_solve(game_file, tmp_path):
    """Test writing an equilibrium certificate."""
    output = tmp_path / "certificate.json"
    assert main(["solve", str(game_file), "--tol", "1e-9", "-o", str(output)]) == 0
    certificate = json.loads(output.read_text())
    assert certificate["values2"] == pytest.approx([-v for v in certificate["values1"]])
    assert certificate["bellman_residual"] <= 1e-9


def test_run_and_export(config_file, tmp_path):
    """Test a self-play run followed by a column export."""
    output_dir = tmp_path / "runs"
    assert main(["run", str(config_file), "--seed", "7", "--output-dir", str(output_dir)]) == 0
    log = TrajectoryLog.read_csv(output_dir / "seed_7.csv")
    assert log.frame["stage"].tolist() == [200, 400, 600]

    exported = tmp_path / "plot.dat"
    assert main(["export", str(output_dir / "seed_7.csv"), "-o", str(exported), "--columns", "v1_s0,sum_s0"]) == 0
    assert exported.read_text().splitlines()[0] == "# stage v1_s0 sum_s0"


def test_run_with_checkpoints(config_file, tmp_path):
    """Test resuming a checkpointed run for more stages."""
    checkpoint_dir = tmp_path / "checkpoints"
    args = ["run", str(config_file), "--output-dir", str(tmp_path / "runs"), "--checkpoint-every", "300",
            "--checkpoint-dir", str(checkpoint_dir)]
    assert main(args) == 0
    assert len(list(checkpoint_dir.glob("*.json"))) == 1
    assert main(args + ["--stages", "1000", "--resume"]) == 0
    log = TrajectoryLog.read_csv(tmp_path / "runs" / "seed_0.csv")
    assert log.frame["stage"].tolist() == [200, 400, 600, 800, 1000]


def test_batch(config_file, tmp_path, capsys):
    output_dir = tmp_path / "batch"
    assert main(["batch", str(config_file), "--seed", "0", "1", "--output-dir", str(output_dir)]) == 0
    assert (output_dir / "aggregate.csv").exists()
    assert json.loads((output_dir / "summary.json").read_text())["final_errors"].keys() == {"0", "1"}
    assert "mean final error" in capsys.readouterr().out


def test_lyapunov(capsys):
    """Test a small descent check from the command line."""
    assert main(["lyapunov", "--instances", "2", "--horizon", "0.5", "--dt", "0.01"]) == 0
    assert capsys.readouterr().out.startswith("PASS: 2/2 instances descend")


def test_errors_return_nonzero(tmp_path):
    """Test that library errors become exit code 1."""
    assert main(["run"]) == 1
    assert main(["solve", str(tmp_path / "missing.json")]) == 1
    with pytest.raises(SystemExit):
        main(["frobnicate"])
