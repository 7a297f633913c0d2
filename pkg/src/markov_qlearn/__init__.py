"""
Decentralized two-timescale Q-learning for two-player zero-sum Markov games,
with exact equilibrium oracles and convergence diagnostics.
"""

from .game_model import MarkovGame, JointAction, validate, check_reach_exists, check_reach_universal, sample_transition
from .eq_oracle import SolutionCertificate, matrix_value, shapley_solve, policy_eval, best_response_value, exploitability
from .schedules import ScheduleConfig, ScheduleMode, alpha, beta, tau, validate_schedule, prop2_threshold
from .learner import AgentState, QLearner, smoothed_best_response, begin_stage, finish_stage
from .diagnostics import FlowState, BoundConstants, tracking_error, zero_sum_drift, bound_constants, lyapunov_value, integrate_flow
from .harness import ExperimentConfig, GameSpec, Simulation, generate_game, run_self_play, run_rationality, batch
from .trajectory import TrajectoryLog

__version__ = "0.1.0"

__all__ = [
    'MarkovGame', 'JointAction', 'validate', 'check_reach_exists', 'check_reach_universal', 'sample_transition',
    'SolutionCertificate', 'matrix_value', 'shapley_solve', 'policy_eval', 'best_response_value', 'exploitability',
    'ScheduleConfig', 'ScheduleMode', 'alpha', 'beta', 'tau', 'validate_schedule', 'prop2_threshold',
    'AgentState', 'QLearner', 'smoothed_best_response', 'begin_stage', 'finish_stage',
    'FlowState', 'BoundConstants', 'tracking_error', 'zero_sum_drift', 'bound_constants', 'lyapunov_value', 'integrate_flow',
    'ExperimentConfig', 'GameSpec', 'Simulation', 'generate_game', 'run_self_play', 'run_rationality', 'batch',
    'TrajectoryLog',
]
