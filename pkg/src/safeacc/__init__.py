"""Safety-filtered adaptive cruise control for a heavy truck.

The package splits into a longitudinal plant model (:mod:`~safeacc.dynamics`),
a control-barrier torque filter with offline gain certification
(:mod:`~safeacc.safety`), reward functions and a PID baseline
(:mod:`~safeacc.control`), an actor-critic learner (:mod:`~safeacc.learn`),
an episode runner with drive cycles (:mod:`~safeacc.scenario`), and a CLI
(:mod:`~safeacc.cli`).
"""

from .config import RunConfig, config_hash, default_config, load_config, \
    make_rng
from .control import PidConfig, PidController, RewardWeights, \
    reward_in_range, reward_out_of_range, shaping_penalty
from .dynamics import Drivetrain, VehicleParams, VehicleState, \
    default_drivetrain, resistance_force, step
from .safety import CertificationResult, EcbfConfig, VirtualState, barrier, \
    certify, filter_torque, mu_bounds, verify_gains, virtual_step, worst_case
from .scenario import DriveCycle, EpisodeReport, ScenarioConfig, load_cycle, \
    run_episode, save_cycle, synthetic_cycle

__version__ = "0.1.0"

__all__ = [
    "CertificationResult",
    "DriveCycle",
    "Drivetrain",
    "EcbfConfig",
    "EpisodeReport",
    "PidConfig",
    "PidController",
    "RewardWeights",
    "RunConfig",
    "ScenarioConfig",
    "VehicleParams",
    "VehicleState",
    "VirtualState",
    "barrier",
    "certify",
    "config_hash",
    "default_config",
    "default_drivetrain",
    "filter_torque",
    "load_config",
    "load_cycle",
    "make_rng",
    "mu_bounds",
    "resistance_force",
    "reward_in_range",
    "reward_out_of_range",
    "run_episode",
    "save_cycle",
    "shaping_penalty",
    "step",
    "synthetic_cycle",
    "verify_gains",
    "virtual_step",
    "worst_case",
    "__version__",
]
