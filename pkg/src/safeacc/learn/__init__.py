"""Learning stack: observation encoding, nets, policy, replay, updates."""

from .agent import HmpoAgent, LearnConfig
from .nets import Adam, Mlp
from .obs import Observation, ObservationEncoder
from .policy import Critic, HybridPolicy, TorqueMap
from .replay import EpisodeRecorder, ReplayBuffer
from .retrace import expected_q, retrace_targets

__all__ = [
    "Adam", "Critic", "EpisodeRecorder", "HmpoAgent", "HybridPolicy",
    "LearnConfig", "Mlp", "Observation", "ObservationEncoder",
    "ReplayBuffer", "TorqueMap", "expected_q", "retrace_targets",
]
