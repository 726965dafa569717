"""Hybrid-action policy and action-value critic.

The policy outputs a Gaussian over a normalized torque coordinate
u in [-1, 1] (affinely mapped onto the wheel-torque envelope, samples
clamped at the ends) and a 3-way categorical over the gear change
{-1, 0, +1}.  Log-probabilities factorize:

    log pi(a|s) = log N(u; mean(s), std(s)^2) + log Cat(g; alpha(s)).

Log-probabilities are evaluated at the pre-clamp torque sample; the
clamping bias at the envelope ends is accepted and documented.

The critic consumes the observation, the normalized torque and a one-hot
gear change and returns a scalar action value.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from .nets import Mlp

# the floor keeps training-time torque exploration alive: a collapsed
# policy cannot discover that upshifting unlocks speed it has never seen
LOG_STD_MIN = -2.0
LOG_STD_MAX = 2.0
GEAR_CHANGES = (-1, 0, 1)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class TorqueMap:
    """Affine bijection between u in [-1, 1] and the torque envelope."""

    def __init__(self, t_min: float, t_max: float) -> None:
        if t_max <= t_min:
            raise ValueError("torque envelope must have positive span")
        self.t_min = t_min
        self.t_max = t_max

    def to_torque(self, u: float) -> float:
        u = min(max(u, -1.0), 1.0)
        return self.t_min + 0.5 * (u + 1.0) * (self.t_max - self.t_min)

    def to_unit(self, torque: float) -> float:
        return 2.0 * (torque - self.t_min) / (self.t_max - self.t_min) - 1.0


def gear_index(gear_change: int) -> int:
    return GEAR_CHANGES.index(gear_change)


def gaussian_log_pdf(u: np.ndarray, mean: np.ndarray,
                     log_std: np.ndarray) -> np.ndarray:
    z = (u - mean) / np.exp(log_std)
    return -0.5 * z * z - log_std - _LOG_SQRT_2PI


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


class HybridPolicy:
    """Torque-and-gear policy backed by a single MLP trunk.

    The net maps the 8-entry observation through `hidden` tanh layers to a
    5-wide linear output: torque mean, torque log-std (clamped) and three
    gear logits.
    """

    N_OUT = 5

    def __init__(self, obs_dim: int, hidden: Tuple[int, ...],
                 rng: np.random.Generator) -> None:
        self.net = Mlp((obs_dim, *hidden, self.N_OUT), rng, init_scale=0.3)

    def heads(self, obs: np.ndarray) \
            -> Tuple[np.ndarray, np.ndarray, np.ndarray, list, np.ndarray]:
        """(mean, clamped log-std, logits, cache, raw log-std) per row."""
        out, cache = self.net.forward(obs)
        mean = out[:, 0]
        raw_log_std = out[:, 1]
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        logits = out[:, 2:5]
        return mean, log_std, logits, cache, raw_log_std

    def log_prob(self, obs: np.ndarray, u: np.ndarray,
                 gear_idx: np.ndarray) -> np.ndarray:
        """Factorized log pi(u, g | s) for batches."""
        mean, log_std, logits, _, _ = self.heads(obs)
        lp_u = gaussian_log_pdf(np.asarray(u, dtype=float), mean, log_std)
        lp_g = np.take_along_axis(
            log_softmax(logits),
            np.asarray(gear_idx, dtype=int).reshape(-1, 1), axis=1)[:, 0]
        return lp_u + lp_g

    def sample(self, obs: np.ndarray, rng: np.random.Generator,
               gear_dither: float = 0.0) -> Tuple[float, int, float, float]:
        """One exploratory action for a single observation.

        Returns (u clamped, gear change, gaussian log-prob at the raw
        sample, categorical log-prob).  `gear_dither` mixes a uniform
        floor into the gear head so every change stays reachable no
        matter how confident the policy gets; the returned log-prob is
        that of the mixture, which is what the behavior really was.
        """
        mean, log_std, logits, _, _ = self.heads(obs)
        raw = rng.normal(mean[0], math.exp(log_std[0]))
        u = min(max(raw, -1.0), 1.0)
        lp_u = float(gaussian_log_pdf(np.array([raw]), mean, log_std)[0])
        probs = softmax(logits)[0]
        if gear_dither > 0.0:
            probs = (1.0 - gear_dither) * probs \
                + gear_dither / len(GEAR_CHANGES)
        k = int(rng.choice(3, p=probs))
        lp_g = float(np.log(probs[k]))
        return u, GEAR_CHANGES[k], lp_u, lp_g

    def deterministic(self, obs: np.ndarray) -> Tuple[float, int]:
        """Greedy action: torque mean, most likely gear change."""
        mean, _, logits, _, _ = self.heads(obs)
        u = min(max(float(mean[0]), -1.0), 1.0)
        return u, GEAR_CHANGES[int(np.argmax(logits[0]))]


class Critic:
    """Q(s, u, g) over observation, normalized torque and one-hot gear."""

    def __init__(self, obs_dim: int, hidden: Tuple[int, ...],
                 rng: np.random.Generator) -> None:
        self.obs_dim = obs_dim
        self.net = Mlp((obs_dim + 1 + len(GEAR_CHANGES), *hidden, 1), rng,
                       init_scale=0.3)

    def join(self, obs: np.ndarray, u: np.ndarray,
             gear_idx: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        u = np.asarray(u, dtype=float).reshape(-1, 1)
        one_hot = np.eye(len(GEAR_CHANGES))[np.asarray(gear_idx, dtype=int)]
        return np.concatenate([obs, u, one_hot], axis=1)

    def q_values(self, obs: np.ndarray, u: np.ndarray,
                 gear_idx: np.ndarray) -> np.ndarray:
        return self.net(self.join(obs, u, gear_idx))[:, 0]
