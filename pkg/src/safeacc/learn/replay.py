"""Episodic replay buffer with contiguous-segment sampling.

Episodes are stored whole so retrace can draw contiguous windows that
never straddle an episode boundary.  Behavior log-probs of both action
components are kept with every transition for the importance weights.
All sampling runs off a caller-supplied Generator, so a fixed seed
reproduces batches bit for bit.
"""

from __future__ import annotations

from collections import deque
from typing import Deque, Dict, List

import numpy as np

_FIELDS = ("obs", "next_obs", "u", "gear_idx", "b_lp_u", "b_lp_g",
           "reward", "done")


class EpisodeRecorder:
    """Accumulates one episode's transitions before committing."""

    def __init__(self, obs_dim: int) -> None:
        self.obs_dim = obs_dim
        self.rows: List[tuple] = []

    def push(self, obs: np.ndarray, u: float, gear_idx: int, b_lp_u: float,
             b_lp_g: float, reward: float, next_obs: np.ndarray,
             done: bool) -> None:
        self.rows.append((np.asarray(obs, dtype=np.float64),
                          float(u), int(gear_idx), float(b_lp_u),
                          float(b_lp_g), float(reward),
                          np.asarray(next_obs, dtype=np.float64),
                          bool(done)))

    def arrays(self) -> Dict[str, np.ndarray]:
        n = len(self.rows)
        out = {
            "obs": np.empty((n, self.obs_dim)),
            "next_obs": np.empty((n, self.obs_dim)),
            "u": np.empty(n),
            "gear_idx": np.empty(n, dtype=np.int64),
            "b_lp_u": np.empty(n),
            "b_lp_g": np.empty(n),
            "reward": np.empty(n),
            "done": np.zeros(n, dtype=bool),
        }
        for i, (obs, u, g, lu, lg, r, nxt, d) in enumerate(self.rows):
            out["obs"][i] = obs
            out["next_obs"][i] = nxt
            out["u"][i] = u
            out["gear_idx"][i] = g
            out["b_lp_u"][i] = lu
            out["b_lp_g"][i] = lg
            out["reward"][i] = r
            out["done"][i] = d
        return out


class ReplayBuffer:
    """Ring of whole episodes with a step-count capacity."""

    def __init__(self, capacity_steps: int, obs_dim: int) -> None:
        if capacity_steps <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity_steps
        self.obs_dim = obs_dim
        self._episodes: Deque[Dict[str, np.ndarray]] = deque()
        self._steps = 0

    def __len__(self) -> int:
        return self._steps

    @property
    def n_episodes(self) -> int:
        return len(self._episodes)

    def add_episode(self, episode: Dict[str, np.ndarray]) -> None:
        n = episode["reward"].shape[0]
        if n == 0:
            return
        for key in _FIELDS:
            if key not in episode:
                raise ValueError(f"episode missing field {key}")
        self._episodes.append(episode)
        self._steps += n
        while self._steps > self.capacity and len(self._episodes) > 1:
            dropped = self._episodes.popleft()
            self._steps -= dropped["reward"].shape[0]

    def sample_segments(self, rng: np.random.Generator, batch: int,
                        length: int) -> Dict[str, np.ndarray]:
        """Contiguous windows padded to `length` with a validity mask.

        Episodes are drawn proportionally to their step counts, start
        offsets uniformly; windows truncate at episode tails.
        """
        if self._steps == 0:
            raise ValueError("replay buffer is empty")
        sizes = np.array([ep["reward"].shape[0] for ep in self._episodes])
        probs = sizes / sizes.sum()
        out = {
            "obs": np.zeros((batch, length, self.obs_dim)),
            "next_obs": np.zeros((batch, length, self.obs_dim)),
            "u": np.zeros((batch, length)),
            "gear_idx": np.zeros((batch, length), dtype=np.int64),
            "b_lp_u": np.zeros((batch, length)),
            "b_lp_g": np.zeros((batch, length)),
            "reward": np.zeros((batch, length)),
            "done": np.zeros((batch, length), dtype=bool),
            "mask": np.zeros((batch, length), dtype=bool),
        }
        for b in range(batch):
            e = int(rng.choice(len(self._episodes), p=probs))
            ep = self._episodes[e]
            n = ep["reward"].shape[0]
            start = int(rng.integers(0, n))
            take = min(length, n - start)
            sl = slice(start, start + take)
            for key in _FIELDS:
                out[key][b, :take] = ep[key][sl]
            out["mask"][b, :take] = True
        return out

    def sample_transitions(self, rng: np.random.Generator,
                           batch: int) -> Dict[str, np.ndarray]:
        """Uniform transitions across all stored steps."""
        if self._steps == 0:
            raise ValueError("replay buffer is empty")
        flat = int(np.sum([ep["reward"].shape[0] for ep in self._episodes]))
        picks = rng.integers(0, flat, size=batch)
        bounds = np.cumsum([ep["reward"].shape[0] for ep in self._episodes])
        out = {key: [] for key in _FIELDS}
        for p in picks:
            e = int(np.searchsorted(bounds, p, side="right"))
            i = int(p - (bounds[e - 1] if e > 0 else 0))
            ep = self._episodes[e]
            for key in _FIELDS:
                out[key].append(ep[key][i])
        return {key: np.asarray(vals) for key, vals in out.items()}
