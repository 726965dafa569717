"""Off-policy hybrid-action learner.

Critic: action-value net fitted by mean squared error against retrace
targets computed with a hard-synced target network.

Actor: sample-based weighted maximum likelihood.  Per update, M actions
are drawn per state from the current policy, weighted by
softmax(Q / eta) where the temperature eta solves the dual

    min_eta  eta * eps + eta * mean_s log mean_m exp(Q(s, a_m) / eta),

and the policy is refit to the weighted samples under per-component
KL trust regions (Gaussian mean, Gaussian variance, categorical), each
enforced by a Lagrange multiplier climbing at a fixed rate while the
measured KL exceeds its bound.

All gradients are computed analytically at the net heads and pushed
through the shared trunk by backprop; no autograd anywhere.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .nets import Adam
from .policy import (GEAR_CHANGES, LOG_STD_MAX, LOG_STD_MIN, Critic,
                     HybridPolicy, gaussian_log_pdf, log_softmax, softmax)
from .replay import ReplayBuffer
from .retrace import retrace_targets

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LearnConfig:
    """Learner hyperparameters (desk-scale defaults)."""

    hidden: Tuple[int, ...] = (64, 64, 64)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    gamma: float = 0.99
    retrace_steps: int = 15
    retrace_lambda: float = 1.0
    segment_batch: int = 32
    segment_len: int = 16
    transition_batch: int = 128
    m_samples: int = 16
    m_samples_target: int = 8
    dual_eps: float = 0.1
    eps_mean: float = 0.1
    eps_std: float = 1e-3
    eps_gear: float = 0.1
    alpha: float = 10.0
    inner_steps: int = 5
    target_sync_every: int = 200
    target_tau: float = 0.005  # Polyak mix per update; 0 = hard sync only
    buffer_capacity: int = 120_000
    critic_updates: int = 12
    actor_updates: int = 1
    # prefill: episodes collected before the first update; a diverse
    # buffer up front keeps early targets from overfitting a few rollouts
    warmup_episodes: int = 150
    init_log_std: float = -0.7
    gear_explore: float = 0.1

    def __post_init__(self) -> None:
        if self.retrace_steps < 1 or self.segment_len < 1:
            raise ValueError("retrace window and segment length must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gear_explore < 1.0:
            raise ValueError("gear_explore must be in [0, 1)")


class HmpoAgent:
    """Policy, critics, optimizers and the update rules."""

    def __init__(self, obs_dim: int, cfg: LearnConfig, seed: int) -> None:
        self.cfg = cfg
        self.obs_dim = obs_dim
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(101,))
        keys = ss.spawn(4)
        self.policy = HybridPolicy(obs_dim, cfg.hidden,
                                   np.random.Generator(np.random.PCG64(keys[0])))
        # bias the log-std head toward a moderate exploration level
        self.policy.net.biases[-1][1] = cfg.init_log_std
        self.critic = Critic(obs_dim, cfg.hidden,
                             np.random.Generator(np.random.PCG64(keys[1])))
        self.target_critic = Critic(obs_dim, cfg.hidden,
                                    np.random.Generator(np.random.PCG64(keys[2])))
        self.target_critic.net.copy_from(self.critic.net)
        self.rng = np.random.Generator(np.random.PCG64(keys[3]))
        self.actor_opt = Adam(self.policy.net.parameters(), cfg.actor_lr)
        self.critic_opt = Adam(self.critic.net.parameters(), cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim)
        self.lambda_mean = 0.0
        self.lambda_std = 0.0
        self.lambda_gear = 0.0
        self.critic_update_count = 0
        self.actor_update_count = 0
        self.episodes_seen = 0

    # ------------------------------------------------------------------
    # acting

    def act(self, obs_vec: np.ndarray, rng: np.random.Generator,
            explore: bool = True) -> Tuple[float, int, float, float]:
        """(u, gear change, gaussian log-prob, categorical log-prob)."""
        obs = np.atleast_2d(obs_vec)
        if explore:
            return self.policy.sample(obs, rng, self.cfg.gear_explore)
        u, g = self.policy.deterministic(obs)
        return u, g, 0.0, 0.0

    # ------------------------------------------------------------------
    # critic

    def critic_update(self) -> float:
        """One MSE step of the online critic toward retrace targets."""
        cfg = self.cfg
        batch = self.buffer.sample_segments(self.rng, cfg.segment_batch,
                                            cfg.segment_len)
        targets = retrace_targets(batch, self.target_critic, self.policy,
                                  cfg.gamma, cfg.retrace_lambda,
                                  cfg.retrace_steps, self.rng,
                                  cfg.m_samples_target)
        mask = batch["mask"].reshape(-1)
        obs = batch["obs"].reshape(-1, self.obs_dim)[mask]
        u = batch["u"].reshape(-1)[mask]
        g = batch["gear_idx"].reshape(-1)[mask]
        y = targets.reshape(-1)[mask]
        x = self.critic.join(obs, u, g)
        q, cache = self.critic.net.forward(x)
        err = q[:, 0] - y
        loss = float(np.mean(err * err))
        grad_out = (2.0 * err / err.size).reshape(-1, 1)
        d_w, d_b, _ = self.critic.net.backward(cache, grad_out)
        self.critic_opt.step(d_w + d_b)
        self.critic_update_count += 1
        if cfg.target_tau > 0.0:
            # continuous Polyak mix keeps bootstrap targets fresh; rare
            # hard syncs leave the value iteration starved between copies
            for tgt, src in zip(self.target_critic.net.parameters(),
                                self.critic.net.parameters()):
                tgt *= 1.0 - cfg.target_tau
                tgt += cfg.target_tau * src
        elif self.critic_update_count % cfg.target_sync_every == 0:
            self.target_critic.net.copy_from(self.critic.net)
        return loss

    # ------------------------------------------------------------------
    # actor

    @staticmethod
    def _solve_temperature(q: np.ndarray, eps: float) -> float:
        """Dual minimization for the sample-weighting temperature."""
        q_max = q.max(axis=1, keepdims=True)

        def dual(log_eta: float) -> float:
            eta = math.exp(log_eta)
            lse = q_max[:, 0] / eta + np.log(
                np.mean(np.exp((q - q_max) / eta), axis=1))
            return eta * eps + eta * float(np.mean(lse))

        res = minimize_scalar(dual, bounds=(-10.0, 10.0), method="bounded",
                              options={"xatol": 1e-6})
        return math.exp(res.x)

    def _policy_objective(self, obs: np.ndarray, u_cand: np.ndarray,
                          g_cand: np.ndarray, w: np.ndarray,
                          lambdas: Tuple[float, float, float],
                          snapshot: Tuple[np.ndarray, np.ndarray,
                                          np.ndarray]) \
            -> Tuple[float, np.ndarray, list, Dict[str, float]]:
        """Penalized weighted negative log-likelihood at the current policy.

        Returns (loss, head gradient, forward cache, KL terms).  The head
        gradient is the exact derivative of the loss in the head outputs,
        with the log-std column masked where the clamp is active, so a
        finite-difference probe of the loss against the backpropagated
        parameter gradient is a true check.
        """
        mean_old, log_std_old, logits_old = snapshot
        std_old = np.exp(log_std_old)
        p_old = softmax(logits_old)
        lam_mean, lam_std, lam_gear = lambdas
        n, m = u_cand.shape

        mean, log_std, logits, cache, raw_log_std = self.policy.heads(obs)
        std = np.exp(log_std)
        in_clip = (raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX)
        p = softmax(logits)
        lsm = log_softmax(logits)

        lp_u = gaussian_log_pdf(u_cand, mean[:, None], log_std[:, None])
        lp_g = np.take_along_axis(lsm[:, None, :].repeat(m, axis=1),
                                  g_cand[..., None], axis=2)[..., 0]
        nll = -float(np.mean((w * (lp_u + lp_g)).sum(axis=1)))

        kl_mean = float(np.mean((mean - mean_old) ** 2
                                / (2.0 * std_old ** 2)))
        kl_std = float(np.mean(log_std - log_std_old
                               + std_old ** 2 / (2.0 * std ** 2) - 0.5))
        kl_gear = float(np.mean(
            (p_old * (log_softmax(logits_old) - lsm)).sum(axis=1)))
        loss = nll + lam_mean * kl_mean + lam_std * kl_std \
            + lam_gear * kl_gear

        zc = (u_cand - mean[:, None]) / std[:, None]
        d_mean = -(w * zc).sum(axis=1) / std / n
        d_log_std = -(w * (zc * zc - 1.0)).sum(axis=1) / n
        w_onehot = np.zeros((n, 3))
        for g in range(3):
            w_onehot[:, g] = (w * (g_cand == g)).sum(axis=1)
        d_logits = (p - w_onehot) / n

        d_mean += lam_mean * (mean - mean_old) / std_old ** 2 / n
        d_log_std += lam_std * (1.0 - std_old ** 2 / std ** 2) / n
        d_logits += lam_gear * (p - p_old) / n

        head_grad = np.zeros((n, HybridPolicy.N_OUT))
        head_grad[:, 0] = d_mean
        head_grad[:, 1] = d_log_std * in_clip
        head_grad[:, 2:5] = d_logits
        kls = {"kl_mean": kl_mean, "kl_std": kl_std, "kl_gear": kl_gear}
        return loss, head_grad, cache, kls

    def actor_update(self, critic: Optional[Critic] = None) -> Dict[str, float]:
        """One weighted maximum-likelihood step with KL trust regions."""
        cfg = self.cfg
        critic = critic or self.target_critic
        batch = self.buffer.sample_transitions(self.rng, cfg.transition_batch)
        obs = batch["obs"]
        n = obs.shape[0]
        m = cfg.m_samples

        # torque candidates from the current policy (snapshot = old
        # policy); the 3-way gear head is enumerated exactly instead of
        # sampled, so a confident head still gets judged on every change
        mean_old, log_std_old, logits_old, _, _ = self.policy.heads(obs)
        std_old = np.exp(log_std_old)
        u_draw = np.clip(self.rng.normal(mean_old[:, None],
                                         std_old[:, None], size=(n, m)),
                         -1.0, 1.0)
        n_g = len(GEAR_CHANGES)
        u_cand = np.tile(u_draw, (1, n_g))                    # (n, m*n_g)
        g_cand = np.repeat(np.arange(n_g), m)[None, :].repeat(n, axis=0)
        m = m * n_g

        obs_rep = np.repeat(obs, m, axis=0)
        q = critic.q_values(obs_rep, u_cand.reshape(-1),
                            g_cand.reshape(-1)).reshape(n, m)
        eta = self._solve_temperature(q, cfg.dual_eps)
        w = softmax(q / eta)  # per-state weights over the m candidates

        snapshot = (mean_old, log_std_old, logits_old)
        stats = {"eta": eta, "q_mean": float(q.mean())}
        loss = math.nan
        kls = {"kl_mean": 0.0, "kl_std": 0.0, "kl_gear": 0.0}
        for _ in range(cfg.inner_steps):
            loss, head_grad, cache, kls = self._policy_objective(
                obs, u_cand, g_cand, w,
                (self.lambda_mean, self.lambda_std, self.lambda_gear),
                snapshot)
            d_w, d_b, _ = self.policy.net.backward(cache, head_grad)
            self.actor_opt.step(d_w + d_b)
            # dual ascent on the trust-region multipliers
            self.lambda_mean = max(
                0.0, self.lambda_mean
                + cfg.alpha * (kls["kl_mean"] - cfg.eps_mean))
            self.lambda_std = max(
                0.0, self.lambda_std
                + cfg.alpha * (kls["kl_std"] - cfg.eps_std))
            self.lambda_gear = max(
                0.0, self.lambda_gear
                + cfg.alpha * (kls["kl_gear"] - cfg.eps_gear))

        stats.update({
            "loss": loss,
            "kl_mean": kls["kl_mean"], "kl_std": kls["kl_std"],
            "kl_gear": kls["kl_gear"],
            "lambda_mean": self.lambda_mean, "lambda_std": self.lambda_std,
            "lambda_gear": self.lambda_gear,
        })
        self.actor_update_count += 1
        return stats

    # ------------------------------------------------------------------
    # checkpointing

    def _array_blobs(self) -> Dict[str, np.ndarray]:
        blobs: Dict[str, np.ndarray] = {}
        for tag, net in (("actor", self.policy.net),
                         ("critic", self.critic.net),
                         ("target", self.target_critic.net)):
            for i, w in enumerate(net.weights):
                blobs[f"{tag}.w{i}"] = w
            for i, b in enumerate(net.biases):
                blobs[f"{tag}.b{i}"] = b
        for tag, opt in (("actor_opt", self.actor_opt),
                         ("critic_opt", self.critic_opt)):
            for i, a in enumerate(opt.m):
                blobs[f"{tag}.m{i}"] = a
            for i, a in enumerate(opt.v):
                blobs[f"{tag}.v{i}"] = a
        return blobs

    def save_checkpoint(self, path: str, config_hash: str) -> None:
        """Versioned JSON container, bit-exact on round trip."""
        arrays = {}
        for name, arr in self._array_blobs().items():
            arrays[name] = {
                "dtype": str(arr.dtype),
                "shape": list(arr.shape),
                "data": base64.b64encode(np.ascontiguousarray(arr)
                                         .tobytes()).decode("ascii"),
            }
        doc = {
            "version": CHECKPOINT_VERSION,
            "config_hash": config_hash,
            "obs_dim": self.obs_dim,
            "hidden": list(self.cfg.hidden),
            "arrays": arrays,
            "scalars": {
                "lambda_mean": self.lambda_mean,
                "lambda_std": self.lambda_std,
                "lambda_gear": self.lambda_gear,
                "critic_update_count": self.critic_update_count,
                "actor_update_count": self.actor_update_count,
                "episodes_seen": self.episodes_seen,
                "actor_opt_t": self.actor_opt.t,
                "critic_opt_t": self.critic_opt.t,
            },
            "rng_state": self.rng.bit_generator.state,
        }
        with open(path, "w", encoding="ascii") as fh:
            json.dump(doc, fh, sort_keys=True)

    def load_checkpoint(self, path: str,
                        expect_hash: Optional[str] = None) -> str:
        """Restore every tensor, moment and RNG state.  Returns the stored
        config hash; raises on version or hash mismatch."""
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{doc.get('version')}")
        if expect_hash is not None and doc["config_hash"] != expect_hash:
            raise ValueError("checkpoint config hash mismatch: "
                             f"{doc['config_hash']} != {expect_hash}")
        blobs = self._array_blobs()
        if set(blobs) != set(doc["arrays"]):
            raise ValueError("checkpoint architecture mismatch")
        for name, meta in doc["arrays"].items():
            raw = np.frombuffer(base64.b64decode(meta["data"]),
                                dtype=meta["dtype"])
            arr = raw.reshape(meta["shape"])
            if blobs[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}")
            blobs[name][...] = arr
        sc = doc["scalars"]
        self.lambda_mean = sc["lambda_mean"]
        self.lambda_std = sc["lambda_std"]
        self.lambda_gear = sc["lambda_gear"]
        self.critic_update_count = int(sc["critic_update_count"])
        self.actor_update_count = int(sc["actor_update_count"])
        self.episodes_seen = int(sc["episodes_seen"])
        self.actor_opt.t = int(sc["actor_opt_t"])
        self.critic_opt.t = int(sc["critic_opt_t"])
        state = doc["rng_state"]
        state["state"] = {k: int(v) for k, v in state["state"].items()}
        self.rng.bit_generator.state = state
        return doc["config_hash"]
