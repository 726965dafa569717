"""Retrace targets: off-policy corrected n-step action-value backups.

For a stored segment with behavior log-probs b and current policy pi,

    Q_t^ret = Q(s_t, a_t)
            + sum_{j=t}^{t+n-1} gamma^(j-t) (prod_{k=t+1}^{j} c_k) delta_j
    delta_j = r_j + gamma E_{a'~pi} Q(s_{j+1}, a') - Q(s_j, a_j)
    c_k     = lam * min(1, pi(a_k|s_k) / b(a_k|s_k))

with the empty product equal to one, windows truncated at segment tails,
and the bootstrap expectation zeroed on terminal transitions.  The
truncated importance weights keep every target finite for any b > 0.
The expectation over the hybrid action is exact over the three gear
choices and Monte Carlo over the torque coordinate.
"""

from __future__ import annotations

from typing import Dict

import numpy as np

from .policy import Critic, HybridPolicy, softmax


def expected_q(critic: Critic, policy: HybridPolicy, obs: np.ndarray,
               rng: np.random.Generator, m_samples: int) -> np.ndarray:
    """E_{a~pi} Q(s, a): exact over gears, m_samples torque draws."""
    obs = np.atleast_2d(obs)
    n = obs.shape[0]
    mean, log_std, logits, _, _ = policy.heads(obs)
    probs = softmax(logits)
    std = np.exp(log_std)
    total = np.zeros(n)
    for _ in range(m_samples):
        u = np.clip(rng.normal(mean, std), -1.0, 1.0)
        for g in range(3):
            q = critic.q_values(obs, u, np.full(n, g, dtype=int))
            total += probs[:, g] * q
    return total / m_samples


def retrace_targets(batch: Dict[str, np.ndarray], critic: Critic,
                    policy: HybridPolicy, gamma: float, lam: float,
                    n_steps: int, rng: np.random.Generator,
                    m_samples: int = 8) -> np.ndarray:
    """Per-step targets for a padded segment batch, shape (B, L).

    Entries outside the validity mask are zero and must be ignored by the
    caller.  `critic` should be the target network.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    mask = batch["mask"].astype(float)
    b_sz, length = mask.shape
    flat = mask.reshape(-1).astype(bool)
    obs2 = batch["obs"].reshape(b_sz * length, -1)
    nxt2 = batch["next_obs"].reshape(b_sz * length, -1)
    u = batch["u"].reshape(-1)
    g = batch["gear_idx"].reshape(-1)

    q = np.zeros(b_sz * length)
    eq_next = np.zeros(b_sz * length)
    lp_pi = np.zeros(b_sz * length)
    if flat.any():
        q[flat] = critic.q_values(obs2[flat], u[flat], g[flat])
        eq_next[flat] = expected_q(critic, policy, nxt2[flat], rng,
                                   m_samples)
        lp_pi[flat] = policy.log_prob(obs2[flat], u[flat], g[flat])
    q = q.reshape(b_sz, length)
    eq_next = eq_next.reshape(b_sz, length) \
        * (~batch["done"]).astype(float)
    lp_b = batch["b_lp_u"] + batch["b_lp_g"]
    ratio = np.exp(np.minimum(lp_pi.reshape(b_sz, length) - lp_b, 0.0))
    c = lam * ratio * mask

    delta = (batch["reward"] + gamma * eq_next - q) * mask

    acc = np.zeros_like(q)
    w = mask.copy()
    for off in range(min(n_steps, length)):
        if off > 0:
            # fold in gamma * c_{t+off}, aligned so column t sees c[t+off]
            shifted_c = np.zeros_like(c)
            shifted_c[:, :length - off] = c[:, off:]
            w = w * gamma * shifted_c
        shifted_d = np.zeros_like(delta)
        shifted_d[:, :length - off] = delta[:, off:]
        acc += w * shifted_d
    return (q + acc) * mask
