"""Training loop: collect episodes, push to replay, update the learner.

Collection and updates are strictly seeded: each episode draws its own
generator from (seed, episode index), so a rerun with the same config
and seed reproduces the curve bit for bit.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..config import RunConfig, make_rng
from ..scenario import DriveCycle, EpisodeReport, randomize, run_episode
from .agent import HmpoAgent
from .obs import Observation, ObservationEncoder
from .policy import TorqueMap, gear_index
from .replay import EpisodeRecorder


class PolicyController:
    """Adapter exposing the agent through the episode-runner protocol.

    Holds the exploration RNG for the current episode and remembers the
    raw sample behind the last action so the recorder can store behavior
    log-probs alongside the transition.
    """

    def __init__(self, agent: HmpoAgent, encoder: ObservationEncoder,
                 torque_map: TorqueMap, explore: bool = True) -> None:
        self.agent = agent
        self.encoder = encoder
        self.torque_map = torque_map
        self.explore = explore
        self.rng: Optional[np.random.Generator] = None

    def begin_episode(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def reset(self) -> None:
        pass

    def act(self, obs: Observation, torque_limits: Tuple[float, float]) \
            -> Tuple[float, int, Dict[str, float]]:
        vec = self.encoder.encode(obs)
        if self.explore:
            if self.rng is None:
                raise RuntimeError("begin_episode was not called")
            u, gear_change, lp_u, lp_g = self.agent.act(vec, self.rng,
                                                        explore=True)
        else:
            u, gear_change, lp_u, lp_g = self.agent.act(vec, self.agent.rng,
                                                        explore=False)
        torque = self.torque_map.to_torque(u)
        info = {"u": u, "gear_idx": float(gear_index(gear_change)),
                "lp_u": lp_u, "lp_g": lp_g}
        return torque, gear_change, info


@dataclass
class CurveRow:
    episode: int
    reward: float
    mpg: float
    collisions: int
    interventions: int
    violations: int
    critic_loss: float
    actor_loss: float

    HEADER = ("episode", "reward", "mpg", "collisions", "interventions",
              "violations", "critic_loss", "actor_loss")

    def values(self) -> List[object]:
        return [self.episode, self.reward, self.mpg, self.collisions,
                self.interventions, self.violations, self.critic_loss,
                self.actor_loss]


def train(run_cfg: RunConfig, episodes: int, safety_mode: str,
          out_dir: str, cycle: Optional[DriveCycle] = None,
          agent: Optional[HmpoAgent] = None,
          checkpoint_every: Optional[int] = None) \
        -> Tuple[HmpoAgent, List[CurveRow]]:
    """Run the training loop and write curve rows plus checkpoints.

    safety_mode: 'ecbf' (certified filter active), 'reward-shaping'
    (no filter, penalties added to the reward) or 'none'.
    Raises if mode is 'ecbf' and the configured gains fail certification.
    """
    if safety_mode not in ("ecbf", "reward-shaping", "none"):
        raise ValueError(f"unknown safety mode {safety_mode!r}")
    params = run_cfg.vehicle_params()
    drivetrain = run_cfg.drivetrain()
    scen = run_cfg.scenario_config()
    weights = run_cfg.reward_weights()
    learn_cfg = run_cfg.learn_config()
    encoder = run_cfg.encoder()
    ecbf = None
    if safety_mode == "ecbf":
        ecbf = run_cfg.ecbf_config(certified=True)
        if not ecbf.certified:
            raise ValueError("gain certification failed: "
                             + ecbf.certification.reason)
    torque_map = TorqueMap(
        drivetrain.min_wheel_torque(scen.mass_range[1]),
        drivetrain.traction_torque_ceiling)
    if agent is None:
        agent = HmpoAgent(ObservationEncoder.DIM, learn_cfg, run_cfg.seed)
    controller = PolicyController(agent, encoder, torque_map, explore=True)
    if cycle is None:
        from ..scenario import synthetic_cycle
        cycle = synthetic_cycle("urban", scen.horizon,
                                make_rng(run_cfg.seed, 7), dt=scen.dt,
                                max_decel=scen.max_lead_decel,
                                max_accel=scen.max_lead_accel)
    os.makedirs(out_dir, exist_ok=True)
    curve_path = os.path.join(out_dir, "curve.csv")
    rows: List[CurveRow] = []
    if checkpoint_every is None:
        checkpoint_every = int(run_cfg.raw["learn"]["checkpoint_every"])

    with open(curve_path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={run_cfg.hash} seed={run_cfg.seed}\n")
        fh.write(",".join(CurveRow.HEADER) + "\n")
        for ep in range(episodes):
            ep_rng = make_rng(run_cfg.seed, 1, ep)
            controller.begin_episode(make_rng(run_cfg.seed, 2, ep))
            setup = randomize(scen, cycle, ep_rng)
            rec = EpisodeRecorder(ObservationEncoder.DIM)

            def record(obs, info, reward, next_obs, done):
                rec.push(encoder.encode(obs), info["u"],
                         int(info["gear_idx"]), info["lp_u"], info["lp_g"],
                         reward, encoder.encode(next_obs), done)

            report = run_episode(controller, setup, scen, params,
                                 drivetrain, weights, ep_rng, ecbf=ecbf,
                                 shaping=(safety_mode == "reward-shaping"),
                                 recorder=record)
            agent.buffer.add_episode(rec.arrays())
            agent.episodes_seen += 1

            critic_loss = math.nan
            actor_loss = math.nan
            if ep + 1 >= learn_cfg.warmup_episodes:
                losses = [agent.critic_update()
                          for _ in range(learn_cfg.critic_updates)]
                critic_loss = float(np.mean(losses))
                stats = [agent.actor_update()
                         for _ in range(learn_cfg.actor_updates)]
                actor_loss = float(np.mean([s["loss"] for s in stats]))
                if not (math.isfinite(critic_loss)
                        and math.isfinite(actor_loss)):
                    diag = os.path.join(out_dir, "nan_diagnostic.json")
                    agent.save_checkpoint(diag, run_cfg.hash)
                    raise FloatingPointError(
                        f"non-finite loss at episode {ep}; state dumped "
                        f"to {diag}")

            row = CurveRow(ep, report.reward, report.mpg,
                           int(report.collision), report.interventions,
                           report.violations, critic_loss, actor_loss)
            rows.append(row)
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row.values()) + "\n")
            if checkpoint_every > 0 and (ep + 1) % checkpoint_every == 0:
                agent.save_checkpoint(
                    os.path.join(out_dir, f"checkpoint_ep{ep + 1}.json"),
                    run_cfg.hash)
    agent.save_checkpoint(os.path.join(out_dir, "checkpoint_final.json"),
                          run_cfg.hash)
    return agent, rows
