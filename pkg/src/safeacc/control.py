"""Reward functions and the gain-scheduled PID baseline controller.

Rewards are phase split on the sensor-range flag.  Every term has the
shape w * 0.1 ** (x / x_max): worth its full weight at x = 0 and exactly
a tenth of it when x reaches its normalizer.  Each phase's weights sum to
one, so the unshaped reward lives in (0, 1].

Out of sensor range the controller is a speed tracker, in range a gap
keeper; the PID baseline mirrors that split and picks gears greedily by
the fuel map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from .dynamics import Drivetrain, fuel_rate
from .learn.obs import Observation


@dataclass(frozen=True)
class RewardWeights:
    """Term weights and normalizers for both phases plus shaping penalties."""

    # out-of-range phase: speed tracking
    w_speed: float = 0.675
    w_fuel_out: float = 0.175
    w_torque_out: float = 0.075
    w_gear_out: float = 0.075
    # in-range phase: gap keeping with an overspeed gate
    w_gap: float = 0.325
    w_fuel_in: float = 0.175
    w_overspeed: float = 0.35
    w_torque_in: float = 0.075
    w_gear_in: float = 0.075
    # normalizers
    v_rel_max: float = 30.0       # m/s, speed-error scale
    fuel_rate_max: float = 14.4   # g/s, fuel-map ceiling
    engine_torque_max: float = 1100.0  # N*m, engine-torque-step scale
    gear_step_max: float = 1.0    # gear steps per decision
    sensor_range: float = 350.0   # m, gap scale z_sr
    # shaping penalties (additive, only in reward-shaping safety mode)
    near_penalty: float = -1.0    # gap below z0
    crash_penalty: float = -10.0  # gap below zero

    def __post_init__(self) -> None:
        out = self.w_speed + self.w_fuel_out + self.w_torque_out \
            + self.w_gear_out
        inr = self.w_gap + self.w_fuel_in + self.w_overspeed \
            + self.w_torque_in + self.w_gear_in
        if abs(out - 1.0) > 1e-9 or abs(inr - 1.0) > 1e-9:
            raise ValueError("phase weights must each sum to 1.0")
        for name in ("v_rel_max", "fuel_rate_max", "engine_torque_max",
                     "gear_step_max", "sensor_range"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"normalizer {name} must be positive")


def _decay(x: float, scale: float) -> float:
    return 0.1 ** (x / scale)


def reward_out_of_range(obs: Observation, d_engine_torque: float,
                        d_gear: float, fuel_g_s: float,
                        w: RewardWeights) -> float:
    """Speed-tracking reward, used when the lead is beyond sensor range."""
    # fsum: the weights must add back to exactly 1.0 at zero penalty
    return math.fsum((
        w.w_speed * _decay(abs(obs.v_host - obs.v_set), w.v_rel_max),
        w.w_fuel_out * _decay(fuel_g_s, w.fuel_rate_max),
        w.w_torque_out * _decay(abs(d_engine_torque), w.engine_torque_max),
        w.w_gear_out * _decay(abs(d_gear), w.gear_step_max)))


def reward_in_range(obs: Observation, d_engine_torque: float,
                    d_gear: float, fuel_g_s: float,
                    w: RewardWeights) -> float:
    """Gap-keeping reward with an overspeed gate.

    The overspeed term pays its full weight at or below the set speed and
    decays tenfold per v_rel_max above it, so the reward is continuous at
    v_host = v_set.
    """
    if obs.v_host <= obs.v_set:
        r_os = w.w_overspeed
    else:
        r_os = w.w_overspeed * _decay(obs.v_host - obs.v_set, w.v_rel_max)
    return math.fsum((
        w.w_gap * _decay(max(obs.separation, 0.0), w.sensor_range),
        w.w_fuel_in * _decay(fuel_g_s, w.fuel_rate_max),
        w.w_torque_in * _decay(abs(d_engine_torque), w.engine_torque_max),
        w.w_gear_in * _decay(abs(d_gear), w.gear_step_max),
        r_os))


def shaping_penalty(separation: float, z0: float, w: RewardWeights) -> float:
    """Additive penalty for entering the unsafe band or crashing."""
    if separation <= 0.0:
        return w.crash_penalty
    if separation < z0:
        return w.near_penalty
    return 0.0


@dataclass(frozen=True)
class PidConfig:
    """Gains for both phases plus gap policy and saturation handling."""

    kp_speed: float = 2000.0   # N*m per m/s
    ki_speed: float = 150.0
    kd_speed: float = 0.0
    kp_gap: float = 350.0      # N*m per m
    ki_gap: float = 2.0
    kd_gap: float = 3000.0
    time_gap: float = 1.8      # s, desired headway slope
    integrator_limit: float = 20000.0  # N*m contribution cap


@dataclass
class _PidLoop:
    """Integrator and differentiator memory for one PID loop."""

    integral: float = 0.0
    prev_error: Optional[float] = None


class PidController:
    """Min-selected speed/gap PID with conditional anti-windup and
    fuel-greedy gears.

    Two loops run side by side: a speed loop driving v_host to v_set and,
    while a lead is in sensor range, a gap loop driving the separation to
    z0 + time_gap * v_host.  The commanded torque is the smaller of the
    two, so a fast lead never drags the follower past its set speed and a
    close lead always wins over the cruise demand.  Only the selected
    loop integrates (the loser is already asking for more torque than it
    gets; feeding its integrator would wind it up), integration also
    freezes when the output is saturated and the error pushes deeper into
    saturation, and the integrator is hard-clamped.  Leaving sensor range
    resets the gap loop so stale state cannot kick on re-entry.
    """

    def __init__(self, cfg: PidConfig, drivetrain: Drivetrain, z0: float,
                 decision_dt: float = 1.0) -> None:
        self.cfg = cfg
        self.drivetrain = drivetrain
        self.z0 = z0
        self.decision_dt = decision_dt
        self.reset()

    def reset(self) -> None:
        self._speed = _PidLoop()
        self._gap = _PidLoop()
        self._gear: Optional[int] = None

    def _raw(self, loop: _PidLoop, kp: float, kd: float, e: float) -> float:
        de = 0.0 if loop.prev_error is None \
            else (e - loop.prev_error) / self.decision_dt
        loop.prev_error = e
        return kp * e + loop.integral + kd * de

    def _integrate(self, loop: _PidLoop, ki: float, e: float, raw: float,
                   torque_limits: Tuple[float, float]) -> None:
        saturated_high = raw >= torque_limits[1] and e > 0.0
        saturated_low = raw <= torque_limits[0] and e < 0.0
        if not (saturated_high or saturated_low):
            loop.integral += ki * e * self.decision_dt
            lim = self.cfg.integrator_limit
            loop.integral = min(max(loop.integral, -lim), lim)

    def pid_torque(self, obs: Observation,
                   torque_limits: Tuple[float, float]) -> float:
        """Desired wheel torque: min of the active loops."""
        cfg = self.cfg
        e_speed = obs.v_set - obs.v_host
        raw_speed = self._raw(self._speed, cfg.kp_speed, cfg.kd_speed,
                              e_speed)
        raw = raw_speed
        gap_selected = False
        if obs.in_range:
            target = self.z0 + cfg.time_gap * obs.v_host
            e_gap = obs.separation - target
            raw_gap = self._raw(self._gap, cfg.kp_gap, cfg.kd_gap, e_gap)
            if raw_gap < raw_speed:
                raw = raw_gap
                gap_selected = True
        else:
            self._gap = _PidLoop()
        if gap_selected:
            self._integrate(self._gap, cfg.ki_gap, e_gap, raw, torque_limits)
        else:
            self._integrate(self._speed, cfg.ki_speed, e_speed, raw,
                            torque_limits)
        return min(max(raw, torque_limits[0]), torque_limits[1])

    def pid_gear(self, v_host: float, desired_torque: float,
                 current_gear: int) -> int:
        """Fuel-greedy gear choice, rate limited to one step per decision.

        A gear is feasible when the engine stays inside its speed band
        (first gear is always allowed at crawl speeds) and, for traction
        demands, the torque fits under the engine curve.  Among feasible
        gears the one with the lowest fuel rate at the demanded operating
        point wins; ties keep the current gear, then prefer the higher one.
        """
        dt = self.drivetrain
        best: Optional[Tuple[float, int]] = None
        candidates = []
        for gear in range(1, dt.n_gears + 1):
            ratio = dt.ratio(gear)
            omega_kin = v_host / dt.wheel_radius * ratio
            if omega_kin > dt.max_speed:
                continue
            if omega_kin < dt.idle_speed and gear != 1:
                continue
            omega = max(omega_kin, dt.idle_speed)
            t_e = desired_torque / (ratio * dt.efficiency)
            if t_e > dt.engine_torque_limit(omega):
                continue
            candidates.append((gear, fuel_rate(omega, t_e, dt)))
        if not candidates:
            # nothing feasible (demand too high everywhere): fall back to
            # the gear whose engine speed is closest to mid band
            mid = 0.5 * (dt.idle_speed + dt.max_speed)
            gear = min(range(1, dt.n_gears + 1),
                       key=lambda g: abs(v_host / dt.wheel_radius
                                         * dt.ratio(g) - mid))
            return min(max(gear, current_gear - 1), current_gear + 1)
        tol = 1e-12
        best_rate = min(rate for _, rate in candidates)
        tied = [g for g, rate in candidates if rate <= best_rate + tol]
        target = current_gear if current_gear in tied else max(tied)
        return min(max(target, current_gear - 1), current_gear + 1)

    def act(self, obs: Observation,
            torque_limits: Tuple[float, float]) \
            -> Tuple[float, int, Dict[str, float]]:
        """(wheel torque, gear change, info) for one decision step."""
        if self._gear is None:
            self._gear = obs.gear
        torque = self.pid_torque(obs, torque_limits)
        gear = self.pid_gear(obs.v_host, max(torque, 0.0), obs.gear)
        change = gear - obs.gear
        self._gear = gear
        return torque, change, {}
