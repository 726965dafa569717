"""Run configuration: defaults, JSON loading, env overrides, hashing.

The whole configuration is one JSON-compatible tree.  Defaults embed the
reference truck, the sampled fuel map (row-major grid with axis vectors),
certified-gain setup, reward weights and learner knobs.  A user file may
override any subset; unknown keys and type mismatches are rejected.
Environment variables override single leaves:

    SAFEACC_SCENARIO__V_SET=20.0  ->  cfg["scenario"]["v_set"] = 20.0

The canonical JSON encoding of the merged tree is hashed; every output
artifact carries that hash plus the seed so reruns can be matched to
their exact configuration.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from .control import PidConfig, RewardWeights
from .dynamics import Drivetrain, VehicleParams, default_drivetrain
from .learn.agent import LearnConfig
from .learn.obs import ObservationEncoder
from .safety import EcbfConfig, VirtualState, certify, mu_bounds
from .scenario import ScenarioConfig

ENV_PREFIX = "SAFEACC_"


def default_config() -> Dict[str, Any]:
    """The full default tree, fuel map materialized."""
    params = VehicleParams()
    dt = default_drivetrain(params)
    return {
        "vehicle": {
            "mass": params.mass,
            "frontal_area": params.frontal_area,
            "drag_coeff": params.drag_coeff,
            "rolling_coeff": params.rolling_coeff,
            "wheel_radius": params.wheel_radius,
            "air_density": params.air_density,
            "gravity": params.gravity,
        },
        "drivetrain": {
            "gear_ratios": list(dt.gear_ratios),
            "final_drive": dt.final_drive,
            "efficiency": dt.efficiency,
            "idle_speed_rad_s": dt.idle_speed,
            "max_speed_rad_s": dt.max_speed,
            "torque_curve": {
                "speed_rad_s": dt.curve_speed.tolist(),
                "torque_nm": dt.curve_torque.tolist(),
            },
            "fuel_map": {
                "speed_rad_s": dt.fuel_speed_axis.tolist(),
                "torque_nm": dt.fuel_torque_axis.tolist(),
                "rate_g_s": dt.fuel_grid.tolist(),
            },
            "brake_decel_m_s2": dt.brake_decel,
            "max_ref_mass": dt.max_ref_mass,
        },
        "ecbf": {
            "k_alpha": [0.2, 5.0],
            "z0": 10.0,
            "cert_dt": 0.05,
            "cert_horizon": 400.0,
            "conv_tol_h": 0.01,
            "conv_tol_h_dot": 0.01,
            "worst_case": {
                "v_max": 30.0,
                "max_mass": 10000.0,
                "downhill_grade": -0.06,
                "lead_decel_to_stop": 8.0,
            },
        },
        "rewards": {
            "w_speed": 0.675,
            "w_fuel_out": 0.175,
            "w_torque_out": 0.075,
            "w_gear_out": 0.075,
            "w_gap": 0.325,
            "w_fuel_in": 0.175,
            "w_overspeed": 0.35,
            "w_torque_in": 0.075,
            "w_gear_in": 0.075,
            "v_rel_max": 30.0,
            "fuel_rate_max": 14.4,
            "engine_torque_max": 1100.0,
            "gear_step_max": 1.0,
            "near_penalty": -1.0,
            "crash_penalty": -10.0,
        },
        "pid": {
            "kp_speed": 2000.0,
            "ki_speed": 150.0,
            "kd_speed": 0.0,
            "kp_gap": 350.0,
            "ki_gap": 2.0,
            "kd_gap": 3000.0,
            "time_gap": 1.8,
            "integrator_limit": 20000.0,
        },
        "learn": {
            "hidden": [64, 64, 64],
            "actor_lr": 1e-4,
            "critic_lr": 1e-4,
            "gamma": 0.99,
            "retrace_steps": 15,
            "retrace_lambda": 1.0,
            "segment_batch": 32,
            "segment_len": 16,
            "transition_batch": 128,
            "m_samples": 16,
            "m_samples_target": 8,
            "dual_eps": 0.1,
            "eps_mean": 0.1,
            "eps_std": 1e-3,
            "eps_gear": 0.1,
            "alpha": 10.0,
            "inner_steps": 5,
            "target_sync_every": 200,
            "target_tau": 0.005,
            "buffer_capacity": 120000,
            "critic_updates": 12,
            "actor_updates": 1,
            "warmup_episodes": 150,
            "init_log_std": -0.7,
            "gear_explore": 0.1,
            "checkpoint_every": 500,
        },
        "scenario": {
            "dt": 0.1,
            "decision_dt": 1.0,
            "horizon": 120.0,
            "v_set": 15.0,
            "v_max": 30.0,
            "sensor_range": 350.0,
            "z0": 10.0,
            "z_init_range": [60.0, 300.0],
            "v_init_range": [0.0, 24.0],
            "mass_range": [5000.0, 10000.0],
            "lead_noise_std": 0.4,
            "lead_noise_tau": 5.0,
            "max_lead_decel": 3.0,
            "max_lead_accel": 2.0,
            "mass_change_interval": 60.0,
        },
        "seed": 0,
    }


def _merge(base: Dict[str, Any], override: Mapping[str, Any],
           path: str = "") -> None:
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ValueError(f"unknown config key: {here}")
        current = base[key]
        if isinstance(current, dict):
            if not isinstance(value, Mapping):
                raise ValueError(f"config key {here} must be a mapping")
            _merge(current, value, here)
            continue
        if isinstance(current, bool) != isinstance(value, bool):
            raise ValueError(f"config key {here} has wrong type")
        if isinstance(current, (int, float)) and not isinstance(value, bool):
            if not isinstance(value, (int, float)):
                raise ValueError(f"config key {here} must be a number")
        elif isinstance(current, str) and not isinstance(value, str):
            raise ValueError(f"config key {here} must be a string")
        elif isinstance(current, list) and not isinstance(value, list):
            raise ValueError(f"config key {here} must be a list")
        base[key] = copy.deepcopy(value)


def _apply_env(cfg: Dict[str, Any], env: Mapping[str, str]) -> None:
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].lower().split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node: Dict[str, Any] = cfg
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ValueError(f"env override {name}: unknown section")
            node = node[part]
        leaf = parts[-1]
        if leaf not in node:
            raise ValueError(f"env override {name}: unknown key")
        _merge(node, {leaf: value}, ".".join(parts[:-1]))


def load_config(path: Optional[str] = None,
                env: Optional[Mapping[str, str]] = None,
                overrides: Optional[Mapping[str, Any]] = None) \
        -> Dict[str, Any]:
    """Defaults, then file, then environment, then explicit overrides."""
    cfg = default_config()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ValueError(f"{path}: config root must be an object")
        _merge(cfg, user)
    _apply_env(cfg, os.environ if env is None else env)
    if overrides:
        _merge(cfg, overrides)
    return cfg


def config_hash(cfg: Mapping[str, Any]) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


# ----------------------------------------------------------------------
# materialization into typed objects


class RunConfig:
    """Typed views over a validated config tree."""

    def __init__(self, cfg: Dict[str, Any]) -> None:
        self.raw = cfg
        self.hash = config_hash(cfg)
        self.seed = int(cfg["seed"])

    def vehicle_params(self) -> VehicleParams:
        v = self.raw["vehicle"]
        return VehicleParams(mass=v["mass"], frontal_area=v["frontal_area"],
                             drag_coeff=v["drag_coeff"],
                             rolling_coeff=v["rolling_coeff"],
                             wheel_radius=v["wheel_radius"],
                             air_density=v["air_density"],
                             gravity=v["gravity"])

    def drivetrain(self) -> Drivetrain:
        d = self.raw["drivetrain"]
        return Drivetrain(
            gear_ratios=tuple(d["gear_ratios"]),
            final_drive=d["final_drive"],
            efficiency=d["efficiency"],
            idle_speed=d["idle_speed_rad_s"],
            max_speed=d["max_speed_rad_s"],
            curve_speed=np.asarray(d["torque_curve"]["speed_rad_s"]),
            curve_torque=np.asarray(d["torque_curve"]["torque_nm"]),
            fuel_speed_axis=np.asarray(d["fuel_map"]["speed_rad_s"]),
            fuel_torque_axis=np.asarray(d["fuel_map"]["torque_nm"]),
            fuel_grid=np.asarray(d["fuel_map"]["rate_g_s"]),
            brake_decel=d["brake_decel_m_s2"],
            max_ref_mass=d["max_ref_mass"],
            wheel_radius=self.raw["vehicle"]["wheel_radius"],
        )

    def ecbf_config(self, certified: bool = False) -> EcbfConfig:
        e = self.raw["ecbf"]
        s = self.raw["scenario"]
        wc = e["worst_case"]
        params = self.vehicle_params()
        dt = self.drivetrain()
        z0_margin = s["v_max"] * s["dt"]
        t_min = dt.min_wheel_torque(wc["max_mass"])
        t_max = dt.traction_torque_ceiling
        bounds = mu_bounds(wc["v_max"], 0.0, params, wc["downhill_grade"],
                           t_min, t_max, mass=wc["max_mass"])
        cfg = EcbfConfig(
            k_alpha=(e["k_alpha"][0], e["k_alpha"][1]),
            z0=e["z0"],
            z0_margin=z0_margin,
            mu_tmax_xrm=bounds[0],
            mu_tmin_xrm=bounds[1],
            cert_dt=e["cert_dt"],
            cert_horizon=e["cert_horizon"],
            conv_tol_h=e["conv_tol_h"],
            conv_tol_h_dot=e["conv_tol_h_dot"],
        )
        if certified:
            cfg = certify(cfg, self.worst_case_state())
        return cfg

    def worst_case_state(self) -> VirtualState:
        """Initial virtual state of the certification scenario: lead has
        braked to a stop at the sensor-range edge, host still at v_max."""
        e = self.raw["ecbf"]
        s = self.raw["scenario"]
        z0_eff = e["z0"] + s["v_max"] * s["dt"]
        return VirtualState(h=s["sensor_range"] - z0_eff,
                            h_dot=-e["worst_case"]["v_max"])

    def reward_weights(self) -> RewardWeights:
        r = dict(self.raw["rewards"])
        r["sensor_range"] = self.raw["scenario"]["sensor_range"]
        return RewardWeights(**r)

    def pid_config(self) -> PidConfig:
        return PidConfig(**self.raw["pid"])

    def learn_config(self) -> LearnConfig:
        l = dict(self.raw["learn"])
        l.pop("checkpoint_every")
        l["hidden"] = tuple(l["hidden"])
        return LearnConfig(**l)

    def scenario_config(self, **replacements: Any) -> ScenarioConfig:
        s = dict(self.raw["scenario"])
        s["z_init_range"] = tuple(s["z_init_range"])
        s["v_init_range"] = tuple(s["v_init_range"])
        s["mass_range"] = tuple(s["mass_range"])
        s.update(replacements)
        return ScenarioConfig(**s)

    def encoder(self) -> ObservationEncoder:
        s = self.raw["scenario"]
        return ObservationEncoder(
            v_max=max(s["v_max"], s["v_set"]) + 5.0,
            sensor_range=s["sensor_range"],
            n_gears=len(self.raw["drivetrain"]["gear_ratios"]),
            mass_range=tuple(s["mass_range"]),
        )


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic stream derived from the master seed and a key path."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(ss))
