"""Drive cycles, episode randomization and the closed-loop episode runner.

The lead vehicle replays a drive cycle (optionally with smooth noise);
the host runs a controller at a 1 s decision cadence over a 0.1 s plant
step.  The safety filter, when armed, re-projects the held torque request
at every plant step using the lead acceleration finite-differenced from
the lead-velocity signal.

Noise and synthetic cycles are rate limited so the lead's deceleration
never exceeds the configured cap, which must stay inside the braking
authority the gain certification assumed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Protocol, Tuple

import numpy as np

from .control import RewardWeights, reward_in_range, reward_out_of_range, \
    shaping_penalty
from .dynamics import Drivetrain, VehicleParams, VehicleState, engine_point, \
    fuel_rate, step
from .learn.obs import Observation
from .safety import EcbfConfig, filter_torque

GRAMS_PER_LITER_DIESEL = 832.0
LITERS_PER_GALLON = 3.785
METERS_PER_MILE = 1609.344


@dataclass(frozen=True)
class DriveCycle:
    """Uniformly sampled lead-speed profile, optional grade channel."""

    name: str
    dt: float
    speed: np.ndarray
    grade: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError("cycle dt must be positive")
        if self.speed.ndim != 1 or self.speed.size < 2:
            raise ValueError("cycle needs at least two speed samples")
        if np.any(~np.isfinite(self.speed)) or np.any(self.speed < 0.0):
            raise ValueError("cycle speeds must be finite and non-negative")
        if self.grade is not None and self.grade.shape != self.speed.shape:
            raise ValueError("grade channel must match the speed channel")

    @property
    def duration(self) -> float:
        return (self.speed.size - 1) * self.dt

    def resample(self, dt: float) -> "DriveCycle":
        """Linear interpolation onto a uniform grid with the given step."""
        t_old = np.arange(self.speed.size) * self.dt
        n = int(math.floor(self.duration / dt)) + 1
        t_new = np.arange(n) * dt
        speed = np.interp(t_new, t_old, self.speed)
        grade = None if self.grade is None else \
            np.interp(t_new, t_old, self.grade)
        return DriveCycle(self.name, dt, speed, grade)


def load_cycle(path: str, dt: float = 0.1) -> DriveCycle:
    """Read a t,v[,grade] CSV, validate it and resample to `dt`."""
    times: List[float] = []
    speeds: List[float] = []
    grades: List[float] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or len(header) < 2 or \
                header[0].strip().lower() != "t" or \
                header[1].strip().lower() != "v":
            raise ValueError(f"{path}: expected a 't,v[,grade]' header")
        has_grade = len(header) >= 3
        for row in reader:
            if not row:
                continue
            times.append(float(row[0]))
            speeds.append(float(row[1]))
            if has_grade:
                grades.append(float(row[2]))
    if len(times) < 2:
        raise ValueError(f"{path}: need at least two samples")
    t = np.asarray(times)
    v = np.asarray(speeds)
    if np.any(np.diff(t) <= 0.0):
        raise ValueError(f"{path}: time column must be strictly increasing")
    if np.any(v < 0.0) or np.any(~np.isfinite(v)):
        raise ValueError(f"{path}: speeds must be finite and non-negative")
    n = int(math.floor(float(t[-1] - t[0]) / dt)) + 1
    t_new = t[0] + np.arange(n) * dt
    speed = np.interp(t_new, t, v)
    grade = np.interp(t_new, t, np.asarray(grades)) if has_grade else None
    name = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return DriveCycle(name, dt, speed, grade)


def save_cycle(cycle: DriveCycle, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "v", "grade"] if cycle.grade is not None
                        else ["t", "v"])
        for i in range(cycle.speed.size):
            row = [repr(i * cycle.dt), repr(float(cycle.speed[i]))]
            if cycle.grade is not None:
                row.append(repr(float(cycle.grade[i])))
            writer.writerow(row)


def _rate_limit(v: np.ndarray, dt: float, max_decel: float,
                max_accel: float) -> np.ndarray:
    out = v.copy()
    for i in range(1, out.size):
        lo = out[i - 1] - max_decel * dt
        hi = out[i - 1] + max_accel * dt
        out[i] = min(max(out[i], lo), hi)
        if out[i] < 0.0:
            out[i] = 0.0
    return out


def synthetic_cycle(kind: str, duration: float, rng: np.random.Generator,
                    dt: float = 0.1, max_decel: float = 2.2,
                    max_accel: float = 1.2) -> DriveCycle:
    """Seeded stop-go (urban) or cruise (highway) lead profile.

    Urban targets mean speeds around 8 m/s with full stops; highway stays
    in the 22-30 m/s band.  Accelerations are rate limited so the profile
    respects the scenario's lead-deceleration cap.
    """
    if kind not in ("urban", "highway"):
        raise ValueError("cycle kind must be 'urban' or 'highway'")
    n = int(round(duration / dt)) + 1
    target = np.empty(n)
    i = 0
    if kind == "urban":
        v = 0.0
        while i < n:
            cruise = float(rng.uniform(6.0, 13.0))
            for phase_v, dur in ((cruise, rng.uniform(12.0, 30.0)),
                                 (0.0, rng.uniform(4.0, 12.0))):
                k = int(dur / dt)
                target[i:i + k] = phase_v
                i += k
                if i >= n:
                    break
        v0 = 0.0
    else:
        while i < n:
            cruise = float(rng.uniform(22.0, 30.0))
            if rng.random() < 0.2:
                cruise = float(rng.uniform(14.0, 20.0))
            k = int(rng.uniform(20.0, 50.0) / dt)
            target[i:i + k] = cruise
            i += k
        v0 = float(target[0])
    target[0] = v0
    speed = _rate_limit(target[:n], dt, max_decel, max_accel)
    return DriveCycle(f"synthetic-{kind}", dt, speed)


# ----------------------------------------------------------------------
# episode setup and runner


@dataclass(frozen=True)
class ScenarioConfig:
    """Environment geometry, cadences and randomization ranges."""

    dt: float = 0.1
    decision_dt: float = 1.0
    horizon: float = 120.0
    v_set: float = 15.0
    v_max: float = 30.0
    sensor_range: float = 350.0
    z0: float = 10.0
    z_init_range: Tuple[float, float] = (60.0, 300.0)
    v_init_range: Tuple[float, float] = (0.0, 24.0)
    mass_range: Tuple[float, float] = (5000.0, 10000.0)
    lead_noise_std: float = 0.4
    lead_noise_tau: float = 5.0
    max_lead_decel: float = 3.0
    max_lead_accel: float = 2.0
    mass_change_interval: float = 60.0  # 0 disables in-episode mass steps

    def __post_init__(self) -> None:
        if self.z_init_range[0] < self.z0:
            raise ValueError("initial separation range must start at or "
                             "above the minimum gap z0")
        ratio = self.decision_dt / self.dt
        if ratio < 1.0 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("decision_dt must be a multiple of dt")
        if self.mass_range[0] <= 0.0 or self.mass_range[0] > self.mass_range[1]:
            raise ValueError("mass_range must be positive and ordered")
        if self.v_init_range[0] < 0.0 \
                or self.v_init_range[0] > self.v_init_range[1]:
            raise ValueError("v_init_range must be non-negative and ordered")
        if self.max_lead_decel <= 0.0:
            raise ValueError("lead deceleration cap must be positive")


@dataclass(frozen=True)
class EpisodeSetup:
    """One randomized episode draw."""

    mass: float
    z_init: float
    lead_speed: np.ndarray   # per plant step, rate-limited, >= 0
    grade: np.ndarray        # per plant step
    v_set: float
    # host speed at t = 0, independent of the lead so episodes cover the
    # whole gear ladder; None falls back to matching the lead
    v_host_init: Optional[float] = None
    # signed offset from the mid-band gear at t = 0, clipped to the box
    gear_offset: int = 0


def randomize(scen: ScenarioConfig, cycle: DriveCycle,
              rng: np.random.Generator) -> EpisodeSetup:
    """Draw mass and initial gap, overlay smooth noise on the lead speed.

    Noise is an Ornstein-Uhlenbeck walk low-passed by the scenario time
    constant, and the noisy profile is rate limited to the lead caps so
    the certification's worst case still covers the episode.
    """
    n = int(round(scen.horizon / scen.dt)) + 1
    base = cycle.resample(scen.dt) if cycle.dt != scen.dt else cycle
    idx = np.minimum(np.arange(n), base.speed.size - 1)
    speed = base.speed[idx].copy()
    if scen.lead_noise_std > 0.0:
        rho = math.exp(-scen.dt / scen.lead_noise_tau)
        sig = scen.lead_noise_std * math.sqrt(1.0 - rho * rho)
        noise = np.empty(n)
        x = 0.0
        for i in range(n):
            x = rho * x + sig * rng.normal()
            noise[i] = x
        speed = np.maximum(speed + noise, 0.0)
    speed = _rate_limit(speed, scen.dt, scen.max_lead_decel,
                        scen.max_lead_accel)
    grade = np.zeros(n) if base.grade is None else base.grade[idx].copy()
    mass = float(rng.uniform(*scen.mass_range))
    z_init = float(rng.uniform(*scen.z_init_range))
    v_host = float(rng.uniform(*scen.v_init_range))
    # a one-step gear offset puts both shift directions into the data
    gear_offset = int(rng.integers(-1, 2))
    return EpisodeSetup(mass=mass, z_init=z_init, lead_speed=speed,
                        grade=grade, v_set=scen.v_set, v_host_init=v_host,
                        gear_offset=gear_offset)


class Controller(Protocol):
    def reset(self) -> None: ...

    def act(self, obs: Observation,
            torque_limits: Tuple[float, float]) \
        -> Tuple[float, int, Dict[str, float]]: ...


@dataclass
class EpisodeReport:
    """Metrics of one closed-loop episode."""

    reward: float
    mpg: float
    distance_m: float
    fuel_g: float
    mean_separation_in_range: float
    min_separation: float
    collision: bool
    violations: int       # plant steps with separation below z0
    interventions: int    # plant steps where the filter changed the torque
    decision_steps: int
    trace: Optional[Dict[str, np.ndarray]] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            "reward": self.reward,
            "mpg": self.mpg,
            "distance_m": self.distance_m,
            "fuel_g": self.fuel_g,
            "mean_separation_in_range": self.mean_separation_in_range,
            "min_separation": self.min_separation,
            "collision": self.collision,
            "violations": self.violations,
            "interventions": self.interventions,
            "decision_steps": self.decision_steps,
        }


def compute_mpg(distance_m: float, fuel_g: float) -> float:
    gallons = fuel_g / GRAMS_PER_LITER_DIESEL / LITERS_PER_GALLON
    if gallons <= 0.0:
        return 0.0
    return (distance_m / METERS_PER_MILE) / gallons


def pick_gear(v_host: float, drivetrain: Drivetrain) -> int:
    """Start-up gear: engine speed nearest the middle of its band."""
    mid = 0.5 * (drivetrain.idle_speed + drivetrain.max_speed)
    best, best_err = 1, float("inf")
    for gear in range(1, drivetrain.n_gears + 1):
        omega = v_host / drivetrain.wheel_radius * drivetrain.ratio(gear)
        if omega > drivetrain.max_speed:
            continue
        err = abs(max(omega, drivetrain.idle_speed) - mid)
        if err < best_err:
            best, best_err = gear, err
    return best


Recorder = Callable[[Observation, Dict[str, float], float, Observation,
                     bool], None]


def run_episode(controller: Controller, setup: EpisodeSetup,
                scen: ScenarioConfig, params: VehicleParams,
                drivetrain: Drivetrain, weights: RewardWeights,
                rng: np.random.Generator,
                ecbf: Optional[EcbfConfig] = None,
                shaping: bool = False,
                recorder: Optional[Recorder] = None,
                collect_trace: bool = False) -> EpisodeReport:
    """Close the loop for one episode and collect its report.

    The controller is queried once per decision step; its torque request
    is held while the plant integrates, with the safety filter (if armed)
    re-projecting every plant step.  A collision (separation <= 0) ends
    the episode.  Rewards are phase split on the post-interval state with
    fuel and engine torque averaged over the interval.
    """
    controller.reset()
    n_sub = int(round(scen.decision_dt / scen.dt))
    n_dec = int(round(scen.horizon / scen.decision_dt))
    lead = setup.lead_speed
    v0 = float(lead[0]) if setup.v_host_init is None \
        else float(setup.v_host_init)
    gear0 = min(max(pick_gear(v0, drivetrain) + setup.gear_offset, 1),
                drivetrain.n_gears)
    state = VehicleState(
        separation=setup.z_init, v_host=v0,
        v_lead=float(lead[0]), gear=gear0,
        mass=setup.mass, grade=float(setup.grade[0]))
    t_max_env = drivetrain.traction_torque_ceiling
    mass_next_change = scen.mass_change_interval \
        if scen.mass_change_interval > 0.0 else float("inf")

    total_reward = 0.0
    distance = 0.0
    min_sep = state.separation
    violations = 0
    interventions = 0
    z_in_sum, z_in_count = 0.0, 0
    prev_te: Optional[float] = None
    collision = False
    trace: Dict[str, List[float]] = {k: [] for k in (
        "t", "separation", "v_host", "v_lead", "gear", "torque",
        "fuel_rate", "intervened")} if collect_trace else {}

    decisions = 0
    for k in range(n_dec):
        obs = Observation.from_state(
            state.v_host, state.v_lead, state.separation, state.gear,
            state.mass, state.grade, setup.v_set, scen.sensor_range)
        limits = (drivetrain.min_wheel_torque(state.mass), t_max_env)
        t_req, gear_change, info = controller.act(obs, limits)
        fuel0 = state.fuel_g
        te_sum = 0.0
        gear_before = state.gear
        interval_min_sep = state.separation
        for i in range(n_sub):
            idx = k * n_sub + i
            v_l_next = float(lead[min(idx + 1, lead.size - 1)])
            lead_acc = (v_l_next - state.v_lead) / scen.dt
            change = gear_change if i == 0 else 0
            gear_now = min(max(state.gear + change, 1), drivetrain.n_gears)
            limits = (drivetrain.min_wheel_torque(state.mass), t_max_env)
            if ecbf is not None:
                t_cmd, hit = filter_torque(state, t_req, lead_acc, ecbf,
                                           params, limits)
            else:
                t_cmd = min(max(t_req, limits[0]), limits[1])
                hit = False
            t_cmd = min(t_cmd, drivetrain.max_wheel_torque(state.v_host,
                                                           gear_now))
            grade_now = float(setup.grade[min(idx, setup.grade.size - 1)])
            state = replace(state, grade=grade_now)
            omega_e, t_e = engine_point(t_cmd, state.v_host, gear_now,
                                        drivetrain)
            state = step(state, t_cmd, change, lead_acc, scen.dt, params,
                         drivetrain)
            if state.t >= mass_next_change and state.v_host < 0.5:
                state = replace(state,
                                mass=float(rng.uniform(*scen.mass_range)))
                mass_next_change = state.t + scen.mass_change_interval
            te_sum += t_e
            distance += state.v_host * scen.dt
            interventions += int(hit)
            if state.separation < interval_min_sep:
                interval_min_sep = state.separation
            if state.separation < min_sep:
                min_sep = state.separation
            if state.separation < scen.z0:
                violations += 1
            if state.separation <= scen.sensor_range:
                z_in_sum += state.separation
                z_in_count += 1
            if collect_trace:
                trace["t"].append(state.t)
                trace["separation"].append(state.separation)
                trace["v_host"].append(state.v_host)
                trace["v_lead"].append(state.v_lead)
                trace["gear"].append(float(state.gear))
                trace["torque"].append(t_cmd)
                trace["fuel_rate"].append(fuel_rate(omega_e, t_e,
                                                    drivetrain))
                trace["intervened"].append(float(hit))
            if state.separation <= 0.0:
                collision = True
                break

        next_obs = Observation.from_state(
            state.v_host, state.v_lead, state.separation, state.gear,
            state.mass, state.grade, setup.v_set, scen.sensor_range)
        te_mean = te_sum / n_sub
        fuel_mean = (state.fuel_g - fuel0) / scen.decision_dt
        d_te = 0.0 if prev_te is None else te_mean - prev_te
        prev_te = te_mean
        d_gear = state.gear - gear_before
        if next_obs.in_range:
            r = reward_in_range(next_obs, d_te, d_gear, fuel_mean, weights)
        else:
            r = reward_out_of_range(next_obs, d_te, d_gear, fuel_mean,
                                    weights)
        if shaping:
            r += shaping_penalty(interval_min_sep, scen.z0, weights)
        total_reward += r
        decisions += 1
        if recorder is not None:
            recorder(obs, info, r, next_obs, collision)
        if collision:
            break

    return EpisodeReport(
        reward=total_reward,
        mpg=compute_mpg(distance, state.fuel_g),
        distance_m=distance,
        fuel_g=state.fuel_g,
        mean_separation_in_range=(z_in_sum / z_in_count) if z_in_count
        else float("nan"),
        min_separation=min_sep,
        collision=collision,
        violations=violations,
        interventions=interventions,
        decision_steps=decisions,
        trace={k: np.asarray(v) for k, v in trace.items()}
        if collect_trace else None,
    )
