"""Longitudinal dynamics of a heavy truck following a lead vehicle.

The plant state is the separation z to the lead, the host and lead speeds,
the engaged gear and the (laden) vehicle mass.  Host acceleration follows

    v_h' = T_t / (r_w * m_v) - F_r / m_v

with the wheel torque T_t (signed: traction > 0, service brakes < 0) and the
motion resistance

    F_r = 0.5 * rho * A_v * c_d * v_h^2 + m_v * g * f * cos(theta)
          + m_v * g * sin(theta).

Separation integrates the speed difference, z' = v_l - v_h.  Integration is
semi-implicit Euler at a fixed step: speeds first, then separation from the
updated speeds.  Speeds are clamped at zero (no reverse).

The drivetrain maps wheel torque to an engine operating point through a
10-speed gearbox and a final drive, and charges fuel from a steady-state
fuel-rate map sampled on a speed x torque grid (bilinear interpolation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

RPM_TO_RAD_S = 2.0 * math.pi / 60.0


@dataclass(frozen=True)
class VehicleParams:
    """Nominal parameters of the reference truck."""

    mass: float = 9000.0          # kg, nominal laden mass
    frontal_area: float = 7.71    # m^2
    drag_coeff: float = 0.08      # aerodynamic drag coefficient
    rolling_coeff: float = 0.015  # rolling resistance coefficient
    wheel_radius: float = 0.498   # m
    air_density: float = 1.225    # kg/m^3
    gravity: float = 9.81         # m/s^2

    def __post_init__(self) -> None:
        for name in ("mass", "frontal_area", "wheel_radius", "air_density",
                     "gravity"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"VehicleParams.{name} must be positive")
        if self.drag_coeff < 0.0 or self.rolling_coeff < 0.0:
            raise ValueError("drag and rolling coefficients must be >= 0")


@dataclass(frozen=True)
class VehicleState:
    """Simulation state at one instant."""

    separation: float     # z, gap to lead vehicle bumper [m]
    v_host: float         # v_h [m/s], >= 0
    v_lead: float         # v_l [m/s], >= 0
    gear: int             # engaged gear, 1..n
    mass: float           # current laden mass [kg]
    grade: float          # road grade tan(theta), signed
    fuel_g: float = 0.0   # cumulative fuel burned [g]
    t: float = 0.0        # episode time [s]


def resistance_force(v_host: float, params: VehicleParams, grade: float,
                     mass: Optional[float] = None) -> float:
    """Motion resistance F_r in N (signed; negative downhill is possible).

    `mass` overrides params.mass so a randomized episode mass can be used
    without rebuilding the params object.
    """
    m = params.mass if mass is None else mass
    theta = math.atan(grade)
    aero = 0.5 * params.air_density * params.frontal_area * params.drag_coeff \
        * v_host * v_host
    rolling = m * params.gravity * params.rolling_coeff * math.cos(theta)
    climb = m * params.gravity * math.sin(theta)
    return aero + rolling + climb


def _geometric_ratios(top: float, bottom: float, n: int) -> Tuple[float, ...]:
    step = (bottom / top) ** (1.0 / (n - 1))
    return tuple(top * step ** i for i in range(n))


def _willans_grid(speed_axis: np.ndarray, torque_axis: np.ndarray,
                  k0: float, k1: float, lhv: float) -> np.ndarray:
    """Synthetic fuel-rate map m_f = (k0*w + k1*w*T) / LHV in g/s."""
    w = speed_axis[:, None]
    t = torque_axis[None, :]
    return (k0 * w + k1 * w * t) / lhv


@dataclass(frozen=True)
class Drivetrain:
    """10-speed automated gearbox, engine envelope and fuel map.

    The fuel map is a row-major grid over (engine speed, engine torque);
    axis vectors are ascending.  The wheel-torque envelope used by the
    safety layer is gear independent: traction capped by peak engine torque
    through the lowest gear, braking floored by the service brakes sized as
    a deceleration limit at the heaviest loading.
    """

    gear_ratios: Tuple[float, ...]
    final_drive: float
    efficiency: float
    idle_speed: float            # rad/s
    max_speed: float             # rad/s
    curve_speed: np.ndarray      # rad/s, ascending
    curve_torque: np.ndarray     # N*m, > 0 at every sample
    fuel_speed_axis: np.ndarray  # rad/s, ascending
    fuel_torque_axis: np.ndarray  # N*m, ascending
    fuel_grid: np.ndarray        # g/s, shape (speed, torque)
    brake_decel: float           # m/s^2, service-brake deceleration limit
    max_ref_mass: float          # kg, heaviest loading the brakes are sized for
    wheel_radius: float          # m, duplicated here for torque conversions

    def __post_init__(self) -> None:
        if any(r2 >= r1 for r1, r2 in zip(self.gear_ratios,
                                          self.gear_ratios[1:])):
            raise ValueError("gear ratios must be strictly decreasing")
        if np.any(np.asarray(self.curve_torque) <= 0.0):
            raise ValueError("engine torque curve samples must be positive")
        if np.any(np.diff(self.fuel_speed_axis) <= 0.0) or \
                np.any(np.diff(self.fuel_torque_axis) <= 0.0):
            raise ValueError("fuel map axes must be strictly ascending")
        if self.fuel_grid.shape != (self.fuel_speed_axis.size,
                                    self.fuel_torque_axis.size):
            raise ValueError("fuel grid shape does not match its axes")
        if np.any(self.fuel_grid < 0.0):
            raise ValueError("fuel rates must be non-negative")
        if self.brake_torque_floor >= 0.0:
            raise ValueError("brake torque floor must be negative")

    @property
    def n_gears(self) -> int:
        return len(self.gear_ratios)

    def ratio(self, gear: int) -> float:
        if not 1 <= gear <= self.n_gears:
            raise ValueError(f"gear {gear} outside 1..{self.n_gears}")
        return self.gear_ratios[gear - 1] * self.final_drive

    def engine_torque_limit(self, omega_e: float) -> float:
        """Peak engine torque at a given speed, linear between samples."""
        return float(np.interp(omega_e, self.curve_speed, self.curve_torque))

    @property
    def peak_engine_torque(self) -> float:
        return float(np.max(self.curve_torque))

    @property
    def brake_torque_floor(self) -> float:
        """Envelope braking torque at the wheels, sized at max loading."""
        return -self.brake_decel * self.max_ref_mass * self.wheel_radius

    @property
    def traction_torque_ceiling(self) -> float:
        """Envelope traction torque: peak engine torque through 1st gear."""
        return self.peak_engine_torque * self.ratio(1) * self.efficiency

    def min_wheel_torque(self, mass: float) -> float:
        """Braking floor at the current mass (brakes grip-limited)."""
        return -self.brake_decel * mass * self.wheel_radius

    def max_wheel_torque(self, v_host: float, gear: int) -> float:
        """Deliverable traction torque in the engaged gear at this speed.

        Zero past redline: an overspeeding gear cannot pull.
        """
        omega = max(self.idle_speed, v_host / self.wheel_radius
                    * self.ratio(gear))
        if omega > self.max_speed:
            return 0.0
        return self.engine_torque_limit(omega) * self.ratio(gear) \
            * self.efficiency

    def torque_envelope(self, mass: float) -> Tuple[float, float]:
        """(T_min, T_max) wheel-torque envelope used by the safety layer."""
        return self.min_wheel_torque(mass), self.traction_torque_ceiling


def default_drivetrain(params: Optional[VehicleParams] = None,
                       n_gears: int = 10,
                       top_ratio: float = 12.0,
                       bottom_ratio: float = 0.78,
                       final_drive: float = 3.9,
                       efficiency: float = 0.95,
                       idle_rpm: float = 600.0,
                       max_rpm: float = 2200.0,
                       brake_decel_g: float = 0.6,
                       max_ref_mass: float = 10000.0,
                       willans_k0: float = 40.0,
                       willans_k1: float = 2.381,
                       lhv_j_per_g: float = 42500.0,
                       grid_size: int = 20) -> Drivetrain:
    """Reference drivetrain with a synthetic Willans-line fuel map."""
    params = params or VehicleParams()
    idle = idle_rpm * RPM_TO_RAD_S
    top = max_rpm * RPM_TO_RAD_S
    # flat 1100 N*m plateau between 1000 and 1800 rpm, linear taper outside
    curve_speed = np.array([600.0, 1000.0, 1800.0, 2200.0]) * RPM_TO_RAD_S
    curve_torque = np.array([650.0, 1100.0, 1100.0, 100.0])
    speed_axis = np.linspace(idle, top, grid_size)
    torque_axis = np.linspace(0.0, 1100.0, grid_size)
    grid = _willans_grid(speed_axis, torque_axis,
                         willans_k0, willans_k1, lhv_j_per_g)
    return Drivetrain(
        gear_ratios=_geometric_ratios(top_ratio, bottom_ratio, n_gears),
        final_drive=final_drive,
        efficiency=efficiency,
        idle_speed=idle,
        max_speed=top,
        curve_speed=curve_speed,
        curve_torque=curve_torque,
        fuel_speed_axis=speed_axis,
        fuel_torque_axis=torque_axis,
        fuel_grid=grid,
        brake_decel=brake_decel_g * params.gravity,
        max_ref_mass=max_ref_mass,
        wheel_radius=params.wheel_radius,
    )


def engine_point(wheel_torque: float, v_host: float, gear: int,
                 drivetrain: Drivetrain) -> Tuple[float, float]:
    """Engine operating point (omega_e, T_e) behind a wheel torque.

    omega_e is floored at idle (clutch slip below the idle-matched road
    speed is not modelled).  T_e = wheel_torque / (ratio * efficiency), so
    wheel_torque_from_engine inverts it exactly.
    """
    ratio = drivetrain.ratio(gear)
    omega_e = max(drivetrain.idle_speed, v_host / drivetrain.wheel_radius
                  * ratio)
    t_e = wheel_torque / (ratio * drivetrain.efficiency)
    return omega_e, t_e


def wheel_torque_from_engine(engine_torque: float, gear: int,
                             drivetrain: Drivetrain) -> float:
    return engine_torque * drivetrain.ratio(gear) * drivetrain.efficiency


def fuel_rate(omega_e: float, engine_torque: float,
              drivetrain: Drivetrain) -> float:
    """Fuel mass flow in g/s from the map, bilinear between grid nodes.

    Negative engine torque (overrun or braking) charges the idle floor,
    the zero-load rate at idle speed.  Queries beyond the grid clamp to
    the edge.
    """
    ws = drivetrain.fuel_speed_axis
    ts = drivetrain.fuel_torque_axis
    grid = drivetrain.fuel_grid
    if engine_torque < 0.0:
        omega_e = drivetrain.idle_speed
        engine_torque = 0.0
    w = min(max(omega_e, ws[0]), ws[-1])
    t = min(max(engine_torque, ts[0]), ts[-1])
    i = min(int(np.searchsorted(ws, w, side="right")) - 1, ws.size - 2)
    j = min(int(np.searchsorted(ts, t, side="right")) - 1, ts.size - 2)
    fw = (w - ws[i]) / (ws[i + 1] - ws[i])
    ft = (t - ts[j]) / (ts[j + 1] - ts[j])
    return float((1 - fw) * (1 - ft) * grid[i, j]
                 + fw * (1 - ft) * grid[i + 1, j]
                 + (1 - fw) * ft * grid[i, j + 1]
                 + fw * ft * grid[i + 1, j + 1])


def step(state: VehicleState, wheel_torque: float, gear_change: int,
         lead_accel: float, dt: float, params: VehicleParams,
         drivetrain: Drivetrain) -> VehicleState:
    """One semi-implicit Euler step of the coupled host/lead longitudinal
    dynamics.

    The caller is responsible for keeping wheel_torque inside drivetrain
    feasibility; this function only integrates.  Gear changes land before
    the torque acts.  Fuel is charged at the pre-step operating point.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    gear = min(max(state.gear + gear_change, 1), drivetrain.n_gears)
    m = state.mass
    f_r = resistance_force(state.v_host, params, state.grade, mass=m)
    accel = wheel_torque / (params.wheel_radius * m) - f_r / m
    v_host = max(0.0, state.v_host + accel * dt)
    v_lead = max(0.0, state.v_lead + lead_accel * dt)
    separation = state.separation + (v_lead - v_host) * dt
    omega_e, t_e = engine_point(wheel_torque, state.v_host, gear, drivetrain)
    fuel = state.fuel_g + fuel_rate(omega_e, t_e, drivetrain) * dt
    return replace(state, separation=separation, v_host=v_host,
                   v_lead=v_lead, gear=gear, fuel_g=fuel, t=state.t + dt)
