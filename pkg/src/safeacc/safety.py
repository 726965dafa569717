"""Exponential control-barrier-function safety layer for gap keeping.

The barrier is h = z - z0 for a minimum gap z0.  Because wheel torque
enters h only at the second derivative, the relative degree is 2:

    h'  = v_l - v_h
    h'' = mu = a_l + F_r / m_v - T_t / (m_v * r_w)

Safety requires mu >= -k1 * h - k2 * h' for a Hurwitz gain pair
K = (k1, k2).  Solving the minimal-intervention problem

    min 0.5 * (T_t - T_a)^2   s.t.   mu(T_t) >= -K eta

in the scalar torque gives the closed form T_t = min(T_a, T_safe) with

    T_safe = m_v * r_w * (a_l + F_r / m_v + k1 * (z - z0) + k2 * (v_l - v_h)),

clamped afterwards into the actuator envelope [T_min, T_max].

Torque saturation can make the constraint temporarily infeasible, so the
gains are certified offline: the virtual double integrator eta' = F eta +
G mu is rolled forward under the saturated feedback mu = sat(-K eta) from
a worst-case initial state, with the saturation interval frozen at the
extreme operating condition.  Certified gains keep h positive along the
whole rollout and converge to the origin within the horizon.

The double integrator is nilpotent, so the zero-order-hold discretization

    h  <- h + h' dt + 0.5 * mu dt^2
    h' <- h' + mu dt

is exact, not an approximation.

z0 inside the filter is inflated by one worst-case step of gap closure
(v_max * dt) over the reported minimum gap, absorbing discrete-step
penetration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .dynamics import VehicleParams, VehicleState, resistance_force


@dataclass(frozen=True)
class VirtualState:
    """State eta = (h, h_dot) of the virtual barrier system."""

    h: float
    h_dot: float


@dataclass(frozen=True)
class CertificationResult:
    """Immutable verdict of a gain certification rollout.

    trace columns: t, h, h_dot, mu_demand, mu_applied.
    """

    certified: bool
    converged: bool
    min_h: float
    final_h: float
    final_h_dot: float
    reason: str
    trace: np.ndarray


@dataclass(frozen=True)
class EcbfConfig:
    """Gains, margins and certification setup for the safety filter."""

    k_alpha: Tuple[float, float] = (0.2, 5.0)
    z0: float = 10.0             # reported minimum gap [m]
    z0_margin: float = 3.0       # discrete-step inflation, v_max * dt [m]
    mu_tmin_xrm: float = 5.479   # upper mu bound at full braking, extreme case
    mu_tmax_xrm: float = -10.227  # lower mu bound at full traction, extreme case
    cert_dt: float = 0.05        # rollout step [s]
    cert_horizon: float = 400.0  # rollout length [s]
    conv_tol_h: float = 0.01     # |h| convergence tolerance [m]
    conv_tol_h_dot: float = 0.01  # |h'| convergence tolerance [m/s]
    certification: Optional[CertificationResult] = None

    @property
    def effective_z0(self) -> float:
        return self.z0 + self.z0_margin

    @property
    def certified(self) -> bool:
        return self.certification is not None and \
            self.certification.certified


def barrier(state: VehicleState, z0: float) -> VirtualState:
    """Barrier coordinates of a plant state: h = z - z0, h' = v_l - v_h."""
    return VirtualState(h=state.separation - z0,
                        h_dot=state.v_lead - state.v_host)


def mu_bounds(v_host: float, lead_accel: float, params: VehicleParams,
              grade: float, t_min: float, t_max: float,
              mass: Optional[float] = None) -> Tuple[float, float]:
    """Feasible mu interval under the torque envelope.

    Returns (mu_at_tmax, mu_at_tmin).  Larger torque gives smaller mu, so
    mu_at_tmax <= mu <= mu_at_tmin: full traction closes the gap fastest,
    full braking opens it fastest.
    """
    if t_min > t_max:
        raise ValueError("t_min must not exceed t_max")
    m = params.mass if mass is None else mass
    base = lead_accel + resistance_force(v_host, params, grade, mass=m) / m
    denom = m * params.wheel_radius
    return base - t_max / denom, base - t_min / denom


def virtual_step(eta: VirtualState, mu: float, dt: float) -> VirtualState:
    """Exact ZOH update of the double integrator (F is nilpotent)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return VirtualState(h=eta.h + eta.h_dot * dt + 0.5 * mu * dt * dt,
                        h_dot=eta.h_dot + mu * dt)


def verify_gains(cfg: EcbfConfig, eta_extreme: VirtualState) \
        -> CertificationResult:
    """Certify a gain pair by worst-case rollout per the saturation scheme.

    Rolls mu = clip(-k1 h - k2 h', [mu_tmax_xrm, mu_tmin_xrm]) from
    eta_extreme.  Certified iff h stays > 0 at every sampled instant in
    (0, horizon] and (h, h') has entered the convergence box by the end.
    Non-Hurwitz gains (k1 <= 0 or k2 <= 0) are rejected outright.
    """
    k1, k2 = cfg.k_alpha
    if cfg.cert_dt <= 0.0 or cfg.cert_horizon <= 0.0:
        raise ValueError("certification step and horizon must be positive")
    if cfg.mu_tmax_xrm > cfg.mu_tmin_xrm:
        raise ValueError("extreme mu bounds are inverted")
    lo, hi = cfg.mu_tmax_xrm, cfg.mu_tmin_xrm
    n = int(round(cfg.cert_horizon / cfg.cert_dt))
    rows = [(0.0, eta_extreme.h, eta_extreme.h_dot, math.nan, math.nan)]
    if k1 <= 0.0 or k2 <= 0.0:
        return CertificationResult(
            certified=False, converged=False, min_h=eta_extreme.h,
            final_h=eta_extreme.h, final_h_dot=eta_extreme.h_dot,
            reason="gains are not Hurwitz", trace=np.array(rows))
    h, hd = eta_extreme.h, eta_extreme.h_dot
    dt = cfg.cert_dt
    min_h = h
    positive = True
    for i in range(n):
        demand = -k1 * h - k2 * hd
        mu = min(max(demand, lo), hi)
        h = h + hd * dt + 0.5 * mu * dt * dt
        hd = hd + mu * dt
        rows.append(((i + 1) * dt, h, hd, demand, mu))
        if h < min_h:
            min_h = h
        if h <= 0.0:
            positive = False
            break
    converged = positive and abs(h) < cfg.conv_tol_h \
        and abs(hd) < cfg.conv_tol_h_dot
    if not positive:
        reason = "barrier crossed zero during worst-case rollout"
    elif not converged:
        reason = "barrier did not converge within the horizon"
    else:
        reason = "certified"
    return CertificationResult(
        certified=positive and converged, converged=converged, min_h=min_h,
        final_h=h, final_h_dot=hd, reason=reason, trace=np.array(rows))


def certify(cfg: EcbfConfig, eta_extreme: VirtualState) -> EcbfConfig:
    """Return a copy of cfg carrying the certification verdict."""
    return replace(cfg, certification=verify_gains(cfg, eta_extreme))


def worst_case(params: VehicleParams, t_min: float, t_max: float,
               v_max: float = 30.0, max_mass: float = 10000.0,
               downhill_grade: float = -0.06, sensor_range: float = 350.0,
               effective_z0: float = 13.0) \
        -> Tuple[VirtualState, Tuple[float, float]]:
    """Extreme scenario for certification.

    The lead brakes to a stop; the worst persistent condition that leaves
    is a stationary obstacle (a_l = 0) first seen at the sensor-range edge
    while the host closes at v_max, fully laden, on the steepest downhill.
    Returns the initial virtual state and the frozen (mu_tmax, mu_tmin)
    interval at that condition.
    """
    eta = VirtualState(h=sensor_range - effective_z0, h_dot=-v_max)
    bounds = mu_bounds(v_max, 0.0, params, downhill_grade, t_min, t_max,
                       mass=max_mass)
    return eta, bounds


def filter_torque(state: VehicleState, proposed_torque: float,
                  lead_accel: float, cfg: EcbfConfig,
                  params: VehicleParams,
                  torque_limits: Tuple[float, float]) -> Tuple[float, bool]:
    """Minimal-intervention projection of a proposed wheel torque.

    Returns (safe torque, intervened).  The closed form solves the scalar
    QP exactly: the barrier constraint is an upper bound T_safe on torque,
    so projection is min(T_a, T_safe); actuator clamping happens after.
    Requires a certified config.
    """
    if not cfg.certified:
        raise ValueError("safety filter requires certified gains; "
                         "run verify_gains first")
    if not (math.isfinite(proposed_torque) and math.isfinite(lead_accel)):
        raise ValueError("non-finite input to safety filter")
    t_min, t_max = torque_limits
    k1, k2 = cfg.k_alpha
    m = state.mass
    f_r = resistance_force(state.v_host, params, state.grade, mass=m)
    eta = barrier(state, cfg.effective_z0)
    t_safe = m * params.wheel_radius * (lead_accel + f_r / m
                                        + k1 * eta.h + k2 * eta.h_dot)
    t_out = min(proposed_torque, t_safe)
    t_out = min(max(t_out, t_min), t_max)
    return t_out, t_out != proposed_torque
