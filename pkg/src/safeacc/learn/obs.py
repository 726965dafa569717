"""Observation vector seen by learned and baseline controllers.

Eight entries: host speed, relative speed, separation, gear, mass, grade,
set speed and the in-range flag.  The encoder maps each affinely to
[-1, 1] with bounds fixed at construction.  Separation and relative speed
are sensor quantities: beyond sensor range the gap saturates at z_sr and
the relative speed reads zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class Observation:
    """Raw controller inputs at one decision instant."""

    v_host: float
    v_rel: float        # v_l - v_h as measured (0 when out of range)
    separation: float   # measured gap, saturated at sensor range
    gear: int
    mass: float
    grade: float
    v_set: float
    in_range: bool

    @staticmethod
    def from_state(v_host: float, v_lead: float, separation: float,
                   gear: int, mass: float, grade: float, v_set: float,
                   sensor_range: float) -> "Observation":
        in_range = separation <= sensor_range
        return Observation(
            v_host=v_host,
            v_rel=(v_lead - v_host) if in_range else 0.0,
            separation=min(separation, sensor_range),
            gear=gear,
            mass=mass,
            grade=grade,
            v_set=v_set,
            in_range=in_range,
        )


class ObservationEncoder:
    """Affine normalization of observations onto [-1, 1]^8."""

    DIM = 8

    def __init__(self, v_max: float = 35.0, sensor_range: float = 350.0,
                 n_gears: int = 10,
                 mass_range: Tuple[float, float] = (5000.0, 10000.0),
                 grade_max: float = 0.1) -> None:
        self._lo = np.array([0.0, -v_max, 0.0, 1.0, mass_range[0],
                             -grade_max, 0.0, 0.0])
        self._hi = np.array([v_max, v_max, sensor_range, float(n_gears),
                             mass_range[1], grade_max, v_max, 1.0])
        if np.any(self._hi <= self._lo):
            raise ValueError("normalization bounds must have positive span")

    def encode(self, obs: Observation) -> np.ndarray:
        raw = np.array([obs.v_host, obs.v_rel, obs.separation,
                        float(obs.gear), obs.mass, obs.grade, obs.v_set,
                        1.0 if obs.in_range else 0.0])
        x = 2.0 * (raw - self._lo) / (self._hi - self._lo) - 1.0
        return np.clip(x, -1.0, 1.0)
