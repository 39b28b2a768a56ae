"""Point-mass aircraft states and instantaneous-turn dynamics.

States are horizontal only: position in feet and velocity in feet per
second in an east/north frame.  A heading change is applied to the velocity
vector instantly (positive is counterclockwise), after which the aircraft
flies straight at constant speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_DURATION = 5.0


@dataclass(frozen=True)
class AircraftState:
    px: float
    py: float
    vx: float
    vy: float

    def __post_init__(self):
        isfinite = math.isfinite
        if isfinite(self.px) and isfinite(self.py) and isfinite(self.vx) and isfinite(self.vy):
            return
        for name in ("px", "py", "vx", "vy"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"AircraftState.{name} must be finite, got {value!r}")

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def as_array(self) -> np.ndarray:
        return np.array([self.px, self.py, self.vx, self.vy], dtype=float)

    @classmethod
    def from_array(cls, values) -> "AircraftState":
        px, py, vx, vy = (float(v) for v in values)
        return cls(px, py, vx, vy)


def _check_action(action: float) -> float:
    action = float(action)
    if not math.isfinite(action):
        raise ValueError(f"heading change must be finite, got {action!r}")
    return action


def propagate(state: AircraftState, action: float = 0.0,
              duration: float = DEFAULT_DURATION) -> AircraftState:
    """Rotate the velocity by ``action`` radians, then fly straight for ``duration`` s."""
    action = _check_action(action)
    duration = float(duration)
    if not math.isfinite(duration) or duration < 0:
        raise ValueError(f"duration must be finite and >= 0, got {duration!r}")
    c, s = math.cos(action), math.sin(action)
    vx = c * state.vx - s * state.vy
    vy = s * state.vx + c * state.vy
    return AircraftState(state.px + duration * vx, state.py + duration * vy, vx, vy)


def heading(state: AircraftState) -> float:
    """Direction of travel in radians, in (-pi, pi]."""
    if state.vx == 0.0 and state.vy == 0.0:
        raise ValueError("heading is undefined for a stationary aircraft")
    return math.atan2(state.vy, state.vx)


def distance(a: AircraftState, b: AircraftState) -> float:
    """Horizontal separation between two aircraft in feet."""
    return math.hypot(a.px - b.px, a.py - b.py)


def propagate_array(states: np.ndarray, actions, duration: float = DEFAULT_DURATION) -> np.ndarray:
    """Vectorised :func:`propagate` over the last axis of ``states`` (``[..., 4]``).

    ``actions`` broadcasts against ``states[..., 0]``.
    """
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if not (np.all(np.isfinite(states)) and np.all(np.isfinite(actions))):
        raise ValueError("states and actions must be finite")
    c, s = np.cos(actions), np.sin(actions)
    vx = c * states[..., 2] - s * states[..., 3]
    vy = s * states[..., 2] + c * states[..., 3]
    return np.stack([states[..., 0] + duration * vx,
                     states[..., 1] + duration * vy, vx, vy], axis=-1)
