"""Observation channels and the pilot's sampled beliefs about the intruder."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .kinematics import AircraftState


class Fidelity(enum.Enum):
    LOW = "low"
    HIGH = "high"

    @classmethod
    def parse(cls, value) -> "Fidelity":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown fidelity {value!r}; expected 'low' or 'high'") from None


@dataclass(frozen=True)
class ObservationModel:
    """Axis-independent Gaussian noise on an observed aircraft state."""

    position_sigma: float
    velocity_sigma: float
    channel: str

    def __post_init__(self):
        if not (self.position_sigma > 0 and self.velocity_sigma > 0):
            raise ValueError("observation sigmas must be positive")

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.position_sigma, self.position_sigma,
                         self.velocity_sigma, self.velocity_sigma])


OUT_THE_WINDOW = ObservationModel(900.0, 318.0, "out-the-window")
INSTRUMENT = ObservationModel(600.0, 318.0, "instrument")


def sample_channel(true_state: AircraftState, model: ObservationModel,
                   rng: np.random.Generator) -> AircraftState:
    noise = rng.standard_normal(4) * model.sigmas
    return AircraftState.from_array(true_state.as_array() + noise)


def fused_sigmas(fidelity: Fidelity) -> np.ndarray:
    """Per-axis standard deviations of the belief distribution.

    The high-fidelity pilot multiplies the out-the-window and instrument
    densities; both are centred on the truth, so the product is a Gaussian
    with summed precisions.  The low-fidelity pilot has no instrument panel.
    """
    fidelity = Fidelity.parse(fidelity)
    window = OUT_THE_WINDOW.sigmas
    if fidelity is Fidelity.LOW:
        return window
    panel = INSTRUMENT.sigmas
    return 1.0 / np.sqrt(1.0 / window**2 + 1.0 / panel**2)


def sample_beliefs(true_state: AircraftState, fidelity: Fidelity, m_prime: int,
                   rng: np.random.Generator) -> list[AircraftState]:
    if m_prime < 1:
        raise ValueError(f"m_prime must be >= 1, got {m_prime}")
    draws = true_state.as_array() + rng.standard_normal((m_prime, 4)) * fused_sigmas(fidelity)
    return [AircraftState.from_array(row) for row in draws]
