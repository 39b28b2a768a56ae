"""Test-set error, its ground-truth lower bound, and predictive efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model_based import predict_map
from .perception import Fidelity
from .pilot import DecisionConfig, UtilityWeights

# Returned by predictive_efficiency when the error is too small to divide by.
EXACT = "exact"
ERROR_FLOOR = 1e-9


@dataclass(frozen=True)
class EfficiencyResult:
    method: str
    hifi_samples: int
    lofi_samples: int
    scenario: str
    replicate: int
    error: float
    lower_bound: float
    efficiency: float | str


def test_error(predicted, actual) -> float:
    """Summed Euclidean distance between predicted and observed joint actions (radians)."""
    predicted = np.asarray(predicted, dtype=float).reshape(-1, 2)
    actual = np.asarray(actual, dtype=float).reshape(-1, 2)
    if len(predicted) != len(actual):
        raise ValueError(f"{len(predicted)} predictions for {len(actual)} observed joint actions")
    return float(np.hypot(*(predicted - actual).T).sum())


test_error.__test__ = False  # not a pytest test despite the name


def lower_bound(test_encounters, test_actions, ground_truth: UtilityWeights,
                decision: DecisionConfig = DecisionConfig(), seed: int = 0,
                n_samples: int = 10) -> float:
    """Error of the ground-truth model's averaged prediction on the test set."""
    predicted = predict_map(test_encounters, ground_truth, Fidelity.HIGH, n_samples, decision, seed)
    return test_error(predicted, test_actions)


def predictive_efficiency(error: float, bound: float) -> float | str:
    """``bound / error``; not clamped, so values above 1 survive.  Near-zero error returns :data:`EXACT`."""
    if error < 0 or math.isnan(error):
        raise ValueError(f"test error must be >= 0, got {error!r}")
    if error < ERROR_FLOOR:
        return EXACT
    return bound / error
