"""Locally weighted regression of joint actions on encounter features.

The prediction for a query is a softmax-of-negative-distance average of the
training joint actions, where distance is Euclidean after z-scoring every
feature with the training mean and standard deviation.  There is no
bandwidth parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Dataset, as_state_array


@dataclass(frozen=True)
class LwPredictor:
    features: np.ndarray   # (N, k) raw training inputs
    targets: np.ndarray    # (N, 2) joint actions
    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def fit_lw(features, targets) -> LwPredictor:
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or len(features) == 0:
        raise ValueError("training features must be a non-empty (N, k) array")
    if len(targets) != len(features):
        raise ValueError(f"{len(features)} training inputs but {len(targets)} targets")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    # constant features (up to round-off) carry no information; clamp so they z-score to ~0
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
    return LwPredictor(features, targets, mean, std)


def regression_weights(predictor: LwPredictor, queries) -> np.ndarray:
    """Weights ``z`` of shape ``(Q, N)``; each row lies on the probability simplex."""
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    if q.shape[1] != predictor.dim:
        raise ValueError(f"query has {q.shape[1]} features, predictor expects {predictor.dim}")
    train = (predictor.features - predictor.mean) / predictor.std
    query = (q - predictor.mean) / predictor.std
    d2 = ((query[:, None, :] - train[None, :, :]) ** 2).sum(axis=2)
    logits = -np.sqrt(d2)
    logits -= logits.max(axis=1, keepdims=True)
    z = np.exp(logits)
    return z / z.sum(axis=1, keepdims=True)


def lw_predict(predictor: LwPredictor, query_features) -> np.ndarray:
    """Predicted joint action(s): ``(2,)`` for one query, ``(Q, 2)`` for several."""
    q = np.asarray(query_features, dtype=float)
    out = regression_weights(predictor, q) @ predictor.targets
    return out[0] if q.ndim == 1 else out


def predict_hifi_only(hifi_train: Dataset, test_encounters) -> np.ndarray:
    if len(hifi_train) == 0:
        raise ValueError("high-fidelity training set is empty")
    model = fit_lw(hifi_train.states, hifi_train.actions)
    return lw_predict(model, as_state_array(test_encounters))


@dataclass(frozen=True)
class AugmentedLwPredictor:
    """High-fidelity regressor whose inputs carry the low-fidelity prediction as two extra features."""

    low: LwPredictor
    high: LwPredictor

    def predict(self, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        return lw_predict(self.high, np.hstack([states, lw_predict(self.low, states)]))


def fit_multifidelity(lofi_train: Dataset, hifi_train: Dataset) -> AugmentedLwPredictor:
    if len(lofi_train) == 0 or len(hifi_train) == 0:
        raise ValueError("both training sets must be non-empty")
    low = fit_lw(lofi_train.states, lofi_train.actions)
    augmented = np.hstack([hifi_train.states, lw_predict(low, hifi_train.states)])
    return AugmentedLwPredictor(low, fit_lw(augmented, hifi_train.actions))


def predict_multifidelity(lofi_train: Dataset, hifi_train: Dataset, test_encounters) -> np.ndarray:
    return fit_multifidelity(lofi_train, hifi_train).predict(as_state_array(test_encounters))
