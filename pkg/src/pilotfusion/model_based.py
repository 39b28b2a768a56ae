"""Utility-weight estimation from observed joint actions, and simulation-based prediction.

Estimation works on a discrete :class:`~pilotfusion.density.WeightGrid`:
every combination is scored by its log prior plus the log-likelihood of the
training actions under that combination's simulated action density.

* MAP, high fidelity only: the high-fidelity family scores high-fidelity data.
* MAP, multi-fidelity: one shared weight scores both data sets, each under
  the family of its own fidelity.
* Bayesian multi-fidelity: separate low- and high-fidelity weight posteriors
  coupled by a Gaussian prior over ``(w_low, w_high)``.

Predictions replay the high-fidelity game on the test encounters ``N_s``
times and average the joint actions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from . import seeding
from .density import DensityFamily, WeightGrid
from .perception import Fidelity
from .pilot import DecisionConfig, DecisionTable, UtilityWeights
from .scenario import Dataset, as_state_array

DEFAULT_PRIOR_VARIANCE = 0.0017
DEFAULT_PRIOR_COVARIANCE = 0.0013


def _actions(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.actions
    return np.asarray(data, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class CrossFidelityPrior:
    """Gaussian prior over ``(w1_low, w2_low, w1_high, w2_high)``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape != (4,) or cov.shape != (4, 4):
            raise ValueError("prior needs a 4-vector mean and a 4x4 covariance")
        if not np.allclose(cov, cov.T):
            raise ValueError("prior covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("prior covariance must be positive definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def coupled(cls, low: UtilityWeights, high: UtilityWeights,
                variance: float = DEFAULT_PRIOR_VARIANCE,
                covariance: float = DEFAULT_PRIOR_COVARIANCE) -> "CrossFidelityPrior":
        """Same-player weights correlate across fidelities; the two players are independent."""
        cov = np.eye(4) * variance
        cov[0, 2] = cov[2, 0] = cov[1, 3] = cov[3, 1] = covariance
        return cls(np.array([low.w1, low.w2, high.w1, high.w2]), cov)

    def coupling_logpdf(self, low_combos: np.ndarray, high_combos: np.ndarray) -> np.ndarray:
        """Log prior density at every ``(w_low^k, w_high^j)`` pair, shape ``(K_low, K_high)``."""
        kl, kh = len(low_combos), len(high_combos)
        points = np.concatenate([np.repeat(low_combos, kh, axis=0),
                                 np.tile(high_combos, (kl, 1))], axis=1)
        return multivariate_normal(self.mean, self.cov).logpdf(points).reshape(kl, kh)


class WeightPosterior:
    def __init__(self, weight_grid: WeightGrid, probabilities):
        p = np.asarray(probabilities, dtype=float)
        if p.shape != (len(weight_grid),):
            raise ValueError(f"{p.shape[0]} probabilities for {len(weight_grid)} combinations")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("posterior probabilities must be non-negative and sum to 1")
        self.weight_grid = weight_grid
        self.probabilities = p

    @classmethod
    def point_mass(cls, weight_grid: WeightGrid, index: int) -> "WeightPosterior":
        p = np.zeros(len(weight_grid))
        p[index] = 1.0
        return cls(weight_grid, p)

    def mode(self) -> UtilityWeights:
        return UtilityWeights(*map(float, self.weight_grid.combos[int(np.argmax(self.probabilities))]))

    def save(self, path) -> None:
        lines = ["w1,w2,probability"]
        for (w1, w2), p in zip(self.weight_grid.combos, self.probabilities):
            lines.append(f"{w1!r},{w2!r},{float(p)!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def _grid_argmax(grid: WeightGrid, scores: np.ndarray) -> UtilityWeights:
    return UtilityWeights(*map(float, grid.combos[int(np.argmax(scores))]))


def _log_prior(grid: WeightGrid, weight_prior) -> np.ndarray:
    if weight_prior is None:
        return np.zeros(len(grid))
    lp = np.asarray(weight_prior, dtype=float)
    if lp.shape != (len(grid),):
        raise ValueError(f"log prior has {lp.shape} entries for {len(grid)} combinations")
    return lp


def map_scores_hifi(hifi_train, family_high: DensityFamily, weight_prior=None) -> np.ndarray:
    return _log_prior(family_high.weight_grid, weight_prior) + family_high.log_likelihoods(_actions(hifi_train))


def map_estimate_hifi(hifi_train, family_high: DensityFamily, weight_prior=None) -> UtilityWeights:
    """MAP weights from high-fidelity actions; ``weight_prior`` is a log prior per combination (uniform if None)."""
    scores = map_scores_hifi(hifi_train, family_high, weight_prior)
    return _grid_argmax(family_high.weight_grid, scores)


def map_scores_multifidelity(lofi_train, hifi_train, family_low: DensityFamily,
                             family_high: DensityFamily, weight_prior=None) -> np.ndarray:
    if family_low.weight_grid != family_high.weight_grid:
        raise ValueError("multi-fidelity MAP needs one weight grid shared by both families")
    return (_log_prior(family_high.weight_grid, weight_prior)
            + family_low.log_likelihoods(_actions(lofi_train))
            + family_high.log_likelihoods(_actions(hifi_train)))


def map_estimate_multifidelity(lofi_train, hifi_train, family_low: DensityFamily,
                               family_high: DensityFamily, weight_prior=None) -> UtilityWeights:
    """MAP of a single weight pair assumed to drive both the low- and high-fidelity pilots."""
    scores = map_scores_multifidelity(lofi_train, hifi_train, family_low, family_high, weight_prior)
    return _grid_argmax(family_high.weight_grid, scores)


def _normalise_log(scores: np.ndarray) -> np.ndarray:
    return scores - logsumexp(scores)


def bayes_posterior(lofi_train, hifi_train, family_low: DensityFamily,
                    family_high: DensityFamily, prior: CrossFidelityPrior) -> WeightPosterior:
    """Posterior over high-fidelity weights given both data sets.

    ``p(w_h^j | A_l, A_h) ∝ p(w_h^j | A_h) * sum_k p(w_l^k | A_l) p(w_l^k, w_h^j)``,
    renormalised over ``j``.  Empty action arrays contribute a flat likelihood.
    """
    log_h = _normalise_log(family_high.log_likelihoods(_actions(hifi_train)))
    log_l = _normalise_log(family_low.log_likelihoods(_actions(lofi_train)))
    coupling = prior.coupling_logpdf(family_low.weight_grid.combos, family_high.weight_grid.combos)
    log_post = log_h + logsumexp(log_l[:, None] + coupling, axis=0)
    p = np.exp(_normalise_log(log_post))
    return WeightPosterior(family_high.weight_grid, p / p.sum())


class PredictionTable:
    """Pre-drawn decision noise for ``n_samples`` replays of each test encounter.

    Replay ``l`` of encounter ``i`` uses stream ``(seed, i, l)``.  Sharing one
    table across weight settings gives common random numbers.
    """

    def __init__(self, test_encounters, n_samples: int = 10, fidelity=Fidelity.HIGH,
                 decision: DecisionConfig = DecisionConfig(), seed: int = 0):
        if n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {n_samples}")
        states = as_state_array(test_encounters)
        self.n_encounters = len(states)
        self.n_samples = n_samples
        rngs = [seeding.generator(seed, i, l) for i in range(len(states)) for l in range(n_samples)]
        self.table = DecisionTable.build(np.repeat(states, n_samples, axis=0),
                                         Fidelity.parse(fidelity), decision, rngs)

    def samples(self, weights) -> np.ndarray:
        """Simulated joint actions: ``(E, N_s, 2)``, or ``(K, E, N_s, 2)`` for a ``(K, 2)`` array."""
        a = self.table.actions(weights)
        return a.reshape(a.shape[:-2] + (self.n_encounters, self.n_samples, 2))

    def mean_actions(self, weights) -> np.ndarray:
        return self.samples(weights).mean(axis=-2)


def predict_map(test_encounters, w_star: UtilityWeights, fidelity=Fidelity.HIGH, n_samples: int = 10,
                decision: DecisionConfig = DecisionConfig(), seed: int = 0,
                table: PredictionTable | None = None) -> np.ndarray:
    """Average of ``n_samples`` simulated joint actions per test encounter under ``w_star``."""
    if table is None:
        table = PredictionTable(test_encounters, n_samples, fidelity, decision, seed)
    return table.mean_actions(w_star)


def predict_bayes(test_encounters, posterior: WeightPosterior, n_samples: int = 10,
                  decision: DecisionConfig = DecisionConfig(), seed: int = 0,
                  cutoff: float = 1e-4, table: PredictionTable | None = None,
                  diagnostics: dict | None = None) -> np.ndarray:
    """Posterior-weighted mixture of the per-combination :func:`predict_map` predictions.

    Combinations with posterior below ``cutoff`` are skipped and the kept mass
    renormalised.
    """
    p = posterior.probabilities
    keep = np.flatnonzero(p >= cutoff)
    if len(keep) == 0:
        keep = np.array([int(np.argmax(p))])
    weights = p[keep] / p[keep].sum()
    if diagnostics is not None:
        diagnostics["components"] = int(len(keep))
        diagnostics["skipped_mass"] = float(1.0 - p[keep].sum())
    if table is None:
        table = PredictionTable(test_encounters, n_samples, Fidelity.HIGH, decision, seed)
    means = table.mean_actions(posterior.weight_grid.combos[keep])
    return np.tensordot(weights, means, axes=1)
