"""Level-1 bounded-rational pilot.

Each pilot draws ``m`` candidate heading changes and ``m_prime`` noisy
beliefs about the intruder, assumes the intruder turns uniformly at random
(level 0), and keeps the candidate with the best summed utility.

Utility trades normalised separation against turn magnitude::

    u(a) = w * d(own_final(a), intruder_final) / L - (1 - w) * |a|

``L`` defaults to a fixed multiple of the initial separation of the two
aircraft; see :class:`DecisionConfig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .kinematics import AircraftState, distance, propagate_array
from .perception import Fidelity, fused_sigmas, sample_beliefs

# Chunk size bounds the (encounters, m, m_prime) distance tensor.
_CHUNK = 256


class JointAction(NamedTuple):
    a1: float
    a2: float


@dataclass(frozen=True)
class UtilityWeights:
    w1: float
    w2: float

    def __post_init__(self):
        for name in ("w1", "w2"):
            w = getattr(self, name)
            if not 0.0 < w < 1.0:
                raise ValueError(f"utility weight {name}={w!r} must lie in (0, 1)")

    def as_tuple(self) -> tuple[float, float]:
        return (self.w1, self.w2)


@dataclass(frozen=True)
class DecisionConfig:
    """Parameters of the sampled decision rule.

    ``distance_scale`` fixes the utility's length normaliser in feet.  When
    left as ``None`` each game uses ``separation_multiple`` times the initial
    separation of the two aircraft; the default multiple places the turn /
    no-turn transition inside the 0.80-0.98 weight band.
    """

    m: int = 100
    m_prime: int = 50
    action_bound: float = 1.0
    horizon: float = 5.0
    distance_scale: float | None = None
    separation_multiple: float = 2.6

    def __post_init__(self):
        if self.m < 1 or self.m_prime < 1:
            raise ValueError("m and m_prime must be >= 1")
        if not self.action_bound > 0:
            raise ValueError("action_bound must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.distance_scale is not None and not self.distance_scale > 0:
            raise ValueError("distance_scale must be positive")
        if not self.separation_multiple > 0:
            raise ValueError("separation_multiple must be positive")

    def scale_for(self, separation):
        if self.distance_scale is not None:
            return np.full_like(np.asarray(separation, dtype=float), self.distance_scale)
        return self.separation_multiple * np.asarray(separation, dtype=float)


def sample_candidates(config: DecisionConfig, rng: np.random.Generator) -> np.ndarray:
    b = config.action_bound
    return rng.uniform(-b, b, size=config.m)


def _level0_speed_factor(action_bound: float) -> float:
    # E[cos(theta)] for theta ~ U(-b, b); the E[sin] term vanishes by symmetry.
    return math.sin(action_bound) / action_bound


def _expected_final_array(beliefs: np.ndarray, horizon: float, action_bound: float) -> np.ndarray:
    k = _level0_speed_factor(action_bound)
    vel = beliefs[..., 2:] * k
    return np.concatenate([beliefs[..., :2] + horizon * vel, vel], axis=-1)


def expected_intruder_final(belief: AircraftState, horizon: float = 5.0,
                            action_bound: float = 1.0) -> AircraftState:
    """Mean final state of an intruder that turns by U(-bound, bound) then flies straight."""
    return AircraftState.from_array(_expected_final_array(belief.as_array(), horizon, action_bound))


def utility(w: float, own_final: AircraftState, intruder_final: AircraftState,
            action: float, distance_scale: float) -> float:
    return w * distance(own_final, intruder_final) / distance_scale - (1.0 - w) * abs(action)


def evaluate_candidates(own: AircraftState, beliefs: Sequence[AircraftState],
                        candidates, w: float, distance_scale: float,
                        config: DecisionConfig = DecisionConfig()) -> np.ndarray:
    """Summed utility of every candidate over the belief samples."""
    candidates = np.asarray(candidates, dtype=float)
    own_final = propagate_array(own.as_array(), candidates, config.horizon)
    intr = _expected_final_array(np.array([b.as_array() for b in beliefs]),
                                 config.horizon, config.action_bound)
    d = np.hypot(own_final[:, None, 0] - intr[None, :, 0], own_final[:, None, 1] - intr[None, :, 1])
    return (w * d / distance_scale - (1.0 - w) * np.abs(candidates)[:, None]).sum(axis=1)


def _mean_distances(own: np.ndarray, intruder: np.ndarray, candidates: np.ndarray,
                    noise: np.ndarray, sigmas: np.ndarray, config: DecisionConfig) -> np.ndarray:
    """Mean distance over beliefs for each candidate; shapes (E,4),(E,4),(E,m),(E,m',4) -> (E,m)."""
    out = np.empty(candidates.shape)
    for lo in range(0, len(own), _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        own_final = propagate_array(own[sl, None, :], candidates[sl], config.horizon)
        beliefs = intruder[sl, None, :] + noise[sl] * sigmas
        intr = _expected_final_array(beliefs, config.horizon, config.action_bound)
        dx = own_final[:, :, None, 0] - intr[:, None, :, 0]
        dy = own_final[:, :, None, 1] - intr[:, None, :, 1]
        out[sl] = np.hypot(dx, dy).mean(axis=2)
    return out


def draw_game_noise(rng: np.random.Generator, config: DecisionConfig):
    """Candidate actions ``(2, m)`` and standard-normal belief noise ``(2, m', 4)`` for one game."""
    b = config.action_bound
    candidates = rng.uniform(-b, b, size=(2, config.m))
    noise = rng.standard_normal((2, config.m_prime, 4))
    return candidates, noise


class DecisionTable:
    """Per-game candidate sets with their belief-averaged separations.

    Candidates and beliefs do not depend on the utility weights, so one table
    answers the decision for any number of weight combinations using common
    random numbers.
    """

    def __init__(self, candidates: np.ndarray, mean_distance: np.ndarray, scale: np.ndarray):
        self.candidates = candidates            # (E, 2, m)
        self.ratio = mean_distance / scale[:, None, None]
        self.penalty = np.abs(candidates)

    def __len__(self):
        return len(self.candidates)

    @classmethod
    def from_noise(cls, states: np.ndarray, candidates: np.ndarray, noise: np.ndarray,
                   fidelity: Fidelity, config: DecisionConfig) -> "DecisionTable":
        states = np.asarray(states, dtype=float).reshape(-1, 8)
        sig = fused_sigmas(fidelity)
        s1, s2 = states[:, :4], states[:, 4:]
        d = np.stack([_mean_distances(s1, s2, candidates[:, 0], noise[:, 0], sig, config),
                      _mean_distances(s2, s1, candidates[:, 1], noise[:, 1], sig, config)], axis=1)
        sep = np.hypot(s1[:, 0] - s2[:, 0], s1[:, 1] - s2[:, 1])
        return cls(candidates, d, config.scale_for(sep))

    @classmethod
    def build(cls, states: np.ndarray, fidelity: Fidelity, config: DecisionConfig,
              rngs: Sequence[np.random.Generator]) -> "DecisionTable":
        """Draw each game's noise from its own stream (one stream per row of ``states``)."""
        states = np.asarray(states, dtype=float).reshape(-1, 8)
        if len(rngs) != len(states):
            raise ValueError(f"need one random stream per game: {len(rngs)} streams, {len(states)} games")
        m, mp = config.m, config.m_prime
        candidates = np.empty((len(states), 2, m))
        noise = np.empty((len(states), 2, mp, 4))
        for i, rng in enumerate(rngs):
            candidates[i], noise[i] = draw_game_noise(rng, config)
        return cls.from_noise(states, candidates, noise, fidelity, config)

    def player_actions(self, player: int, w: float) -> np.ndarray:
        scores = w * self.ratio[:, player] - (1.0 - w) * self.penalty[:, player]
        idx = np.argmax(scores, axis=1)  # first maximum: lowest candidate index wins ties
        return self.candidates[np.arange(len(self)), player, idx]

    def actions(self, weights) -> np.ndarray:
        """Joint actions ``(E, 2)`` for one weight pair, or ``(K, E, 2)`` for a ``(K, 2)`` array."""
        if isinstance(weights, UtilityWeights):
            weights = weights.as_tuple()
        w = np.asarray(weights, dtype=float)
        single = w.ndim == 1
        w = np.atleast_2d(w)
        out = np.empty((len(w), len(self), 2))
        for p in (0, 1):
            values, inverse = np.unique(w[:, p], return_inverse=True)
            for i, value in enumerate(values):
                out[inverse == i, :, p] = self.player_actions(p, value)
        return out[0] if single else out


def choose_action(own: AircraftState, intruder_truth: AircraftState, w: float,
                  fidelity: Fidelity, config: DecisionConfig,
                  rng: np.random.Generator) -> float:
    """Pick the candidate with the highest summed utility over sampled intruder beliefs."""
    candidates = sample_candidates(config, rng)
    beliefs = sample_beliefs(intruder_truth, fidelity, config.m_prime, rng)
    scale = float(config.scale_for(distance(own, intruder_truth)))
    scores = evaluate_candidates(own, beliefs, candidates, w, scale, config)
    return float(candidates[int(np.argmax(scores))])


def joint_decision(encounter, weights: UtilityWeights, fidelity: Fidelity,
                   config: DecisionConfig, rng: np.random.Generator) -> JointAction:
    """Both pilots decide independently, each from their own samples of the other aircraft."""
    states = np.concatenate([encounter.s1.as_array(), encounter.s2.as_array()])[None]
    candidates, noise = draw_game_noise(rng, config)
    table = DecisionTable.from_noise(states, candidates[None], noise[None], fidelity, config)
    a1, a2 = table.actions(weights)[0]
    return JointAction(float(a1), float(a2))
