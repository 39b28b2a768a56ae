"""Encounter geometry, game simulation at either fidelity, and dataset files.

Geometry: Player 1 starts ``range_ft`` south of the collision point flying
north.  Player 2 starts the same distance from the collision point at a
bearing ``theta`` (counterclockwise, degrees) from the far end of Player 1's
approach axis, so ``theta = 0`` is head-on.  Both headings aim at the
collision point plus Gaussian heading noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import seeding
from .kinematics import AircraftState, heading
from .perception import Fidelity
from .pilot import DecisionConfig, DecisionTable, UtilityWeights, draw_game_noise

TRAIN_BEARINGS = (-45.0, 0.0, 45.0)
TEST_BEARINGS = (-22.5, 22.5)
NOVEL_BEARINGS = TRAIN_BEARINGS

STATE_COLUMNS = ("s1_px", "s1_py", "s1_vx", "s1_vy", "s2_px", "s2_py", "s2_vx", "s2_vy")
ACTION_COLUMNS = ("a1", "a2")
COLUMNS = STATE_COLUMNS + ACTION_COLUMNS


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GeometryConfig:
    range_ft: float = 3000.0
    speed: float = 450.0
    collision_threshold: float = 500.0
    fov_half_angle: float = 110.0
    heading_sigma_deg: float = 5.0
    max_attempts: int = 20


@dataclass(frozen=True)
class Encounter:
    s1: AircraftState
    s2: AircraftState

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.s1.as_array(), self.s2.as_array()])

    @classmethod
    def from_array(cls, row) -> "Encounter":
        row = np.asarray(row, dtype=float)
        return cls(AircraftState.from_array(row[:4]), AircraftState.from_array(row[4:8]))


def as_state_array(encounters) -> np.ndarray:
    """Accept a Dataset, a sequence of Encounters, or an ``(N, 8)`` array."""
    if isinstance(encounters, Dataset):
        return encounters.states
    if isinstance(encounters, np.ndarray):
        arr = encounters.astype(float, copy=False)
    else:
        arr = np.array([e.as_array() for e in encounters], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 8:
        raise ValueError(f"encounter array must have shape (N, 8), got {arr.shape}")
    return arr


def closest_approach(encounter: Encounter) -> float:
    """Minimum separation over t >= 0 if neither aircraft manoeuvres."""
    row = encounter.as_array()
    dp = row[4:6] - row[0:2]
    dv = row[6:8] - row[2:4]
    vv = float(dv @ dv)
    t = 0.0 if vv == 0.0 else max(0.0, -float(dp @ dv) / vv)
    return float(np.hypot(*(dp + t * dv)))


def _in_field_of_view(own: AircraftState, other: AircraftState, half_angle_deg: float) -> bool:
    bearing = math.atan2(other.py - own.py, other.px - own.px)
    off = (bearing - heading(own) + math.pi) % (2 * math.pi) - math.pi
    return abs(off) <= math.radians(half_angle_deg)


def sample_encounter(approach_angles: Sequence[float], geometry: GeometryConfig,
                     rng: np.random.Generator) -> Encounter:
    angles = list(approach_angles)
    if not angles:
        raise ValueError("approach angle set is empty")
    R, v = geometry.range_ft, geometry.speed
    sigma = math.radians(geometry.heading_sigma_deg)
    for _ in range(geometry.max_attempts):
        theta = math.radians(angles[int(rng.integers(len(angles)))])
        p1 = (0.0, -R)
        p2 = (-R * math.sin(theta), R * math.cos(theta))
        h1 = math.atan2(-p1[1], -p1[0]) + sigma * rng.standard_normal()
        h2 = math.atan2(-p2[1], -p2[0]) + sigma * rng.standard_normal()
        s1 = AircraftState(p1[0], p1[1], v * math.cos(h1), v * math.sin(h1))
        s2 = AircraftState(p2[0], p2[1], v * math.cos(h2), v * math.sin(h2))
        if _in_field_of_view(s1, s2, geometry.fov_half_angle):
            return Encounter(s1, s2)
    raise ValueError(f"no encounter inside the field of view after {geometry.max_attempts} attempts")


def sample_encounters(n: int, approach_angles, geometry: GeometryConfig, seed: int) -> np.ndarray:
    """``n`` encounters, one stream per record; returns an ``(n, 8)`` array."""
    return np.array([sample_encounter(approach_angles, geometry, rng).as_array()
                     for rng in seeding.streams(seed, n)]).reshape(n, 8)


class Dataset:
    """Encounters with the joint actions played in them, all at one fidelity."""

    def __init__(self, fidelity, states, actions, seed: int | None = None,
                 weights: UtilityWeights | None = None):
        self.fidelity = Fidelity.parse(fidelity)
        self.states = np.asarray(states, dtype=float).reshape(-1, 8)
        self.actions = np.asarray(actions, dtype=float).reshape(-1, 2)
        if len(self.states) != len(self.actions):
            raise ValueError(f"{len(self.states)} encounters but {len(self.actions)} joint actions")
        self.seed = seed
        self.weights = weights

    def __len__(self):
        return len(self.states)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.fidelity == other.fidelity and self.seed == other.seed
                and self.weights == other.weights
                and np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions))

    def __repr__(self):
        return (f"Dataset(fidelity={self.fidelity.value}, n={len(self)}, "
                f"weights={self.weights}, seed={self.seed})")

    @property
    def encounters(self) -> list[Encounter]:
        return [Encounter.from_array(row) for row in self.states]

    def head(self, n: int) -> "Dataset":
        return Dataset(self.fidelity, self.states[:n], self.actions[:n], self.seed, self.weights)


def generate_dataset(n: int, fidelity, weights: UtilityWeights,
                     approach_angles=TRAIN_BEARINGS,
                     geometry: GeometryConfig = GeometryConfig(),
                     decision: DecisionConfig = DecisionConfig(),
                     seed: int = 0) -> Dataset:
    """Sample ``n`` encounters and play each one at ``fidelity``.

    Record ``i`` owns the stream ``(seed, i)``: it first draws its geometry,
    then the pilots' candidates and beliefs.  A dataset of size ``n`` is thus
    a prefix of any larger dataset with the same seed.
    """
    if n < 1:
        raise ValueError(f"dataset size must be >= 1, got {n}")
    fidelity = Fidelity.parse(fidelity)
    states = np.empty((n, 8))
    candidates = np.empty((n, 2, decision.m))
    noise = np.empty((n, 2, decision.m_prime, 4))
    for i, rng in enumerate(seeding.streams(seed, n)):
        states[i] = sample_encounter(approach_angles, geometry, rng).as_array()
        candidates[i], noise[i] = draw_game_noise(rng, decision)
    table = DecisionTable.from_noise(states, candidates, noise, fidelity, decision)
    return Dataset(fidelity, states, table.actions(weights), seed, weights)


def _header_comment(ds: Dataset) -> str:
    w1, w2 = ("none", "none") if ds.weights is None else (repr(ds.weights.w1), repr(ds.weights.w2))
    seed = "none" if ds.seed is None else str(ds.seed)
    return f"# pilotfusion dataset fidelity={ds.fidelity.value} w1={w1} w2={w2} seed={seed}"


def save_dataset(ds: Dataset, path) -> None:
    if len(ds) == 0:
        raise ValueError("refusing to save an empty dataset")
    lines = [_header_comment(ds), ",".join(COLUMNS)]
    for s, a in zip(ds.states, ds.actions):
        lines.append(",".join(repr(float(x)) for x in (*s, *a)))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_meta(line: str, path) -> dict:
    meta = {}
    for token in line.lstrip("#").split():
        if "=" in token:
            k, v = token.split("=", 1)
            meta[k] = v
    if "fidelity" not in meta:
        raise DatasetFormatError(f"{path}:1: comment line lacks fidelity=")
    return meta


def load_dataset(path) -> Dataset:
    path = Path(path)
    lines = path.read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("#"):
        raise DatasetFormatError(f"{path}:1: expected '# pilotfusion dataset ...' comment line")
    meta = _parse_meta(lines[0], path)
    header = [c.strip() for c in lines[1].split(",")]
    if tuple(header) != COLUMNS:
        raise DatasetFormatError(f"{path}:2: header must be {','.join(COLUMNS)}")
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(COLUMNS):
            raise DatasetFormatError(
                f"{path}:{lineno}: expected {len(COLUMNS)} fields, got {len(fields)}")
        row = []
        for name, text in zip(COLUMNS, fields):
            try:
                row.append(float(text))
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: field {name}: not a number: {text!r}") from None
        rows.append(row)
    if not rows:
        raise DatasetFormatError(f"{path}: dataset has no records")
    data = np.array(rows)
    weights = None
    if meta.get("w1", "none") != "none":
        weights = UtilityWeights(float(meta["w1"]), float(meta["w2"]))
    seed = None if meta.get("seed", "none") == "none" else int(meta["seed"])
    return Dataset(meta["fidelity"], data[:, :8], data[:, 8:], seed, weights)
