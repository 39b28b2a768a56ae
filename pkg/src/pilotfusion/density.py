"""Joint-action densities p(A | w) on a fixed action grid.

For every weight combination on a :class:`WeightGrid` the game is simulated
over one shared set of novel encounters and the pooled joint actions are
smoothed with a 2-D Gaussian product kernel.  Kernel mass is integrated over
each node's trapezoid cell and reflected at the grid edges, so the estimate
stays normalised even when the bandwidth is smaller than the node spacing or
the actions pile up against the action bound.

Bandwidths come from a normal-reference rule by default, or from the
diffusion (improved Sheather-Jones) fixed point of Botev, Grotowski & Kroese
(2010) with ``method="diffusion"``.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, special
from scipy.fft import dctn

from . import seeding
from .perception import Fidelity
from .pilot import DecisionConfig, DecisionTable
from .scenario import as_state_array

log = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-12


@dataclass(frozen=True)
class GridConfig:
    bound: float = 1.0
    nodes: int = 128

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.bound, self.bound, self.nodes)

    @property
    def spacing(self) -> float:
        return 2.0 * self.bound / (self.nodes - 1)

    @property
    def cell_widths(self) -> np.ndarray:
        w = np.full(self.nodes, self.spacing)
        w[0] = w[-1] = self.spacing / 2
        return w

    @property
    def cell_edges(self) -> np.ndarray:
        mid = (self.axis[:-1] + self.axis[1:]) / 2
        return np.concatenate([[-self.bound], mid, [self.bound]])


@dataclass(frozen=True)
class KdeConfig:
    method: str = "silverman"
    floor: float = DENSITY_FLOOR

    def __post_init__(self):
        if self.method not in ("silverman", "diffusion"):
            raise ValueError(f"unknown KDE method {self.method!r}")


class WeightGrid:
    """Ordered utility-weight combinations; player 1 varies slowest."""

    def __init__(self, w1_values, w2_values=None):
        w1 = np.asarray(w1_values, dtype=float)
        w2 = w1 if w2_values is None else np.asarray(w2_values, dtype=float)
        for v in (w1, w2):
            if v.ndim != 1 or len(v) == 0 or len(np.unique(v)) != len(v):
                raise ValueError("weight axes must be non-empty with unique values")
            if np.any(v <= 0) or np.any(v >= 1):
                raise ValueError("weights must lie in (0, 1)")
        self.w1_values, self.w2_values = w1, w2
        self.combos = np.array([(a, b) for a in w1 for b in w2])

    @classmethod
    def from_range(cls, lo: float = 0.80, hi: float = 0.98, step: float = 0.02) -> "WeightGrid":
        n = int(round((hi - lo) / step)) + 1
        return cls(np.round(lo + step * np.arange(n), 10))

    @property
    def step(self) -> float:
        return float(np.min(np.diff(self.w1_values))) if len(self.w1_values) > 1 else 0.0

    def __len__(self):
        return len(self.combos)

    def __eq__(self, other):
        return (isinstance(other, WeightGrid) and np.array_equal(self.w1_values, other.w1_values)
                and np.array_equal(self.w2_values, other.w2_values))

    def index(self, w1: float, w2: float) -> int:
        hits = np.flatnonzero(np.isclose(self.combos[:, 0], w1) & np.isclose(self.combos[:, 1], w2))
        if len(hits) == 0:
            raise KeyError(f"({w1}, {w2}) is not on the weight grid")
        return int(hits[0])


class ActionDensity:
    """Density over joint actions on a square node grid; ``values[i, j]`` is at ``(axis[i], axis[j])``."""

    def __init__(self, values, grid: GridConfig = GridConfig(), bandwidth=None):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.nodes, grid.nodes):
            raise ValueError(f"density shape {values.shape} does not match a {grid.nodes}-node grid")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite and non-negative")
        self.values = values
        self.grid = grid
        self.bandwidth = bandwidth

    def integral(self) -> float:
        w = self.grid.cell_widths
        return float(w @ self.values @ w)

    def node_index(self, actions):
        """Nearest-node indices ``(i, j)`` for ``(N, 2)`` actions, and how many were clamped."""
        a = np.atleast_2d(np.asarray(actions, dtype=float))
        g = self.grid
        raw = np.rint((a + g.bound) / g.spacing).astype(int)
        idx = np.clip(raw, 0, g.nodes - 1)
        clamped = int(np.any(raw != idx, axis=1).sum())
        return idx[:, 0], idx[:, 1], clamped

    def mass_within(self, half_width: float) -> float:
        """Probability mass on nodes with ``|a1|, |a2| <= half_width`` (trapezoid weights)."""
        ax = self.grid.axis
        inside = np.abs(ax) <= half_width + 1e-12
        w = self.grid.cell_widths * inside
        return float(w @ self.values @ w) / self.integral()

    def mean_abs_action(self) -> float:
        w = self.grid.cell_widths
        ax = np.abs(self.grid.axis)
        p = self.values * np.outer(w, w)
        p = p / p.sum()
        return float(0.5 * ((p.sum(axis=1) @ ax) + (p.sum(axis=0) @ ax)))


def normal_reference_bandwidth(x: np.ndarray) -> float:
    """Per-axis normal-reference (Silverman) bandwidth for a bivariate product kernel.

    Uses the sample standard deviation.  The IQR-robust scale is avoided on
    purpose: when most pilots barely turn it shrinks to a fraction of the node
    spacing and the few large manoeuvres end up in isolated spikes.
    """
    return float(np.std(x, ddof=1)) * len(x) ** (-1.0 / 6.0)


def _botev_psi(s, t, sq, a2):
    w = np.exp(-sq * math.pi**2 * t)
    w[1:] *= 0.5
    wx = w * sq ** s[0]
    wy = w * sq ** s[1]
    return (-1) ** (s[0] + s[1]) * (wx @ a2 @ wy) * math.pi ** (2 * (s[0] + s[1]))


def _botev_k(s):
    return (-1) ** s * np.prod(np.arange(1, 2 * s, 2)) / math.sqrt(2 * math.pi)


def _botev_func(s, t, n, sq, a2):
    if s[0] + s[1] <= 4:
        total = (_botev_func((s[0] + 1, s[1]), t, n, sq, a2)
                 + _botev_func((s[0], s[1] + 1), t, n, sq, a2))
        const = (1 + 1 / 2 ** (s[0] + s[1] + 1)) / 3
        time = (-2 * const * _botev_k(s[0]) * _botev_k(s[1]) / n / total) ** (1 / (2 + s[0] + s[1]))
        return _botev_psi(s, time, sq, a2)
    return _botev_psi(s, t, sq, a2)


def diffusion_bandwidth(samples: np.ndarray, bound: float = 1.0, bins: int = 128):
    """Per-axis bandwidths from the diffusion-KDE fixed point, or ``None`` if it fails."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    bins = 2 ** int(math.ceil(math.log2(bins)))
    unit = (samples + bound) / (2 * bound)
    hist, _, _ = np.histogram2d(unit[:, 0], unit[:, 1], bins=bins, range=[[0, 1], [0, 1]])
    a = dctn(hist / n, type=2)
    a[0, :] /= 2
    a[:, 0] /= 2
    a2 = a**2
    sq = np.arange(bins, dtype=float) ** 2

    def fixed_point(t):
        total = (_botev_func((0, 2), t, n, sq, a2) + _botev_func((2, 0), t, n, sq, a2)
                 + 2 * _botev_func((1, 1), t, n, sq, a2))
        time = (2 * math.pi * n * total) ** (-1 / 3)
        return t - (t - time) / time

    with np.errstate(all="ignore"):
        n_eff = min(max(n, 50), 1050)
        tol = 1e-12 + 0.01 * (n_eff - 50) / 1000
        t_star = None
        while t_star is None:
            try:
                lo, hi = fixed_point(0.0), fixed_point(tol)
                if np.isfinite(lo) and np.isfinite(hi) and lo * hi < 0:
                    t_star = optimize.brentq(fixed_point, 0.0, tol)
                    break
            except (ValueError, ZeroDivisionError, OverflowError):
                pass
            if tol >= 0.1:
                res = optimize.minimize_scalar(lambda x: abs(fixed_point(x)), bounds=(0, 0.1),
                                               method="bounded")
                t_star = float(res.x)
                break
            tol = min(tol * 2, 0.1)
        p02 = _botev_func((0, 2), t_star, n, sq, a2)
        p20 = _botev_func((2, 0), t_star, n, sq, a2)
        p11 = _botev_func((1, 1), t_star, n, sq, a2)
        t_x = (p02 ** 0.75 / (4 * math.pi * n * p20 ** 0.75 * (p11 + math.sqrt(p20 * p02)))) ** (1 / 3)
        t_y = (p20 ** 0.75 / (4 * math.pi * n * p02 ** 0.75 * (p11 + math.sqrt(p20 * p02)))) ** (1 / 3)
    h = np.sqrt([t_x, t_y]) * 2 * bound
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        return None
    return h


def _cell_masses(x: np.ndarray, h: float, grid: GridConfig) -> np.ndarray:
    """Kernel mass of each sample in each node cell, reflected at both edges: ``(N, nodes)``."""
    edges = grid.cell_edges
    b = grid.bound
    out = np.zeros((len(x), grid.nodes))
    for centre in (x, 2 * b - x, -2 * b - x):
        cdf = special.ndtr((edges[None, :] - centre[:, None]) / h)
        out += np.diff(cdf, axis=1)
    return out


def kde2d(samples, grid: GridConfig = GridConfig(), config: KdeConfig = KdeConfig(),
          bandwidth=None) -> ActionDensity:
    """Smooth ``(N, 2)`` joint actions into a normalised :class:`ActionDensity`."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(samples) < 2:
        raise ValueError(f"need at least 2 samples for a density, got {len(samples)}")
    if np.any(np.ptp(samples, axis=0) == 0):
        raise ValueError("samples have zero spread on at least one axis")
    if bandwidth is None:
        h = None
        if config.method == "diffusion":
            h = diffusion_bandwidth(samples, grid.bound, grid.nodes)
            if h is None:
                log.warning("diffusion bandwidth did not converge; using normal reference")
        if h is None:
            h = np.array([normal_reference_bandwidth(samples[:, k]) for k in (0, 1)])
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (2,))
    widths = grid.cell_widths
    kx = _cell_masses(samples[:, 0], float(h[0]), grid) / widths
    ky = _cell_masses(samples[:, 1], float(h[1]), grid) / widths
    values = kx.T @ ky
    values /= widths @ values @ widths
    np.maximum(values, config.floor, out=values)
    return ActionDensity(values, grid, bandwidth=tuple(float(v) for v in h))


def log_likelihood(density: ActionDensity, actions, diagnostics: dict | None = None) -> float:
    """Sum of log density at each action's nearest grid node.

    Actions outside the grid are clamped to the boundary node; the count is
    stored under ``"clamped"`` in ``diagnostics`` when given.
    """
    actions = np.asarray(actions, dtype=float).reshape(-1, 2)
    if len(actions) == 0:
        raise ValueError("log-likelihood of an empty action list")
    i, j, clamped = density.node_index(actions)
    if clamped:
        log.warning("%d action(s) outside the density grid clamped to the boundary", clamped)
    if diagnostics is not None:
        diagnostics["clamped"] = diagnostics.get("clamped", 0) + clamped
    return float(np.log(density.values[i, j]).sum())


class DensityFamily:
    """One :class:`ActionDensity` per combination of a :class:`WeightGrid`."""

    def __init__(self, weight_grid: WeightGrid, densities, fidelity, seed=None):
        densities = list(densities)
        if len(densities) != len(weight_grid):
            raise ValueError(f"{len(densities)} densities for {len(weight_grid)} weight combinations")
        self.weight_grid = weight_grid
        self.densities = densities
        self.fidelity = Fidelity.parse(fidelity)
        self.seed = seed
        self._log_values = np.log(np.stack([d.values for d in densities]))

    def __len__(self):
        return len(self.densities)

    def __getitem__(self, weights) -> ActionDensity:
        w1, w2 = weights
        return self.densities[self.weight_grid.index(w1, w2)]

    def log_likelihoods(self, actions) -> np.ndarray:
        """Log-likelihood of ``actions`` under every density, ``(K,)``; zeros if there are none."""
        actions = np.asarray(actions, dtype=float).reshape(-1, 2)
        if len(actions) == 0:
            return np.zeros(len(self))
        i, j, clamped = self.densities[0].node_index(actions)
        if clamped:
            log.warning("%d action(s) outside the density grid clamped to the boundary", clamped)
        return self._log_values[:, i, j].sum(axis=1)


def simulate_family_actions(weight_grid: WeightGrid, novel_encounters, fidelity,
                            decision: DecisionConfig = DecisionConfig(), seed: int = 0) -> np.ndarray:
    """Joint actions ``(K, E, 2)`` for every weight combination over the novel encounters.

    Game ``i`` draws its candidates and beliefs from stream ``(seed, i)`` for
    every weight combination (and both fidelities), so the densities differ
    only through the weights.
    """
    states = as_state_array(novel_encounters)
    table = DecisionTable.build(states, fidelity, decision, seeding.streams(seed, len(states)))
    return table.actions(weight_grid.combos)


def build_density_family(weight_grid: WeightGrid, novel_encounters, fidelity,
                         decision: DecisionConfig = DecisionConfig(), seed: int = 0,
                         grid: GridConfig = GridConfig(),
                         kde: KdeConfig = KdeConfig()) -> DensityFamily:
    actions = simulate_family_actions(weight_grid, novel_encounters, fidelity, decision, seed)
    return DensityFamily(weight_grid, [kde2d(a, grid, kde) for a in actions], fidelity, seed)


# -- density files ---------------------------------------------------------

def save_density(density: ActionDensity, path, **meta) -> None:
    g = density.grid
    fields = {"bound": repr(g.bound), "nodes": str(g.nodes), **{k: str(v) for k, v in meta.items()}}
    head = "# pilotfusion density " + " ".join(f"{k}={v}" for k, v in fields.items())
    rows = [",".join(repr(float(v)) for v in row) for row in density.values]
    Path(path).write_text(head + "\n" + "\n".join(rows) + "\n")


def load_density(path) -> tuple[ActionDensity, dict]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# pilotfusion density"):
        raise ValueError(f"{path}:1: not a density file")
    meta = dict(tok.split("=", 1) for tok in lines[0].split()[3:] if "=" in tok)
    grid = GridConfig(float(meta["bound"]), int(meta["nodes"]))
    values = np.array([[float(v) for v in line.split(",")] for line in lines[1:] if line.strip()])
    density = ActionDensity(values, grid)
    total = density.integral()
    if abs(total - 1.0) > 1e-2:
        raise ValueError(f"{path}: density integrates to {total:.4f}, expected 1")
    return density, meta


def family_key(weight_grid: WeightGrid, fidelity, decision: DecisionConfig, seed: int,
               grid: GridConfig, kde: KdeConfig, extra: str = "") -> str:
    text = repr((list(weight_grid.w1_values), list(weight_grid.w2_values),
                 Fidelity.parse(fidelity).value, decision, seed, grid, kde, extra))
    return hashlib.sha1(text.encode()).hexdigest()[:16]


def save_family(family: DensityFamily, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for (w1, w2), density in zip(family.weight_grid.combos, family.densities):
        save_density(density, directory / f"w_{w1:.4f}_{w2:.4f}.txt",
                     fidelity=family.fidelity.value, w1=repr(float(w1)), w2=repr(float(w2)),
                     seed=family.seed)


def load_family(directory, weight_grid: WeightGrid, fidelity, seed=None) -> DensityFamily:
    directory = Path(directory)
    densities = [load_density(directory / f"w_{w1:.4f}_{w2:.4f}.txt")[0]
                 for w1, w2 in weight_grid.combos]
    return DensityFamily(weight_grid, densities, fidelity, seed)


def cached_family(cache_dir, weight_grid: WeightGrid, novel_encounters, fidelity,
                  decision: DecisionConfig = DecisionConfig(), seed: int = 0,
                  grid: GridConfig = GridConfig(), kde: KdeConfig = KdeConfig(),
                  key_extra: str = "") -> DensityFamily:
    """Load the family from ``cache_dir`` if present, else build and store it.

    ``key_extra`` must identify the novel encounter set (e.g. its seed and geometry).
    """
    if cache_dir is None:
        return build_density_family(weight_grid, novel_encounters, fidelity, decision, seed, grid, kde)
    key = family_key(weight_grid, fidelity, decision, seed, grid, kde, key_extra)
    directory = Path(cache_dir) / f"{Fidelity.parse(fidelity).value}_{key}"
    done = directory / "COMPLETE"
    if done.exists():
        return load_family(directory, weight_grid, fidelity, seed)
    family = build_density_family(weight_grid, novel_encounters, fidelity, decision, seed, grid, kde)
    save_family(family, directory)
    done.write_text("ok\n")
    return family
