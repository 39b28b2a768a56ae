"""Predictive-efficiency experiments over high-fidelity sample counts.

Seed hierarchy (all integers derived with :func:`pilotfusion.seeding.derive_seed`
from the master seed ``S``)::

    novel encounters             (S, 0, 0)
    density-family decisions     (S, 0, 1)   shared by both fidelities
    replicate r, low-fi train    (S, 1, r, 0)
                 high-fi train   (S, 1, r, 1)   one pool, prefixes per count
                 test set        (S, 1, r, 2)
                 lower bound     (S, 1, r, 3)
                 predictions     (S, 1, r, 4)   shared by every method and count
    record i of a dataset        spawn key (i,) under the dataset seed

The weight scenario does not enter any seed, so the three scenarios see the
same encounters and decision noise and differ only in the low-fidelity
weights.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .density import DensityFamily, GridConfig, KdeConfig, WeightGrid, cached_family
from .evaluation import EXACT, EfficiencyResult, lower_bound, predictive_efficiency, test_error
from .model_based import (CrossFidelityPrior, PredictionTable, bayes_posterior,
                          map_estimate_hifi, map_estimate_multifidelity, predict_bayes, predict_map)
from .model_free import predict_hifi_only, predict_multifidelity
from .perception import Fidelity
from .pilot import DecisionConfig, UtilityWeights
from .scenario import (NOVEL_BEARINGS, TEST_BEARINGS, TRAIN_BEARINGS, Dataset, GeometryConfig,
                       generate_dataset, sample_encounters)
from .seeding import derive_seed

log = logging.getLogger(__name__)

METHODS = ("mf-hifi", "mf-multi", "mb-map-hifi", "mb-map-multi", "mb-bayes")

HIGH_FIDELITY_TRUTH = UtilityWeights(0.89, 0.90)
SCENARIOS = {
    "identical": UtilityWeights(0.89, 0.90),
    "small": UtilityWeights(0.88, 0.89),
    "large": UtilityWeights(0.80, 0.81),
}
_ROLES = {"lofi": 0, "hifi": 1, "test": 2, "bound": 3, "predict": 4}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "identical"
    lofi: int = 1000
    hifi: tuple = (5, 10, 20, 40, 80, 160)
    replicates: int = 10
    seed: int = 0
    n_test: int = 100
    n_novel: int = 1000
    n_samples: int = 10
    methods: tuple = METHODS
    grid_lo: float = 0.80
    grid_hi: float = 0.98
    grid_step: float = 0.02
    kde_nodes: int = 128
    kde_method: str = "silverman"
    m: int = 100
    m_prime: int = 50
    action_bound: float = 1.0
    horizon: float = 5.0
    distance_scale: float | None = None
    separation_multiple: float = 2.6
    range_ft: float = 3000.0
    speed: float = 450.0
    collision_threshold: float = 500.0
    fov_half_angle: float = 110.0
    heading_sigma_deg: float = 5.0
    bayes_cutoff: float = 1e-4
    prior_mean: str = "truth"
    prior_variance: float = 0.0017
    prior_covariance: float = 0.0013
    cache_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {sorted(SCENARIOS)}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.lofi < 1 or not self.hifi or min(self.hifi) < 1:
            raise ValueError("sample counts must be >= 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    @property
    def decision(self) -> DecisionConfig:
        return DecisionConfig(self.m, self.m_prime, self.action_bound, self.horizon,
                              self.distance_scale, self.separation_multiple)

    @property
    def geometry(self) -> GeometryConfig:
        return GeometryConfig(self.range_ft, self.speed, self.collision_threshold,
                              self.fov_half_angle, self.heading_sigma_deg)

    @property
    def weight_grid(self) -> WeightGrid:
        return WeightGrid.from_range(self.grid_lo, self.grid_hi, self.grid_step)

    @property
    def grid(self) -> GridConfig:
        return GridConfig(self.action_bound, self.kde_nodes)

    @property
    def kde(self) -> KdeConfig:
        return KdeConfig(self.kde_method)

    @property
    def low_truth(self) -> UtilityWeights:
        return SCENARIOS[self.scenario]

    @property
    def high_truth(self) -> UtilityWeights:
        return HIGH_FIDELITY_TRUTH

    def prior(self) -> CrossFidelityPrior:
        if self.prior_mean == "truth":
            low, high = self.low_truth, self.high_truth
        else:
            values = [float(v) for v in self.prior_mean.split(",")]
            if len(values) != 4:
                raise ValueError("prior_mean must be 'truth' or four comma-separated weights")
            low, high = UtilityWeights(*values[:2]), UtilityWeights(*values[2:])
        return CrossFidelityPrior.coupled(low, high, self.prior_variance, self.prior_covariance)


# -- config files ------------------------------------------------------------

def _convert(name: str, text: str, default):
    text = text.strip()
    if name in ("hifi", "methods"):
        items = [t.strip() for t in text.split(",") if t.strip()]
        return tuple(int(t) for t in items) if name == "hifi" else tuple(items)
    if name in ("distance_scale", "cache_dir"):
        if text.lower() in ("", "none"):
            return None
        return float(text) if name == "distance_scale" else text
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_overrides(pairs, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``key=value`` strings (or a dict) on top of ``base``."""
    base = base or ExperimentConfig()
    defaults = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    items = pairs.items() if isinstance(pairs, dict) else (p.split("=", 1) for p in pairs)
    changes = {}
    for key, value in items:
        key = key.strip().replace("-", "_")
        if key not in defaults:
            raise ValueError(f"unknown configuration key {key!r}")
        changes[key] = value if not isinstance(value, str) else _convert(key, value, defaults[key])
    return dataclasses.replace(base, **changes)


def load_config(path, overrides=None) -> ExperimentConfig:
    """Read a flat ``key = value`` file (``#`` comments) and apply ``overrides`` last."""
    pairs = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    try:
        config = parse_overrides(pairs)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    return parse_overrides(overrides or {}, config)


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


# -- seeds and shared inputs --------------------------------------------------

def novel_seeds(master: int) -> tuple[int, int]:
    return derive_seed(master, 0, 0), derive_seed(master, 0, 1)


def replicate_seeds(master: int, replicate: int) -> dict[str, int]:
    return {role: derive_seed(master, 1, replicate, k) for role, k in _ROLES.items()}


def density_families(config: ExperimentConfig) -> dict[Fidelity, DensityFamily]:
    """Low- and high-fidelity families over one novel encounter set (cached if ``cache_dir`` is set)."""
    enc_seed, dec_seed = novel_seeds(config.seed)
    novel = sample_encounters(config.n_novel, NOVEL_BEARINGS, config.geometry, enc_seed)
    extra = f"novel:{enc_seed}:{config.n_novel}:{config.geometry}"
    return {fid: cached_family(config.cache_dir, config.weight_grid, novel, fid, config.decision,
                               dec_seed, config.grid, config.kde, extra)
            for fid in (Fidelity.LOW, Fidelity.HIGH)}


def replicate_datasets(config: ExperimentConfig, replicate: int) -> tuple[Dataset, Dataset, Dataset]:
    """Low-fidelity training set, high-fidelity training pool, and high-fidelity test set."""
    seeds = replicate_seeds(config.seed, replicate)
    geo, dec = config.geometry, config.decision
    lofi = generate_dataset(config.lofi, Fidelity.LOW, config.low_truth, TRAIN_BEARINGS, geo, dec,
                            seeds["lofi"])
    hifi = generate_dataset(max(config.hifi), Fidelity.HIGH, config.high_truth, TRAIN_BEARINGS, geo,
                            dec, seeds["hifi"])
    test = generate_dataset(config.n_test, Fidelity.HIGH, config.high_truth, TEST_BEARINGS, geo, dec,
                            seeds["test"])
    return lofi, hifi, test


def predict_method(method: str, lofi: Dataset, hifi: Dataset, test_states,
                   families: dict, config: ExperimentConfig, table: PredictionTable,
                   diagnostics: dict | None = None) -> np.ndarray:
    fam_low, fam_high = families[Fidelity.LOW], families[Fidelity.HIGH]
    if method == "mf-hifi":
        return predict_hifi_only(hifi, test_states)
    if method == "mf-multi":
        return predict_multifidelity(lofi, hifi, test_states)
    if method == "mb-map-hifi":
        return predict_map(test_states, map_estimate_hifi(hifi, fam_high), table=table)
    if method == "mb-map-multi":
        w = map_estimate_multifidelity(lofi, hifi, fam_low, fam_high)
        return predict_map(test_states, w, table=table)
    if method == "mb-bayes":
        posterior = bayes_posterior(lofi, hifi, fam_low, fam_high, config.prior())
        return predict_bayes(test_states, posterior, cutoff=config.bayes_cutoff, table=table,
                             diagnostics=diagnostics)
    raise ValueError(f"unknown method {method!r}")


def run_replicate(config: ExperimentConfig, families: dict, replicate: int) -> list[EfficiencyResult]:
    seeds = replicate_seeds(config.seed, replicate)
    lofi, hifi_pool, test = replicate_datasets(config, replicate)
    bound = lower_bound(test.states, test.actions, config.high_truth, config.decision,
                        seeds["bound"], config.n_samples)
    table = PredictionTable(test.states, config.n_samples, Fidelity.HIGH, config.decision,
                            seeds["predict"])
    results = []
    for n_hifi in config.hifi:
        hifi = hifi_pool.head(n_hifi)
        for method in config.methods:
            try:
                predicted = predict_method(method, lofi, hifi, test.states, families, config, table)
                err = test_error(predicted, test.actions)
                eff = predictive_efficiency(err, bound)
            except Exception:
                log.exception("cell failed: method=%s hifi=%d replicate=%d", method, n_hifi, replicate)
                err, eff = math.nan, math.nan
            results.append(EfficiencyResult(method, n_hifi, config.lofi, config.scenario,
                                            replicate, err, bound, eff))
    return results


def _replicate_job(args):
    config, families, replicate = args
    return run_replicate(config, families, replicate)


def summarise(results: list[EfficiencyResult], config: ExperimentConfig) -> dict[str, list[tuple]]:
    """Per method, rows of ``(samples, mean efficiency, standard error)``."""
    table = {}
    for method in config.methods:
        rows = []
        for n_hifi in config.hifi:
            values = [r.efficiency for r in results
                      if r.method == method and r.hifi_samples == n_hifi
                      and r.efficiency != EXACT and not math.isnan(r.efficiency)]
            if not values:
                rows.append((n_hifi, math.nan, math.nan))
                continue
            arr = np.array(values)
            se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else math.nan
            rows.append((n_hifi, float(arr.mean()), se))
        table[method] = rows
    return table


def write_outputs(out_dir, results, summary, config: ExperimentConfig) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for method, rows in summary.items():
        lines = ["samples,score,stderr"] + [f"{n},{score!r},{se!r}" for n, score, se in rows]
        (out / f"{method}.csv").write_text("\n".join(lines) + "\n")
    cells = ["method,scenario,lofi,hifi,replicate,error,lower_bound,efficiency"]
    for r in results:
        cells.append(f"{r.method},{r.scenario},{r.lofi_samples},{r.hifi_samples},{r.replicate},"
                     f"{r.error!r},{r.lower_bound!r},{r.efficiency!r}")
    (out / "cells.csv").write_text("\n".join(cells) + "\n")
    (out / "config.txt").write_text(dump_config(config))


def run_experiment(config: ExperimentConfig, out_dir=None, families: dict | None = None):
    """Run every (method, high-fidelity count, replicate) cell and write one CSV per method.

    Returns ``(summary, results)``.
    """
    families = families or density_families(config)
    jobs = [(config, families, r) for r in range(config.replicates)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_rep = list(pool.map(_replicate_job, jobs))
    else:
        per_rep = [_replicate_job(job) for job in jobs]
    results = [r for rep in per_rep for r in rep]
    summary = summarise(results, config)
    if out_dir is not None:
        write_outputs(out_dir, results, summary, config)
    return summary, results
