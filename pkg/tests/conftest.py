import numpy as np
import pytest

from pilotfusion.density import WeightGrid, build_density_family
from pilotfusion.experiment import ExperimentConfig
from pilotfusion.perception import Fidelity
from pilotfusion.pilot import DecisionConfig
from pilotfusion.scenario import NOVEL_BEARINGS, GeometryConfig, sample_encounters

# A cheap configuration shared by integration tests: coarse weight grid, few novel encounters.
SMALL = dict(n_novel=200, grid_lo=0.86, grid_hi=0.92, replicates=2, hifi=(5, 10), lofi=100,
             n_test=20, m=40, m_prime=20)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_config():
    return ExperimentConfig(**SMALL)


@pytest.fixture(scope="session")
def small_decision():
    return DecisionConfig(m=40, m_prime=20)


@pytest.fixture(scope="session")
def small_families(small_decision):
    grid = WeightGrid([0.80, 0.90, 0.98])
    novel = sample_encounters(300, NOVEL_BEARINGS, GeometryConfig(), seed=7)
    return {fid: build_density_family(grid, novel, fid, small_decision, seed=8)
            for fid in (Fidelity.LOW, Fidelity.HIGH)}
