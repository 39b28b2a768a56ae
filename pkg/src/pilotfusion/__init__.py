"""Two-pilot collision-avoidance game at two simulator fidelities, with
model-free and model-based predictors of the pilots' joint decisions.

Typical use::

    from pilotfusion import ExperimentConfig, run_experiment
    summary, results = run_experiment(ExperimentConfig(replicates=2, hifi=(5, 10)))
"""

from .experiment import ExperimentConfig, run_experiment
from .perception import Fidelity
from .pilot import DecisionConfig, UtilityWeights
from .scenario import Dataset, generate_dataset, load_dataset, save_dataset

__all__ = [
    "DecisionConfig",
    "Dataset",
    "ExperimentConfig",
    "Fidelity",
    "UtilityWeights",
    "generate_dataset",
    "load_dataset",
    "run_experiment",
    "save_dataset",
]

__version__ = "0.1.0"
