"""Synthetic testbed for group fairness in retrieve-then-rank recommenders."""
from .experiment import ExperimentConfig, default_world_config, report, run_experiment
from .metrics import decompose_gap, der, shared_space, theorem1_bound, theorem2_check
from .pipeline import RetrievalPolicy, run_batch, serve
from .worldgen import World, WorldConfig, generate_world

__version__ = "0.1.0"
