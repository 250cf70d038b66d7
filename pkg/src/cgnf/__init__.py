"""Causal graphical normalizing flows for interventional and counterfactual inference."""
from .causal import (CounterfactualResult, InterventionSpec, counterfactual, estimate_ate,
                     potential_outcome_surface, sample_interventional)
from .dag import CausalDAG, NodeSpec, two_wave_dag
from .flow import FlowModel, TrainConfig, fit, log_likelihood

__all__ = [
    "CausalDAG", "NodeSpec", "two_wave_dag",
    "FlowModel", "TrainConfig", "fit", "log_likelihood",
    "InterventionSpec", "CounterfactualResult", "sample_interventional", "estimate_ate",
    "counterfactual", "potential_outcome_surface",
]
__version__ = "0.1.0"
