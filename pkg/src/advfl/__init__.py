"""Federated optimization under adversarial client unavailability.

Simulator for amplified FedAvg / FedProx with budgeted adversarial dropout,
robust-aggregation baselines, lower-bound instance pairs and numerical
checks of the supporting inequalities.
"""

from .adversary import DropoutBudget, ShadowCandidates, ShadowConfig
from .datagen import FederationInstance, LowerBoundPair, lower_bound_pair, quadratic_family, synthetic_ab
from .engine import AdversaryConfig, RunConfig, RunResult, Schedule, run
from .objectives import HeterogeneityProfile
from .verify import minimax_gap

__version__ = "0.1.0"

__all__ = [
    "AdversaryConfig",
    "DropoutBudget",
    "FederationInstance",
    "HeterogeneityProfile",
    "LowerBoundPair",
    "RunConfig",
    "RunResult",
    "Schedule",
    "ShadowCandidates",
    "ShadowConfig",
    "lower_bound_pair",
    "minimax_gap",
    "quadratic_family",
    "run",
    "synthetic_ab",
]
