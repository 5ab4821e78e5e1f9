"""Variational channel coding over noisy qubit channels.

Trains parameterized encoder/decoder circuits for classical,
entanglement-assisted classical and quantum communication, and compares
the learned rates with capacity references.
"""

from .channels import ChannelKind, ChannelSpec, amplitude_damping, bit_flip, depolarizing, phase_flip, validate_cptp
from .metrics import coherent_information, evaluate, mutual_information, reference_capacity
from .optim import TrainConfig, TrainReport, train, train_best_of
from .tasks import Setting, TaskSpec, build_model, conditional_distribution

__version__ = "0.1.0"

__all__ = [
    "ChannelKind",
    "ChannelSpec",
    "Setting",
    "TaskSpec",
    "TrainConfig",
    "TrainReport",
    "amplitude_damping",
    "bit_flip",
    "build_model",
    "coherent_information",
    "conditional_distribution",
    "depolarizing",
    "evaluate",
    "mutual_information",
    "phase_flip",
    "reference_capacity",
    "train",
    "train_best_of",
    "validate_cptp",
]
