"""Kraus constructors for the four qubit noise families and a CPTP check."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .circuit import PAULI_X, PAULI_Y, PAULI_Z, KrausChannel
from .qmath import PreconditionError

_I2 = np.eye(2, dtype=complex)


class ChannelKind(str, Enum):
    BIT_FLIP = "bit_flip"
    PHASE_FLIP = "phase_flip"
    DEPOLARIZING = "depolarizing"
    AMPLITUDE_DAMPING = "amplitude_damping"


def _check_prob(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise PreconditionError(f"{name}={value} is outside [0, 1]")
    return value


def bit_flip(p: float) -> KrausChannel:
    p = _check_prob("p", p)
    return KrausChannel((np.sqrt(1 - p) * _I2, np.sqrt(p) * PAULI_X), "bit_flip", {"p": p})


def phase_flip(p: float) -> KrausChannel:
    p = _check_prob("p", p)
    return KrausChannel((np.sqrt(1 - p) * _I2, np.sqrt(p) * PAULI_Z), "phase_flip", {"p": p})


def depolarizing(p: float) -> KrausChannel:
    """Identity with weight ``1 - p``; each of Z, X, Y with weight ``p / 3``."""
    p = _check_prob("p", p)
    w = np.sqrt(p / 3)
    return KrausChannel(
        (np.sqrt(1 - p) * _I2, w * PAULI_Z, w * PAULI_X, w * PAULI_Y), "depolarizing", {"p": p}
    )


def amplitude_damping(p: float, gamma: float) -> KrausChannel:
    """Generalized amplitude damping.

    With weight ``1 - p`` the qubit decays ``|1> -> |0>``, with weight ``p``
    it decays ``|0> -> |1>``; ``gamma`` is the decay probability. ``p = 0``
    is ordinary amplitude damping.
    """
    p = _check_prob("p", p)
    gamma = _check_prob("gamma", gamma)
    k0 = np.sqrt(1 - p) * np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma * (1 - p))], [0, 0]], dtype=complex)
    k2 = np.sqrt(p) * np.array([[np.sqrt(1 - gamma), 0], [0, 1]], dtype=complex)
    k3 = np.array([[0, 0], [np.sqrt(gamma * p), 0]], dtype=complex)
    return KrausChannel((k0, k1, k2, k3), "amplitude_damping", {"p": p, "gamma": gamma})


@dataclass(frozen=True)
class ChannelSpec:
    kind: ChannelKind
    p: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        _check_prob("p", self.p)
        _check_prob("gamma", self.gamma)

    def build(self) -> KrausChannel:
        if self.kind is ChannelKind.AMPLITUDE_DAMPING:
            return amplitude_damping(self.p, self.gamma)
        return {
            ChannelKind.BIT_FLIP: bit_flip,
            ChannelKind.PHASE_FLIP: phase_flip,
            ChannelKind.DEPOLARIZING: depolarizing,
        }[self.kind](self.p)

    def with_value(self, parameter: str, value: float) -> "ChannelSpec":
        if parameter == "p":
            return ChannelSpec(self.kind, value, self.gamma)
        if parameter == "gamma":
            return ChannelSpec(self.kind, self.p, value)
        raise ValueError(f"unknown channel parameter {parameter!r}")


@dataclass(frozen=True)
class CPTPResult:
    passed: bool
    residual: float

    def __bool__(self) -> bool:
        return self.passed


def validate_cptp(ch: KrausChannel, tol: float = 1e-12) -> CPTPResult:
    """Completeness check: residual is the max-abs entry of ``sum K^dagger K - I``."""
    return CPTPResult(ch.completeness_residual <= tol, ch.completeness_residual)
