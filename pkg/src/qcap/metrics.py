"""Achieved rates and reference capacities, all in bits."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import optimize

from .channels import ChannelKind, ChannelSpec
from .circuit import KrausChannel, apply_channel
from .qmath import (
    PreconditionError,
    n_qubits_of,
    partial_trace,
    projector,
    von_neumann_entropy,
)
from .tasks import Model, Setting, conditional_distribution

HOLEVO_GRID_POINTS = 41
SCAN_POINTS = 401


class ReferenceKind(str, Enum):
    CLOSED_FORM = "closed_form"
    NUMERICAL_ORACLE = "numerical_oracle"
    NONE = "none"


@dataclass(frozen=True)
class RateRecord:
    setting: Setting
    channel: ChannelSpec
    learned_rate: float
    reference_rate: float | None = None
    reference_kind: ReferenceKind = ReferenceKind.NONE


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise PreconditionError(f"p={p} is outside [0, 1]")
    if p in (0.0, 1.0):
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def shannon_entropy(dist) -> np.ndarray:
    """Entropy in bits along the last axis; zero-probability terms contribute 0."""
    dist = np.clip(np.asarray(dist, dtype=float), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(dist > 0, -dist * np.log2(np.where(dist > 0, dist, 1.0)), 0.0)
    return terms.sum(axis=-1)


def mutual_information(cond, prior=None) -> float:
    """``I(S; S_hat) = H(S_hat) - sum_s prior(s) H(S_hat | S = s)`` for a channel matrix."""
    cond = np.asarray(cond, dtype=float)
    if cond.ndim != 2:
        raise PreconditionError("cond must be a messages x outcomes matrix")
    if np.min(cond) < -1e-9 or np.max(np.abs(cond.sum(axis=1) - 1.0)) > 1e-9:
        raise PreconditionError("rows of cond are not probability vectors")
    if prior is None:
        prior = np.full(cond.shape[0], 1.0 / cond.shape[0])
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (cond.shape[0],) or abs(prior.sum() - 1.0) > 1e-9 or np.min(prior) < 0:
        raise PreconditionError("prior must be a distribution over the rows of cond")
    cond = np.clip(cond, 0.0, None)
    output = prior @ cond
    return float(max(shannon_entropy(output) - prior @ shannon_entropy(cond), 0.0))


def coherent_information(rho_ab: np.ndarray, b_wires: Sequence[int]):
    """``S(B) - S(AB)``; may be negative. Accepts a leading batch axis."""
    n = n_qubits_of(np.asarray(rho_ab))
    b_wires = list(b_wires)
    if not b_wires or len(set(b_wires)) != len(b_wires) or len(b_wires) >= n:
        raise PreconditionError(f"{b_wires} is not a proper nonempty subset of {n} qubits")
    if any(w < 0 or w >= n for w in b_wires):
        raise PreconditionError(f"{b_wires} has a wire outside 0..{n - 1}")
    return von_neumann_entropy(partial_trace(rho_ab, b_wires)) - von_neumann_entropy(rho_ab)


def quantum_mutual_information(rho_ab: np.ndarray, a_wires: Sequence[int], b_wires: Sequence[int]) -> float:
    return float(
        von_neumann_entropy(partial_trace(rho_ab, a_wires))
        + von_neumann_entropy(partial_trace(rho_ab, b_wires))
        - von_neumann_entropy(rho_ab)
    )


def regularized_rate(total_bits: float, channel_uses: int) -> float:
    if channel_uses < 1:
        raise PreconditionError("channel_uses must be >= 1")
    return total_bits / channel_uses


def evaluate(model: Model, params: np.ndarray) -> float:
    """Achieved rate: mutual information under a uniform prior, or regularized coherent information."""
    if model.spec.setting is Setting.QUANTUM:
        rho = model.output_states(params)[0]
        ci = coherent_information(rho, model.transmitted_wires)
        return regularized_rate(float(ci), len(model.transmitted_wires))
    return mutual_information(conditional_distribution(model, params))


def _schmidt_input(tau: float) -> np.ndarray:
    psi = np.zeros(4, dtype=complex)
    psi[0] = np.sqrt(1.0 - tau)
    psi[3] = np.sqrt(tau)
    return projector(psi)


def holevo_z_ensemble(ch: KrausChannel) -> float:
    """Holevo quantity maximised over ensembles of ``|0>`` and ``|1>``.

    A 41-point grid over the prior is refined by golden-section search.
    This is a lower bound on the classical capacity.
    """
    out0 = apply_channel(projector([1, 0]), ch, 0)
    out1 = apply_channel(projector([0, 1]), ch, 0)
    s0 = von_neumann_entropy(out0)
    s1 = von_neumann_entropy(out1)

    def chi(q: float) -> float:
        q = min(max(q, 0.0), 1.0)
        return von_neumann_entropy(q * out0 + (1 - q) * out1) - q * s0 - (1 - q) * s1

    grid = np.linspace(0.0, 1.0, HOLEVO_GRID_POINTS)
    values = np.array([chi(q) for q in grid])
    i = int(np.argmax(values))
    if 0 < i < len(grid) - 1 and values[i] > max(values[i - 1], values[i + 1]):
        q_best = optimize.golden(lambda q: -chi(q), brack=(grid[i - 1], grid[i], grid[i + 1]), tol=1e-10)
        return float(max(chi(q_best), values[i]))
    return float(values[i])


def _scan_tau(objective) -> float:
    taus = np.linspace(0.0, 1.0, SCAN_POINTS)
    return float(max(objective(t) for t in taus))


def ea_mutual_information_scan(ch: KrausChannel) -> float:
    """``max_tau I(A;B)`` over inputs ``sqrt(1-tau)|00> + sqrt(tau)|11>`` with the channel on B."""

    def qmi(tau: float) -> float:
        return quantum_mutual_information(apply_channel(_schmidt_input(tau), ch, 1), [0], [1])

    return _scan_tau(qmi)


def coherent_information_scan(ch: KrausChannel) -> float:
    """``max_tau I(A>B)`` over the same Schmidt family; a quantum-capacity lower bound."""

    def ci(tau: float) -> float:
        return float(coherent_information(apply_channel(_schmidt_input(tau), ch, 1), [1]))

    return _scan_tau(ci)


def reference_capacity(setting: Setting | str, channel: ChannelSpec) -> tuple[float | None, ReferenceKind]:
    """Closed-form or numerically estimated capacity to compare a learned rate with."""
    setting = Setting(setting)
    kind = channel.kind
    p = channel.p
    pauli = np.array([1 - p, p / 3, p / 3, p / 3])
    closed = ReferenceKind.CLOSED_FORM
    numeric = ReferenceKind.NUMERICAL_ORACLE

    if setting is Setting.CLASSICAL:
        if kind in (ChannelKind.BIT_FLIP, ChannelKind.PHASE_FLIP):
            return 1.0, closed
        if kind is ChannelKind.DEPOLARIZING:
            return 1.0 - binary_entropy(2 * p / 3), closed
        return holevo_z_ensemble(channel.build()), numeric
    if setting is Setting.EA_CLASSICAL:
        if kind in (ChannelKind.BIT_FLIP, ChannelKind.PHASE_FLIP):
            return 2.0 - binary_entropy(p), closed
        if kind is ChannelKind.DEPOLARIZING:
            return float(2.0 - shannon_entropy(pauli)), closed
        return ea_mutual_information_scan(channel.build()), numeric
    if kind in (ChannelKind.BIT_FLIP, ChannelKind.PHASE_FLIP):
        return 1.0 - binary_entropy(p), closed
    if kind is ChannelKind.DEPOLARIZING:
        return float(max(1.0 - shannon_entropy(pauli), 0.0)), closed
    if kind is ChannelKind.AMPLITUDE_DAMPING:
        return coherent_information_scan(channel.build()), numeric
    return None, ReferenceKind.NONE
