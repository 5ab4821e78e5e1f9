"""Parameterized circuits acting on density matrices.

Every evaluation routine accepts either one parameter vector of shape
``(P,)`` or a stack of them, ``(B, P)``; the state then carries the same
leading batch axis. Gradients use the stacked form to evaluate all shifted
parameter vectors in one pass.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .qmath import PreconditionError, n_qubits_of

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


class GateKind(str, Enum):
    ROT3 = "Rot3"
    PAULI_X = "PauliX"
    PAULI_Y = "PauliY"
    PAULI_Z = "PauliZ"
    HADAMARD = "Hadamard"
    CNOT = "CNOT"
    CONTROLLED_ROT3 = "ControlledRot3"

    @property
    def n_wires(self) -> int:
        return 2 if self in (GateKind.CNOT, GateKind.CONTROLLED_ROT3) else 1

    @property
    def n_params(self) -> int:
        return 3 if self in (GateKind.ROT3, GateKind.CONTROLLED_ROT3) else 0


_FIXED = {
    GateKind.PAULI_X: PAULI_X,
    GateKind.PAULI_Y: PAULI_Y,
    GateKind.PAULI_Z: PAULI_Z,
    GateKind.HADAMARD: HADAMARD,
    GateKind.CNOT: CNOT,
}


@dataclass(frozen=True)
class Gate:
    """One gate. For controlled kinds ``wires = (control, target)``."""

    kind: GateKind
    wires: tuple[int, ...]
    param_slots: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))
        object.__setattr__(self, "param_slots", tuple(int(s) for s in self.param_slots))
        if len(self.wires) != self.kind.n_wires:
            raise PreconditionError(f"{self.kind.value} needs {self.kind.n_wires} wires, got {self.wires}")
        if len(set(self.wires)) != len(self.wires):
            raise PreconditionError(f"wires must be distinct, got {self.wires}")
        if len(self.param_slots) != self.kind.n_params:
            raise PreconditionError(
                f"{self.kind.value} takes {self.kind.n_params} parameters, got {len(self.param_slots)}"
            )

    def shifted(self, offset: int) -> "Gate":
        """Copy with wire indices moved by ``offset``."""
        return Gate(self.kind, tuple(w + offset for w in self.wires), self.param_slots)

    def remapped(self, wire_map: Sequence[int], slot_offset: int = 0) -> "Gate":
        return Gate(
            self.kind,
            tuple(wire_map[w] for w in self.wires),
            tuple(s + slot_offset for s in self.param_slots),
        )


@dataclass(frozen=True)
class ParameterizedCircuit:
    n_qubits: int
    gates: tuple[Gate, ...]
    n_params: int

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        seen: set[int] = set()
        for g in self.gates:
            if any(w < 0 or w >= self.n_qubits for w in g.wires):
                raise PreconditionError(f"gate {g} has a wire outside 0..{self.n_qubits - 1}")
            for s in g.param_slots:
                if s < 0 or s >= self.n_params:
                    raise PreconditionError(f"parameter slot {s} outside 0..{self.n_params - 1}")
                if s in seen:
                    raise PreconditionError(f"parameter slot {s} is used by more than one gate")
                seen.add(s)

    def controlled_slots(self) -> np.ndarray:
        """Boolean mask of parameters that drive a controlled rotation."""
        mask = np.zeros(self.n_params, dtype=bool)
        for g in self.gates:
            if g.kind is GateKind.CONTROLLED_ROT3:
                mask[list(g.param_slots)] = True
        return mask


@dataclass(frozen=True)
class KrausChannel:
    """Single-qubit CPTP map given by its Kraus operators."""

    kraus_ops: tuple[np.ndarray, ...]
    label: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.kraus_ops)
        if not ops or any(k.shape != (2, 2) for k in ops):
            raise PreconditionError("Kraus operators must be a nonempty list of 2x2 matrices")
        object.__setattr__(self, "kraus_ops", ops)

    @functools.cached_property
    def completeness_residual(self) -> float:
        total = sum(k.conj().T @ k for k in self.kraus_ops)
        return float(np.max(np.abs(total - np.eye(2))))

    @functools.cached_property
    def superoperator(self) -> np.ndarray:
        """``S[a, b, c, d] = sum_k K[a, c] conj(K[b, d])``."""
        return sum(np.einsum("ac,bd->abcd", k, k.conj()) for k in self.kraus_ops)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return apply_channel(rho, self, 0)


def rot3_matrix(alpha, beta, gamma) -> np.ndarray:
    """``RZ(gamma) @ RY(beta) @ RZ(alpha)``; broadcasts over array arguments."""
    alpha, beta, gamma = np.broadcast_arrays(
        np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float), np.asarray(gamma, dtype=float)
    )
    c = np.cos(beta / 2)
    s = np.sin(beta / 2)
    plus = np.exp(-0.5j * (alpha + gamma))
    minus = np.exp(0.5j * (alpha - gamma))
    out = np.empty(alpha.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = plus * c
    out[..., 0, 1] = -minus * s
    out[..., 1, 0] = np.conj(minus) * s
    out[..., 1, 1] = np.conj(plus) * c
    return out


def gate_matrix(gate: Gate, params: np.ndarray | None = None) -> np.ndarray:
    """Matrix of ``gate`` on its own wires; batched if ``params`` is 2-D."""
    if gate.kind in _FIXED:
        return _FIXED[gate.kind]
    params = np.asarray(params, dtype=float)
    angles = params[..., list(gate.param_slots)]
    r = rot3_matrix(angles[..., 0], angles[..., 1], angles[..., 2])
    if gate.kind is GateKind.ROT3:
        return r
    out = np.zeros(r.shape[:-2] + (4, 4), dtype=complex)
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 2:, 2:] = r
    return out


@functools.lru_cache(maxsize=None)
def _unitary_specs(n: int, wires: tuple[int, ...], batched_op: bool) -> tuple[str, str]:
    letters = iter(_LETTERS)
    b = next(letters)
    row = [next(letters) for _ in range(n)]
    col = [next(letters) for _ in range(n)]
    new = [next(letters) for _ in wires]
    state = b + "".join(row) + "".join(col)
    op_b = b if batched_op else ""
    old_rows = "".join(row[w] for w in wires)
    old_cols = "".join(col[w] for w in wires)
    new_rows = list(row)
    new_cols = list(col)
    for w, x in zip(wires, new):
        new_rows[w] = x
        new_cols[w] = x
    left = f"{op_b}{''.join(new)}{old_rows},{state}->{b}{''.join(new_rows)}{''.join(col)}"
    right = f"{op_b}{''.join(new)}{old_cols},{b}{''.join(row)}{''.join(col)}->{b}{''.join(row)}{''.join(new_cols)}"
    return left, right


def _as_batch(rho: np.ndarray) -> tuple[np.ndarray, bool]:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 2:
        return rho[None], True
    return rho, False


def _apply_matrix(rho: np.ndarray, u: np.ndarray, wires: Sequence[int], n: int) -> np.ndarray:
    """``U rho U^dagger`` with ``U`` acting on ``wires``; ``rho`` is batched."""
    k = len(wires)
    batched_op = u.ndim == 3
    if batched_op and u.shape[0] != rho.shape[0]:
        rho = np.broadcast_to(rho, (u.shape[0],) + rho.shape[1:])
    bsz = rho.shape[0]
    left, right = _unitary_specs(n, tuple(wires), batched_op)
    ut = u.reshape(u.shape[:-2] + (2,) * (2 * k))
    t = rho.reshape((bsz,) + (2,) * (2 * n))
    t = np.einsum(left, ut, t)
    t = np.einsum(right, ut.conj(), t)
    d = 1 << n
    return t.reshape(bsz, d, d)


def _check_wires(wires: Iterable[int], n: int) -> None:
    for w in wires:
        if w < 0 or w >= n:
            raise PreconditionError(f"wire {w} out of range for {n} qubits")


def apply_unitary_gate(rho: np.ndarray, gate: Gate, params: np.ndarray | None = None) -> np.ndarray:
    rho_b, single = _as_batch(rho)
    n = n_qubits_of(rho_b)
    _check_wires(gate.wires, n)
    u = gate_matrix(gate, params)
    out = _apply_matrix(rho_b, u, gate.wires, n)
    return out[0] if single and out.shape[0] == 1 else out


@functools.lru_cache(maxsize=None)
def _channel_spec(n: int, wire: int) -> str:
    letters = iter(_LETTERS)
    b = next(letters)
    row = [next(letters) for _ in range(n)]
    col = [next(letters) for _ in range(n)]
    a, c = next(letters), next(letters)
    new_row = list(row)
    new_col = list(col)
    new_row[wire] = a
    new_col[wire] = c
    return (
        f"{a}{c}{row[wire]}{col[wire]},{b}{''.join(row)}{''.join(col)}"
        f"->{b}{''.join(new_row)}{''.join(new_col)}"
    )


def apply_channel(rho: np.ndarray, ch: KrausChannel, wire: int) -> np.ndarray:
    """``sum_i K_i rho K_i^dagger`` with each Kraus operator embedded at ``wire``."""
    if ch.completeness_residual > 1e-12:
        raise PreconditionError(
            f"channel {ch.label} fails completeness (residual {ch.completeness_residual:.3g})"
        )
    rho_b, single = _as_batch(rho)
    n = n_qubits_of(rho_b)
    _check_wires([wire], n)
    bsz = rho_b.shape[0]
    t = rho_b.reshape((bsz,) + (2,) * (2 * n))
    t = np.einsum(_channel_spec(n, wire), ch.superoperator, t)
    d = 1 << n
    out = t.reshape(bsz, d, d)
    return out[0] if single else out


NoiseInsertion = tuple[int, KrausChannel, int]


def run_circuit(
    rho0: np.ndarray,
    circ: ParameterizedCircuit,
    params: np.ndarray,
    noise_insertions: Sequence[NoiseInsertion] = (),
) -> np.ndarray:
    """Exact density-matrix evolution through ``circ``.

    A noise insertion ``(position, channel, wire)`` is applied just before
    gate number ``position``; ``position == len(circ.gates)`` means after the
    last gate. Insertions sharing a position run in list order.
    """
    params = np.asarray(params, dtype=float)
    if params.shape[-1] != circ.n_params:
        raise PreconditionError(f"expected {circ.n_params} parameters, got {params.shape[-1]}")
    rho, single = _as_batch(rho0)
    n = n_qubits_of(rho)
    if n != circ.n_qubits:
        raise PreconditionError(f"state has {n} qubits but circuit has {circ.n_qubits}")
    if params.ndim == 2 and rho.shape[0] == 1:
        single = False
    by_position: dict[int, list[tuple[KrausChannel, int]]] = {}
    for pos, ch, wire in noise_insertions:
        if pos < 0 or pos > len(circ.gates):
            raise PreconditionError(f"noise position {pos} outside 0..{len(circ.gates)}")
        _check_wires([wire], n)
        by_position.setdefault(pos, []).append((ch, wire))

    for i, gate in enumerate(circ.gates):
        for ch, wire in by_position.get(i, ()):
            rho = apply_channel(rho, ch, wire)
        rho = _apply_matrix(rho, gate_matrix(gate, params), gate.wires, n)
    for ch, wire in by_position.get(len(circ.gates), ()):
        rho = apply_channel(rho, ch, wire)
    return rho[0] if single else rho


def measurement_probabilities(rho: np.ndarray, wires: Sequence[int]) -> np.ndarray:
    """Computational-basis outcome distribution on ``wires`` (first wire most significant)."""
    rho_b, single = _as_batch(rho)
    n = n_qubits_of(rho_b)
    wires = [int(w) for w in wires]
    _check_wires(wires, n)
    if len(set(wires)) != len(wires):
        raise PreconditionError(f"wires must be distinct, got {wires}")
    bsz = rho_b.shape[0]
    diag = np.real(np.diagonal(rho_b, axis1=-2, axis2=-1)).reshape((bsz,) + (2,) * n)
    others = tuple(1 + q for q in range(n) if q not in wires)
    marg = diag.sum(axis=others) if others else diag
    # remaining axes are in ascending wire order; reorder to the requested order
    kept_sorted = sorted(wires)
    perm = [0] + [1 + kept_sorted.index(w) for w in wires]
    probs = np.transpose(marg, perm).reshape(bsz, 1 << len(wires))
    probs = np.where(probs < 0.0, 0.0, probs)
    return probs[0] if single else probs


def basis_embed(bits: str, width: int) -> np.ndarray:
    """Pure computational-basis state ``|bits 0...0><bits 0...0|``."""
    if len(bits) > width:
        raise PreconditionError(f"{len(bits)} bits do not fit in {width} wires")
    if any(b not in "01" for b in bits):
        raise PreconditionError(f"not a bit string: {bits!r}")
    d = 1 << width
    rho = np.zeros((d, d), dtype=complex)
    idx = int(bits.ljust(width, "0"), 2)
    rho[idx, idx] = 1.0
    return rho


def layered_ansatz(n_qubits: int, n_layers: int) -> ParameterizedCircuit:
    """Hardware-efficient ansatz: per layer a Rot3 on every wire, then a CNOT ring."""
    if n_qubits < 1 or n_layers < 1:
        raise PreconditionError("layered_ansatz needs n_qubits >= 1 and n_layers >= 1")
    gates: list[Gate] = []
    slot = 0
    for _ in range(n_layers):
        for q in range(n_qubits):
            gates.append(Gate(GateKind.ROT3, (q,), (slot, slot + 1, slot + 2)))
            slot += 3
        if n_qubits > 1:
            for q in range(n_qubits):
                gates.append(Gate(GateKind.CNOT, (q, (q + 1) % n_qubits)))
    return ParameterizedCircuit(n_qubits, tuple(gates), slot)
