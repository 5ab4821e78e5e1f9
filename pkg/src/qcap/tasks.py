"""Communication models: classical, entanglement-assisted classical, quantum.

A :class:`Model` is a list of :class:`Program` objects, one per message for
the classical settings and a single one for the quantum setting. All
programs read from one flat parameter vector whose named blocks
(``theta``, ``phi``, ``lambda``, ``pi``) are given by ``Model.layout``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channels import ChannelSpec, depolarizing
from .circuit import (
    Gate,
    GateKind,
    KrausChannel,
    NoiseInsertion,
    ParameterizedCircuit,
    basis_embed,
    layered_ansatz,
    measurement_probabilities,
    run_circuit,
)
from .qmath import PreconditionError, projector

PARAM_BLOCKS = ("theta", "phi", "lambda", "pi")


class Setting(str, Enum):
    CLASSICAL = "classical"
    EA_CLASSICAL = "ea_classical"
    QUANTUM = "quantum"


@dataclass(frozen=True)
class TaskSpec:
    setting: Setting
    channel: ChannelSpec
    n_message_bits: int = 1
    n_channel_uses: int = 1
    encoder_layers: int = 3
    decoder_layers: int = 3
    entangler_layers: int = 3
    pooling: bool = False
    ghz_size: int = 2
    idler_noise_p: float = 0.0
    use_encoder: bool = True

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting(self.setting))

    def to_dict(self) -> dict:
        return {
            "setting": self.setting.value,
            "channel": {"kind": self.channel.kind.value, "p": self.channel.p, "gamma": self.channel.gamma},
            "n_message_bits": self.n_message_bits,
            "n_channel_uses": self.n_channel_uses,
            "encoder_layers": self.encoder_layers,
            "decoder_layers": self.decoder_layers,
            "entangler_layers": self.entangler_layers,
            "pooling": self.pooling,
            "ghz_size": self.ghz_size,
            "idler_noise_p": self.idler_noise_p,
            "use_encoder": self.use_encoder,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        d = dict(d)
        d["channel"] = ChannelSpec(**d["channel"])
        return cls(**d)


def task_diagnostics(spec: TaskSpec) -> list[str]:
    """Every invariant violation of ``spec``; empty when the task is usable."""
    out: list[str] = []
    if spec.n_message_bits < 1:
        out.append("n_message_bits must be >= 1")
    for name in ("encoder_layers", "decoder_layers", "entangler_layers"):
        if getattr(spec, name) < 0:
            out.append(f"{name} must be >= 0")
    if not 0.0 <= spec.idler_noise_p <= 1.0:
        out.append(f"idler_noise_p={spec.idler_noise_p} is outside [0, 1]")

    if spec.setting is Setting.CLASSICAL:
        if spec.pooling:
            if spec.n_channel_uses <= 1:
                out.append("pooling requires n_channel_uses > 1")
            if spec.n_message_bits != 1:
                out.append("pooling yields one output bit, so n_message_bits must be 1")
        elif spec.n_channel_uses < spec.n_message_bits:
            out.append("n_channel_uses must be >= n_message_bits when pooling is off")
        if spec.idler_noise_p > 0:
            out.append("idler_noise_p applies only to ea_classical and quantum settings")
    elif spec.setting is Setting.EA_CLASSICAL:
        if spec.n_message_bits % 2:
            out.append("ea_classical needs 2 message bits per entangled pair")
        if spec.entangler_layers < 1:
            out.append("ea_classical needs entangler_layers >= 1")
        if spec.pooling:
            out.append("pooling is only available in the classical setting")
    else:
        if spec.ghz_size < 2:
            out.append("ghz_size must be >= 2")
        if spec.pooling:
            out.append("pooling is only available in the classical setting")
    if spec.n_channel_uses < 1:
        out.append("n_channel_uses must be >= 1")
    return out


def _require(spec: TaskSpec, setting: Setting) -> None:
    if spec.setting is not setting:
        raise PreconditionError(f"expected a {setting.value} spec, got {spec.setting.value}")
    problems = task_diagnostics(spec)
    if problems:
        raise PreconditionError("; ".join(problems))


@dataclass(frozen=True)
class Program:
    """One forward pass: initial state, circuit and where the noise goes."""

    rho0: np.ndarray
    circuit: ParameterizedCircuit
    noise: tuple[NoiseInsertion, ...]


@dataclass
class ModelParameters:
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lambda_: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def as_dict(self) -> dict[str, list[float]]:
        return {
            "theta": [float(x) for x in self.theta],
            "phi": [float(x) for x in self.phi],
            "lambda": [float(x) for x in self.lambda_],
            "pi": [float(x) for x in self.pi],
        }


@dataclass
class Model:
    spec: TaskSpec
    n_qubits: int
    n_params: int
    layout: dict[str, slice]
    programs: list[Program]
    readout_wires: list[int]
    transmitted_wires: list[int]
    reference_ket: np.ndarray | None = None
    message_bits: list[str] = field(default_factory=list)

    @property
    def n_channel_insertions(self) -> int:
        """Channel applications on transmitted wires; idler noise is not counted."""
        return sum(1 for _, _, w in self.programs[0].noise if w in self.transmitted_wires)

    @property
    def controlled_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_params, dtype=bool)
        for prog in self.programs:
            mask |= prog.circuit.controlled_slots()
        return mask

    def split(self, params: np.ndarray) -> ModelParameters:
        params = np.asarray(params, dtype=float)
        blocks = {name: params[sl].copy() for name, sl in self.layout.items()}
        return ModelParameters(
            theta=blocks.get("theta", np.zeros(0)),
            phi=blocks.get("phi", np.zeros(0)),
            lambda_=blocks.get("lambda", np.zeros(0)),
            pi=blocks.get("pi", np.zeros(0)),
        )

    def join(self, mp: ModelParameters) -> np.ndarray:
        flat = np.zeros(self.n_params)
        named = {"theta": mp.theta, "phi": mp.phi, "lambda": mp.lambda_, "pi": mp.pi}
        for name, sl in self.layout.items():
            block = np.asarray(named[name], dtype=float)
            if block.shape != (sl.stop - sl.start,):
                raise PreconditionError(f"{name} has length {block.size}, expected {sl.stop - sl.start}")
            flat[sl] = block
        return flat

    @property
    def reference_state(self) -> np.ndarray | None:
        return None if self.reference_ket is None else projector(self.reference_ket)

    def output_states(self, params: np.ndarray) -> np.ndarray:
        """Final density matrices, shape ``(M, d, d)`` or ``(B, M, d, d)``."""
        params = np.asarray(params, dtype=float)
        batched = params.ndim == 2
        first = self.programs[0]
        shared = all(p.circuit is first.circuit and p.noise is first.noise for p in self.programs)
        if shared:
            m = len(self.programs)
            rho0 = np.stack([p.rho0 for p in self.programs])
            if batched:
                b = params.shape[0]
                rho_in = np.broadcast_to(rho0[None], (b,) + rho0.shape).reshape((b * m,) + rho0.shape[1:])
                out = run_circuit(rho_in, first.circuit, np.repeat(params, m, axis=0), first.noise)
                return out.reshape((b, m) + rho0.shape[1:])
            return run_circuit(rho0, first.circuit, np.broadcast_to(params, (m, params.size)), first.noise)
        outs = [run_circuit(p.rho0, p.circuit, params, p.noise) for p in self.programs]
        return np.stack(outs, axis=1 if batched else 0)


def _message_strings(n_bits: int) -> list[str]:
    return [format(s, f"0{n_bits}b") for s in range(1 << n_bits)]


def build_pooling_layer(n_in: int, kept_wire: int | None = None) -> ParameterizedCircuit:
    """Rot3 on each discarded wire followed by a controlled Rot3 onto the kept wire."""
    if n_in < 2:
        raise PreconditionError("pooling needs at least two input wires")
    kept = n_in - 1 if kept_wire is None else kept_wire
    if not 0 <= kept < n_in:
        raise PreconditionError(f"kept wire {kept} out of range")
    gates: list[Gate] = []
    slot = 0
    for d in range(n_in):
        if d == kept:
            continue
        gates.append(Gate(GateKind.ROT3, (d,), (slot, slot + 1, slot + 2)))
        gates.append(Gate(GateKind.CONTROLLED_ROT3, (d, kept), (slot + 3, slot + 4, slot + 5)))
        slot += 6
    return ParameterizedCircuit(n_in, tuple(gates), slot)


class _Assembler:
    """Accumulates gates and named parameter blocks for one circuit."""

    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits
        self.gates: list[Gate] = []
        self.layout: dict[str, slice] = {}
        self.n_params = 0

    def block(self, name: str, size: int) -> int:
        start = self.n_params
        self.layout[name] = slice(start, start + size)
        self.n_params += size
        return start

    def place(self, sub: ParameterizedCircuit, wires: list[int], slot_offset: int) -> None:
        self.gates.extend(g.remapped(wires, slot_offset) for g in sub.gates)

    def circuit(self, gates: list[Gate] | None = None) -> ParameterizedCircuit:
        return ParameterizedCircuit(self.n_qubits, tuple(self.gates if gates is None else gates), self.n_params)


def _noise_at(position: int, channel: KrausChannel, wires: list[int]) -> list[NoiseInsertion]:
    return [(position, channel, w) for w in wires]


def build_classical_model(spec: TaskSpec) -> Model:
    _require(spec, Setting.CLASSICAL)
    width = spec.n_channel_uses
    wires = list(range(width))
    asm = _Assembler(width)
    if spec.use_encoder and spec.encoder_layers > 0:
        enc = layered_ansatz(width, spec.encoder_layers)
        asm.place(enc, wires, asm.block("theta", enc.n_params))
    position = len(asm.gates)
    if spec.decoder_layers > 0:
        dec = layered_ansatz(width, spec.decoder_layers)
        asm.place(dec, wires, asm.block("phi", dec.n_params))
    if spec.pooling:
        kept = width - 1
        pool = build_pooling_layer(width, kept)
        asm.place(pool, wires, asm.block("pi", pool.n_params))
        readout = [kept]
    else:
        readout = list(range(spec.n_message_bits))
    circ = asm.circuit()
    noise = tuple(_noise_at(position, spec.channel.build(), wires))

    messages = _message_strings(spec.n_message_bits)
    programs = []
    for bits in messages:
        # repetition: the message string is tiled across all transmitted wires
        tiled = (bits * (width // len(bits) + 1))[:width]
        programs.append(Program(basis_embed(tiled, width), circ, noise))
    return Model(spec, width, asm.n_params, asm.layout, programs, readout, wires, None, messages)


def build_ea_model(spec: TaskSpec) -> Model:
    """Entangler, message-selected sender rotations, channel on sender wires, joint decoder.

    Pair ``k`` uses sender wire ``k`` and receiver wire ``n_pairs + k``.
    Message bit ``j`` drives sender wire ``j // 2`` through an always-on Rot3
    and a Rot3 applied only when the bit is 1.
    """
    _require(spec, Setting.EA_CLASSICAL)
    n_pairs = spec.n_message_bits // 2
    n = 2 * n_pairs
    senders = list(range(n_pairs))
    receivers = list(range(n_pairs, n))
    asm = _Assembler(n)

    ent = layered_ansatz(2, spec.entangler_layers)
    lam_start = asm.block("lambda", ent.n_params * n_pairs)
    for k in range(n_pairs):
        asm.place(ent, [senders[k], receivers[k]], lam_start + k * ent.n_params)
    prefix = list(asm.gates)

    theta_start = asm.block("theta", 6 * spec.n_message_bits)
    dec = layered_ansatz(n, spec.decoder_layers) if spec.decoder_layers > 0 else None
    phi_start = asm.block("phi", dec.n_params) if dec is not None else 0
    dec_gates = [g.remapped(list(range(n)), phi_start) for g in dec.gates] if dec is not None else []

    channel = spec.channel.build()
    idler = depolarizing(spec.idler_noise_p) if spec.idler_noise_p > 0 else None
    messages = _message_strings(spec.n_message_bits)
    programs = []
    for bits in messages:
        gates = list(prefix)
        for j, b in enumerate(bits):
            wire = senders[j // 2]
            base = theta_start + 6 * j
            gates.append(Gate(GateKind.ROT3, (wire,), (base, base + 1, base + 2)))
            if b == "1":
                gates.append(Gate(GateKind.ROT3, (wire,), (base + 3, base + 4, base + 5)))
        position = len(gates)
        noise = _noise_at(position, channel, senders)
        if idler is not None:
            noise += _noise_at(position, idler, receivers)
        circ = asm.circuit(gates + dec_gates)
        programs.append(Program(basis_embed("", n), circ, tuple(noise)))
    return Model(spec, n, asm.n_params, asm.layout, programs, list(range(n)), senders, None, messages)


def ghz_ket(n: int) -> np.ndarray:
    if n < 2:
        raise PreconditionError("a GHZ state needs at least 2 qubits")
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def ghz_state(n: int) -> np.ndarray:
    """Projector onto ``(|0...0> + |1...1>) / sqrt(2)``."""
    return projector(ghz_ket(n))


def build_quantum_model(spec: TaskSpec) -> Model:
    """Wire 0 is the untouched reference; wires ``1..ghz_size-1`` go through the channel."""
    _require(spec, Setting.QUANTUM)
    n = spec.ghz_size
    sent = list(range(1, n))
    asm = _Assembler(n)
    if spec.use_encoder and spec.encoder_layers > 0:
        enc = layered_ansatz(n - 1, spec.encoder_layers)
        asm.place(enc, sent, asm.block("theta", enc.n_params))
    position = len(asm.gates)
    if spec.decoder_layers > 0:
        dec = layered_ansatz(n - 1, spec.decoder_layers)
        asm.place(dec, sent, asm.block("phi", dec.n_params))
    noise = _noise_at(position, spec.channel.build(), sent)
    if spec.idler_noise_p > 0:
        noise += _noise_at(position, depolarizing(spec.idler_noise_p), [0])
    program = Program(ghz_state(n), asm.circuit(), tuple(noise))
    return Model(spec, n, asm.n_params, asm.layout, [program], [], sent, ghz_ket(n))


def build_model(spec: TaskSpec) -> Model:
    return {
        Setting.CLASSICAL: build_classical_model,
        Setting.EA_CLASSICAL: build_ea_model,
        Setting.QUANTUM: build_quantum_model,
    }[spec.setting](spec)


def conditional_distribution(model: Model, params: np.ndarray) -> np.ndarray:
    """Exact ``p(s_hat | s)``: rows are messages, columns readout outcomes."""
    if model.spec.setting is Setting.QUANTUM:
        raise PreconditionError("conditional_distribution is undefined for the quantum setting")
    states = model.output_states(params)
    return measurement_probabilities(
        states.reshape((-1,) + states.shape[-2:]), model.readout_wires
    ).reshape(states.shape[:-2] + (-1,))

