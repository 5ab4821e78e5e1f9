"""Losses, gradient estimation, Adam, and the training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from . import metrics
from .qmath import PreconditionError, fidelity_with_pure, trace_distance
from .tasks import Model, ModelParameters, Setting, conditional_distribution

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
SHIFT = np.pi / 2
# four-term rule for controlled rotations (generator spectrum {0, +-1/2})
_CTRL_C1 = (np.sqrt(2) + 1) / (4 * np.sqrt(2))
_CTRL_C2 = (np.sqrt(2) - 1) / (4 * np.sqrt(2))


class LossKind(str, Enum):
    CROSS_ENTROPY = "cross_entropy"
    TRACE_DISTANCE = "trace_distance"
    INFIDELITY = "infidelity"
    NEG_COHERENT_INFO = "neg_coherent_info"
    NEG_MUTUAL_INFO = "neg_mutual_info"


class GradientMethod(str, Enum):
    PARAMETER_SHIFT = "parameter_shift"
    CENTRAL_DIFFERENCE = "central_difference"


CLASSICAL_LOSSES = {LossKind.CROSS_ENTROPY, LossKind.NEG_MUTUAL_INFO}
QUANTUM_LOSSES = {LossKind.TRACE_DISTANCE, LossKind.INFIDELITY, LossKind.NEG_COHERENT_INFO}


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    gradient_method: GradientMethod = GradientMethod.CENTRAL_DIFFERENCE
    fd_step: float = 1e-4
    loss: LossKind | None = None
    seed: int = 0
    init_scale: float = 0.1
    warmup: bool = False
    # optional second phase: the last refine_fraction of the steps minimise refine_loss
    refine_loss: LossKind | None = None
    refine_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "gradient_method", GradientMethod(self.gradient_method))
        for name in ("loss", "refine_loss"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, LossKind(getattr(self, name)))

    @property
    def switch_step(self) -> int:
        if self.refine_loss is None:
            return self.steps
        return self.steps - int(round(self.refine_fraction * self.steps))

    def problems(self) -> list[str]:
        out = []
        if self.steps < 1:
            out.append("steps must be >= 1")
        if not self.learning_rate > 0:
            out.append("learning_rate must be > 0")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) < 1:
                out.append(f"{name} must lie strictly between 0 and 1")
        if not self.epsilon > 0:
            out.append("epsilon must be > 0")
        if not self.fd_step > 0:
            out.append("fd_step must be > 0")
        if self.init_scale < 0:
            out.append("init_scale must be >= 0")
        if not 0.0 <= self.refine_fraction <= 1.0:
            out.append("refine_fraction must lie in [0, 1]")
        return out


@dataclass
class TrainReport:
    loss_history: np.ndarray
    final_params: ModelParameters
    evaluated_metric: float
    reference_value: float | None = None
    reference_kind: metrics.ReferenceKind = metrics.ReferenceKind.NONE
    wall_time: float = 0.0
    seed: int = 0
    flat_params: np.ndarray = field(default_factory=lambda: np.zeros(0))


# ---------------------------------------------------------------- losses


def cross_entropy_loss(cond, targets) -> float | np.ndarray:
    """Mean of ``-log2 p(s_hat = s_i | s_i)`` over the batch; rows may carry a leading axis."""
    cond = np.asarray(cond, dtype=float)
    targets = np.asarray(targets, dtype=int)
    if targets.size == 0:
        raise PreconditionError("empty batch")
    hit = cond[..., np.arange(targets.size), targets]
    loss = -np.mean(np.log2(np.maximum(hit, PROB_FLOOR)), axis=-1)
    return float(loss) if np.ndim(loss) == 0 else loss


def mutual_information_batch(cond: np.ndarray) -> np.ndarray:
    """Uniform-prior mutual information for a ``(B, M, K)`` stack of channel matrices."""
    cond = np.clip(cond, 0.0, None)
    out = cond.mean(axis=-2)
    return metrics.shannon_entropy(out) - metrics.shannon_entropy(cond).mean(axis=-1)


def trace_distance_loss(rho_out, rho_ref):
    return trace_distance(rho_out, rho_ref)


def default_loss(setting: Setting) -> LossKind:
    return LossKind.TRACE_DISTANCE if setting is Setting.QUANTUM else LossKind.CROSS_ENTROPY


def check_loss(model: Model, loss: LossKind, method: GradientMethod) -> None:
    allowed = QUANTUM_LOSSES if model.spec.setting is Setting.QUANTUM else CLASSICAL_LOSSES
    if loss not in allowed:
        raise PreconditionError(f"loss {loss.value} is not available for the {model.spec.setting.value} setting")
    if method is GradientMethod.PARAMETER_SHIFT and loss in (
        LossKind.TRACE_DISTANCE,
        LossKind.NEG_COHERENT_INFO,
    ):
        raise PreconditionError(f"parameter_shift cannot differentiate {loss.value}; use central_difference")


@dataclass
class Objective:
    """Batched loss for one model.

    ``loss(P)`` maps a ``(B, n_params)`` stack to ``(B,)`` losses. When the
    loss is a smooth function of quantities linear in the output state,
    ``probe`` returns those quantities and ``outer_grad`` the derivative of
    the loss with respect to them, so that the shift rule can be applied at
    the linear level.
    """

    loss: Callable[[np.ndarray], np.ndarray]
    probe: Callable[[np.ndarray], np.ndarray] | None = None
    outer_grad: Callable[[np.ndarray], np.ndarray] | None = None


def make_objective(model: Model, loss: LossKind) -> Objective:
    loss = LossKind(loss)
    if loss is LossKind.CROSS_ENTROPY:
        targets = np.arange(len(model.programs))

        def hits(P):
            return conditional_distribution(model, P)[:, targets, targets]

        def outer_grad(h):
            h = np.asarray(h)
            g = -1.0 / (h.shape[-1] * np.log(2) * np.maximum(h, PROB_FLOOR))
            return np.where(h > PROB_FLOOR, g, 0.0)

        return Objective(
            lambda P: cross_entropy_loss(conditional_distribution(model, P), targets), hits, outer_grad
        )

    if loss is LossKind.NEG_MUTUAL_INFO:
        m = len(model.programs)

        def cond_flat(P):
            return conditional_distribution(model, P).reshape(len(P), -1)

        def neg_mi(P):
            return -mutual_information_batch(conditional_distribution(model, P))

        def outer_grad(c):
            c = np.maximum(c.reshape(m, -1), PROB_FLOOR)
            out = c.mean(axis=0)
            return (-np.log2(c / out) / m).ravel()

        return Objective(neg_mi, cond_flat, outer_grad)

    ref_ket = model.reference_ket
    ref = model.reference_state
    if loss is LossKind.INFIDELITY:

        def fid(P):
            return fidelity_with_pure(model.output_states(P)[:, 0], ref_ket)[:, None]

        return Objective(lambda P: 1.0 - fid(P)[:, 0], fid, lambda f: -np.ones_like(f))
    if loss is LossKind.TRACE_DISTANCE:
        return Objective(lambda P: np.asarray(trace_distance(model.output_states(P)[:, 0], ref)))
    b = model.transmitted_wires
    return Objective(lambda P: -np.asarray(metrics.coherent_information(model.output_states(P)[:, 0], b)))


# ------------------------------------------------------------- gradients


def gradient(
    loss_at: Callable[[np.ndarray], np.ndarray],
    params: np.ndarray,
    method: GradientMethod | str = GradientMethod.CENTRAL_DIFFERENCE,
    fd_step: float = 1e-4,
    controlled: np.ndarray | None = None,
    vectorized: bool = False,
) -> np.ndarray:
    """Gradient of ``loss_at`` at ``params``.

    ``parameter_shift`` uses ``[f(x + pi/2 e_j) - f(x - pi/2 e_j)] / 2``, and
    the four-term variant for entries flagged in ``controlled``. It is exact
    only when ``loss_at`` is linear in the circuit's output state.
    ``central_difference`` uses step ``fd_step``.

    With ``vectorized=True``, ``loss_at`` receives a ``(B, P)`` stack and
    returns ``(B,)`` or ``(B, K)`` values, and every shifted point is
    evaluated in one call. Vector-valued losses give a ``(P, K)`` Jacobian.
    """
    method = GradientMethod(method)
    x = np.asarray(params, dtype=float)
    n = x.size
    eye = np.eye(n)
    if method is GradientMethod.CENTRAL_DIFFERENCE:
        shifts = [(fd_step, 1.0 / (2 * fd_step)), (-fd_step, -1.0 / (2 * fd_step))]
        weights_ctrl = shifts
    else:
        shifts = [(SHIFT, 0.5), (-SHIFT, -0.5)]
        weights_ctrl = [
            (SHIFT, _CTRL_C1),
            (-SHIFT, -_CTRL_C1),
            (3 * SHIFT, -_CTRL_C2),
            (-3 * SHIFT, _CTRL_C2),
        ]
    ctrl = np.zeros(n, dtype=bool) if controlled is None else np.asarray(controlled, dtype=bool)
    if method is GradientMethod.CENTRAL_DIFFERENCE:
        ctrl = np.zeros(n, dtype=bool)

    points: list[np.ndarray] = []
    coeffs: list[tuple[int, float]] = []
    for j in range(n):
        for delta, w in weights_ctrl if ctrl[j] else shifts:
            points.append(x + delta * eye[j])
            coeffs.append((j, w))
    if not points:
        return np.zeros(0)
    stack = np.array(points)
    values = np.asarray(loss_at(stack)) if vectorized else np.array([loss_at(p) for p in stack])
    grad = np.zeros((n,) + values.shape[1:])
    for (j, w), v in zip(coeffs, values):
        grad[j] += w * v
    return grad


def objective_gradient(
    obj: Objective, params: np.ndarray, method: GradientMethod, fd_step: float, controlled: np.ndarray
) -> np.ndarray:
    method = GradientMethod(method)
    if method is GradientMethod.PARAMETER_SHIFT:
        if obj.probe is None:
            raise PreconditionError("this loss has no linear probe for the shift rule")
        jac = gradient(obj.probe, params, method, controlled=controlled, vectorized=True)
        outer = obj.outer_grad(obj.probe(np.asarray(params)[None])[0])
        return jac @ outer
    return gradient(obj.loss, params, method, fd_step, vectorized=True)


# ------------------------------------------------------------------ Adam


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    state: AdamState,
    params: np.ndarray,
    grad: np.ndarray,
    lr: float = 0.05,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> tuple[AdamState, np.ndarray]:
    grad = np.asarray(grad, dtype=float)
    params = np.asarray(params, dtype=float)
    if grad.shape != params.shape:
        raise PreconditionError(f"gradient shape {grad.shape} != parameter shape {params.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return AdamState(m, v, t), params - lr * m_hat / (np.sqrt(v_hat) + epsilon)


# ------------------------------------------------------------- training


def initial_params(model: Model, cfg: TrainConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    return rng.uniform(-cfg.init_scale, cfg.init_scale, size=model.n_params)


def learning_rate_at(cfg: TrainConfig, step: int) -> float:
    if not cfg.warmup:
        return cfg.learning_rate
    ramp = max(1, math.ceil(0.05 * cfg.steps))
    return cfg.learning_rate * min(1.0, (step + 1) / ramp)


def train(model: Model, cfg: TrainConfig, params0: np.ndarray | None = None) -> TrainReport:
    """Optimise all model parameters with Adam and evaluate the final code.

    Every step uses the full message set. ``loss_history[t]`` is the loss at
    the parameters before update ``t``; after ``cfg.switch_step`` it records
    the refinement loss and the Adam moments restart from zero.
    """
    problems = cfg.problems()
    if problems:
        raise PreconditionError("; ".join(problems))
    loss_kind = cfg.loss or default_loss(model.spec.setting)
    check_loss(model, loss_kind, cfg.gradient_method)
    if cfg.refine_loss is not None:
        check_loss(model, cfg.refine_loss, cfg.gradient_method)
    obj = make_objective(model, loss_kind)
    controlled = model.controlled_mask

    start = time.perf_counter()
    params = initial_params(model, cfg) if params0 is None else np.array(params0, dtype=float)
    state = AdamState.zeros(model.n_params)
    history = np.zeros(cfg.steps)
    for step in range(cfg.steps):
        if step == cfg.switch_step:
            obj = make_objective(model, cfg.refine_loss)
            state = AdamState.zeros(model.n_params)
        history[step] = float(obj.loss(params[None])[0])
        if model.n_params == 0:
            continue
        grad = objective_gradient(obj, params, cfg.gradient_method, cfg.fd_step, controlled)
        state, params = adam_step(
            state, params, grad, learning_rate_at(cfg, step), cfg.beta1, cfg.beta2, cfg.epsilon
        )
    metric = metrics.evaluate(model, params)
    ref, ref_kind = metrics.reference_capacity(model.spec.setting, model.spec.channel)
    elapsed = time.perf_counter() - start
    log.debug("seed %d: final loss %.6f, metric %.6f, %.1fs", cfg.seed, history[-1], metric, elapsed)
    return TrainReport(history, model.split(params), metric, ref, ref_kind, elapsed, cfg.seed, params)


def train_best_of(model: Model, cfg: TrainConfig, restarts: int = 3) -> tuple[TrainReport, list[TrainReport]]:
    """Train with seeds ``cfg.seed .. cfg.seed + restarts - 1`` and keep the highest metric."""
    reports = [train(model, replace(cfg, seed=cfg.seed + r)) for r in range(restarts)]
    best = max(reports, key=lambda r: r.evaluated_metric)
    return best, reports
