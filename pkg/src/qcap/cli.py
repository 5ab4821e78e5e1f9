"""Experiment runner: ``qcap run | validate | curve | eval``.

Config files are flat ``key = value`` text with dotted keys, for example::

    task.setting = classical
    task.channel.kind = bit_flip
    task.channel.p = 0.1
    sweep.parameter = p
    sweep.values = 0.0, 0.1, 0.2
    restarts = 3
    output_dir = out/bit_flip

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channels import ChannelKind, ChannelSpec
from .metrics import ReferenceKind, evaluate
from .optim import CLASSICAL_LOSSES, QUANTUM_LOSSES, GradientMethod, LossKind, TrainConfig, train
from .qmath import PreconditionError
from .tasks import ModelParameters, Setting, TaskSpec, build_model, task_diagnostics

log = logging.getLogger("qcap")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CSV_COLUMNS = [
    "setting",
    "channel_kind",
    "sweep_parameter",
    "sweep_value",
    "restart_seed",
    "steps",
    "final_loss",
    "learned_rate_bits",
    "reference_rate_bits",
    "reference_kind",
    "best_flag",
    "wall_time_s",
    "ghz_size",
]

# key -> (type, default)
_TASK_KEYS = {
    "task.setting": (str, None),
    "task.channel.kind": (str, None),
    "task.channel.p": (float, 0.0),
    "task.channel.gamma": (float, 0.0),
    "task.message_bits": (int, 1),
    "task.channel_uses": (int, 1),
    "task.encoder_layers": (int, 3),
    "task.decoder_layers": (int, 3),
    "task.entangler_layers": (int, 3),
    "task.pooling": (bool, False),
    "task.ghz_size": (list, [2]),
    "task.idler_noise_p": (float, 0.0),
    "task.use_encoder": (bool, True),
}
_TRAIN_KEYS = {
    "train.steps": (int, 500),
    "train.learning_rate": (float, 0.05),
    "train.beta1": (float, 0.9),
    "train.beta2": (float, 0.999),
    "train.epsilon": (float, 1e-8),
    "train.seed": (int, 0),
    "train.loss": (str, None),
    "train.gradient_method": (str, "central_difference"),
    "train.fd_step": (float, 1e-4),
    "train.init_scale": (float, 0.1),
    "train.warmup": (bool, False),
    "train.refine_loss": (str, None),
    "train.refine_fraction": (float, 0.5),
}
_OTHER_KEYS = {
    "sweep.parameter": (str, None),
    "sweep.values": (list, []),
    "restarts": (int, 3),
    "output_dir": (str, "qcap_out"),
}
KNOWN_KEYS = {**_TASK_KEYS, **_TRAIN_KEYS, **_OTHER_KEYS}

# which config key a task-level diagnostic should point at
_FIELD_TO_KEY = [
    ("pooling", "task.pooling"),
    ("n_channel_uses", "task.channel_uses"),
    ("n_message_bits", "task.message_bits"),
    ("ghz_size", "task.ghz_size"),
    ("idler_noise_p", "task.idler_noise_p"),
    ("entangler_layers", "task.entangler_layers"),
    ("encoder_layers", "task.encoder_layers"),
    ("decoder_layers", "task.decoder_layers"),
    ("ea_classical", "task.message_bits"),
]


class ConfigError(Exception):
    def __init__(self, diagnostics: list[str]):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass
class ExperimentConfig:
    task: TaskSpec
    train: TrainConfig
    sweep_parameter: str | None = None
    sweep_values: list[float] = field(default_factory=list)
    restarts: int = 3
    output_dir: Path = Path("qcap_out")
    ghz_sizes: list[int] = field(default_factory=lambda: [2])


def read_pairs(text: str) -> tuple[dict[str, tuple[str, int]], list[str]]:
    """Split config text into ``key -> (raw value, line number)`` plus syntax diagnostics."""
    pairs: dict[str, tuple[str, int]] = {}
    diags: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            diags.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            diags.append(f"line {lineno}: unknown key {key!r}")
        elif key in pairs:
            diags.append(f"line {lineno}: duplicate key {key!r} (first set on line {pairs[key][1]})")
        else:
            pairs[key] = (value, lineno)
    return pairs, diags


def _convert(key: str, raw: str, kind):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is list:
        items = [s.strip() for s in raw.replace(";", ",").split(",") if s.strip()]
        conv = int if key == "task.ghz_size" else float
        return [conv(s) for s in items]
    return kind(raw)


def _parse(text: str, source: str = "<config>") -> tuple[ExperimentConfig | None, list[str]]:
    pairs, diags = read_pairs(text)
    values: dict = {}
    lines: dict[str, int] = {}
    for key, (kind, default) in KNOWN_KEYS.items():
        if key in pairs:
            raw, lineno = pairs[key]
            lines[key] = lineno
            try:
                values[key] = _convert(key, raw, kind)
            except ValueError as exc:
                diags.append(f"line {lineno}: {key}: {exc}")
                values[key] = default
        else:
            values[key] = default

    def at(key: str) -> str:
        return f"line {lines[key]}" if key in lines else source

    for key in ("task.setting", "task.channel.kind"):
        if key not in pairs:
            diags.append(f"{source}: missing required key {key!r}")
    setting = kind = None
    if values["task.setting"] is not None:
        try:
            setting = Setting(values["task.setting"])
        except ValueError:
            diags.append(f"{at('task.setting')}: unknown setting {values['task.setting']!r}")
    if values["task.channel.kind"] is not None:
        try:
            kind = ChannelKind(values["task.channel.kind"])
        except ValueError:
            diags.append(f"{at('task.channel.kind')}: unknown channel kind {values['task.channel.kind']!r}")

    for key in ("task.channel.p", "task.channel.gamma", "task.idler_noise_p", "train.refine_fraction"):
        v = values[key]
        if not 0.0 <= v <= 1.0:
            diags.append(f"{at(key)}: {key}={v} is outside [0, 1]")
    sweep_param = values["sweep.parameter"]
    sweep_values = values["sweep.values"]
    if sweep_param is not None and sweep_param not in ("p", "gamma", "p_i"):
        diags.append(f"{at('sweep.parameter')}: sweep.parameter must be p, gamma or p_i")
    for v in sweep_values:
        if not 0.0 <= v <= 1.0:
            diags.append(f"{at('sweep.values')}: sweep value {v} is outside [0, 1]")
    if sweep_values and sweep_param is None:
        diags.append(f"{at('sweep.values')}: sweep.values given without sweep.parameter")
    if sweep_param == "gamma" and kind is not None and kind is not ChannelKind.AMPLITUDE_DAMPING:
        diags.append(f"{at('sweep.parameter')}: gamma sweeps need task.channel.kind = amplitude_damping")
    if sweep_param == "p_i" and setting is Setting.CLASSICAL:
        diags.append(f"{at('sweep.parameter')}: p_i sweeps need the ea_classical or quantum setting")
    if values["restarts"] < 1:
        diags.append(f"{at('restarts')}: restarts must be >= 1")
    ghz_sizes = values["task.ghz_size"] or [2]

    train_cfg = None
    loss = refine = method = None
    for key, enum, target in (
        ("train.loss", LossKind, "loss"),
        ("train.refine_loss", LossKind, "refine"),
        ("train.gradient_method", GradientMethod, "method"),
    ):
        if values[key] is None:
            continue
        try:
            parsed = enum(values[key])
        except ValueError:
            diags.append(f"{at(key)}: unknown value {values[key]!r} for {key}")
            continue
        if target == "loss":
            loss = parsed
        elif target == "refine":
            refine = parsed
        else:
            method = parsed
    if setting is not None:
        allowed = QUANTUM_LOSSES if setting is Setting.QUANTUM else CLASSICAL_LOSSES
        for key, chosen in (("train.loss", loss), ("train.refine_loss", refine)):
            if chosen is not None and chosen not in allowed:
                diags.append(f"{at(key)}: loss {chosen.value} is not available for the {setting.value} setting")
        if method is GradientMethod.PARAMETER_SHIFT:
            for key, chosen in (("train.loss", loss), ("train.refine_loss", refine)):
                effective = chosen or (LossKind.TRACE_DISTANCE if key == "train.loss" and setting is Setting.QUANTUM else None)
                if effective in (LossKind.TRACE_DISTANCE, LossKind.NEG_COHERENT_INFO):
                    diags.append(f"{at(key)}: parameter_shift cannot differentiate {effective.value}")
    train_cfg = TrainConfig(
        steps=values["train.steps"],
        learning_rate=values["train.learning_rate"],
        beta1=values["train.beta1"],
        beta2=values["train.beta2"],
        epsilon=values["train.epsilon"],
        gradient_method=method or GradientMethod.CENTRAL_DIFFERENCE,
        fd_step=values["train.fd_step"],
        loss=loss,
        seed=values["train.seed"],
        init_scale=values["train.init_scale"],
        warmup=values["train.warmup"],
        refine_loss=refine,
        refine_fraction=min(max(values["train.refine_fraction"], 0.0), 1.0),
    )
    for problem in train_cfg.problems():
        key = next((k for k in _TRAIN_KEYS if k.split(".", 1)[1] in problem.split()[0]), None)
        diags.append(f"{at(key) if key else source}: {problem}")

    task = None
    if setting is not None and kind is not None:
        p = min(max(values["task.channel.p"], 0.0), 1.0)
        gamma = min(max(values["task.channel.gamma"], 0.0), 1.0)
        task = TaskSpec(
            setting=setting,
            channel=ChannelSpec(kind, p, gamma),
            n_message_bits=values["task.message_bits"],
            n_channel_uses=values["task.channel_uses"],
            encoder_layers=values["task.encoder_layers"],
            decoder_layers=values["task.decoder_layers"],
            entangler_layers=values["task.entangler_layers"],
            pooling=values["task.pooling"],
            ghz_size=ghz_sizes[0],
            idler_noise_p=values["task.idler_noise_p"],
            use_encoder=values["task.use_encoder"],
        )
        seen: set[str] = set()
        for size in ghz_sizes:
            for problem in task_diagnostics(replace(task, ghz_size=size)):
                if problem in seen or problem.startswith("idler_noise_p=") or "outside [0, 1]" in problem:
                    continue
                seen.add(problem)
                key = next((k for name, k in _FIELD_TO_KEY if name in problem), "task.setting")
                diags.append(f"{at(key)}: {problem}")

    if diags or task is None:
        return None, diags
    return (
        ExperimentConfig(
            task=task,
            train=train_cfg,
            sweep_parameter=sweep_param if sweep_values else None,
            sweep_values=list(sweep_values),
            restarts=values["restarts"],
            output_dir=Path(values["output_dir"]),
            ghz_sizes=list(ghz_sizes),
        ),
        [],
    )


def validate(text: str, source: str = "<config>") -> list[str]:
    """All diagnostics for a config text; empty when it is runnable."""
    return _parse(text, source)[1]


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    cfg, diags = _parse(path.read_text(encoding="utf-8"), str(path))
    if diags:
        raise ConfigError([f"{path}: {d}" if not d.startswith(str(path)) else d for d in diags])
    return cfg


# ------------------------------------------------------------------ runs


@dataclass
class Job:
    task: TaskSpec
    train: TrainConfig
    sweep_parameter: str
    sweep_value: float | None


@dataclass
class JobResult:
    job: Job
    final_loss: float
    learned: float
    reference: float | None
    reference_kind: ReferenceKind
    wall_time: float
    params: dict


def _apply_sweep(task: TaskSpec, parameter: str | None, value: float | None) -> TaskSpec:
    if parameter is None:
        return task
    if parameter == "p_i":
        return replace(task, idler_noise_p=value)
    return replace(task, channel=task.channel.with_value(parameter, value))


def expand_jobs(cfg: ExperimentConfig) -> list[Job]:
    """Jobs in deterministic (ghz size, sweep value, seed) order."""
    jobs = []
    points = cfg.sweep_values or [None]
    for size in cfg.ghz_sizes:
        base = replace(cfg.task, ghz_size=size)
        for value in points:
            task = _apply_sweep(base, cfg.sweep_parameter, value)
            for r in range(cfg.restarts):
                jobs.append(
                    Job(task, replace(cfg.train, seed=cfg.train.seed + r), cfg.sweep_parameter or "none", value)
                )
    return jobs


def run_job(job: Job) -> JobResult:
    model = build_model(job.task)
    report = train(model, job.train)
    if not np.all(np.isfinite(report.loss_history)) or not np.isfinite(report.evaluated_metric):
        raise FloatingPointError("training produced non-finite values")
    return JobResult(
        job,
        float(report.loss_history[-1]),
        float(report.evaluated_metric),
        report.reference_value,
        report.reference_kind,
        report.wall_time,
        report.final_params.as_dict(),
    )


def _fmt(x: float | None) -> str:
    return "" if x is None else format(float(x), ".12g")


def _checkpoint_name(job: Job) -> str:
    parts = [job.task.setting.value, job.task.channel.kind.value]
    if job.sweep_value is not None:
        parts.append(f"{job.sweep_parameter}-{_fmt(job.sweep_value)}")
    if job.task.setting is Setting.QUANTUM:
        parts.append(f"ghz-{job.task.ghz_size}")
    return "_".join(parts) + ".json"


def write_checkpoint(path: Path, result: JobResult) -> None:
    payload = {
        "task": result.job.task.to_dict(),
        "seed": result.job.train.seed,
        "sweep_parameter": result.job.sweep_parameter,
        "sweep_value": result.job.sweep_value,
        "learned_rate_bits": result.learned,
        "params": result.params,
    }
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path):
    """Rebuild the model stored in a checkpoint; returns ``(model, flat_params)``."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    model = build_model(TaskSpec.from_dict(payload["task"]))
    p = payload["params"]
    mp = ModelParameters(np.array(p["theta"]), np.array(p["phi"]), np.array(p["lambda"]), np.array(p["pi"]))
    return model, model.join(mp)


def run(cfg: ExperimentConfig, workers: int = 1) -> Path:
    """Train every (ghz size, sweep value, restart) job and write results.csv plus checkpoints."""
    jobs = expand_jobs(cfg)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = []
        for i, job in enumerate(jobs, 1):
            results.append(run_job(job))
            log.info("job %d/%d: learned %.4f bits", i, len(jobs), results[-1].learned)

    out = Path(cfg.output_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for start in range(0, len(results), cfg.restarts):
            group = results[start : start + cfg.restarts]
            best = max(range(len(group)), key=lambda i: group[i].learned)
            for i, res in enumerate(group):
                job = res.job
                writer.writerow(
                    [
                        job.task.setting.value,
                        job.task.channel.kind.value,
                        job.sweep_parameter,
                        _fmt(job.sweep_value),
                        job.train.seed,
                        job.train.steps,
                        _fmt(res.final_loss),
                        _fmt(res.learned),
                        _fmt(res.reference),
                        res.reference_kind.value,
                        int(i == best),
                        format(res.wall_time, ".3f"),
                        job.task.ghz_size if job.task.setting is Setting.QUANTUM else "",
                    ]
                )
            write_checkpoint(ckpt_dir / _checkpoint_name(group[best].job), group[best])
    return csv_path


def emit_curve(csv_path: str | Path) -> Path:
    """Write ``<name>_curve.csv`` with one row per best restart: curve, x, learned, reference."""
    csv_path = Path(csv_path)
    with csv_path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if r["best_flag"] == "1"]
    out_path = csv_path.with_name(csv_path.stem + "_curve.csv")
    with out_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["curve", "x", "learned", "reference"])
        for r in rows:
            ghz = r.get("ghz_size", "")
            curve = f"{r['setting']}/{r['channel_kind']}" + (f"/ghz_size={ghz}" if ghz else "")
            writer.writerow([curve, r["sweep_value"], r["learned_rate_bits"], r["reference_rate_bits"]])
    return out_path


# ------------------------------------------------------------------- CLI


def _workers(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("QCAP_WORKERS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcap", description="Variational quantum channel-coding experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="train and evaluate every job of a config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_val = sub.add_parser("validate", help="report config problems without running")
    p_val.add_argument("config")
    p_curve = sub.add_parser("curve", help="turn a results CSV into plot data")
    p_curve.add_argument("csv")
    p_eval = sub.add_parser("eval", help="re-evaluate a saved checkpoint")
    p_eval.add_argument("checkpoint")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.command == "validate":
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        diags = validate(text, str(path))
        for d in diags:
            print(d if d.startswith(str(path)) else f"{path}: {d}")
        return EXIT_CONFIG if diags else EXIT_OK

    if args.command == "curve":
        if not Path(args.csv).exists():
            print(f"{args.csv}: no such file", file=sys.stderr)
            return EXIT_CONFIG
        print(emit_curve(args.csv))
        return EXIT_OK

    if args.command == "eval":
        model, params = load_checkpoint(args.checkpoint)
        print(format(evaluate(model, params), ".12g"))
        return EXIT_OK

    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    try:
        csv_path = run(cfg, _workers(args.workers))
    except (PreconditionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(csv_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
