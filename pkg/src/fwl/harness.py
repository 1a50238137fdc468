"""Experiment pipelines: S0, S0+FWL, S0+supervised, fully supervised, and the lambda/beta sweep.

Every pipeline writes into ``<output_dir>/<pipeline>/``: a checkpoint, a
metrics JSON, a manifest JSON and (for FWL) a curve CSV. Random streams are
derived from ``(seed, stream id)`` so S0 is the same model whichever pipeline
trains it.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .data import (
    Dataset, DeploymentSplit, SyntheticTaskSpec, generate_synthetic, load_embeddings, read_jsonl,
    read_labels, split_dataset, tokenize,
)
from .deploy import CURVE_COLUMNS, run_fwl
from .estimator import FwlHyperparams
from .metrics import MetricsReport
from .mlp import AdamState, MlpClassifier, checkpoint_id, init_mlp, load_checkpoint, save_checkpoint
from .train import evaluate_model, train_supervised

logger = logging.getLogger(__name__)

PIPELINES = ("s0", "s0_fwl", "s0_supervised", "fully_supervised", "sweep")
LAMBDA_RANGE = (0.5, 1.0)
BETA_RANGE = (1.0, 85.0)

# random stream ids
_SPLIT, _INIT, _S0, _FWL, _FINETUNE, _FULL = range(6)


class ConfigError(ValueError):
    pass


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(",", " ").split())


@dataclass
class ExperimentConfig:
    pipeline: str = "s0"
    seed: int = 0
    output_dir: str = "runs"

    # data: "synthetic", or "jsonl" with the paths below
    dataset: str = "synthetic"
    train_path: str = ""
    dev_path: str = ""
    test_path: str = ""
    labels_path: str = ""
    embeddings_path: str = ""
    train_fraction: float = 0.1

    syn_num_classes: int = 20
    syn_dim: int = 50
    syn_per_class: int = 200
    syn_dev_per_class: int = 50
    syn_test_per_class: int = 50
    syn_center_spread: float = 1.0
    syn_noise: float = 1.9
    syn_seed: int = 1234

    hidden_dim: int = 200
    lr: float = 1e-3
    clip_norm: float = 5.0
    batch_size: int = 64
    s0_epochs: int = 100
    finetune_epochs: int = 50
    full_epochs: int = 50

    beta: float = 76.0
    lam: float = 0.97
    k_samples: int = 3
    fwl_epochs: int = 50
    eval_every: int = 1
    s0_checkpoint: str = ""

    lambda_grid: tuple = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    beta_grid: tuple = (1.0, 17.8, 34.6, 51.4, 68.2, 85.0)
    epochs_per_cell: int = 1
    workers: int = 1

    seeds: tuple = (0, 1, 2, 3, 4)

    @property
    def hyper(self) -> FwlHyperparams:
        return FwlHyperparams(beta=self.beta, lam=self.lam, k_samples=self.k_samples)

    @property
    def synthetic_spec(self) -> SyntheticTaskSpec:
        return SyntheticTaskSpec(self.syn_num_classes, self.syn_dim, self.syn_per_class, self.syn_dev_per_class,
                                 self.syn_test_per_class, self.syn_center_spread, self.syn_noise, self.syn_seed)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> "ExperimentConfig":
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}; choose from {PIPELINES}")
        if self.dataset not in ("synthetic", "jsonl"):
            raise ConfigError(f"dataset must be 'synthetic' or 'jsonl', got {self.dataset!r}")
        if self.dataset == "jsonl":
            for name in ("train_path", "dev_path", "test_path", "labels_path"):
                if not getattr(self, name):
                    raise ConfigError(f"{name} is required for jsonl datasets")
        for name in ("train_path", "dev_path", "test_path", "labels_path", "embeddings_path", "s0_checkpoint"):
            value = getattr(self, name)
            if value and not Path(value).exists():
                raise ConfigError(f"{name} does not exist: {value}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        for name in ("hidden_dim", "batch_size", "eval_every", "epochs_per_cell", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("s0_epochs", "finetune_epochs", "full_epochs", "fwl_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        try:
            self.hyper
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("lambda_grid", "beta_grid", "seeds"):
            d[k] = list(d[k])
        return d

    def config_hash(self) -> str:
        # output location does not change results
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, value):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    try:
        if key in ("lambda_grid", "beta_grid"):
            return _floats(value)
        if key == "seeds":
            return _ints(value)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return str(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read an INI-style ``[experiment]`` section of ``key = value`` pairs, then apply overrides."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        if "experiment" not in parser:
            raise ConfigError(f"{path} has no [experiment] section")
        values.update(parser["experiment"])
    values.update(overrides or {})
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})


def write_config(path, config: ExperimentConfig) -> None:
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        k: " ".join(str(x) for x in v) if isinstance(v, list) else str(v) for k, v in config.to_dict().items()
    }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


# ---------------------------------------------------------------------------
# data and model plumbing

def _rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, *extra])


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_data(config: ExperimentConfig):
    """Return ``(pool, dev, test, inputs_hash)``; ``pool`` is the original training set."""
    if config.dataset == "synthetic":
        pool, dev, test = generate_synthetic(config.synthetic_spec)
        spec_json = json.dumps(dataclasses.asdict(config.synthetic_spec), sort_keys=True)
        return pool, dev, test, "synthetic:" + hashlib.sha256(spec_json.encode()).hexdigest()

    labels = read_labels(config.labels_path)
    table = None
    if config.embeddings_path:
        vocab = set()
        for p in (config.train_path, config.dev_path, config.test_path):
            with open(p, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        if "text" in rec:
                            vocab.update(tokenize(rec["text"]))
        table = load_embeddings(config.embeddings_path, vocab)
    pool = read_jsonl(config.train_path, len(labels), table)
    dev = read_jsonl(config.dev_path, len(labels), table)
    test = read_jsonl(config.test_path, len(labels), table)
    h = hashlib.sha256()
    for p in (config.train_path, config.dev_path, config.test_path, config.labels_path, config.embeddings_path):
        h.update((_sha256_file(p) if p else "-").encode())
    return pool, dev, test, h.hexdigest()


def make_split(config: ExperimentConfig):
    pool, dev, test, inputs_hash = load_data(config)
    return split_dataset(pool, config.train_fraction, config.seed, dev, test), inputs_hash


def _optimizer(config: ExperimentConfig, model: MlpClassifier) -> AdamState:
    return AdamState.for_model(model, lr=config.lr, clip_norm=config.clip_norm)


def _fresh_model(config: ExperimentConfig, split: DeploymentSplit) -> MlpClassifier:
    return init_mlp(split.dev.dim, config.hidden_dim, split.dev.num_classes, _rng(config.seed, _INIT))


def train_s0(config: ExperimentConfig, split: DeploymentSplit, audit: set | None = None):
    model = _fresh_model(config, split)
    return train_supervised(model, split.train, split.dev, config.s0_epochs, _optimizer(config, model),
                            _rng(config.seed, _S0), config.batch_size, audit)


def obtain_s0(config: ExperimentConfig, split: DeploymentSplit) -> tuple[MlpClassifier, str]:
    """Load the configured S0 checkpoint, or train S0 in-run. Returns ``(model, source)``."""
    if config.s0_checkpoint:
        path = Path(config.s0_checkpoint)
        if not path.exists():
            raise FileNotFoundError(f"S0 checkpoint not found: {path}")
        model, _, _ = load_checkpoint(path)
        if model.input_dim != split.dev.dim or model.num_classes != split.dev.num_classes:
            raise ValueError("S0 checkpoint dimensions do not match the dataset")
        return model, str(path)
    return train_s0(config, split).model, "trained-in-run"


# ---------------------------------------------------------------------------
# outputs

@dataclass
class PipelineResult:
    pipeline: str
    model: MlpClassifier
    metrics: dict
    manifest: dict
    curve: list[dict] = field(default_factory=list)
    audit_ids: set = field(default_factory=set)
    out_dir: Path | None = None


def _json_dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, rows: list[dict], columns) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})


def _manifest(config, pipeline, inputs_hash, split, start_id, model, **extra) -> dict:
    m = {
        "pipeline": pipeline,
        "seed": config.seed,
        "config": {k: v for k, v in config.to_dict().items() if k not in ("output_dir", "workers")},
        "config_hash": config.config_hash(),
        "inputs_hash": inputs_hash,
        "start_checkpoint_id": start_id,
        "checkpoint_id": checkpoint_id(model) if model is not None else None,
        "counts": {name: len(getattr(split, name)) for name in ("train", "deployment", "dev", "test")},
        "kernel_backend": kernels.BACKEND,
        "package_version": __version__,
    }
    m.update(extra)
    return m


def _finish(config, pipeline, model, split, manifest, extra_metrics=None, curve=None, curve_columns=None,
            curve_name="curve.csv", audit=None) -> PipelineResult:
    dev = evaluate_model(model, split.dev, "dev")
    test = evaluate_model(model, split.test, "test") if len(split.test) else None
    metrics = {
        "pipeline": pipeline,
        "seed": config.seed,
        "checkpoint_id": checkpoint_id(model),
        "dev": dev.to_dict(),
        "test": test.to_dict() if test else None,
    }
    metrics.update(extra_metrics or {})
    out = Path(config.output_dir) / pipeline
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.npz", model, seed=config.seed, extra={"pipeline": pipeline})
    _json_dump(out / "metrics.json", metrics)
    _json_dump(out / "manifest.json", manifest)
    if curve is not None:
        write_csv(out / curve_name, curve, curve_columns)
    logger.info("%s seed=%d dev_f1=%.4f test_f1=%s", pipeline, config.seed, dev.f1_micro,
                f"{test.f1_micro:.4f}" if test else "n/a")
    return PipelineResult(pipeline, model, metrics, manifest, curve or [], audit or set(), out)


_TRAIN_CURVE = ("epoch", "examples_seen", "dev_f1_micro", "dev_f1_macro", "mean_ce_loss")


# ---------------------------------------------------------------------------
# pipelines

def pipeline_s0(config: ExperimentConfig, split=None, inputs_hash=None) -> PipelineResult:
    """Supervised cross-entropy training on the train split only."""
    if split is None:
        split, inputs_hash = make_split(config)
    audit: set = set()
    res = train_s0(config, split, audit)
    leaked = len(audit & set(split.deployment.ids.tolist()))
    manifest = _manifest(config, "s0", inputs_hash, split, None, res.model,
                         gradient_ids=len(audit), deployment_ids_in_gradients=leaked)
    return _finish(config, "s0", res.model, split, manifest, {"best_epoch": res.best_epoch},
                   res.curve, _TRAIN_CURVE, "train_curve.csv", audit)


def pipeline_s0_fwl(config: ExperimentConfig, split=None, inputs_hash=None, s0=None) -> PipelineResult:
    """Warm-start from S0 and fine-tune with binary feedback on the deployment set."""
    if split is None:
        split, inputs_hash = make_split(config)
    if s0 is None:
        s0, source = obtain_s0(config, split)
    else:
        source = "provided"
    start_id = checkpoint_id(s0)
    model = s0.copy()
    if config.fwl_epochs == 0:
        split_for_fwl = dataclasses.replace(split, deployment=split.deployment.subset([]))
    else:
        split_for_fwl = split
    res = run_fwl(model, split_for_fwl, config.hyper, max(config.fwl_epochs, 1), config.eval_every,
                  _rng(config.seed, _FWL), _optimizer(config, model), config.batch_size)
    ledger = res.ledger
    manifest = _manifest(
        config, "s0_fwl", inputs_hash, split, start_id, res.model, s0_source=source,
        feedback_requests=ledger.feedback_requests,
        positive_feedback=ledger.positive_feedback_count,
        negative_feedback=ledger.negative_feedback_count,
        clamped_logs=ledger.clamped_logs,
        gradient_ids=len(ledger.touched_ids),
        non_deployment_ids_in_gradients=len(ledger.touched_ids - set(split.deployment.ids.tolist())),
    )
    extra = {"best_epoch": res.best_epoch, "feedback_requests": ledger.feedback_requests,
             "epochs_completed": ledger.epochs_completed, "start_checkpoint_id": start_id}
    return _finish(config, "s0_fwl", res.model, split, manifest, extra, res.curve, CURVE_COLUMNS,
                   audit=ledger.touched_ids)


def pipeline_s0_supervised(config: ExperimentConfig, split=None, inputs_hash=None, s0=None) -> PipelineResult:
    """Warm-start from S0 and continue cross-entropy training on gold deployment labels."""
    if split is None:
        split, inputs_hash = make_split(config)
    if s0 is None:
        s0, source = obtain_s0(config, split)
    else:
        source = "provided"
    start_id = checkpoint_id(s0)
    model = s0.copy()
    audit: set = set()
    res = train_supervised(model, split.deployment, split.dev, config.finetune_epochs, _optimizer(config, model),
                           _rng(config.seed, _FINETUNE), config.batch_size, audit)
    manifest = _manifest(config, "s0_supervised", inputs_hash, split, start_id, res.model, s0_source=source,
                         gradient_ids=len(audit))
    return _finish(config, "s0_supervised", res.model, split, manifest,
                   {"best_epoch": res.best_epoch, "start_checkpoint_id": start_id},
                   res.curve, _TRAIN_CURVE, "train_curve.csv", audit)


def pipeline_fully_supervised(config: ExperimentConfig, split=None, inputs_hash=None) -> PipelineResult:
    """Train from a fresh initialisation on train and deployment together."""
    if split is None:
        split, inputs_hash = make_split(config)
    union = Dataset.concat([split.train, split.deployment])
    model = _fresh_model(config, split)
    audit: set = set()
    res = train_supervised(model, union, split.dev, config.full_epochs, _optimizer(config, model),
                           _rng(config.seed, _FULL), config.batch_size, audit)
    manifest = _manifest(config, "fully_supervised", inputs_hash, split, None, res.model,
                         trained_on={"train": len(split.train), "deployment": len(split.deployment),
                                     "total": len(union)},
                         gradient_ids=len(audit))
    return _finish(config, "fully_supervised", res.model, split, manifest, {"best_epoch": res.best_epoch},
                   res.curve, _TRAIN_CURVE, "train_curve.csv", audit)


HEATMAP_COLUMNS = ("lambda", "beta", "epochs", "dev_f1", "status")


def _sweep_cell(args):
    s0, split, config, lam, beta = args
    try:
        hyper = FwlHyperparams(beta=beta, lam=lam, k_samples=config.k_samples)
        # every cell sees the same random stream, so cells differ only by (lambda, beta)
        res = run_fwl(s0, split, hyper, config.epochs_per_cell, config.epochs_per_cell,
                      _rng(config.seed, _FWL), _optimizer(config, s0), config.batch_size)
        return {"lambda": lam, "beta": beta, "epochs": config.epochs_per_cell, "dev_f1": res.best_dev_f1,
                "status": "ok"}
    except Exception as exc:  # a failed cell is recorded, the sweep goes on
        return {"lambda": lam, "beta": beta, "epochs": config.epochs_per_cell, "dev_f1": "",
                "status": f"error: {type(exc).__name__}: {exc}"}


def check_grid(lambda_grid, beta_grid) -> None:
    for lam in lambda_grid:
        if not LAMBDA_RANGE[0] <= lam <= LAMBDA_RANGE[1]:
            raise ConfigError(f"lambda {lam} outside sweep range {LAMBDA_RANGE}")
    for beta in beta_grid:
        if not BETA_RANGE[0] <= beta <= BETA_RANGE[1]:
            raise ConfigError(f"beta {beta} outside sweep range {BETA_RANGE}")


def sweep(config: ExperimentConfig, lambda_grid=None, beta_grid=None, epochs_per_cell=None,
          split=None, inputs_hash=None, s0=None) -> PipelineResult:
    """Run FWL from one shared S0 for every (lambda, beta) cell and write ``heatmap.csv``."""
    lambda_grid = tuple(lambda_grid if lambda_grid is not None else config.lambda_grid)
    beta_grid = tuple(beta_grid if beta_grid is not None else config.beta_grid)
    check_grid(lambda_grid, beta_grid)
    if epochs_per_cell is not None:
        config = config.replace(epochs_per_cell=epochs_per_cell)
    if split is None:
        split, inputs_hash = make_split(config)
    if s0 is None:
        s0, source = obtain_s0(config, split)
    else:
        source = "provided"
    start_id = checkpoint_id(s0)

    jobs = [(s0, split, config, float(lam), float(beta)) for lam in lambda_grid for beta in beta_grid]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(job) for job in jobs]

    out = Path(config.output_dir) / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "heatmap.csv", rows, HEATMAP_COLUMNS)
    manifest = _manifest(config, "sweep", inputs_hash, split, start_id, None, s0_source=source,
                         cells=len(rows), cell_start_checkpoint_ids=[start_id] * len(rows))
    _json_dump(out / "manifest.json", manifest)
    metrics = {"pipeline": "sweep", "seed": config.seed, "cells": rows}
    _json_dump(out / "metrics.json", metrics)
    return PipelineResult("sweep", s0, metrics, manifest, rows, set(), out)


def region_means(rows, lam_cut: float = 0.8, beta_cut: float = 1.0) -> tuple[float, float]:
    """Mean dev F1 over cells with ``lambda >= lam_cut and beta > beta_cut``, and over ``lambda < lam_cut``."""
    ok = [r for r in rows if r["status"] == "ok"]
    hi = [r["dev_f1"] for r in ok if r["lambda"] >= lam_cut - 1e-12 and r["beta"] > beta_cut]
    lo = [r["dev_f1"] for r in ok if r["lambda"] < lam_cut - 1e-12]
    return (float(np.mean(hi)) if hi else math.nan, float(np.mean(lo)) if lo else math.nan)


def evaluate_checkpoint(path, data: Dataset, split_name: str = "") -> MetricsReport:
    model, _, _ = load_checkpoint(path)
    return evaluate_model(model, data, split_name)


def compare(config: ExperimentConfig, seeds=None) -> dict:
    """Run the four systems over several seeds and summarise test micro-F1 as mean and stddev."""
    seeds = tuple(seeds if seeds is not None else config.seeds)
    systems = ("s0", "s0_fwl", "s0_supervised", "fully_supervised")
    scores = {s: [] for s in systems}
    macro = {s: [] for s in systems}
    for seed in seeds:
        cfg = config.replace(seed=seed, output_dir=str(Path(config.output_dir) / f"seed-{seed}"))
        split, inputs_hash = make_split(cfg)
        s0_res = pipeline_s0(cfg, split, inputs_hash)
        results = [
            s0_res,
            pipeline_s0_fwl(cfg, split, inputs_hash, s0=s0_res.model),
            pipeline_s0_supervised(cfg, split, inputs_hash, s0=s0_res.model),
            pipeline_fully_supervised(cfg, split, inputs_hash),
        ]
        for r in results:
            key = "test" if r.metrics["test"] else "dev"
            scores[r.pipeline].append(r.metrics[key]["f1_micro"])
            macro[r.pipeline].append(r.metrics[key]["f1_macro"])
    summary = {
        "seeds": list(seeds),
        "config_hash": config.config_hash(),
        "systems": {
            s: {"f1_micro": scores[s], "mean": float(np.mean(scores[s])), "std": float(np.std(scores[s])),
                "f1_macro_mean": float(np.mean(macro[s]))}
            for s in systems
        },
    }
    base = summary["systems"]["s0"]["mean"]
    for s in systems:
        summary["systems"][s]["delta_vs_s0"] = summary["systems"][s]["mean"] - base
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _json_dump(out / "compare.json", summary)
    return summary


RUNNERS = {
    "s0": pipeline_s0,
    "s0_fwl": pipeline_s0_fwl,
    "s0_supervised": pipeline_s0_supervised,
    "fully_supervised": pipeline_fully_supervised,
    "sweep": sweep,
}


def run(config: ExperimentConfig) -> PipelineResult:
    config.validate()
    return RUNNERS[config.pipeline](config)
