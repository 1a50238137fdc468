"""One-hidden-layer rectifier MLP with softmax output and hand-written backprop."""
from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .estimator import CategoricalDistribution

PARAM_NAMES = ("w1", "b1", "w2", "b2")
CHECKPOINT_FORMAT = "fwl-mlp-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class MlpClassifier:
    """Parameters ``w1 (H, D)``, ``b1 (H,)``, ``w2 (C, H)``, ``b2 (C,)``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        h, d = self.w1.shape
        c, h2 = self.w2.shape
        if min(h, d, c) < 1 or h2 != h or self.b1.shape != (h,) or self.b2.shape != (c,):
            raise ValueError(
                f"inconsistent shapes w1={self.w1.shape} b1={self.b1.shape} "
                f"w2={self.w2.shape} b2={self.b2.shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def num_classes(self) -> int:
        return self.w2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "MlpClassifier":
        return MlpClassifier(**{k: v.copy() for k, v in self.params().items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params().values())


def init_mlp(input_dim: int, hidden_dim: int, num_classes: int, rng: np.random.Generator) -> MlpClassifier:
    """Uniform fan-in initialisation, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    b_in = 1.0 / np.sqrt(input_dim)
    b_hid = 1.0 / np.sqrt(hidden_dim)
    return MlpClassifier(
        w1=rng.uniform(-b_in, b_in, (hidden_dim, input_dim)),
        b1=rng.uniform(-b_in, b_in, hidden_dim),
        w2=rng.uniform(-b_hid, b_hid, (num_classes, hidden_dim)),
        b2=rng.uniform(-b_hid, b_hid, num_classes),
    )


def zero_mlp(input_dim: int, hidden_dim: int, num_classes: int) -> MlpClassifier:
    return MlpClassifier(
        np.zeros((hidden_dim, input_dim)),
        np.zeros(hidden_dim),
        np.zeros((num_classes, hidden_dim)),
        np.zeros(num_classes),
    )


def _check_inputs(model: MlpClassifier, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"expected inputs of dimension {model.input_dim}, got shape {X.shape}")
    return X


def forward_batch(model: MlpClassifier, X: np.ndarray):
    """Return ``(probs, hidden)`` for a batch; ``hidden`` is the post-rectifier activation."""
    X = _check_inputs(model, X)
    hidden = np.maximum(X @ model.w1.T + model.b1, 0.0)
    logits = hidden @ model.w2.T + model.b2
    return kernels.softmax_rows(np.ascontiguousarray(logits)), hidden


def predict_proba(model: MlpClassifier, X: np.ndarray) -> np.ndarray:
    return forward_batch(model, X)[0]


def forward(model: MlpClassifier, x) -> CategoricalDistribution:
    """Predictive distribution ``q(y|x)`` for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a feature vector, got shape {x.shape}")
    probs, _ = forward_batch(model, x[None, :])
    return CategoricalDistribution(probs[0])


def backward_from_logit_grad(model: MlpClassifier, X, hidden, dlogits) -> dict[str, np.ndarray]:
    """Backpropagate row-wise logit gradients; rows are summed."""
    dw2 = dlogits.T @ hidden
    db2 = dlogits.sum(axis=0)
    dh = (dlogits @ model.w2) * (hidden > 0.0)
    return {"w1": dh.T @ X, "b1": dh.sum(axis=0), "w2": dw2, "b2": db2}


def _check_label(model: MlpClassifier, label) -> int:
    if int(label) != label or not 0 <= label < model.num_classes:
        raise ValueError(f"label {label!r} outside [0, {model.num_classes})")
    return int(label)


def backward_ce(model: MlpClassifier, x, gold_label: int) -> dict[str, np.ndarray]:
    """Gradient of ``-log q[gold]`` for one example."""
    gold = _check_label(model, gold_label)
    X = _check_inputs(model, np.asarray(x, dtype=np.float64)[None, :])
    probs, hidden = forward_batch(model, X)
    dlogits, _ = kernels.ce_logit_grad(probs, np.array([gold], dtype=np.int64))
    return backward_from_logit_grad(model, X, hidden, dlogits)


def backward_fwl(model: MlpClassifier, x, sampled_labels, norm_weights) -> dict[str, np.ndarray]:
    """Gradient of ``-(1/K) sum_k w_k log q[y_k]`` with the weights held fixed."""
    labels = np.asarray(sampled_labels, dtype=np.int64)
    w = np.asarray(norm_weights, dtype=np.float64)
    if labels.size == 0 or labels.shape != w.shape:
        raise ValueError("sampled labels and weights must be non-empty and of equal length")
    for y in labels:
        _check_label(model, y)
    X = _check_inputs(model, np.asarray(x, dtype=np.float64)[None, :])
    probs, hidden = forward_batch(model, X)
    k = labels.size
    target = np.bincount(labels, weights=w, minlength=model.num_classes)
    dlogits = (probs * w.sum() - target[None, :]) / k
    return backward_from_logit_grad(model, X, hidden, dlogits)


def ce_loss(model: MlpClassifier, X, y) -> float:
    probs = predict_proba(model, X)
    p = probs[np.arange(len(y)), y]
    return float(-np.log(np.maximum(p, 1e-300)).mean())


def ce_batch_grad(model: MlpClassifier, X, y):
    """Mean cross-entropy gradient over a minibatch and the mean loss."""
    probs, hidden = forward_batch(model, X)
    dlogits, loss = kernels.ce_logit_grad(probs, np.ascontiguousarray(y, dtype=np.int64))
    grads = backward_from_logit_grad(model, X, hidden, dlogits / X.shape[0])
    return grads, float(loss.mean())


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))


@dataclass
class AdamState:
    """Adaptive-moment optimizer state with global-norm gradient clipping."""

    lr: float = 1e-3
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: MlpClassifier, **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.m = {k: np.zeros_like(p) for k, p in model.params().items()}
        state.v = {k: np.zeros_like(p) for k, p in model.params().items()}
        return state

    def copy(self) -> "AdamState":
        out = AdamState(self.lr, self.clip_norm, self.beta1, self.beta2, self.eps, self.weight_decay, self.step)
        out.m = {k: v.copy() for k, v in self.m.items()}
        out.v = {k: v.copy() for k, v in self.v.items()}
        return out


class NonFiniteGradientError(FloatingPointError):
    pass


def apply_step(model: MlpClassifier, grads: dict[str, np.ndarray], state: AdamState):
    """One clipped Adam update, in place. Returns ``(model, state)``.

    Raises ``NonFiniteGradientError`` without touching anything when a
    gradient entry is NaN or infinite.
    """
    for name in PARAM_NAMES:
        g = grads[name]
        if g.shape != getattr(model, name).shape:
            raise ValueError(f"gradient {name} has shape {g.shape}, parameter has {getattr(model, name).shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in model.params().items()}
        state.v = {k: np.zeros_like(p) for k, p in model.params().items()}

    norm = global_norm(grads)
    scale = state.clip_norm / norm if state.clip_norm and norm > state.clip_norm else 1.0

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name in PARAM_NAMES:
        p = getattr(model, name)
        g = grads[name] * scale
        if state.weight_decay:
            g = g + state.weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    if not model.is_finite():
        raise FloatingPointError("parameters became non-finite after an optimizer step")
    return model, state


def checkpoint_id(model: MlpClassifier) -> str:
    """Content hash of the parameters (shape and exact bytes)."""
    h = hashlib.sha256()
    for name in PARAM_NAMES:
        p = getattr(model, name)
        h.update(name.encode())
        h.update(repr(p.shape).encode())
        h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def save_checkpoint(path, model: MlpClassifier, opt_state: AdamState | None = None, seed: int | None = None,
                    extra: dict | None = None) -> str:
    """Write a zip container of ``.npy`` arrays plus a JSON header. Returns the checkpoint id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "num_classes": model.num_classes,
        "seed": seed,
        "checkpoint_id": checkpoint_id(model),
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in model.params().items()}
    if opt_state is not None:
        header["optimizer"] = {
            "lr": opt_state.lr, "clip_norm": opt_state.clip_norm, "beta1": opt_state.beta1,
            "beta2": opt_state.beta2, "eps": opt_state.eps, "weight_decay": opt_state.weight_decay,
            "step": opt_state.step,
        }
        arrays.update({f"adam_m/{k}": v for k, v in opt_state.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in opt_state.v.items()})
    # fixed timestamps keep the file bytes a function of its content
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("header.json", date_time=(1980, 1, 1, 0, 0, 0))
        zf.writestr(info, json.dumps(header, sort_keys=True, indent=2))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arrays[name], dtype="<f8"), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())
    return header["checkpoint_id"]


def load_checkpoint(path):
    """Read a checkpoint. Returns ``(model, opt_state_or_None, header)``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not an FWL checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")

        def arr(name):
            return np.load(io.BytesIO(zf.read(name + ".npy")), allow_pickle=False)

        model = MlpClassifier(**{k: arr(f"param/{k}") for k in PARAM_NAMES})
        opt = None
        if "optimizer" in header:
            opt = AdamState(**header["optimizer"])
            opt.m = {k: arr(f"adam_m/{k}") for k in PARAM_NAMES}
            opt.v = {k: arr(f"adam_v/{k}") for k in PARAM_NAMES}
    return model, opt, header
