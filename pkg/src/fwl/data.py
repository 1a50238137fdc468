"""Datasets, averaged-embedding document vectors, splitting and synthetic tasks."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")


@dataclass(frozen=True)
class LabeledExample:
    id: str
    features: np.ndarray
    label: int
    raw_text: str | None = None


@dataclass
class Dataset:
    """Column-oriented labelled examples: ``ids``, ``features (n, D)``, ``labels (n,)``."""

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=object)
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        n = self.ids.shape[0]
        if self.features.ndim != 2 or self.features.shape[0] != n or self.labels.shape != (n,):
            raise ValueError(
                f"ids ({n}), features {self.features.shape} and labels {self.labels.shape} disagree"
            )
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if len(set(self.ids.tolist())) != n:
            raise ValueError("example ids must be unique")

    def __len__(self):
        return self.ids.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.ids[idx], self.features[idx], self.labels[idx], self.num_classes)

    def examples(self) -> Iterable[LabeledExample]:
        for i in range(len(self)):
            yield LabeledExample(str(self.ids[i]), self.features[i], int(self.labels[i]))

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample], num_classes: int, dim: int | None = None) -> "Dataset":
        if not examples and dim is None:
            raise ValueError("cannot infer the feature dimension of an empty example list")
        d = dim if dim is not None else len(examples[0].features)
        feats = np.array([e.features for e in examples], dtype=np.float64).reshape(len(examples), d)
        return cls(np.array([e.id for e in examples], dtype=object), feats,
                   np.array([e.label for e in examples], dtype=np.int64), num_classes)

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        return cls(np.concatenate([p.ids for p in parts]), np.vstack([p.features for p in parts]),
                   np.concatenate([p.labels for p in parts]), parts[0].num_classes)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for i in self.ids:
            h.update(str(i).encode())
            h.update(b"\0")
        h.update(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        h.update(str(self.num_classes).encode())
        return h.hexdigest()


@dataclass
class DeploymentSplit:
    train: Dataset
    deployment: Dataset
    dev: Dataset
    test: Dataset

    def __post_init__(self):
        seen: set[str] = set()
        for name in ("train", "deployment", "dev", "test"):
            ids = set(getattr(self, name).ids.tolist())
            if ids & seen:
                raise ValueError(f"{name} shares example ids with another partition")
            seen |= ids


# ---------------------------------------------------------------------------
# embeddings

@dataclass
class EmbeddingTable:
    vectors: dict[str, np.ndarray]
    dim: int
    oov_documents: int = field(default=0, compare=False)

    def __post_init__(self):
        for tok, v in self.vectors.items():
            if v.shape != (self.dim,):
                raise ValueError(f"vector for {tok!r} has shape {v.shape}, expected ({self.dim},)")

    @property
    def vocab_size(self) -> int:
        return len(self.vectors)


def load_embeddings(path, vocab: set[str] | None = None) -> EmbeddingTable:
    """Read the whitespace text format: one token followed by D floats per line.

    ``vocab`` restricts loading to the given tokens (GloVe files are large).
    """
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            tok, vals = parts[0], parts[1:]
            if dim is None:
                dim = len(vals)
            elif len(vals) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vals)}")
            if vocab is not None and tok not in vocab:
                continue
            vectors[tok] = np.array(vals, dtype=np.float64)
    if dim is None:
        raise ValueError(f"no vectors in {path}")
    return EmbeddingTable(vectors, dim)


def tokenize(text: str) -> list[str]:
    return _PUNCT.sub(" ", text.lower()).split()


def embed_document(text: str, table: EmbeddingTable) -> np.ndarray:
    """Mean of the in-vocabulary token vectors; zeros when none are known."""
    if not table.vectors:
        raise ValueError("embedding table is empty")
    vecs = [table.vectors[t] for t in tokenize(text) if t in table.vectors]
    if not vecs:
        table.oov_documents += 1
        return np.zeros(table.dim)
    return np.mean(vecs, axis=0)


# ---------------------------------------------------------------------------
# file formats

def read_labels(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def write_labels(path, labels: Sequence[str]) -> None:
    Path(path).write_text("".join(f"{lab}\n" for lab in labels), encoding="utf-8")


def read_jsonl(path, num_classes: int, table: EmbeddingTable | None = None) -> Dataset:
    """Load ``{"id", "features" | "text", "label"}`` records."""
    examples = []
    dim = table.dim if table is not None else None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "features" in rec:
                feats = np.asarray(rec["features"], dtype=np.float64)
            elif "text" in rec:
                if table is None:
                    raise ValueError(f"{path}:{lineno}: raw text needs an embedding table")
                feats = embed_document(rec["text"], table)
            else:
                raise ValueError(f"{path}:{lineno}: record has neither 'features' nor 'text'")
            if dim is None:
                dim = feats.size
            examples.append(LabeledExample(str(rec["id"]), feats, int(rec["label"]), rec.get("text")))
    if table is not None and table.oov_documents:
        logger.info("%s: %d documents had no in-vocabulary tokens", path, table.oov_documents)
    if dim is None:
        raise ValueError(f"{path} holds no examples")
    return Dataset.from_examples(examples, num_classes, dim)


def write_jsonl(path, data: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in data.examples():
            fh.write(json.dumps({"id": ex.id, "features": ex.features.tolist(), "label": ex.label}) + "\n")


def convert_dbpedia_csv(csv_path, out_jsonl, labels: list[str] | None = None,
                        text_column: str = "text", label_column: str = "l3", id_prefix: str | None = None) -> list[str]:
    """Convert a DBPedia Classes CSV (``text``, ``l1``, ``l2``, ``l3``) to raw-text JSONL.

    Pass the label list built from the training file when converting dev/test
    so indices agree. Returns the (possibly extended) label list.
    """
    labels = list(labels) if labels is not None else []
    index = {lab: i for i, lab in enumerate(labels)}
    prefix = id_prefix if id_prefix is not None else Path(csv_path).stem
    with open(csv_path, encoding="utf-8", newline="") as src, open(out_jsonl, "w", encoding="utf-8") as dst:
        for row_no, row in enumerate(csv.DictReader(src)):
            lab = row[label_column]
            if lab not in index:
                index[lab] = len(labels)
                labels.append(lab)
            dst.write(json.dumps({"id": f"{prefix}-{row_no}", "text": row[text_column], "label": index[lab]}) + "\n")
    return labels


# ---------------------------------------------------------------------------
# splitting and synthetic data

def split_dataset(examples: Dataset, train_fraction: float, seed: int,
                  dev: Dataset | None = None, test: Dataset | None = None) -> DeploymentSplit:
    """Seeded shuffle of ``examples``, then a prefix of ``floor(n * train_fraction)`` goes to train.

    The remainder is the deployment set. Dev and test pass through unchanged.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(examples)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(n * train_fraction + 1e-9)
    empty = examples.subset([])
    return DeploymentSplit(
        train=examples.subset(perm[:n_train]),
        deployment=examples.subset(perm[n_train:]),
        dev=dev if dev is not None else empty,
        test=test if test is not None else empty,
    )


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Gaussian class clusters standing in for a real document-classification task.

    Defaults were calibrated so a fully supervised MLP clears 90% dev
    accuracy while one trained on a 10% split stays well below it.
    """

    num_classes: int = 20
    dim: int = 50
    per_class: int = 200
    dev_per_class: int = 50
    test_per_class: int = 50
    center_spread: float = 1.0
    noise: float = 1.9
    seed: int = 1234

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.dim < 1 or self.per_class < 1:
            raise ValueError("dim and per_class must be positive")
        if not self.noise > 0.0:
            raise ValueError("noise scale must be positive")


def generate_synthetic(spec: SyntheticTaskSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Balanced Gaussian clusters. Returns ``(train_pool, dev, test)``."""
    rng = np.random.default_rng(spec.seed)
    centers = rng.normal(0.0, spec.center_spread, (spec.num_classes, spec.dim))

    def draw(tag, per_class):
        labels = np.repeat(np.arange(spec.num_classes), per_class)
        feats = centers[labels] + rng.normal(0.0, spec.noise, (labels.size, spec.dim))
        ids = np.array([f"syn-{tag}-{i:06d}" for i in range(labels.size)], dtype=object)
        return Dataset(ids, feats, labels, spec.num_classes)

    pool = draw("train", spec.per_class)
    dev = draw("dev", spec.dev_per_class)
    test = draw("test", spec.test_per_class)
    return pool, dev, test


def synthetic_centers(spec: SyntheticTaskSpec) -> np.ndarray:
    """The class centers ``generate_synthetic`` draws first from the spec seed."""
    return np.random.default_rng(spec.seed).normal(0.0, spec.center_spread, (spec.num_classes, spec.dim))
