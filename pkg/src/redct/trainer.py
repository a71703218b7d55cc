"""Edge classifier: hashed n-gram features, soft-target cross-entropy, portable artifacts.

The reference edge backend is a linear model over hashed bag-of-n-gram
features trained by plain mini-batch gradient descent. Everything here is
deliberately deterministic — hashing via blake2b, fixed shuffle schedule per
seed, no adaptive optimizer — so the same inputs produce bit-identical
artifacts on any platform. The backend boundary (featurize / train / predict
/ export) is the seam where a heavier encoder could be swapped in.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .core import Document, RedctError, SoftLabel, TaskSchema, atomic_write_text

logger = logging.getLogger(__name__)

MODEL_KIND = "redct-model"
MODEL_FORMAT_VERSION = 1

TF_WEIGHTINGS = ("binary", "tf", "tf_sublinear")

# Maps a feature's character n-gram string to a column index. blake2b is
# fully specified (endianness included), which is what makes exported
# artifacts reproduce predictions bit-exactly on other platforms.
_HASH_BYTES = 8

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)

# FeatureVector: sparse column-index -> nonnegative weight.
FeatureVector = Dict[int, float]


class TrainingError(RedctError):
    """Training could not produce a valid model."""


class ArtifactError(RedctError):
    """Model artifact file is unreadable, corrupt, or mismatched."""


@dataclass(frozen=True)
class FeaturizerConfig:
    """Hashed bag-of-n-grams settings; part of the exported artifact."""

    scheme: str = "hashed_bow"
    dim: int = 2**18
    ngram_range: Tuple[int, int] = (1, 2)
    lowercase: bool = True
    tf_weighting: str = "tf_sublinear"
    include_target_prefix: bool = True

    def __post_init__(self) -> None:
        if self.scheme != "hashed_bow":
            raise RedctError(f"unknown featurizer scheme {self.scheme!r}")
        if self.dim < 2**10 or self.dim & (self.dim - 1) != 0:
            raise RedctError(f"featurizer dim must be a power of two >= 1024, got {self.dim}")
        lo, hi = self.ngram_range
        if not (1 <= lo <= hi):
            raise RedctError(f"bad ngram_range {self.ngram_range}")
        if self.tf_weighting not in TF_WEIGHTINGS:
            raise RedctError(f"tf_weighting must be one of {TF_WEIGHTINGS}, got {self.tf_weighting!r}")

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "dim": self.dim,
            "ngram_range": list(self.ngram_range),
            "lowercase": self.lowercase,
            "tf_weighting": self.tf_weighting,
            "include_target_prefix": self.include_target_prefix,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeaturizerConfig":
        return cls(
            scheme=d["scheme"],
            dim=int(d["dim"]),
            ngram_range=tuple(d["ngram_range"]),  # type: ignore[arg-type]
            lowercase=bool(d["lowercase"]),
            tf_weighting=d["tf_weighting"],
            include_target_prefix=bool(d["include_target_prefix"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.1
    l2: float = 1e-5
    batch_size: int = 64
    seed: int = 0
    repetitions: int = 5

    def __post_init__(self) -> None:
        if self.epochs <= 0 or self.learning_rate <= 0 or self.batch_size <= 0:
            raise RedctError("epochs, learning_rate and batch_size must be positive")
        if self.l2 < 0:
            raise RedctError("l2 penalty must be nonnegative")
        if self.repetitions < 1:
            raise RedctError("repetitions must be >= 1")


@dataclass
class LinearModel:
    """K x D linear classifier bound to a task schema and featurizer."""

    weights: np.ndarray  # (K, D) float64
    bias: np.ndarray  # (K,) float64
    schema_hash: str
    featurizer: FeaturizerConfig
    task_id: str
    class_names: Tuple[str, ...]

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        k, d = self.weights.shape
        if self.bias.shape != (k,):
            raise RedctError(f"bias shape {self.bias.shape} does not match weights {self.weights.shape}")
        if d != self.featurizer.dim:
            raise RedctError(f"weights have {d} columns but featurizer dim is {self.featurizer.dim}")
        if len(self.class_names) != k:
            raise RedctError(f"{k} weight rows for {len(self.class_names)} classes")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise RedctError("model parameters must be finite")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def check_schema(self, schema: TaskSchema) -> None:
        if schema.schema_hash() != self.schema_hash:
            raise ArtifactError(
                f"model was trained for task {self.task_id!r} (schema {self.schema_hash[:12]}...), "
                f"got task {schema.task_id!r} (schema {schema.schema_hash()[:12]}...)"
            )


def _hash_feature(gram: str, dim: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=_HASH_BYTES).digest()
    return int.from_bytes(digest, "little") % dim


def _tokens(text: str, lowercase: bool) -> List[str]:
    if lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)


def _ngrams(tokens: Sequence[str], lo: int, hi: int) -> List[str]:
    grams: List[str] = []
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            grams.append(" ".join(tokens[i : i + n]))
    return grams


def featurize(doc: Document, cfg: FeaturizerConfig) -> FeatureVector:
    """Sparse hashed feature vector for one document.

    Deterministic across runs and platforms; empty text yields the zero
    vector. When the document carries a target and the config opts in, the
    target's n-grams are included under a distinguishing prefix so stance
    models can condition on the topic without confusing it with body text.
    """
    lo, hi = cfg.ngram_range
    grams = _ngrams(_tokens(doc.text, cfg.lowercase), lo, hi)
    if cfg.include_target_prefix and doc.target:
        grams.extend("t=" + g for g in _ngrams(_tokens(doc.target, cfg.lowercase), lo, hi))
    counts: Dict[str, int] = {}
    for g in grams:
        counts[g] = counts.get(g, 0) + 1
    vec: FeatureVector = {}
    for g, c in counts.items():
        if cfg.tf_weighting == "binary":
            w = 1.0
        elif cfg.tf_weighting == "tf":
            w = float(c)
        else:
            w = 1.0 + math.log(c)
        idx = _hash_feature(g, cfg.dim)
        vec[idx] = vec.get(idx, 0.0) + w
    return vec


def stack_features(feature_vectors: Sequence[FeatureVector], dim: int) -> sparse.csr_matrix:
    """CSR matrix with one row per feature vector."""
    indptr = [0]
    indices: List[int] = []
    data: List[float] = []
    for vec in feature_vectors:
        for idx in sorted(vec):
            if not 0 <= idx < dim:
                raise TrainingError(f"feature index {idx} out of range for dim {dim}")
            indices.append(idx)
            data.append(vec[idx])
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(feature_vectors), dim),
    )


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits))


def soft_ce_loss(logits: Sequence[float], target: SoftLabel) -> float:
    """Cross-entropy of softmax(logits) against a soft target distribution."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or len(z) != len(target.probs):
        raise RedctError(f"logit length {z.shape} does not match target length {len(target.probs)}")
    if not np.isfinite(z).all():
        raise RedctError("logits must be finite")
    t = np.asarray(target.probs, dtype=np.float64)
    return float(-(t * _log_softmax(z)).sum())


def gradient(
    weights: np.ndarray,
    bias: np.ndarray,
    feats: sparse.csr_matrix,
    targets: np.ndarray,
    l2: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of mean soft-CE over the batch plus (l2/2)*||W||^2.

    Residuals are softmax(logits) - target; the weight gradient is
    residual^T X / B + l2*W and the bias gradient is the mean residual
    (bias unregularized).
    """
    b = feats.shape[0]
    if b == 0:
        raise TrainingError("empty batch")
    logits = feats @ weights.T + bias
    resid = (softmax(logits) - targets) / b
    grad_w = np.asarray((feats.T @ resid).T) + l2 * weights
    grad_b = resid.sum(axis=0)
    return grad_w, grad_b


def _objective(
    weights: np.ndarray, bias: np.ndarray, feats: sparse.csr_matrix, targets: np.ndarray, l2: float
) -> float:
    # Overflow to inf is fine here: the caller treats a non-finite value as
    # the divergence signal, so don't warn on the way there.
    with np.errstate(over="ignore"):
        logits = feats @ weights.T + bias
        ce = float(-(targets * _log_softmax(logits)).sum() / feats.shape[0])
        return ce + 0.5 * l2 * float((weights * weights).sum())


def train(
    examples: Sequence[Tuple[FeatureVector, SoftLabel]],
    cfg: TrainConfig,
    featurizer: FeaturizerConfig,
    schema: TaskSchema,
) -> LinearModel:
    """Mini-batch gradient descent on the regularized mean soft-CE loss.

    Deterministic given the seed: the shuffle schedule is fixed and the
    optimizer is plain GD, so identical inputs produce bit-identical weight
    matrices. Returns the final-epoch model.
    """
    if not examples:
        raise TrainingError("cannot train on an empty example list")
    k = schema.num_classes
    for _, label in examples:
        if len(label.probs) != k:
            raise TrainingError(f"target has {len(label.probs)} classes, schema has {k}")
    feats = stack_features([fv for fv, _ in examples], featurizer.dim)
    targets = np.asarray([label.probs for _, label in examples], dtype=np.float64)

    n = feats.shape[0]
    weights = np.zeros((k, featurizer.dim), dtype=np.float64)
    bias = np.zeros(k, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad_w, grad_b = gradient(weights, bias, feats[batch], targets[batch], cfg.l2)
            weights -= cfg.learning_rate * grad_w
            bias -= cfg.learning_rate * grad_b
        loss = _objective(weights, bias, feats, targets, cfg.l2)
        if not math.isfinite(loss):
            raise TrainingError(
                f"non-finite training loss at epoch {epoch + 1} "
                f"(lr={cfg.learning_rate}, l2={cfg.l2}); aborting"
            )
        logger.debug("epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, loss)
    return LinearModel(
        weights=weights,
        bias=bias,
        schema_hash=schema.schema_hash(),
        featurizer=featurizer,
        task_id=schema.task_id,
        class_names=tuple(schema.class_names),
    )


def predict(model: LinearModel, doc: Document, schema: Optional[TaskSchema] = None) -> Tuple[int, np.ndarray]:
    """Class index (argmax, lowest index on ties) and softmax probabilities."""
    if schema is not None:
        model.check_schema(schema)
    logits = model.bias.copy()
    for idx, val in featurize(doc, model.featurizer).items():
        logits += model.weights[:, idx] * val
    probs = softmax(logits)
    return int(np.argmax(probs)), probs


def predict_many(model: LinearModel, docs: Sequence[Document]) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized prediction: (class indices, B x K probabilities)."""
    feats = stack_features([featurize(d, model.featurizer) for d in docs], model.featurizer.dim)
    probs = softmax(feats @ model.weights.T + model.bias)
    return probs.argmax(axis=1), probs


def _encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode_array(s: str, shape: Tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(s.encode("ascii"))
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def _artifact_payload(model: LinearModel) -> dict:
    k, d = model.weights.shape
    return {
        "kind": MODEL_KIND,
        "format_version": MODEL_FORMAT_VERSION,
        "task_id": model.task_id,
        "schema_hash": model.schema_hash,
        "class_names": list(model.class_names),
        "featurizer": model.featurizer.to_dict(),
        "num_classes": k,
        "dim": d,
        "weights_b64": _encode_array(model.weights),
        "bias_b64": _encode_array(model.bias),
    }


def export_model(model: LinearModel, path: Path | str) -> None:
    """Write the self-describing JSON artifact (checksum over the payload)."""
    payload = _artifact_payload(model)
    body = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    payload["checksum"] = hashlib.sha256(body.encode("utf-8")).hexdigest()
    atomic_write_text(path, json.dumps(payload, sort_keys=True, ensure_ascii=False) + "\n")


def import_model(path: Path | str, schema: Optional[TaskSchema] = None) -> LinearModel:
    """Load and verify a model artifact; optionally bind-check a schema."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ArtifactError(f"{path}: corrupt model artifact (cannot parse: {exc})") from None
    if not isinstance(payload, dict) or payload.get("kind") != MODEL_KIND:
        raise ArtifactError(f"{path}: not a model artifact")
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ArtifactError(
            f"{path}: unsupported artifact format_version {version!r} (expected {MODEL_FORMAT_VERSION})"
        )
    stored_checksum = payload.pop("checksum", None)
    body = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    actual = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if stored_checksum != actual:
        raise ArtifactError(f"{path}: checksum mismatch (file corrupted or edited)")
    try:
        k, d = int(payload["num_classes"]), int(payload["dim"])
        model = LinearModel(
            weights=_decode_array(payload["weights_b64"], (k, d)),
            bias=_decode_array(payload["bias_b64"], (k,)),
            schema_hash=payload["schema_hash"],
            featurizer=FeaturizerConfig.from_dict(payload["featurizer"]),
            task_id=payload["task_id"],
            class_names=tuple(payload["class_names"]),
        )
    except (KeyError, ValueError) as exc:
        raise ArtifactError(f"{path}: malformed artifact: {exc}") from None
    if schema is not None:
        model.check_schema(schema)
    return model
