"""The encoders scenario: a pooled text encoder with two linear projection
heads, one for per-IT sigmoid probabilities and one for a scalar priority
score, fine-tuned jointly with BCE + MSE.

Concrete pre-trained backbones plug in behind PooledEncoder; the shipped
ToyHashEncoder (hashed token counts through a trainable projection) keeps
the whole pipeline trainable at desk scale.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .corpus import (
    PriorityLevel,
    TaskProfile,
    TweetRecord,
    priority_to_score,
    score_to_priority,
)
from .errors import TrainingError, ValidationError
from .features import hashed_count_matrix
from .training import EpochStats, TrainingConfig, TrainingLog, lr_multiplier


class PooledEncoder(ABC):
    """Anything that maps a batch of texts to fixed-dimension pooled vectors.

    Trainable encoders overrides encode_with_cache/apply_gradient so the
    trainer can push the pooled-output gradient back into their parameters.
    """

    trainable = False

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def encode(self, texts: Sequence[str]) -> np.ndarray:
        """Return a (len(texts), dim) float64 matrix."""

    def encode_with_cache(self, texts: Sequence[str]):
        return self.encode(texts), None

    def apply_gradient(self, cache, grad_pooled: np.ndarray, lr: float) -> None:
        """Consume the gradient wrt the pooled output. No-op when frozen."""

    def get_params(self) -> dict[str, np.ndarray]:
        return {}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        pass

    def manifest(self) -> dict:
        return {"type": type(self).__name__, "dim": self.dim}


class ToyHashEncoder(PooledEncoder):
    """Hashed token counts projected into d dimensions by a trainable matrix.

    Deterministic under a fixed seed; encode("") is the zero vector. Count
    vectors are cached per text since they never change during training.
    """

    trainable = True

    def __init__(self, dim: int = 64, buckets: int = 1024, seed: int = 13,
                 max_tokens: int = 256):
        if dim < 1 or buckets < 1:
            raise ValidationError("dim and buckets must be >= 1")
        self._dim = dim
        self.buckets = buckets
        self.seed = seed
        self.max_tokens = max_tokens
        rng = np.random.default_rng(seed)
        self.projection = rng.normal(0.0, 1.0 / math.sqrt(buckets), size=(buckets, dim))
        self._count_cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def _counts(self, texts: Sequence[str]) -> np.ndarray:
        missing = [t for t in texts if t not in self._count_cache]
        if missing:
            counts = hashed_count_matrix(missing, self.buckets, self.seed, self.max_tokens)
            for text, row in zip(missing, counts):
                self._count_cache[text] = row
        return np.stack([self._count_cache[t] for t in texts])

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        return self._counts(texts) @ self.projection

    def encode_with_cache(self, texts: Sequence[str]):
        counts = self._counts(texts)
        return counts @ self.projection, counts

    def apply_gradient(self, cache, grad_pooled: np.ndarray, lr: float) -> None:
        self.projection -= lr * (cache.T @ grad_pooled)

    def get_params(self) -> dict[str, np.ndarray]:
        return {"projection": self.projection.copy()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        projection = params["projection"]
        if projection.shape != self.projection.shape:
            raise ValidationError(
                f"projection shape {projection.shape} does not match "
                f"{self.projection.shape}"
            )
        self.projection = projection.copy()

    def manifest(self) -> dict:
        return {
            "type": "toy-hash",
            "dim": self._dim,
            "buckets": self.buckets,
            "seed": self.seed,
            "max_tokens": self.max_tokens,
        }


class MultiTaskHead:
    """Two linear projections over the same pooled vector: d -> K IT logits
    and d -> 1 priority logit, both through sigmoids."""

    def __init__(self, dim: int, num_labels: int, seed: int = 0):
        if dim < 1 or num_labels < 1:
            raise ValidationError("dim and num_labels must be >= 1")
        self.dim = dim
        self.num_labels = num_labels
        rng = np.random.default_rng(seed)
        self.w_it = rng.normal(0.0, 0.01, size=(dim, num_labels))
        self.b_it = np.zeros(num_labels)
        self.w_pri = rng.normal(0.0, 0.01, size=dim)
        self.b_pri = 0.0

    def get_params(self) -> dict[str, np.ndarray]:
        return {
            "w_it": self.w_it.copy(),
            "b_it": self.b_it.copy(),
            "w_pri": self.w_pri.copy(),
            "b_pri": np.array([self.b_pri]),
        }

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        self.w_it = params["w_it"].copy()
        self.b_it = params["b_it"].copy()
        self.w_pri = params["w_pri"].copy()
        self.b_pri = float(np.asarray(params["b_pri"]).reshape(-1)[0])


@dataclass(frozen=True)
class EncoderPrediction:
    """Sigmoid outputs for one tweet: per-IT probabilities plus one score."""

    it_probs: np.ndarray
    priority_score: float


def forward(encoder: PooledEncoder, head: MultiTaskHead,
            texts: Sequence[str]) -> list[EncoderPrediction]:
    """Run the dual-head forward pass over a batch of raw texts."""
    if encoder.dim != head.dim:
        raise ValidationError(
            f"encoder dimension {encoder.dim} does not match head dimension {head.dim}"
        )
    pooled = encoder.encode(texts)
    it_probs, pri_scores = kernels.head_forward(
        pooled, head.w_it, head.b_it, head.w_pri, head.b_pri
    )
    return [
        EncoderPrediction(it_probs=it_probs[i].copy(), priority_score=float(pri_scores[i]))
        for i in range(len(texts))
    ]


def multitask_loss(pred: EncoderPrediction, gold_its: np.ndarray, gold_score: float,
                   w_it: float = 1.0, w_pri: float = 1.0) -> float:
    """Joint loss for one prediction: w_it * meanBCE + w_pri * squared error."""
    gold = np.asarray(gold_its, dtype=np.float64)
    if gold.shape != pred.it_probs.shape:
        raise ValidationError(
            f"gold vector length {gold.shape} does not match prediction {pred.it_probs.shape}"
        )
    return kernels.batch_loss(
        pred.it_probs.reshape(1, -1),
        np.array([pred.priority_score]),
        gold.reshape(1, -1),
        np.array([gold_score]),
        w_it,
        w_pri,
    )


def threshold_its(it_probs: np.ndarray, profile: TaskProfile,
                  tau: float = 0.5) -> frozenset[str]:
    """Labels with probability strictly above tau; argmax fallback if none."""
    if len(it_probs) != profile.num_labels:
        raise ValidationError(
            f"probability vector length {len(it_probs)} does not match "
            f"profile size {profile.num_labels}"
        )
    chosen = [
        profile.labels[i].id for i in range(len(it_probs)) if it_probs[i] > tau
    ]
    if not chosen:
        chosen = [profile.labels[int(np.argmax(it_probs))].id]
    return frozenset(chosen)


@dataclass(frozen=True)
class EncoderTriage:
    """predict() output for one tweet."""

    tweet_id: str
    prediction: EncoderPrediction
    it_labels: frozenset[str]
    level: PriorityLevel


def predict(encoder: PooledEncoder, head: MultiTaskHead,
            records: Sequence[TweetRecord], profile: TaskProfile,
            tau: float = 0.5, batch_size: int = 256) -> list[EncoderTriage]:
    """Label sets via thresholding and levels via score bucketing, in input order."""
    out: list[EncoderTriage] = []
    for start in range(0, len(records), batch_size):
        batch = records[start:start + batch_size]
        preds = forward(encoder, head, [r.text for r in batch])
        for rec, pred in zip(batch, preds):
            out.append(
                EncoderTriage(
                    tweet_id=rec.tweet_id,
                    prediction=pred,
                    it_labels=threshold_its(pred.it_probs, profile, tau),
                    level=score_to_priority(pred.priority_score),
                )
            )
    return out


def _targets(records: Sequence[TweetRecord], profile: TaskProfile):
    y_it = np.zeros((len(records), profile.num_labels))
    y_score = np.zeros(len(records))
    for i, rec in enumerate(records):
        for label_id in rec.it_labels:
            y_it[i, profile.label_index(label_id)] = 1.0
        if rec.priority is None:
            raise ValidationError(f"record {rec.tweet_id} has no priority; cannot train")
        y_score[i] = priority_to_score(rec.priority)
    return y_it, y_score


def _validation_stats(encoder, head, records, y_it, y_score, profile, cfg, tau=0.5):
    pooled = encoder.encode([r.text for r in records])
    it_probs, pri_scores = kernels.head_forward(
        pooled, head.w_it, head.b_it, head.w_pri, head.b_pri
    )
    loss = kernels.batch_loss(it_probs, pri_scores, y_it, y_score, cfg.w_it, cfg.w_pri)
    preds = {
        rec.tweet_id: threshold_its(it_probs[i], profile, tau)
        for i, rec in enumerate(records)
    }
    from .evaluation import GoldSet, macro_f1  # local import, avoids cycle at module load

    gold = GoldSet.from_records(records, profile)
    f1 = macro_f1(preds, gold, profile.label_ids)
    accuracy = float(
        np.mean([
            score_to_priority(float(pri_scores[i])) == rec.priority
            for i, rec in enumerate(records)
        ])
    )
    return loss, f1, accuracy


def fit(encoder: PooledEncoder, head: MultiTaskHead,
        train: Sequence[TweetRecord], validation: Sequence[TweetRecord],
        cfg: TrainingConfig, profile: TaskProfile,
        freeze_encoder: bool = False) -> TrainingLog:
    """Fine-tune (encoder, head) with SGD under a linear warm-up/decay schedule.

    Minimizes the mean multitask loss over shuffled mini-batches. Tracks
    per-epoch train/validation statistics and restores the parameters of
    the best validation-loss epoch before returning. With an empty
    validation set the final epoch is kept and validation columns are NaN.
    """
    if not train:
        raise TrainingError("training set is empty")
    if encoder.dim != head.dim:
        raise ValidationError(
            f"encoder dimension {encoder.dim} does not match head dimension {head.dim}"
        )
    if head.num_labels != profile.num_labels:
        raise ValidationError(
            f"head has {head.num_labels} labels but profile has {profile.num_labels}"
        )

    y_train, s_train = _targets(train, profile)
    if validation:
        y_val, s_val = _targets(validation, profile)

    texts = [r.text for r in train]
    n = len(train)
    n_batches = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    rng = np.random.default_rng(cfg.seed)

    log = TrainingLog()
    best_val = math.inf
    best_params = None
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss_sum = 0.0
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            batch_texts = [texts[i] for i in idx]
            pooled, cache = encoder.encode_with_cache(batch_texts)
            it_probs, pri_scores = kernels.head_forward(
                pooled, head.w_it, head.b_it, head.w_pri, head.b_pri
            )
            loss = kernels.batch_loss(
                it_probs, pri_scores, y_train[idx], s_train[idx], cfg.w_it, cfg.w_pri
            )
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss} at epoch {epoch} step {step}; "
                    "try a smaller learning rate"
                )
            epoch_loss_sum += loss * len(idx)
            lr = cfg.learning_rate * lr_multiplier(step, total_steps, cfg.warmup_ratio)
            g_w_it, g_b_it, g_w_pri, g_b_pri, g_pooled = kernels.head_backward(
                pooled, head.w_it, head.w_pri, it_probs, pri_scores,
                y_train[idx], s_train[idx], cfg.w_it, cfg.w_pri,
            )
            head.w_it -= lr * g_w_it
            head.b_it -= lr * g_b_it
            head.w_pri -= lr * g_w_pri
            head.b_pri -= lr * g_b_pri
            if encoder.trainable and not freeze_encoder:
                encoder.apply_gradient(cache, g_pooled, lr)
            step += 1

        train_loss = epoch_loss_sum / n
        if validation:
            val_loss, val_f1, val_acc = _validation_stats(
                encoder, head, validation, y_val, s_val, profile, cfg
            )
            if val_loss < best_val:
                best_val = val_loss
                best_params = (encoder.get_params(), head.get_params())
                log.best_epoch = epoch
        else:
            val_loss = val_f1 = val_acc = float("nan")
            log.best_epoch = epoch
        log.rows.append(EpochStats(epoch, train_loss, val_loss, val_f1, val_acc))

    if best_params is not None:
        enc_params, head_params = best_params
        encoder.set_params(enc_params)
        head.set_params(head_params)
    return log


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(directory: str | Path, encoder: PooledEncoder, head: MultiTaskHead,
                    profile: TaskProfile, cfg: TrainingConfig) -> None:
    """Write params.npz plus a manifest.json describing the pair."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {f"encoder:{k}": v for k, v in encoder.get_params().items()}
    arrays.update({f"head:{k}": v for k, v in head.get_params().items()})
    np.savez(directory / "params.npz", **arrays)
    manifest = {
        "kind": "encoder",
        "task_id": profile.task_id,
        "dim": encoder.dim,
        "num_labels": head.num_labels,
        "encoder": encoder.manifest(),
        "config": cfg.__dict__,
        "seed": cfg.seed,
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def load_checkpoint(directory: str | Path) -> tuple[PooledEncoder, MultiTaskHead, dict]:
    """Rebuild the (encoder, head) pair saved by save_checkpoint."""
    directory = Path(directory)
    with open(directory / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != "encoder":
        raise ValidationError(f"{directory} is not an encoder checkpoint")
    enc_doc = manifest["encoder"]
    if enc_doc["type"] != "toy-hash":
        raise ValidationError(
            f"cannot rebuild encoder backend {enc_doc['type']!r}; "
            "only toy-hash checkpoints are self-contained"
        )
    encoder = ToyHashEncoder(
        dim=enc_doc["dim"], buckets=enc_doc["buckets"], seed=enc_doc["seed"],
        max_tokens=enc_doc["max_tokens"],
    )
    head = MultiTaskHead(dim=manifest["dim"], num_labels=manifest["num_labels"])
    with np.load(directory / "params.npz") as data:
        encoder.set_params(
            {k.split(":", 1)[1]: data[k] for k in data.files if k.startswith("encoder:")}
        )
        head.set_params(
            {k.split(":", 1)[1]: data[k] for k in data.files if k.startswith("head:")}
        )
    return encoder, head, manifest
