"""The sequence-to-sequence scenario: both tasks cast as text-to-text over a
"context / question / choices" template.

Source:  context: T question: IQ/PQ choices: IC/PC
Target:  I/P

where T is the lower-cased tweet text, IQ/PQ the task questions, IC/PC the
flattened choice lists, and I/P the textual predictions. Generated text is
parsed back to labels against the profile's verbalizations, with a fuzzy
token-overlap fallback for drifted generations.
"""

from __future__ import annotations

import json
import math
import random
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import (
    PriorityLevel,
    TaskProfile,
    TweetRecord,
    priority_to_score,
)
from .errors import (
    EmptyLabelSetError,
    TrainingError,
    UnsupportedBackendError,
    ValidationError,
)
from .features import hashed_counts
from .training import EpochStats, TrainingConfig, TrainingLog, lr_multiplier

INFO_TYPE_QUESTION = "what type of information does the tweet convey relating to a crisis?"
PRIORITY_QUESTION = "what level of urgency is likely expressed in this tweet relating to a crisis?"
PRIORITY_CHOICES = "critical, high, medium, low"

_PRIORITY_WORDS = {
    "critical": PriorityLevel.CRITICAL,
    "high": PriorityLevel.HIGH,
    "medium": PriorityLevel.MEDIUM,
    "low": PriorityLevel.LOW,
}

# Parse fallbacks for unparseable generations.
FALLBACK_LEVEL = PriorityLevel.LOW

# Minimum token-overlap (Jaccard) ratio for fuzzy matching a drifted segment.
FUZZY_MATCH_THRESHOLD = 0.5


class TaskKind(Enum):
    INFO_TYPE = "info_type"
    PRIORITY = "priority"


@dataclass(frozen=True)
class PromptPair:
    """One source/target training pair for one tweet and one task."""

    source: str
    target: str
    kind: TaskKind
    tweet_id: str

    def __post_init__(self):
        if not self.source.startswith("context: "):
            raise ValidationError("prompt source must begin with 'context: '")


def build_source(text: str, kind: TaskKind, profile: TaskProfile) -> str:
    """Template the source sequence for one tweet and one task kind."""
    if kind is TaskKind.PRIORITY:
        question, choices = PRIORITY_QUESTION, PRIORITY_CHOICES
    else:
        question = INFO_TYPE_QUESTION
        choices = ", ".join(spec.verbalization for spec in profile.labels)
    return f"context: {text.lower()} question: {question} choices: {choices}"


def build_target(record: TweetRecord, kind: TaskKind, profile: TaskProfile,
                 strict: bool = True) -> str:
    """Gold target text: the level word, or gold verbalizations in catalog order."""
    if kind is TaskKind.PRIORITY:
        if record.priority is None:
            raise ValidationError(f"record {record.tweet_id} has no gold priority")
        return record.priority.value.lower()
    if not record.it_labels:
        if strict:
            raise EmptyLabelSetError(f"record {record.tweet_id} has an empty gold label set")
        other = _other_label(profile)
        if other is None:
            raise EmptyLabelSetError(
                f"record {record.tweet_id} has an empty gold label set and the "
                "profile defines no 'other' label"
            )
        return profile.verbalization_of(other)
    ordered = profile.sort_labels(record.it_labels)
    return ", ".join(profile.verbalization_of(label_id) for label_id in ordered)


def _other_label(profile: TaskProfile) -> str | None:
    if profile.has_label("Other-Any"):
        return "Other-Any"
    for spec in profile.labels:
        if spec.id.startswith("Other-"):
            return spec.id
    return None


def make_pairs(record: TweetRecord, profile: TaskProfile,
               strict: bool = True) -> list[PromptPair]:
    """One InfoType pair and one Priority pair for a labeled record."""
    return [
        PromptPair(
            source=build_source(record.text, kind, profile),
            target=build_target(record, kind, profile, strict=strict),
            kind=kind,
            tweet_id=record.tweet_id,
        )
        for kind in (TaskKind.INFO_TYPE, TaskKind.PRIORITY)
    ]


def make_corpus_pairs(records: Sequence[TweetRecord], profile: TaskProfile,
                      strict: bool = True) -> list[PromptPair]:
    pairs: list[PromptPair] = []
    for record in records:
        pairs.extend(make_pairs(record, profile, strict=strict))
    return pairs


def interleave_batches(pairs: Sequence[PromptPair], batch_size: int,
                       seed: int) -> list[list[PromptPair]]:
    """Seeded global shuffle then chunking, so batches mix both task kinds."""
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    shuffled = list(pairs)
    random.Random(seed).shuffle(shuffled)
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]


@dataclass
class ParseDiagnostics:
    """Counts fallback activations per task kind and keeps sample outputs."""

    max_samples: int = 100
    failures: dict[str, int] = field(
        default_factory=lambda: {TaskKind.INFO_TYPE.value: 0, TaskKind.PRIORITY.value: 0}
    )
    samples: list[dict] = field(default_factory=list)

    def record(self, kind: TaskKind, output: str) -> None:
        self.failures[kind.value] += 1
        if len(self.samples) < self.max_samples:
            self.samples.append({"kind": kind.value, "output": output})

    @property
    def total(self) -> int:
        return sum(self.failures.values())

    def to_dict(self) -> dict:
        return {"failures": dict(self.failures), "samples": list(self.samples)}


_WS_RE = re.compile(r"\s+")
_SEG_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _fuzzy_pick(segment: str, candidates: Sequence[str]) -> str | None:
    seg_tokens = set(_SEG_TOKEN_RE.findall(segment))
    if not seg_tokens:
        return None
    best, best_ratio = None, 0.0
    for cand in candidates:
        cand_tokens = set(_SEG_TOKEN_RE.findall(cand))
        union = seg_tokens | cand_tokens
        ratio = len(seg_tokens & cand_tokens) / len(union) if union else 0.0
        if ratio > best_ratio:
            best, best_ratio = cand, ratio
    if best_ratio >= FUZZY_MATCH_THRESHOLD:
        return best
    return None


def parse_generation(output: str, kind: TaskKind, profile: TaskProfile,
                     diagnostics: ParseDiagnostics | None = None):
    """Convert generated text back to a label set (InfoType) or a level (Priority).

    Segments split on commas are matched exactly against the verbalizations,
    then fuzzily by token overlap. Unparseable output never raises: it
    degrades to the fallback (empty set / Low) and is counted.
    """
    normalized = _WS_RE.sub(" ", output.strip().lower())
    segments = [seg.strip() for seg in normalized.split(",") if seg.strip()]

    if kind is TaskKind.PRIORITY:
        candidates = list(_PRIORITY_WORDS)
        for segment in segments:
            if segment in _PRIORITY_WORDS:
                return _PRIORITY_WORDS[segment]
            fuzzy = _fuzzy_pick(segment, candidates)
            if fuzzy is not None:
                return _PRIORITY_WORDS[fuzzy]
        if diagnostics is not None:
            diagnostics.record(kind, output)
        return FALLBACK_LEVEL

    candidates = [spec.verbalization for spec in profile.labels]
    matched: set[str] = set()
    for segment in segments:
        label_id = profile.label_for_verbalization(segment)
        if label_id is None:
            fuzzy = _fuzzy_pick(segment, candidates)
            if fuzzy is not None:
                label_id = profile.label_for_verbalization(fuzzy)
        if label_id is not None:
            matched.add(label_id)
    if not matched:
        if diagnostics is not None:
            diagnostics.record(kind, output)
        return frozenset()
    return frozenset(matched)


# ---------------------------------------------------------------------------
# generator backends
# ---------------------------------------------------------------------------

class ConditionalGenerator(ABC):
    """Produces a target sequence conditional on a source sequence."""

    @abstractmethod
    def generate(self, source: str) -> str:
        ...

    def manifest(self) -> dict:
        return {"type": type(self).__name__}


class TrainableConditionalGenerator(ConditionalGenerator):
    """Generator with a token-level cross-entropy training objective."""

    @abstractmethod
    def prepare(self, pairs: Sequence[PromptPair]) -> None:
        """Build vocabulary / allocate parameters from the training pairs."""

    @abstractmethod
    def batch_loss(self, pairs: Sequence[PromptPair]) -> float:
        ...

    @abstractmethod
    def train_step(self, pairs: Sequence[PromptPair], lr: float) -> float:
        """One gradient step; returns the pre-update batch loss."""

    @abstractmethod
    def get_params(self) -> dict:
        ...

    @abstractmethod
    def set_params(self, params: dict) -> None:
        ...


def _split_source(source: str) -> tuple[str, TaskKind | None]:
    head, sep, rest = source.partition(" question: ")
    if not sep or not head.startswith("context: "):
        return "", None
    context = head[len("context: "):]
    question = rest.partition(" choices: ")[0]
    if question == INFO_TYPE_QUESTION:
        return context, TaskKind.INFO_TYPE
    if question == PRIORITY_QUESTION:
        return context, TaskKind.PRIORITY
    return context, None


class EchoOracleGenerator(ConditionalGenerator):
    """Replays stored gold targets keyed by (lower-cased text, task kind).

    Unknown sources yield a configurable garbage string; used to exercise
    the template/parse/run pipeline without a trained model.
    """

    def __init__(self, mapping: dict[tuple[str, TaskKind], str], fallback: str = ""):
        self.mapping = dict(mapping)
        self.fallback = fallback

    @classmethod
    def from_records(cls, records: Sequence[TweetRecord], profile: TaskProfile,
                     fallback: str = "") -> "EchoOracleGenerator":
        mapping = {}
        for record in records:
            for kind in (TaskKind.INFO_TYPE, TaskKind.PRIORITY):
                mapping[(record.text.lower(), kind)] = build_target(record, kind, profile)
        return cls(mapping, fallback=fallback)

    def generate(self, source: str) -> str:
        context, kind = _split_source(source)
        if kind is None:
            return self.fallback
        return self.mapping.get((context, kind), self.fallback)

    def manifest(self) -> dict:
        return {"type": "echo-oracle"}


class ToySeq2SeqGenerator(TrainableConditionalGenerator):
    """Minimal trainable conditional generator for desk-scale runs.

    Hashed bag-of-words features of the source feed independent per-position
    softmax classifiers over the target token vocabulary; generation is
    greedy argmax until the end-of-sequence token. Deterministic under a
    fixed seed.
    """

    EOS = "</s>"

    def __init__(self, buckets: int = 512, seed: int = 7, max_target_len: int = 24,
                 max_tokens: int = 256):
        self.buckets = buckets
        self.seed = seed
        self.max_target_len = max_target_len
        self.max_tokens = max_tokens
        self.vocab: list[str] = []
        self._token_ids: dict[str, int] = {}
        self.weights: np.ndarray | None = None  # (L, V, buckets)
        self.bias: np.ndarray | None = None  # (L, V)
        self._feature_cache: dict[str, np.ndarray] = {}

    def prepare(self, pairs: Sequence[PromptPair]) -> None:
        tokens = {self.EOS}
        for pair in pairs:
            tokens.update(pair.target.split())
        self.vocab = sorted(tokens)
        self._token_ids = {tok: i for i, tok in enumerate(self.vocab)}
        v = len(self.vocab)
        self.weights = np.zeros((self.max_target_len, v, self.buckets))
        self.bias = np.zeros((self.max_target_len, v))
        self._feature_cache.clear()

    def _features(self, source: str) -> np.ndarray:
        cached = self._feature_cache.get(source)
        if cached is None:
            cached = hashed_counts(source, self.buckets, self.seed, self.max_tokens)
            self._feature_cache[source] = cached
        return cached

    def _target_ids(self, target: str) -> list[int]:
        eos = self._token_ids[self.EOS]
        ids = [self._token_ids.get(tok, eos) for tok in target.split()]
        ids = ids[: self.max_target_len - 1]
        ids.append(eos)
        return ids

    def _require_prepared(self):
        if self.weights is None:
            raise TrainingError("generator not prepared; call prepare() or fit_seq2seq first")

    def batch_loss(self, pairs: Sequence[PromptPair]) -> float:
        self._require_prepared()
        total = 0.0
        for pair in pairs:
            x = self._features(pair.source)
            ids = self._target_ids(pair.target)
            loss = 0.0
            for t, tok_id in enumerate(ids):
                logits = self.weights[t] @ x + self.bias[t]
                logits -= logits.max()
                loss += math.log(np.exp(logits).sum()) - logits[tok_id]
            total += loss / len(ids)
        return total / len(pairs)

    def train_step(self, pairs: Sequence[PromptPair], lr: float) -> float:
        self._require_prepared()
        xs = np.stack([self._features(p.source) for p in pairs])
        id_lists = [self._target_ids(p.target) for p in pairs]
        grad_scale = 1.0 / len(pairs)
        total = 0.0
        for t in range(max(len(ids) for ids in id_lists)):
            rows = [i for i, ids in enumerate(id_lists) if len(ids) > t]
            x = xs[rows]
            logits = x @ self.weights[t].T + self.bias[t]
            logits -= logits.max(axis=1, keepdims=True)
            exp = np.exp(logits)
            sum_exp = exp.sum(axis=1)
            tok_ids = np.array([id_lists[i][t] for i in rows])
            picked = logits[np.arange(len(rows)), tok_ids]
            inv_len = np.array([1.0 / len(id_lists[i]) for i in rows])
            total += float(((np.log(sum_exp) - picked) * inv_len).sum())
            d_logits = exp / sum_exp[:, None]
            d_logits[np.arange(len(rows)), tok_ids] -= 1.0
            d_logits *= (inv_len * grad_scale)[:, None]
            self.weights[t] -= lr * (d_logits.T @ x)
            self.bias[t] -= lr * d_logits.sum(axis=0)
        return total * grad_scale

    def generate(self, source: str) -> str:
        self._require_prepared()
        x = self._features(source)
        out: list[str] = []
        for t in range(self.max_target_len):
            logits = self.weights[t] @ x + self.bias[t]
            tok = self.vocab[int(np.argmax(logits))]
            if tok == self.EOS:
                break
            out.append(tok)
        return " ".join(out)

    def get_params(self) -> dict:
        self._require_prepared()
        return {
            "vocab": list(self.vocab),
            "weights": self.weights.copy(),
            "bias": self.bias.copy(),
        }

    def set_params(self, params: dict) -> None:
        self.vocab = list(params["vocab"])
        self._token_ids = {tok: i for i, tok in enumerate(self.vocab)}
        self.weights = np.array(params["weights"], dtype=np.float64)
        self.bias = np.array(params["bias"], dtype=np.float64)

    def manifest(self) -> dict:
        return {
            "type": "seq2seq-toy",
            "buckets": self.buckets,
            "seed": self.seed,
            "max_target_len": self.max_target_len,
            "max_tokens": self.max_tokens,
        }


def fit_seq2seq(generator: ConditionalGenerator, pairs: Sequence[PromptPair],
                cfg: TrainingConfig,
                validation_pairs: Sequence[PromptPair] | None = None) -> TrainingLog:
    """Fine-tune a trainable generator on mixed-task batches.

    Raises UnsupportedBackendError for backends without a training
    objective (the echo oracle). Restores the best validation-loss
    parameters; with no validation pairs the train loss is tracked instead.
    """
    if not isinstance(generator, TrainableConditionalGenerator):
        raise UnsupportedBackendError(
            f"{type(generator).__name__} does not support training"
        )
    if not pairs:
        raise TrainingError("no training pairs")
    generator.prepare(pairs)

    n_batches = math.ceil(len(pairs) / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    monitor = validation_pairs if validation_pairs else pairs

    log = TrainingLog()
    best_loss = math.inf
    best_params = None
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        batches = interleave_batches(pairs, cfg.batch_size, seed=cfg.seed + epoch)
        epoch_loss_sum = 0.0
        for batch in batches:
            lr = cfg.learning_rate * lr_multiplier(step, total_steps, cfg.warmup_ratio)
            loss = generator.train_step(batch, lr)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}")
            epoch_loss_sum += loss * len(batch)
            step += 1
        train_loss = epoch_loss_sum / len(pairs)
        val_loss = generator.batch_loss(monitor)
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = generator.get_params()
            log.best_epoch = epoch
        log.rows.append(
            EpochStats(epoch, train_loss, val_loss, float("nan"), float("nan"))
        )
    if best_params is not None:
        generator.set_params(best_params)
    return log


@dataclass(frozen=True)
class Seq2SeqTriage:
    """predict_seq2seq() output for one tweet."""

    tweet_id: str
    it_labels: frozenset[str]
    level: PriorityLevel
    score: float


def predict_seq2seq(generator: ConditionalGenerator, records: Sequence[TweetRecord],
                    profile: TaskProfile,
                    diagnostics: ParseDiagnostics | None = None) -> list[Seq2SeqTriage]:
    """Two generate calls per tweet; importance score from the parsed level."""
    out = []
    for record in records:
        label_source = build_source(record.text, TaskKind.INFO_TYPE, profile)
        level_source = build_source(record.text, TaskKind.PRIORITY, profile)
        labels = parse_generation(
            generator.generate(label_source), TaskKind.INFO_TYPE, profile, diagnostics
        )
        level = parse_generation(
            generator.generate(level_source), TaskKind.PRIORITY, profile, diagnostics
        )
        out.append(
            Seq2SeqTriage(
                tweet_id=record.tweet_id,
                it_labels=labels,
                level=level,
                score=priority_to_score(level),
            )
        )
    return out


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_generator_checkpoint(directory: str | Path, generator: ToySeq2SeqGenerator,
                              profile: TaskProfile, cfg: TrainingConfig) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = generator.get_params()
    np.savez(directory / "params.npz", weights=params["weights"], bias=params["bias"])
    manifest = {
        "kind": "seq2seq",
        "task_id": profile.task_id,
        "generator": generator.manifest(),
        "vocab": params["vocab"],
        "config": cfg.__dict__,
        "seed": cfg.seed,
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def load_generator_checkpoint(directory: str | Path) -> tuple[ToySeq2SeqGenerator, dict]:
    directory = Path(directory)
    with open(directory / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != "seq2seq":
        raise ValidationError(f"{directory} is not a seq2seq checkpoint")
    gen_doc = manifest["generator"]
    if gen_doc["type"] != "seq2seq-toy":
        raise ValidationError(
            f"cannot rebuild generator backend {gen_doc['type']!r}; only "
            "seq2seq-toy checkpoints are self-contained"
        )
    generator = ToySeq2SeqGenerator(
        buckets=gen_doc["buckets"], seed=gen_doc["seed"],
        max_target_len=gen_doc["max_target_len"], max_tokens=gen_doc["max_tokens"],
    )
    with np.load(directory / "params.npz") as data:
        generator.set_params(
            {"vocab": manifest["vocab"], "weights": data["weights"], "bias": data["bias"]}
        )
    return generator, manifest


# ---------------------------------------------------------------------------
# pair files
# ---------------------------------------------------------------------------

def dump_pairs(pairs: Iterable[PromptPair], path: str | Path) -> None:
    """Write pairs as JSONL for inspection or external trainers."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {
                        "tweet_id": pair.tweet_id,
                        "kind": pair.kind.value,
                        "source": pair.source,
                        "target": pair.target,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_pairs(path: str | Path) -> list[PromptPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                pairs.append(
                    PromptPair(
                        source=doc["source"],
                        target=doc["target"],
                        kind=TaskKind(doc["kind"]),
                        tweet_id=doc["tweet_id"],
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}:{line_no}: malformed pair ({exc})") from exc
    return pairs
