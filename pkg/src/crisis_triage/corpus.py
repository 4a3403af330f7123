"""Corpus ingestion, task profiles, and priority-level conversions.

A corpus is a JSONL file, one tweet per line, with keys ``id``, ``event``,
``text``, ``its`` (array of label ids) and ``priority`` (one of Critical /
High / Medium / Low). ``its`` and ``priority`` are optional in unlabeled
(prediction) mode. Task profiles live in JSON data files shipped with the
package and can be replaced by user-supplied files of the same shape.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from functools import total_ordering
from importlib import resources
from pathlib import Path
from typing import Iterable, Literal, Sequence

from .errors import (
    CorpusFormatError,
    OutOfRangeError,
    UnknownLabelError,
    ValidationError,
)

KNOWN_TASKS = ("task1", "task2", "task3")

# Label counts the shipped task catalogs must have.
_TASK_LABEL_COUNTS = {"task1": 25, "task2": 12, "task3": 9}

# The six actionable information types; fixed for task1 and task2.
ACTIONABLE_LABEL_IDS = frozenset(
    {
        "Request-GoodsService",
        "Request-SearchAndRescue",
        "Report-NewSubEvent",
        "Report-ServiceAvailable",
        "CallToAction-MovePeople",
        "Report-EmergingThreats",
    }
)


@total_ordering
class PriorityLevel(Enum):
    """Four-valued urgency grade, totally ordered Critical > High > Medium > Low."""

    CRITICAL = "Critical"
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"

    @property
    def rank(self) -> int:
        return _LEVEL_RANKS[self]

    def __lt__(self, other: "PriorityLevel") -> bool:
        if not isinstance(other, PriorityLevel):
            return NotImplemented
        return self.rank < other.rank

    @classmethod
    def from_string(cls, value: str) -> "PriorityLevel":
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(
                f"invalid priority {value!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


_LEVEL_RANKS = {
    PriorityLevel.LOW: 0,
    PriorityLevel.MEDIUM: 1,
    PriorityLevel.HIGH: 2,
    PriorityLevel.CRITICAL: 3,
}

# Importance-score encoding of the four levels.
PRIORITY_SCORES = {
    PriorityLevel.CRITICAL: 1.0,
    PriorityLevel.HIGH: 0.75,
    PriorityLevel.MEDIUM: 0.5,
    PriorityLevel.LOW: 0.25,
}


def priority_to_score(level: PriorityLevel) -> float:
    """Map a priority level to its importance score (Critical 1.0 ... Low 0.25)."""
    return PRIORITY_SCORES[level]


def score_to_priority(score: float) -> PriorityLevel:
    """Bucket a score in [0, 1] into a priority level.

    Intervals are (0.75, 1] Critical, (0.5, 0.75] High, (0.25, 0.5] Medium
    and [0, 0.25] Low; upper bounds inclusive.
    """
    if not (0.0 <= score <= 1.0):
        raise OutOfRangeError(f"priority score {score!r} outside [0, 1]")
    if score <= 0.25:
        return PriorityLevel.LOW
    if score <= 0.5:
        return PriorityLevel.MEDIUM
    if score <= 0.75:
        return PriorityLevel.HIGH
    return PriorityLevel.CRITICAL


@dataclass(frozen=True)
class LabelSpec:
    """One information type: id, lowercase verbalization, actionable flag."""

    id: str
    verbalization: str
    actionable: bool = False


@dataclass(frozen=True)
class TaskProfile:
    """Ordered label catalog for one task plus the four priority levels."""

    task_id: str
    labels: tuple[LabelSpec, ...]
    priority_levels: tuple[PriorityLevel, ...] = (
        PriorityLevel.CRITICAL,
        PriorityLevel.HIGH,
        PriorityLevel.MEDIUM,
        PriorityLevel.LOW,
    )

    def __post_init__(self):
        if not self.labels:
            raise ValidationError("profile needs at least one label")
        ids = [spec.id for spec in self.labels]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate label ids in profile {self.task_id!r}")
        verbs = [spec.verbalization for spec in self.labels]
        if len(set(verbs)) != len(verbs):
            raise ValidationError(f"duplicate verbalizations in profile {self.task_id!r}")
        for spec in self.labels:
            v = spec.verbalization
            if not v or v != v.lower():
                raise ValidationError(
                    f"verbalization {v!r} for {spec.id} must be non-empty lowercase"
                )
            if "," in v:
                raise ValidationError(
                    f"verbalization {v!r} for {spec.id} must not contain commas"
                )
        expected = _TASK_LABEL_COUNTS.get(self.task_id)
        if expected is not None and len(self.labels) != expected:
            raise ValidationError(
                f"profile {self.task_id!r} must have {expected} labels, got {len(self.labels)}"
            )
        if self.task_id in ("task1", "task2"):
            actionable = {spec.id for spec in self.labels if spec.actionable}
            if actionable != ACTIONABLE_LABEL_IDS:
                raise ValidationError(
                    f"profile {self.task_id!r} actionable set must be exactly "
                    f"{sorted(ACTIONABLE_LABEL_IDS)}, got {sorted(actionable)}"
                )
        object.__setattr__(self, "_index", {spec.id: i for i, spec in enumerate(self.labels)})
        object.__setattr__(
            self, "_by_verbalization", {spec.verbalization: spec.id for spec in self.labels}
        )

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def label_ids(self) -> tuple[str, ...]:
        return tuple(spec.id for spec in self.labels)

    @property
    def actionable_ids(self) -> frozenset[str]:
        return frozenset(spec.id for spec in self.labels if spec.actionable)

    def label_index(self, label_id: str) -> int:
        try:
            return self._index[label_id]
        except KeyError:
            raise UnknownLabelError(label_id, self.task_id) from None

    def has_label(self, label_id: str) -> bool:
        return label_id in self._index

    def verbalization_of(self, label_id: str) -> str:
        return self.labels[self.label_index(label_id)].verbalization

    def label_for_verbalization(self, verbalization: str) -> str | None:
        return self._by_verbalization.get(verbalization)

    def sort_labels(self, label_ids: Iterable[str]) -> list[str]:
        """Return the given label ids in catalog order."""
        return sorted(label_ids, key=self.label_index)

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskProfile":
        try:
            labels = tuple(
                LabelSpec(
                    id=entry["id"],
                    verbalization=entry["verbalization"],
                    actionable=bool(entry.get("actionable", False)),
                )
                for entry in doc["labels"]
            )
            return cls(task_id=doc["task_id"], labels=labels)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed profile document: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "labels": [
                {"id": s.id, "verbalization": s.verbalization, "actionable": s.actionable}
                for s in self.labels
            ],
        }

    def with_verbalizations(self, overrides: dict[str, str]) -> "TaskProfile":
        """Return a copy with verbalizations replaced per the override table."""
        for label_id in overrides:
            if not self.has_label(label_id):
                raise UnknownLabelError(label_id, self.task_id)
        labels = tuple(
            LabelSpec(s.id, overrides.get(s.id, s.verbalization), s.actionable)
            for s in self.labels
        )
        return TaskProfile(task_id=self.task_id, labels=labels)


def load_profile(path: str | Path) -> TaskProfile:
    """Load a task profile from a JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"profile file {path}: invalid JSON ({exc})") from exc
    return TaskProfile.from_dict(doc)


def builtin_profile(task_id: str) -> TaskProfile:
    """Load one of the shipped profiles (task1, task2 or task3)."""
    if task_id not in KNOWN_TASKS:
        raise ValidationError(f"unknown task id {task_id!r}; expected one of {KNOWN_TASKS}")
    text = resources.files("crisis_triage.data").joinpath(f"{task_id}.json").read_text("utf-8")
    return TaskProfile.from_dict(json.loads(text))


def default_verbalization(label_id: str) -> str:
    """Mechanical verbalizer: split a label id on punctuation and camel case.

    Request-GoodsService -> "request goods service".
    """
    words: list[str] = []
    current = ""
    for ch in label_id:
        if ch.isalnum():
            if ch.isupper() and current and not current[-1].isupper():
                words.append(current)
                current = ch
            else:
                current += ch
        else:
            if current:
                words.append(current)
            current = ""
    if current:
        words.append(current)
    return " ".join(w.lower() for w in words)


@dataclass(frozen=True)
class TweetRecord:
    """One tweet with optional gold labels (absent only in prediction mode)."""

    tweet_id: str
    event_id: str
    text: str
    it_labels: frozenset[str] = field(default_factory=frozenset)
    priority: PriorityLevel | None = None

    def __post_init__(self):
        if not self.tweet_id:
            raise ValidationError("tweet_id must be non-empty")


CorpusMode = Literal["labeled", "unlabeled"]


def load_corpus(
    path: str | Path, profile: TaskProfile, mode: CorpusMode = "labeled"
) -> list[TweetRecord]:
    """Read a JSONL corpus, validating labels against the profile.

    In labeled mode every record must carry a non-empty ``its`` array and a
    ``priority``. In unlabeled mode both are optional but still validated
    when present. Records are returned in file order.
    """
    if mode not in ("labeled", "unlabeled"):
        raise ValidationError(f"invalid corpus mode {mode!r}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(_parse_record(line, path, line_no, profile, mode))
    return records


def _parse_record(line, path, line_no, profile, mode):
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(path, line_no, f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorpusFormatError(path, line_no, "record must be a JSON object")
    for key in ("id", "event", "text"):
        if not isinstance(doc.get(key), str):
            raise CorpusFormatError(path, line_no, f"missing or non-string {key!r}")

    its = doc.get("its")
    if its is None:
        if mode == "labeled":
            raise CorpusFormatError(path, line_no, "missing 'its' in labeled mode")
        labels: frozenset[str] = frozenset()
    else:
        if not isinstance(its, list) or not all(isinstance(x, str) for x in its):
            raise CorpusFormatError(path, line_no, "'its' must be an array of strings")
        if mode == "labeled" and not its:
            raise CorpusFormatError(path, line_no, "empty 'its' in labeled mode")
        for label_id in its:
            if not profile.has_label(label_id):
                raise UnknownLabelError(label_id, profile.task_id)
        labels = frozenset(its)

    priority_raw = doc.get("priority")
    if priority_raw is None:
        if mode == "labeled":
            raise CorpusFormatError(path, line_no, "missing 'priority' in labeled mode")
        priority = None
    else:
        if not isinstance(priority_raw, str):
            raise CorpusFormatError(path, line_no, "'priority' must be a string")
        try:
            priority = PriorityLevel.from_string(priority_raw)
        except ValidationError as exc:
            raise CorpusFormatError(path, line_no, str(exc)) from exc

    try:
        return TweetRecord(
            tweet_id=doc["id"], event_id=doc["event"], text=doc["text"],
            it_labels=labels, priority=priority,
        )
    except ValidationError as exc:
        raise CorpusFormatError(path, line_no, str(exc)) from exc


def save_corpus(records: Sequence[TweetRecord], path: str | Path) -> None:
    """Write records as JSONL in the same format load_corpus reads."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            doc: dict = {"id": rec.tweet_id, "event": rec.event_id, "text": rec.text}
            if rec.it_labels:
                doc["its"] = sorted(rec.it_labels)
            if rec.priority is not None:
                doc["priority"] = rec.priority.value
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class SplitConfig:
    """Train/validation split: fraction held out, seeded shuffle."""

    validation_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.validation_fraction <= 1.0):
            raise ValidationError(
                f"validation_fraction {self.validation_fraction!r} outside [0, 1]"
            )


def split_train_validation(
    records: Sequence[TweetRecord], cfg: SplitConfig
) -> tuple[list[TweetRecord], list[TweetRecord]]:
    """Partition records into train and validation sets.

    The validation set has round(fraction * n) records sampled uniformly
    without replacement; both halves keep the original corpus order. The
    same (records, seed) always produces the same partition.
    """
    if not records:
        raise ValidationError("cannot split an empty record list")
    n = len(records)
    n_val = round(cfg.validation_fraction * n)
    rng = random.Random(cfg.seed)
    indices = list(range(n))
    rng.shuffle(indices)
    val_idx = set(indices[:n_val])
    train = [rec for i, rec in enumerate(records) if i not in val_idx]
    validation = [rec for i, rec in enumerate(records) if i in val_idx]
    return train, validation
