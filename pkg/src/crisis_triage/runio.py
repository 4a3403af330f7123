"""Run-file and prediction-file serialization.

Run files are JSONL with a leading header comment line; one line per tweet,
keys runtag, tweet_id, its (array of K reals) and priority (real in (0, 1]).
Floats are written with repr so emit/load round-trips are bit-exact. The
official 2020B wire format is not public; this schema is the toolkit's own
and is versioned in the header.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import PriorityLevel, TaskProfile
from .ensemble import CombinedPrediction, ModelPrediction
from .errors import CorpusFormatError, ValidationError

RUN_FILE_HEADER = "# crisis-triage run-file v1"

ONE_HOT_PRIORITY_VALUES = (1.0, 0.75, 0.5, 0.25)


@dataclass(frozen=True)
class RunEntry:
    """One submission row; it_vector values are 0/1 in one-hot runs."""

    runtag: str
    tweet_id: str
    it_vector: tuple[float, ...]
    priority_value: float

    def __post_init__(self):
        if not (0.0 < self.priority_value <= 1.0):
            raise ValidationError(
                f"{self.tweet_id}: priority value {self.priority_value!r} outside (0, 1]"
            )
        for v in self.it_vector:
            if not (0.0 <= v <= 1.0):
                raise ValidationError(
                    f"{self.tweet_id}: IT value {v!r} outside [0, 1]"
                )


def emit_run(predictions: Sequence[CombinedPrediction], runtag: str,
             path: str | Path) -> None:
    """Write finalized predictions as a run file, ordered by tweet_id.

    All predictions must share a submission type.
    """
    if not runtag:
        raise ValidationError("runtag must be non-empty")
    modes = {p.mode for p in predictions}
    if len(modes) > 1:
        raise ValidationError(f"mixed submission types in one run: {sorted(modes)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RUN_FILE_HEADER + "\n")
        for pred in sorted(predictions, key=lambda p: p.tweet_id):
            fh.write(
                json.dumps(
                    {
                        "runtag": runtag,
                        "tweet_id": pred.tweet_id,
                        "its": [float(v) for v in pred.it_output],
                        "priority": float(pred.priority_output),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_run(path: str | Path, profile: TaskProfile) -> list[RunEntry]:
    """Read a run file, validating vector lengths against the profile."""
    entries: list[RunEntry] = []
    runtag: str | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON: {exc}") from exc
            try:
                its = doc["its"]
                entry = RunEntry(
                    runtag=doc["runtag"],
                    tweet_id=doc["tweet_id"],
                    it_vector=tuple(float(v) for v in its),
                    priority_value=float(doc["priority"]),
                )
            except (KeyError, TypeError, ValueError, ValidationError) as exc:
                raise CorpusFormatError(path, line_no, f"malformed run entry: {exc}") from exc
            if len(entry.it_vector) != profile.num_labels:
                raise CorpusFormatError(
                    path, line_no,
                    f"IT vector has {len(entry.it_vector)} values, profile "
                    f"{profile.task_id!r} has {profile.num_labels} labels",
                )
            if runtag is None:
                runtag = entry.runtag
            elif entry.runtag != runtag:
                raise CorpusFormatError(
                    path, line_no, f"runtag {entry.runtag!r} differs from {runtag!r}"
                )
            entries.append(entry)
    return entries


# ---------------------------------------------------------------------------
# combined prediction files (post-ensemble, pre-emission)
# ---------------------------------------------------------------------------

def save_combined(predictions: Sequence[CombinedPrediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(
                json.dumps(
                    {
                        "tweet_id": pred.tweet_id,
                        "its": [float(v) for v in pred.it_output],
                        "priority": float(pred.priority_output),
                        "mode": pred.mode,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_combined(path: str | Path, profile: TaskProfile) -> list[CombinedPrediction]:
    preds: list[CombinedPrediction] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                doc = json.loads(line)
                pred = CombinedPrediction(
                    tweet_id=doc["tweet_id"],
                    it_output=np.asarray(doc["its"], dtype=np.float64),
                    priority_output=float(doc["priority"]),
                    mode=doc["mode"],
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(path, line_no, f"malformed prediction: {exc}") from exc
            if pred.mode not in ("one-hot", "probability"):
                raise CorpusFormatError(path, line_no, f"unknown mode {pred.mode!r}")
            if pred.it_output.shape != (profile.num_labels,):
                raise CorpusFormatError(
                    path, line_no,
                    f"IT vector length {pred.it_output.shape} does not match profile "
                    f"size {profile.num_labels}",
                )
            preds.append(pred)
    return preds


# ---------------------------------------------------------------------------
# per-model prediction files (intermediate, pre-ensemble)
# ---------------------------------------------------------------------------

def save_predictions(predictions: Sequence[ModelPrediction], path: str | Path) -> None:
    """Write per-model predictions as JSONL with whichever views are present."""
    with open(path, "w", encoding="utf-8") as fh:
        for pred in predictions:
            doc: dict = {"tweet_id": pred.tweet_id}
            if pred.it_labels is not None:
                doc["it_labels"] = sorted(pred.it_labels)
            if pred.it_probs is not None:
                doc["it_probs"] = [float(v) for v in pred.it_probs]
            if pred.priority_level is not None:
                doc["priority_level"] = pred.priority_level.value
            if pred.priority_score is not None:
                doc["priority_score"] = float(pred.priority_score)
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")


def load_predictions(path: str | Path, profile: TaskProfile) -> list[ModelPrediction]:
    preds: list[ModelPrediction] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON: {exc}") from exc
            try:
                labels = doc.get("it_labels")
                probs = doc.get("it_probs")
                level = doc.get("priority_level")
                pred = ModelPrediction(
                    tweet_id=doc["tweet_id"],
                    it_labels=frozenset(labels) if labels is not None else None,
                    it_probs=np.asarray(probs, dtype=np.float64) if probs is not None else None,
                    priority_level=PriorityLevel.from_string(level) if level else None,
                    priority_score=(
                        float(doc["priority_score"]) if "priority_score" in doc else None
                    ),
                )
            except (KeyError, TypeError, ValueError, ValidationError) as exc:
                raise CorpusFormatError(path, line_no, f"malformed prediction: {exc}") from exc
            if pred.it_labels is not None:
                for label_id in pred.it_labels:
                    if not profile.has_label(label_id):
                        raise CorpusFormatError(
                            path, line_no, f"unknown label {label_id!r}"
                        )
            if pred.it_probs is not None and pred.it_probs.shape != (profile.num_labels,):
                raise CorpusFormatError(
                    path, line_no,
                    f"probability vector length {pred.it_probs.shape} does not match "
                    f"profile size {profile.num_labels}",
                )
            preds.append(pred)
    return preds
