"""Evaluation harness: per-IT F1, actionable/all macro F1, IT accuracy,
priority F1, per-event nDCG@100, and the per-IT breakdown report.

Conventions (declared, since the official scorer is not reproduced here):
macro averaging throughout; labels with zero gold support score 0 and are
flagged; nDCG gains reuse the importance-score mapping of the four levels;
ranking ties break by ascending tweet id.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import AbstractSet, Iterable, Mapping, Sequence

from .corpus import (
    PriorityLevel,
    TaskProfile,
    TweetRecord,
    priority_to_score,
    score_to_priority,
)
from .errors import (
    CoverageError,
    EmptyRestrictionError,
    UnknownLabelError,
    ValidationError,
)
from .runio import RunEntry


@dataclass(frozen=True)
class GoldEntry:
    event_id: str
    it_labels: frozenset[str]
    level: PriorityLevel


class GoldSet:
    """Gold labels keyed by tweet id, bound to the profile they live under."""

    def __init__(self, profile: TaskProfile, entries: Mapping[str, GoldEntry]):
        for tweet_id, entry in entries.items():
            for label_id in entry.it_labels:
                if not profile.has_label(label_id):
                    raise UnknownLabelError(label_id, profile.task_id)
        self.profile = profile
        self._entries = dict(entries)

    @classmethod
    def from_records(cls, records: Sequence[TweetRecord], profile: TaskProfile) -> "GoldSet":
        entries: dict[str, GoldEntry] = {}
        for rec in records:
            if rec.tweet_id in entries:
                raise ValidationError(f"duplicate tweet id {rec.tweet_id!r} in gold records")
            if rec.priority is None:
                raise ValidationError(f"record {rec.tweet_id} has no gold priority")
            entries[rec.tweet_id] = GoldEntry(rec.event_id, rec.it_labels, rec.priority)
        return cls(profile, entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, tweet_id: str) -> GoldEntry:
        return self._entries[tweet_id]

    def __contains__(self, tweet_id: str) -> bool:
        return tweet_id in self._entries

    def tweet_ids(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()


def _check_coverage(tweet_ids: Iterable[str], gold: GoldSet, what: str) -> None:
    missing = sorted(set(gold.tweet_ids()) - set(tweet_ids))
    if missing:
        shown = ", ".join(missing[:10])
        more = f" (and {len(missing) - 10} more)" if len(missing) > 10 else ""
        raise CoverageError(f"{what} missing for gold tweets: {shown}{more}")


def _binary_counts(preds: Mapping[str, AbstractSet[str]], gold: GoldSet, label_id: str):
    tp = fp = fn = support = 0
    for tweet_id, entry in gold.items():
        in_gold = label_id in entry.it_labels
        in_pred = label_id in preds[tweet_id]
        support += in_gold
        if in_gold and in_pred:
            tp += 1
        elif in_pred:
            fp += 1
        elif in_gold:
            fn += 1
    return tp, fp, fn, support


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def per_label_f1(preds: Mapping[str, AbstractSet[str]], gold: GoldSet,
                 label_id: str) -> float:
    """Binary F1 treating one label as the positive class.

    Zero by convention when precision + recall is zero, including the
    zero-gold-support case.
    """
    if not gold.profile.has_label(label_id):
        raise UnknownLabelError(label_id, gold.profile.task_id)
    _check_coverage(preds.keys(), gold, "predictions")
    tp, fp, fn, _ = _binary_counts(preds, gold, label_id)
    return _f1(tp, fp, fn)


def macro_f1(preds: Mapping[str, AbstractSet[str]], gold: GoldSet,
             labels: Sequence[str]) -> float:
    """Unweighted mean of per-label F1 over the given label subset."""
    if not labels:
        raise ValidationError("macro_f1 needs a non-empty label subset")
    return sum(per_label_f1(preds, gold, label_id) for label_id in labels) / len(labels)


def it_accuracy(preds: Mapping[str, AbstractSet[str]], gold: GoldSet) -> float:
    """Fraction of correct binary (tweet, label) decisions over all n*K cells."""
    _check_coverage(preds.keys(), gold, "predictions")
    profile = gold.profile
    n = len(gold)
    if n == 0:
        raise ValidationError("gold set is empty")
    wrong = 0
    for tweet_id, entry in gold.items():
        wrong += len(entry.it_labels.symmetric_difference(preds[tweet_id]))
    cells = n * profile.num_labels
    return (cells - wrong) / cells


def priority_f1(pred_levels: Mapping[str, PriorityLevel], gold: GoldSet,
                restrict: str = "all") -> float:
    """Macro F1 over the four levels as a 4-class problem.

    restrict="actionable" keeps only tweets whose gold IT set intersects the
    profile's actionable labels. Levels absent from both gold and
    predictions on the restricted set are excluded from the mean.
    """
    _check_coverage(pred_levels.keys(), gold, "level predictions")
    if restrict == "all":
        ids = gold.tweet_ids()
    elif restrict == "actionable":
        actionable = gold.profile.actionable_ids
        ids = [tid for tid, entry in gold.items() if entry.it_labels & actionable]
    else:
        raise ValidationError(f"unknown restriction {restrict!r}")
    return _priority_macro_f1_on(pred_levels, gold, ids, f"restriction {restrict!r}")


def _priority_macro_f1_on(pred_levels, gold, tweet_ids, what) -> float:
    if not tweet_ids:
        raise EmptyRestrictionError(f"{what} selected no tweets")
    f1s = []
    for level in PriorityLevel:
        tp = fp = fn = 0
        for tweet_id in tweet_ids:
            gold_hit = gold[tweet_id].level is level
            pred_hit = pred_levels[tweet_id] is level
            if gold_hit and pred_hit:
                tp += 1
            elif pred_hit:
                fp += 1
            elif gold_hit:
                fn += 1
        if tp + fp + fn == 0:
            continue  # level absent from both sides on this subset
        f1s.append(_f1(tp, fp, fn))
    return sum(f1s) / len(f1s)


def ndcg_at_k(pred_scores: Mapping[str, float], gold: GoldSet, k: int = 100) -> float:
    """Mean over events of nDCG at rank k on the priority-score ranking.

    Tweets rank by descending predicted score (ties by ascending tweet id);
    the gain of a tweet is the importance score of its gold level.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    _check_coverage(pred_scores.keys(), gold, "predicted scores")
    events: dict[str, list[str]] = {}
    for tweet_id, entry in gold.items():
        events.setdefault(entry.event_id, []).append(tweet_id)
    per_event = []
    for tweet_ids in events.values():
        ranked = sorted(tweet_ids, key=lambda tid: (-pred_scores[tid], tid))
        gains = {tid: priority_to_score(gold[tid].level) for tid in tweet_ids}
        depth = min(k, len(ranked))
        dcg = sum(gains[tid] / math.log2(i + 2) for i, tid in enumerate(ranked[:depth]))
        ideal = sorted(gains.values(), reverse=True)
        idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal[:depth]))
        per_event.append(dcg / idcg if idcg > 0 else 1.0)
    if not per_event:
        raise ValidationError("gold set has no events")
    return sum(per_event) / len(per_event)


@dataclass(frozen=True)
class PerLabelRow:
    """Per-IT breakdown row: the label's F1, the priority F1 restricted to
    tweets gold-labeled with it, and its gold support."""

    label_id: str
    it_f1: float
    pri_f1: float
    support: int


@dataclass
class MetricsReport:
    """Full metric bundle for one run."""

    ndcg_at_100: float
    it_f1_actionable: float
    it_f1_all: float
    it_accuracy: float
    pri_f1_actionable: float
    pri_f1_all: float
    per_it: list[PerLabelRow] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def scalar_metrics(self) -> dict[str, float]:
        return {
            "ndcg_at_100": self.ndcg_at_100,
            "it_f1_actionable": self.it_f1_actionable,
            "it_f1_all": self.it_f1_all,
            "it_accuracy": self.it_accuracy,
            "pri_f1_actionable": self.pri_f1_actionable,
            "pri_f1_all": self.pri_f1_all,
        }

    def to_dict(self) -> dict:
        doc = dict(self.scalar_metrics())
        doc["per_it"] = [
            {
                "label_id": row.label_id,
                "it_f1": row.it_f1,
                "pri_f1": row.pri_f1,
                "support": row.support,
            }
            for row in self.per_it
        ]
        doc["diagnostics"] = self.diagnostics
        return doc

    def write_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_per_it_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label_id", "it_f1", "pri_f1", "support"])
            for row in self.per_it:
                writer.writerow([row.label_id, repr(row.it_f1), repr(row.pri_f1), row.support])


def evaluate_run(entries: Sequence[RunEntry], gold: GoldSet,
                 profile: TaskProfile | None = None) -> MetricsReport:
    """Score a run against gold labels.

    IT decisions come from thresholding the run vectors at 0.5 (strict, so
    one-hot vectors pass through); levels from bucketing the priority value;
    nDCG from the raw value. Run entries for tweets outside the gold set are
    ignored. A run that misses gold tweets raises CoverageError listing them.
    """
    profile = profile or gold.profile
    if profile.label_ids != gold.profile.label_ids:
        raise ValidationError("run profile does not match gold profile")

    by_id: dict[str, RunEntry] = {}
    for entry in entries:
        if entry.tweet_id in by_id:
            raise ValidationError(f"duplicate tweet id {entry.tweet_id!r} in run")
        by_id[entry.tweet_id] = entry
    _check_coverage(by_id.keys(), gold, "run entries")

    label_ids = profile.label_ids
    preds: dict[str, frozenset[str]] = {}
    levels: dict[str, PriorityLevel] = {}
    scores: dict[str, float] = {}
    for tweet_id in gold.tweet_ids():
        entry = by_id[tweet_id]
        preds[tweet_id] = frozenset(
            label_ids[i] for i, v in enumerate(entry.it_vector) if v > 0.5
        )
        levels[tweet_id] = score_to_priority(entry.priority_value)
        scores[tweet_id] = entry.priority_value

    diagnostics: dict = {"num_tweets": len(gold), "notes": []}

    per_it: list[PerLabelRow] = []
    zero_support = []
    label_f1s: dict[str, float] = {}
    for label_id in label_ids:
        tp, fp, fn, support = _binary_counts(preds, gold, label_id)
        label_f1s[label_id] = _f1(tp, fp, fn)
        if support == 0:
            zero_support.append(label_id)
        carriers = [tid for tid, entry in gold.items() if label_id in entry.it_labels]
        if carriers:
            pri = _priority_macro_f1_on(levels, gold, carriers, f"label {label_id}")
        else:
            pri = 0.0
        per_it.append(PerLabelRow(label_id, label_f1s[label_id], pri, support))
    if zero_support:
        diagnostics["zero_support_labels"] = zero_support

    it_all = sum(label_f1s.values()) / len(label_ids)
    actionable = [lid for lid in label_ids if lid in profile.actionable_ids]
    if actionable:
        it_actionable = sum(label_f1s[lid] for lid in actionable) / len(actionable)
    else:
        it_actionable = 0.0
        diagnostics["notes"].append("profile has no actionable labels; actionable IT F1 is 0")

    try:
        pri_actionable = priority_f1(levels, gold, restrict="actionable")
    except EmptyRestrictionError:
        pri_actionable = 0.0
        diagnostics["notes"].append(
            "no gold tweets carry actionable labels; actionable priority F1 is 0"
        )
    pri_all = priority_f1(levels, gold, restrict="all")

    diagnostics["support"] = {row.label_id: row.support for row in per_it}

    return MetricsReport(
        ndcg_at_100=ndcg_at_k(scores, gold, k=100),
        it_f1_actionable=it_actionable,
        it_f1_all=it_all,
        it_accuracy=it_accuracy(preds, gold),
        pri_f1_actionable=pri_actionable,
        pri_f1_all=pri_all,
        per_it=per_it,
        diagnostics=diagnostics,
    )
