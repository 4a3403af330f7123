"""Ensemble combiners for the two submission rules.

One-hot rule: final IT prediction is the union of the members' label sets
and the final level is the highest member level; both are then encoded
numerically (0/1 vector, level mapped to its importance score).
Probability rule: elementwise maximum of the members' probability vectors
and the maximum raw score, passed through without bucketing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .corpus import PriorityLevel, TaskProfile, priority_to_score
from .errors import MissingViewError, ValidationError

SubmissionMode = Literal["one-hot", "probability"]


@dataclass(frozen=True)
class ModelPrediction:
    """One model's prediction for one tweet; categorical and/or raw views.

    At least one IT view (label set or probability vector) and one priority
    view (level or raw score) must be present.
    """

    tweet_id: str
    it_labels: frozenset[str] | None = None
    it_probs: np.ndarray | None = None
    priority_level: PriorityLevel | None = None
    priority_score: float | None = None

    def __post_init__(self):
        if self.it_labels is None and self.it_probs is None:
            raise ValidationError(f"{self.tweet_id}: prediction has no IT view")
        if self.priority_level is None and self.priority_score is None:
            raise ValidationError(f"{self.tweet_id}: prediction has no priority view")


@dataclass(frozen=True)
class CombinedPrediction:
    """Finalized numeric prediction for one tweet, ready for run emission."""

    tweet_id: str
    it_output: np.ndarray
    priority_output: float
    mode: SubmissionMode


def union_combine(label_sets: Sequence[frozenset[str]]) -> frozenset[str]:
    """Union of the members' IT label sets."""
    if not label_sets:
        raise ValidationError("cannot combine an empty list of label sets")
    return frozenset().union(*label_sets)


def max_level_combine(levels: Sequence[PriorityLevel]) -> PriorityLevel:
    """Highest of the members' priority levels."""
    if not levels:
        raise ValidationError("cannot combine an empty list of levels")
    return max(levels)


def max_prob_combine(prob_vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise maximum of the members' probability vectors."""
    if not prob_vectors:
        raise ValidationError("cannot combine an empty list of probability vectors")
    first = np.asarray(prob_vectors[0], dtype=np.float64)
    out = first.copy()
    for vec in prob_vectors[1:]:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != first.shape:
            raise ValidationError(
                f"probability vector length {vec.shape} does not match {first.shape}"
            )
        np.maximum(out, vec, out=out)
    return out


def max_score_combine(scores: Sequence[float]) -> float:
    """Maximum raw priority score, never bucketed."""
    if not scores:
        raise ValidationError("cannot combine an empty list of scores")
    return float(max(scores))


def finalize(combined: ModelPrediction, mode: SubmissionMode,
             profile: TaskProfile) -> CombinedPrediction:
    """Encode combined views numerically for the chosen submission type.

    One-hot mode turns the label set into a 0/1 vector over the catalog and
    maps the level to its importance score; probability mode passes the
    probability vector and raw score through unchanged.
    """
    if mode == "one-hot":
        if combined.it_labels is None:
            raise MissingViewError(f"{combined.tweet_id}: one-hot mode needs a label set")
        if combined.priority_level is None:
            raise MissingViewError(f"{combined.tweet_id}: one-hot mode needs a level")
        vector = np.zeros(profile.num_labels)
        for label_id in combined.it_labels:
            vector[profile.label_index(label_id)] = 1.0
        return CombinedPrediction(
            tweet_id=combined.tweet_id,
            it_output=vector,
            priority_output=priority_to_score(combined.priority_level),
            mode="one-hot",
        )
    if mode == "probability":
        if combined.it_probs is None:
            raise MissingViewError(
                f"{combined.tweet_id}: probability mode needs a probability vector"
            )
        if combined.priority_score is None:
            raise MissingViewError(f"{combined.tweet_id}: probability mode needs a raw score")
        probs = np.asarray(combined.it_probs, dtype=np.float64)
        if probs.shape != (profile.num_labels,):
            raise ValidationError(
                f"probability vector length {probs.shape} does not match profile "
                f"size {profile.num_labels}"
            )
        return CombinedPrediction(
            tweet_id=combined.tweet_id,
            it_output=probs.copy(),
            priority_output=float(combined.priority_score),
            mode="probability",
        )
    raise ValidationError(f"unknown submission mode {mode!r}")


def combine(members: Sequence[ModelPrediction], mode: SubmissionMode,
            profile: TaskProfile) -> CombinedPrediction:
    """Apply the mode's combination rule across members and finalize."""
    if not members:
        raise ValidationError("cannot combine an empty member list")
    tweet_id = members[0].tweet_id
    if any(m.tweet_id != tweet_id for m in members):
        raise ValidationError("ensemble members must share a tweet_id")
    if mode == "one-hot":
        for m in members:
            if m.it_labels is None or m.priority_level is None:
                raise MissingViewError(
                    f"{tweet_id}: one-hot ensemble needs label sets and levels "
                    "from every member"
                )
        agg = ModelPrediction(
            tweet_id=tweet_id,
            it_labels=union_combine([m.it_labels for m in members]),
            priority_level=max_level_combine([m.priority_level for m in members]),
        )
    elif mode == "probability":
        for m in members:
            if m.it_probs is None or m.priority_score is None:
                raise MissingViewError(
                    f"{tweet_id}: probability ensemble needs probability vectors "
                    "and raw scores from every member"
                )
        agg = ModelPrediction(
            tweet_id=tweet_id,
            it_probs=max_prob_combine([m.it_probs for m in members]),
            priority_score=max_score_combine([m.priority_score for m in members]),
        )
    else:
        raise ValidationError(f"unknown submission mode {mode!r}")
    return finalize(agg, mode, profile)
