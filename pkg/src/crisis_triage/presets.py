"""The five submitted-run presets and the end-to-end pipeline behind them.

run1  encoders  one-hot      train excludes COVID events
run2  encoders  probability  train excludes COVID events
run3  seq2seq   one-hot      train excludes COVID events
run4  seq2seq   one-hot      train includes COVID events (task3 target)
run5  seq2seq   one-hot      train includes COVID events

The COVID subset is a corpus tag filter: an event is COVID when listed in
the config's covid_events, or by default when its event id contains
"covid". All randomness derives from one seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Sequence

from .config import RunConfig
from .corpus import (
    SplitConfig,
    TaskProfile,
    TweetRecord,
    load_corpus,
    split_train_validation,
)
from .encoder import MultiTaskHead, fit as fit_encoder, predict as predict_encoder
from .ensemble import CombinedPrediction, ModelPrediction, combine, finalize
from .errors import ValidationError
from .evaluation import GoldSet, MetricsReport, evaluate_run
from .runio import emit_run, load_run
from .seq2seq import (
    EchoOracleGenerator,
    ParseDiagnostics,
    fit_seq2seq,
    make_corpus_pairs,
    predict_seq2seq,
)

Scenario = Literal["encoders", "seq2seq"]


@dataclass(frozen=True)
class RunPreset:
    name: str
    scenario: Scenario
    submission_type: Literal["one-hot", "probability"]
    include_covid: bool
    task_target: str


PRESETS: dict[str, RunPreset] = {
    "run1": RunPreset("run1", "encoders", "one-hot", False, "task1"),
    "run2": RunPreset("run2", "encoders", "probability", False, "task1"),
    "run3": RunPreset("run3", "seq2seq", "one-hot", False, "task1"),
    "run4": RunPreset("run4", "seq2seq", "one-hot", True, "task3"),
    "run5": RunPreset("run5", "seq2seq", "one-hot", True, "task1"),
}


@dataclass
class PresetResult:
    preset: RunPreset
    run_path: Path
    num_predicted: int
    metrics: MetricsReport | None = None
    parse_failures: int = 0


def _filter_covid(records: Sequence[TweetRecord], cfg: RunConfig,
                  include: bool) -> list[TweetRecord]:
    if include:
        return list(records)
    return [r for r in records if not cfg.is_covid_event(r.event_id)]


def _encoder_members(train, validation, eval_records, profile, cfg: RunConfig,
                     seed: int) -> list[list[ModelPrediction]]:
    """Train every configured encoder backend and predict on the eval set.

    Returns, per tweet, the member predictions carrying both categorical and
    probabilistic views so either submission rule can consume them.
    """
    members_per_tweet: list[list[ModelPrediction]] = [[] for _ in eval_records]
    for i, encoder in enumerate(cfg.build_encoders(seed_offset=seed)):
        head = MultiTaskHead(encoder.dim, profile.num_labels, seed=seed + 101 * (i + 1))
        training = replace(cfg.training, seed=cfg.training.seed + seed + i)
        fit_encoder(encoder, head, train, validation, training, profile)
        for j, triage in enumerate(
            predict_encoder(encoder, head, eval_records, profile, tau=cfg.tau)
        ):
            members_per_tweet[j].append(
                ModelPrediction(
                    tweet_id=triage.tweet_id,
                    it_labels=triage.it_labels,
                    it_probs=triage.prediction.it_probs,
                    priority_level=triage.level,
                    priority_score=triage.prediction.priority_score,
                )
            )
    return members_per_tweet


def run_preset(preset: RunPreset | str, train_path: str | Path,
               eval_path: str | Path, cfg: RunConfig, seed: int,
               out_path: str | Path, profile: TaskProfile | None = None,
               runtag: str | None = None) -> PresetResult:
    """Execute a preset end to end: train, predict, combine, emit, evaluate.

    The eval corpus is scored when it carries gold labels; otherwise only
    the run file is produced.
    """
    if isinstance(preset, str):
        try:
            preset = PRESETS[preset]
        except KeyError:
            raise ValidationError(
                f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}"
            ) from None
    profile = profile or cfg.resolve_profile(preset.task_target)
    runtag = runtag or preset.name

    train_records = load_corpus(train_path, profile, mode="labeled")
    train_records = _filter_covid(train_records, cfg, preset.include_covid)
    if not train_records:
        raise ValidationError("no training records left after the COVID filter")
    eval_records = load_corpus(eval_path, profile, mode="unlabeled")
    has_gold = all(r.it_labels and r.priority is not None for r in eval_records)

    train, validation = split_train_validation(
        train_records, SplitConfig(validation_fraction=0.10, seed=seed)
    )

    parse_failures = 0
    combined: list[CombinedPrediction]
    if preset.scenario == "encoders":
        members = _encoder_members(train, validation, eval_records, profile, cfg, seed)
        combined = [
            combine(member_preds, preset.submission_type, profile)
            for member_preds in members
        ]
    else:
        generator = cfg.build_generator()
        if generator is None:  # echo-oracle replays gold eval targets
            if not has_gold:
                raise ValidationError(
                    "echo-oracle backend needs a labeled eval corpus"
                )
            generator = EchoOracleGenerator.from_records(eval_records, profile)
        else:
            pairs = make_corpus_pairs(train, profile)
            val_pairs = make_corpus_pairs(validation, profile) if validation else None
            training = replace(cfg.training, seed=cfg.training.seed + seed)
            fit_seq2seq(generator, pairs, training, val_pairs)
        diagnostics = ParseDiagnostics()
        triages = predict_seq2seq(generator, eval_records, profile, diagnostics)
        parse_failures = diagnostics.total
        combined = [
            finalize(
                ModelPrediction(
                    tweet_id=t.tweet_id,
                    it_labels=t.it_labels,
                    priority_level=t.level,
                ),
                "one-hot",
                profile,
            )
            for t in triages
        ]

    emit_run(combined, runtag, out_path)

    metrics = None
    if has_gold:
        gold = GoldSet.from_records(eval_records, profile)
        metrics = evaluate_run(load_run(out_path, profile), gold, profile)
    return PresetResult(
        preset=preset,
        run_path=Path(out_path),
        num_predicted=len(combined),
        metrics=metrics,
        parse_failures=parse_failures,
    )
