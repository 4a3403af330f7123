"""Command-line surface of the toolkit.

Subcommands: ingest, train-encoder, train-seq2seq, predict, ensemble, emit,
evaluate, report, preset. Exit codes: 0 success, 2 validation error,
3 I/O error, 4 coverage/metric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .corpus import SplitConfig, load_corpus, split_train_validation
from .encoder import (
    MultiTaskHead,
    fit as fit_encoder,
    load_checkpoint,
    predict as predict_encoder,
    save_checkpoint,
)
from .ensemble import ModelPrediction, combine
from .errors import CoverageError, CrisisTriageError, ValidationError
from .evaluation import GoldSet, evaluate_run
from .presets import PRESETS, run_preset
from .runio import (
    emit_run,
    load_combined,
    load_predictions,
    load_run,
    save_combined,
    save_predictions,
)
from .seq2seq import (
    ParseDiagnostics,
    fit_seq2seq,
    load_generator_checkpoint,
    make_corpus_pairs,
    predict_seq2seq,
    save_generator_checkpoint,
)


def _add_common(parser: argparse.ArgumentParser, profile: bool = True) -> None:
    if profile:
        parser.add_argument(
            "--profile", choices=["task1", "task2", "task3"], default=None,
            help="builtin task profile (overridden by profile_path in the config)",
        )
    parser.add_argument("--config", default=None, help="path to a JSON config file")
    parser.add_argument("--seed", type=int, default=0, help="master random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crisis-triage",
        description="Multi-task crisis-tweet triage toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus file")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--unlabeled", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-encoder", help="fine-tune one encoder backend")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--backend-index", type=int, default=0,
                   help="which configured encoder backend to train")
    p.add_argument("--log", default=None, help="training log CSV path")
    p.set_defaults(func=cmd_train_encoder)

    p = sub.add_parser("train-seq2seq", help="fine-tune the seq2seq backend")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--log", default=None, help="training log CSV path")
    p.set_defaults(func=cmd_train_seq2seq)

    p = sub.add_parser("predict", help="predict with a trained checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="predictions JSONL path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ensemble", help="combine prediction files")
    _add_common(p)
    p.add_argument("--mode", choices=["one-hot", "probability"], required=True)
    p.add_argument("--out", required=True, help="combined predictions JSONL path")
    p.add_argument("predictions", nargs="+", help="prediction JSONL files")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("emit", help="write a run file from combined predictions")
    _add_common(p)
    p.add_argument("--combined", required=True)
    p.add_argument("--runtag", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("evaluate", help="score a run file against gold labels")
    _add_common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--gold", required=True, help="labeled corpus JSONL")
    p.add_argument("--out", default=None, help="full report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="write the per-IT breakdown CSV")
    _add_common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True, help="per-IT CSV path")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("preset", help="execute one of the run1..run5 presets")
    _add_common(p)
    p.add_argument("--name", choices=sorted(PRESETS), required=True)
    p.add_argument("--train", required=True, help="labeled training corpus")
    p.add_argument("--eval", dest="eval_corpus", required=True,
                   help="corpus to predict on (scored when labeled)")
    p.add_argument("--out", required=True, help="run file path")
    p.add_argument("--report", default=None, help="metrics JSON path")
    p.add_argument("--per-it", default=None, help="per-IT CSV path")
    p.set_defaults(func=cmd_preset)

    return parser


def _resolve(args):
    cfg = load_config(args.config)
    profile = cfg.resolve_profile(getattr(args, "profile", None))
    return cfg, profile


def cmd_ingest(args) -> int:
    cfg, profile = _resolve(args)
    mode = "unlabeled" if args.unlabeled else "labeled"
    records = load_corpus(args.corpus, profile, mode=mode)
    events = {r.event_id for r in records}
    print(
        f"OK: {len(records)} records, {len(events)} events, "
        f"profile {profile.task_id} ({profile.num_labels} labels), mode {mode}"
    )
    return 0


def cmd_train_encoder(args) -> int:
    cfg, profile = _resolve(args)
    records = load_corpus(args.corpus, profile, mode="labeled")
    train, validation = split_train_validation(
        records, SplitConfig(validation_fraction=0.10, seed=args.seed)
    )
    backends = cfg.build_encoders(seed_offset=args.seed)
    if not (0 <= args.backend_index < len(backends)):
        raise ValidationError(
            f"backend index {args.backend_index} out of range; config has "
            f"{len(backends)} encoder backends"
        )
    encoder = backends[args.backend_index]
    head = MultiTaskHead(encoder.dim, profile.num_labels, seed=args.seed + 101)
    training = replace(cfg.training, seed=cfg.training.seed + args.seed)
    log = fit_encoder(encoder, head, train, validation, training, profile)
    save_checkpoint(args.out, encoder, head, profile, training)
    log.write_csv(args.log or Path(args.out) / "training_log.csv")
    best = log.best_row()
    print(
        f"trained {len(train)} records, validated {len(validation)}; "
        f"best epoch {log.best_epoch} val_loss {best.val_loss:.6f} "
        f"val_it_macro_f1 {best.val_it_macro_f1:.4f}"
    )
    return 0


def cmd_train_seq2seq(args) -> int:
    cfg, profile = _resolve(args)
    generator = cfg.build_generator()
    if generator is None:
        raise ValidationError("the echo-oracle backend cannot be trained")
    records = load_corpus(args.corpus, profile, mode="labeled")
    train, validation = split_train_validation(
        records, SplitConfig(validation_fraction=0.10, seed=args.seed)
    )
    pairs = make_corpus_pairs(train, profile)
    val_pairs = make_corpus_pairs(validation, profile) if validation else None
    training = replace(cfg.training, seed=cfg.training.seed + args.seed)
    log = fit_seq2seq(generator, pairs, training, val_pairs)
    save_generator_checkpoint(args.out, generator, profile, training)
    if args.log:
        log.write_csv(args.log)
    print(
        f"trained on {len(pairs)} pairs; best epoch {log.best_epoch} "
        f"val_loss {log.best_row().val_loss:.6f}"
    )
    return 0


def cmd_predict(args) -> int:
    cfg, profile = _resolve(args)
    records = load_corpus(args.corpus, profile, mode="unlabeled")
    manifest_path = Path(args.checkpoint) / "manifest.json"
    with open(manifest_path, encoding="utf-8") as fh:
        kind = json.load(fh).get("kind")
    preds: list[ModelPrediction] = []
    if kind == "encoder":
        encoder, head, _ = load_checkpoint(args.checkpoint)
        for triage in predict_encoder(encoder, head, records, profile, tau=cfg.tau):
            preds.append(
                ModelPrediction(
                    tweet_id=triage.tweet_id,
                    it_labels=triage.it_labels,
                    it_probs=triage.prediction.it_probs,
                    priority_level=triage.level,
                    priority_score=triage.prediction.priority_score,
                )
            )
    elif kind == "seq2seq":
        generator, _ = load_generator_checkpoint(args.checkpoint)
        diagnostics = ParseDiagnostics()
        for triage in predict_seq2seq(generator, records, profile, diagnostics):
            preds.append(
                ModelPrediction(
                    tweet_id=triage.tweet_id,
                    it_labels=triage.it_labels,
                    priority_level=triage.level,
                )
            )
        if diagnostics.total:
            print(f"warning: {diagnostics.total} parse failures", file=sys.stderr)
    else:
        raise ValidationError(f"unknown checkpoint kind {kind!r} in {manifest_path}")
    save_predictions(preds, args.out)
    print(f"predicted {len(preds)} tweets -> {args.out}")
    return 0


def cmd_ensemble(args) -> int:
    cfg, profile = _resolve(args)
    per_file = [load_predictions(path, profile) for path in args.predictions]
    by_tweet: dict[str, list[ModelPrediction]] = {}
    for preds in per_file:
        for pred in preds:
            by_tweet.setdefault(pred.tweet_id, []).append(pred)
    expected = len(per_file)
    short = sorted(tid for tid, members in by_tweet.items() if len(members) != expected)
    if short:
        raise ValidationError(
            f"tweets not covered by every prediction file: {', '.join(short[:10])}"
        )
    combined = [
        combine(members, args.mode, profile) for members in by_tweet.values()
    ]
    save_combined(combined, args.out)
    print(f"combined {expected} models over {len(combined)} tweets -> {args.out}")
    return 0


def cmd_emit(args) -> int:
    cfg, profile = _resolve(args)
    combined = load_combined(args.combined, profile)
    emit_run(combined, args.runtag, args.out)
    print(f"emitted {len(combined)} entries as {args.runtag!r} -> {args.out}")
    return 0


def _print_metrics(report) -> None:
    for name, value in report.scalar_metrics().items():
        print(f"{name:18s} {value:.4f}")


def cmd_evaluate(args) -> int:
    cfg, profile = _resolve(args)
    gold = GoldSet.from_records(load_corpus(args.gold, profile, mode="labeled"), profile)
    entries = load_run(args.run, profile)
    report = evaluate_run(entries, gold, profile)
    _print_metrics(report)
    if args.out:
        report.write_json(args.out)
    return 0


def cmd_report(args) -> int:
    cfg, profile = _resolve(args)
    gold = GoldSet.from_records(load_corpus(args.gold, profile, mode="labeled"), profile)
    entries = load_run(args.run, profile)
    report = evaluate_run(entries, gold, profile)
    report.write_per_it_csv(args.out)
    print(f"wrote per-IT breakdown for {len(report.per_it)} labels -> {args.out}")
    return 0


def cmd_preset(args) -> int:
    cfg = load_config(args.config)
    profile = None
    if args.profile or cfg.profile_path:
        profile = cfg.resolve_profile(args.profile)
    result = run_preset(
        args.name, args.train, args.eval_corpus, cfg, args.seed, args.out,
        profile=profile,
    )
    print(f"{result.preset.name}: {result.num_predicted} predictions -> {result.run_path}")
    if result.parse_failures:
        print(f"parse failures: {result.parse_failures}", file=sys.stderr)
    if result.metrics is not None:
        _print_metrics(result.metrics)
        if args.report:
            result.metrics.write_json(args.report)
        if args.per_it:
            result.metrics.write_per_it_csv(args.per_it)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CoverageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CrisisTriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
