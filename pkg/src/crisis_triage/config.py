"""Declarative run configuration.

A JSON document (path given on the command line or through the
CRISIS_TRIAGE_CONFIG environment variable) with nested sections:

    {
      "training": { ... TrainingConfig fields ... },
      "encoder_backends": [{"type": "toy-hash", "dim": 64, "buckets": 1024, "seed": 13}],
      "seq2seq_backend": {"type": "toy", "buckets": 512, "seed": 7},
      "verbalizer": "path/to/overrides.json",
      "profile_path": "path/to/profile.json",
      "covid_events": ["event-id", ...],
      "tau": 0.5
    }

Every key is optional; defaults give two toy encoder backends and the toy
seq2seq backend. The verbalizer file maps label ids to replacement phrases.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import TaskProfile, builtin_profile, load_profile
from .encoder import PooledEncoder, ToyHashEncoder
from .errors import ValidationError
from .seq2seq import ConditionalGenerator, ToySeq2SeqGenerator
from .training import TrainingConfig

CONFIG_ENV_VAR = "CRISIS_TRIAGE_CONFIG"

DEFAULT_ENCODER_BACKENDS = (
    {"type": "toy-hash", "dim": 64, "buckets": 1024, "seed": 13},
    {"type": "toy-hash", "dim": 48, "buckets": 2048, "seed": 29},
)
DEFAULT_SEQ2SEQ_BACKEND = {"type": "toy", "buckets": 512, "seed": 7}


@dataclass
class RunConfig:
    training: TrainingConfig = field(default_factory=TrainingConfig)
    encoder_backends: list[dict] = field(
        default_factory=lambda: [dict(b) for b in DEFAULT_ENCODER_BACKENDS]
    )
    seq2seq_backend: dict = field(default_factory=lambda: dict(DEFAULT_SEQ2SEQ_BACKEND))
    verbalizer_path: str | None = None
    profile_path: str | None = None
    covid_events: list[str] | None = None
    tau: float = 0.5

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {
            "training", "encoder_backends", "seq2seq_backend", "verbalizer",
            "profile_path", "covid_events", "tau",
        }
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        if "training" in doc:
            cfg.training = TrainingConfig.from_dict(doc["training"])
        if "encoder_backends" in doc:
            backends = doc["encoder_backends"]
            if not isinstance(backends, list) or not backends:
                raise ValidationError("encoder_backends must be a non-empty list")
            cfg.encoder_backends = [dict(b) for b in backends]
        if "seq2seq_backend" in doc:
            cfg.seq2seq_backend = dict(doc["seq2seq_backend"])
        if "verbalizer" in doc:
            cfg.verbalizer_path = doc["verbalizer"]
        if "profile_path" in doc:
            cfg.profile_path = doc["profile_path"]
        if "covid_events" in doc:
            cfg.covid_events = list(doc["covid_events"])
        if "tau" in doc:
            cfg.tau = float(doc["tau"])
            if not (0.0 <= cfg.tau < 1.0):
                raise ValidationError(f"tau {cfg.tau!r} outside [0, 1)")
        return cfg

    def resolve_profile(self, task_id: str | None) -> TaskProfile:
        """Profile from the config's profile_path, or the named builtin,
        with verbalizer overrides applied."""
        if self.profile_path:
            profile = load_profile(self.profile_path)
        elif task_id:
            profile = builtin_profile(task_id)
        else:
            raise ValidationError("no profile: pass --profile or set profile_path")
        if self.verbalizer_path:
            with open(self.verbalizer_path, encoding="utf-8") as fh:
                overrides = json.load(fh)
            if not isinstance(overrides, dict):
                raise ValidationError("verbalizer file must be a JSON object")
            profile = profile.with_verbalizations(overrides)
        return profile

    def build_encoders(self, seed_offset: int = 0) -> list[PooledEncoder]:
        return [
            build_encoder_backend(spec, seed_offset=seed_offset + i)
            for i, spec in enumerate(self.encoder_backends)
        ]

    def build_generator(self) -> ConditionalGenerator | None:
        """Instantiate the seq2seq backend; None means echo-oracle, which
        needs gold eval records and is built by the preset runner."""
        spec = dict(self.seq2seq_backend)
        kind = spec.pop("type", "toy")
        if kind == "toy":
            return ToySeq2SeqGenerator(**spec)
        if kind == "echo-oracle":
            return None
        raise ValidationError(f"unknown seq2seq backend type {kind!r}")

    def is_covid_event(self, event_id: str) -> bool:
        if self.covid_events is not None:
            return event_id in self.covid_events
        return "covid" in event_id.lower()


def build_encoder_backend(spec: dict, seed_offset: int = 0) -> PooledEncoder:
    spec = dict(spec)
    kind = spec.pop("type", "toy-hash")
    if kind != "toy-hash":
        raise ValidationError(f"unknown encoder backend type {kind!r}")
    spec.setdefault("seed", 13)
    spec["seed"] = spec["seed"] + seed_offset
    return ToyHashEncoder(**spec)


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load the config file from path, the environment, or defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"config file {path} must contain a JSON object")
    return RunConfig.from_dict(doc)
