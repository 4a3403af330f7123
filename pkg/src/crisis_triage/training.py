"""Training configuration, schedule, and per-epoch logging shared by both
fine-tuning scenarios."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ValidationError


@dataclass(frozen=True)
class TrainingConfig:
    """Hyper-parameters: batch 32, lr 5e-5, linear warm-up ratio 0.1,
    maximum input length 256 tokens."""

    batch_size: int = 32
    learning_rate: float = 5e-5
    warmup_ratio: float = 0.1
    max_input_length: int = 256
    epochs: int = 10
    w_it: float = 1.0
    w_pri: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if not (0.0 <= self.warmup_ratio <= 1.0):
            raise ValidationError("warmup_ratio must be in [0, 1]")
        if self.max_input_length < 1:
            raise ValidationError("max_input_length must be >= 1")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.w_it < 0 or self.w_pri < 0:
            raise ValidationError("loss weights must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**doc)


def lr_multiplier(step: int, total_steps: int, warmup_ratio: float) -> float:
    """Linear warm-up to 1.0 then linear decay to 0 at the final step."""
    warmup_steps = max(1, round(warmup_ratio * total_steps))
    if step < warmup_steps:
        return (step + 1) / warmup_steps
    remaining = max(1, total_steps - warmup_steps)
    return max(0.0, (total_steps - step) / remaining)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_it_macro_f1: float
    val_pri_accuracy: float


@dataclass
class TrainingLog:
    """Per-epoch training record plus the index of the restored checkpoint."""

    rows: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def initial_train_loss(self) -> float:
        return self.rows[0].train_loss

    @property
    def final_train_loss(self) -> float:
        return self.rows[-1].train_loss

    def best_row(self) -> EpochStats:
        for row in self.rows:
            if row.epoch == self.best_epoch:
                return row
        raise ValidationError("training log has no best epoch recorded")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["epoch", "train_loss", "val_loss", "val_it_macro_f1", "val_pri_accuracy"]
            )
            for row in self.rows:
                writer.writerow(
                    [
                        row.epoch,
                        repr(row.train_loss),
                        _csv_float(row.val_loss),
                        _csv_float(row.val_it_macro_f1),
                        _csv_float(row.val_pri_accuracy),
                    ]
                )


def _csv_float(value: float) -> str:
    return "" if math.isnan(value) else repr(value)
