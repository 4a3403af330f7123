"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 2, OSError -> 3,
CoverageError -> 4.
"""


class CrisisTriageError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(CrisisTriageError):
    """Bad input data, config, or contract violation."""


class CorpusFormatError(ValidationError):
    """Malformed corpus or run file line."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class UnknownLabelError(ValidationError):
    """A label id not present in the active task profile."""

    def __init__(self, label_id, task_id):
        super().__init__(f"unknown label {label_id!r} under profile {task_id!r}")
        self.label_id = label_id


class OutOfRangeError(ValidationError):
    """Numeric value outside its documented range."""


class EmptyLabelSetError(ValidationError):
    """Labeled record with no information-type labels in strict mode."""


class MissingViewError(ValidationError):
    """Ensemble member lacks the prediction view the mode requires."""


class CoverageError(CrisisTriageError):
    """Run does not cover the gold tweet ids (or a score is missing)."""


class EmptyRestrictionError(CoverageError):
    """A metric restriction selected no tweets."""


class UnsupportedBackendError(CrisisTriageError):
    """Operation not supported by the selected model backend."""


class TrainingError(CrisisTriageError):
    """Training could not start or diverged (non-finite loss)."""
