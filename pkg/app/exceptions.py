"""Custom exceptions and error handling for the violation detection lab.

Every error carries a user-facing message, a machine-readable error code and
a details dictionary. The CLI maps the two error families onto exit codes.
"""
import json
from typing import Any, Dict, Optional


class LabError(Exception):
    """Base class for lab errors with machine-readable codes."""

    exit_code = 3

    def __init__(self, message: str, error_code: str, details: Optional[Dict[str, Any]] = None):
        """
        Initialize lab error.

        Args:
            message: Human-readable error message
            error_code: Machine-readable error code
            details: Optional additional error details
        """
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert error to dictionary format for error documents.

        Returns:
            Dictionary with error information
        """
        return {
            "success": False,
            "error": {
                "code": self.error_code,
                "message": self.message,
                "details": self.details
            }
        }


class InputValidationError(LabError):
    """Invalid input, configuration or precondition (exit code 2)."""

    exit_code = 2


class PipelineError(LabError):
    """Failure while running an otherwise valid pipeline step (exit code 3)."""

    exit_code = 3


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

class ConfigError(InputValidationError):
    """Error raised when a configuration value is invalid."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, error_code="CONFIG_ERROR", details=details)


class UsageError(InputValidationError):
    """Error raised when the command line cannot be parsed."""

    def __init__(self, message: str, usage: str = ""):
        super().__init__(
            message=message,
            error_code="USAGE_ERROR",
            details={"usage": usage}
        )


class InvalidValue(InputValidationError):
    """Error raised when a service rejects an argument value."""

    def __init__(self, message: str, kind: str = "ValueError"):
        super().__init__(
            message=message,
            error_code="INVALID_VALUE",
            details={"type": kind}
        )


class ConfigInfeasible(PipelineError):
    """Error raised when the generator cannot satisfy a category after retries."""

    def __init__(self, category: str, trace_id: int, attempts: int, reason: str):
        """
        Initialize infeasible configuration error.

        Args:
            category: Category being generated
            trace_id: Trace that could not be built
            attempts: Number of attempts made
            reason: Error code of the last injection failure
        """
        super().__init__(
            message=(
                f"Could not build a {category} trace (trace {trace_id}) "
                f"after {attempts} attempts: {reason}"
            ),
            error_code="CONFIG_INFEASIBLE",
            details={
                "category": category,
                "trace_id": trace_id,
                "attempts": attempts,
                "reason": reason
            }
        )


# ---------------------------------------------------------------------------
# Trace generation / injection
# ---------------------------------------------------------------------------

class InjectionError(PipelineError):
    """Base class for violation injection failures."""


class NoInjectableKey(InjectionError):
    """Error raised when no key has a non-KeyGen operation to shift."""

    def __init__(self, trace_id: int):
        super().__init__(
            message=f"Trace {trace_id} has no key with a non-KeyGen operation",
            error_code="NO_INJECTABLE_KEY",
            details={"trace_id": trace_id}
        )


class NothingToDowngrade(InjectionError):
    """Error raised when a trace uses no strong algorithm."""

    def __init__(self, trace_id: int):
        super().__init__(
            message=f"Trace {trace_id} already uses only weak algorithms",
            error_code="NOTHING_TO_DOWNGRADE",
            details={"trace_id": trace_id}
        )


class NoValidSharedKey(InjectionError):
    """Error raised when no donor key stays valid across the recipient's usage."""

    def __init__(self, donor_trace_id: int, recipient_trace_id: int):
        super().__init__(
            message=(
                f"No key of trace {donor_trace_id} remains valid across the "
                f"usage window of trace {recipient_trace_id}"
            ),
            error_code="NO_VALID_SHARED_KEY",
            details={
                "donor_trace_id": donor_trace_id,
                "recipient_trace_id": recipient_trace_id
            }
        )


# ---------------------------------------------------------------------------
# Annotation
# ---------------------------------------------------------------------------

class IndexMismatch(PipelineError):
    """Error raised when a trace references a key missing from the key index."""

    def __init__(self, trace_id: int, key_id: int):
        super().__init__(
            message=f"Key {key_id} of trace {trace_id} is not present in the key index",
            error_code="INDEX_MISMATCH",
            details={"trace_id": trace_id, "key_id": key_id}
        )


class UnknownAlgorithm(InputValidationError):
    """Error raised when an algorithm id has no declared strength."""

    def __init__(self, algorithm_id: int):
        super().__init__(
            message=f"Algorithm {algorithm_id} has no declared strength",
            error_code="UNKNOWN_ALGORITHM",
            details={"algorithm_id": algorithm_id}
        )


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

class SchemaError(InputValidationError):
    """Error raised when an input table lacks required columns."""

    def __init__(self, source: str, missing_columns: list):
        super().__init__(
            message=f"{source} is missing required columns: {', '.join(missing_columns)}",
            error_code="SCHEMA_ERROR",
            details={"source": source, "missing_columns": list(missing_columns)}
        )


class EmptyDataset(InputValidationError):
    """Error raised when no usable rows remain."""

    def __init__(self, source: str):
        super().__init__(
            message=f"{source} contains no usable rows",
            error_code="EMPTY_DATASET",
            details={"source": source}
        )


class SplitError(InputValidationError):
    """Error raised when a table cannot be partitioned."""

    def __init__(self, n_rows: int, reason: str):
        super().__init__(
            message=f"Cannot split {n_rows} rows: {reason}",
            error_code="SPLIT_ERROR",
            details={"n_rows": n_rows, "reason": reason}
        )


class DegenerateFeature(InputValidationError):
    """Error raised when a feature has zero variance on the training partition."""

    def __init__(self, column: str):
        super().__init__(
            message=f"Feature '{column}' has zero variance on the training partition",
            error_code="DEGENERATE_FEATURE",
            details={"column": column}
        )


# ---------------------------------------------------------------------------
# Neural engine / models
# ---------------------------------------------------------------------------

class ShapeError(InputValidationError):
    """Error raised when array shapes do not match the declared topology."""

    def __init__(self, message: str, expected: Any = None, actual: Any = None):
        super().__init__(
            message=message,
            error_code="SHAPE_ERROR",
            details={"expected": expected, "actual": actual}
        )


class TapeError(PipelineError):
    """Error raised when backward is called with a tape from stale parameters."""

    def __init__(self, tape_version: int, net_version: int):
        super().__init__(
            message=(
                f"Activation tape was recorded at parameter version {tape_version}, "
                f"network is at version {net_version}"
            ),
            error_code="STALE_TAPE",
            details={"tape_version": tape_version, "net_version": net_version}
        )


class DivergedError(PipelineError):
    """Error raised when training produces a non-finite loss."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(
            message=f"Training diverged (non-finite loss) at epoch {epoch}, batch {batch}",
            error_code="DIVERGED",
            details={"epoch": epoch, "batch": batch}
        )


class GradientCheckError(PipelineError):
    """Error raised when a gradient check compares no coordinate."""

    def __init__(self, n_sampled: int, n_skipped: int):
        super().__init__(
            message=f"Gradient check compared no coordinate: {n_skipped} of {n_sampled} sampled sit at ReLU kinks",
            error_code="NO_CHECKED_COORDINATES",
            details={"n_sampled": n_sampled, "n_skipped": n_skipped}
        )


class CollapseError(PipelineError):
    """Error raised when a Deep SVDD embedding collapses to a point."""

    def __init__(self, variance: float):
        super().__init__(
            message=f"Deep SVDD embedding collapsed (variance {variance:.3e})",
            error_code="EMBEDDING_COLLAPSE",
            details={"variance": variance}
        )


class NormalsOnlyViolation(InputValidationError):
    """Error raised when an unsupervised trainer receives positive labels."""

    def __init__(self, model_kind: str, n_positive: int):
        super().__init__(
            message=f"{model_kind} must be trained on normal samples only ({n_positive} positives given)",
            error_code="NORMALS_ONLY",
            details={"model_kind": model_kind, "n_positive": n_positive}
        )


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

class UndefinedMetric(InputValidationError):
    """Error raised when a metric needs both classes but only one is present."""

    def __init__(self, metric: str, n_pos: int, n_neg: int):
        super().__init__(
            message=f"{metric} is undefined with {n_pos} positives and {n_neg} negatives",
            error_code="UNDEFINED_METRIC",
            details={"metric": metric, "n_pos": n_pos, "n_neg": n_neg}
        )


# ---------------------------------------------------------------------------
# Runs and manifests
# ---------------------------------------------------------------------------

class MissingInput(InputValidationError):
    """Error raised when a referenced input file does not exist."""

    def __init__(self, path: str):
        super().__init__(
            message=f"Input not found: {path}",
            error_code="MISSING_INPUT",
            details={"path": path}
        )


class ReplayMismatch(PipelineError):
    """Error raised when a replayed run does not reproduce the recorded outputs."""

    def __init__(self, manifest: str, mismatched: list):
        super().__init__(
            message=f"Replay of {manifest} produced {len(mismatched)} differing output(s)",
            error_code="REPLAY_MISMATCH",
            details={"manifest": manifest, "mismatched": list(mismatched)}
        )


def format_error_for_cli(error: LabError) -> str:
    """
    Format a lab error as the JSON document written to stderr.

    Args:
        error: Error to format

    Returns:
        Compact JSON string
    """
    return json.dumps(error.to_dict(), sort_keys=True, default=str)
