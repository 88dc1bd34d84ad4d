"""Unit tests for error handling in the violation detection lab.

This test module validates:
- Error documents (code, message, details)
- Exit codes of validation and pipeline failures
- The JSON written to stderr by the CLI
"""
import json

import pytest

from app.exceptions import (
    CollapseError,
    ConfigError,
    ConfigInfeasible,
    DegenerateFeature,
    DivergedError,
    EmptyDataset,
    GradientCheckError,
    IndexMismatch,
    InjectionError,
    InputValidationError,
    InvalidValue,
    LabError,
    MissingInput,
    NoInjectableKey,
    NormalsOnlyViolation,
    NothingToDowngrade,
    NoValidSharedKey,
    PipelineError,
    ReplayMismatch,
    SchemaError,
    ShapeError,
    SplitError,
    TapeError,
    UndefinedMetric,
    UnknownAlgorithm,
    UsageError,
    format_error_for_cli,
)


VALIDATION_ERRORS = [
    ConfigError("bad value"),
    UnknownAlgorithm(999),
    SchemaError("flows.csv", ["duration"]),
    EmptyDataset("flows.csv"),
    SplitError(2, "too few rows"),
    DegenerateFeature("n_decrypt"),
    ShapeError("wrong width", expected=(None, 7), actual=(3, 6)),
    NormalsOnlyViolation("iforest", 4),
    UndefinedMetric("ROC", 0, 10),
    MissingInput("runs/absent.csv"),
    UsageError("intact train: invalid choice", "usage: intact train"),
    InvalidValue("noise level must lie in [0, 0.5], got 0.9"),
]

PIPELINE_ERRORS = [
    ConfigInfeasible("Lifetime-only", 12, 16, "NO_INJECTABLE_KEY"),
    NoInjectableKey(3),
    NothingToDowngrade(3),
    NoValidSharedKey(4, 5),
    IndexMismatch(7, 42),
    TapeError(1, 2),
    DivergedError(epoch=2, batch=5),
    CollapseError(1e-12),
    ReplayMismatch("train_manifest.json", ["supervised_checkpoint.json"]),
    GradientCheckError(300, 300),
]


class TestErrorDocuments:
    """Test error-to-dict conversion."""

    @pytest.mark.parametrize("error", VALIDATION_ERRORS + PIPELINE_ERRORS, ids=lambda e: type(e).__name__)
    def test_document_shape(self, error):
        document = error.to_dict()

        assert document["success"] is False
        assert document["error"]["code"] == error.error_code
        assert document["error"]["message"] == error.message
        assert isinstance(document["error"]["details"], dict)

    def test_details_default_to_empty(self):
        assert LabError("boom", "BOOM").to_dict()["error"]["details"] == {}

    def test_diverged_details(self):
        error = DivergedError(epoch=3, batch=0)

        assert error.error_code == "DIVERGED"
        assert error.details == {"epoch": 3, "batch": 0}

    def test_stale_tape_code(self):
        assert TapeError(0, 1).error_code == "STALE_TAPE"

    def test_infeasible_details(self):
        error = ConfigInfeasible("Reuse-only", 5, 16, "NO_VALID_SHARED_KEY")

        assert error.details == {"category": "Reuse-only", "trace_id": 5, "attempts": 16,
                                 "reason": "NO_VALID_SHARED_KEY"}


class TestExitCodes:
    """Test the two failure families."""

    @pytest.mark.parametrize("error", VALIDATION_ERRORS, ids=lambda e: type(e).__name__)
    def test_validation_errors_exit_2(self, error):
        assert isinstance(error, InputValidationError)
        assert error.exit_code == 2

    @pytest.mark.parametrize("error", PIPELINE_ERRORS, ids=lambda e: type(e).__name__)
    def test_pipeline_errors_exit_3(self, error):
        assert isinstance(error, PipelineError)
        assert error.exit_code == 3

    def test_injection_errors_share_a_base(self):
        for error in (NoInjectableKey(1), NothingToDowngrade(1), NoValidSharedKey(1, 2)):
            assert isinstance(error, InjectionError)


class TestCliFormatting:
    """Test the stderr error document."""

    def test_compact_sorted_json(self):
        text = format_error_for_cli(SchemaError("flows.csv", ["duration", "label"]))

        document = json.loads(text)
        assert document["error"]["code"] == "SCHEMA_ERROR"
        assert document["error"]["details"]["missing_columns"] == ["duration", "label"]
        assert "\n" not in text
        assert text == json.dumps(document, sort_keys=True)

    def test_non_json_details_are_stringified(self):
        error = ShapeError("bad", expected=(None, 7), actual=object())

        document = json.loads(format_error_for_cli(error))

        assert isinstance(document["error"]["details"]["actual"], str)
