"""Unit tests for trace featurization."""
import numpy as np
import pytest

from app.models.trace import OpType
from app.services.features import TRACE_FEATURES, featurize_corpus, featurize_trace
from tests.factories import make_trace, simple_trace


def feature(vector, name):
    return vector[TRACE_FEATURES.index(name)]


class TestFeaturizeTrace:
    """Test the 17 trace aggregates."""

    def test_width(self):
        assert len(TRACE_FEATURES) == 17
        assert featurize_trace(simple_trace()).shape == (17,)

    def test_single_operation(self):
        """Test that a one-operation trace has zero gap and spread features."""
        trace = make_trace(0, [(2.0, OpType.KEYGEN, 42, 101)], {42: (2.0, 30.0)})

        vector = featurize_trace(trace)

        assert feature(vector, "n_ops") == 1
        assert feature(vector, "n_keygen") == 1
        assert feature(vector, "frac_weak_algorithm_ops") == 1.0
        assert feature(vector, "std_op_duration") == 0.0
        assert feature(vector, "mean_inter_arrival") == 0.0
        assert feature(vector, "std_inter_arrival") == 0.0
        assert feature(vector, "trace_time_span") == 0.0
        assert feature(vector, "min_numeric_key_id") == 42

    def test_hand_computed_trace(self):
        trace = make_trace(
            0,
            [
                (0.0, OpType.KEYGEN, 9, 1),
                (1.0, OpType.ENCRYPT, 9, 1),
                (3.0, OpType.KEYGEN, 4, 102),
                (6.0, OpType.SIGN, 4, 102),
            ],
            {9: (0.0, 20.0), 4: (3.0, 40.0)},
        )

        vector = featurize_trace(trace)

        assert feature(vector, "n_ops") == 4
        assert feature(vector, "n_unique_keys") == 2
        assert feature(vector, "n_keygen") == 2
        assert feature(vector, "n_encrypt") == 1
        assert feature(vector, "n_decrypt") == 0
        assert feature(vector, "n_sign") == 1
        assert feature(vector, "n_verify") == 0
        assert feature(vector, "n_unique_algorithms") == 2
        assert feature(vector, "frac_weak_algorithm_ops") == 0.5
        assert feature(vector, "mean_inter_arrival") == pytest.approx(2.0)
        assert feature(vector, "std_inter_arrival") == pytest.approx(np.std([1.0, 2.0, 3.0]))
        assert feature(vector, "trace_time_span") == 6.0
        assert feature(vector, "min_key_lifetime") == 20.0
        assert feature(vector, "mean_key_lifetime") == 30.0
        assert feature(vector, "min_numeric_key_id") == 4

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            featurize_trace(make_trace(0, [], {}))


class TestFeaturizeCorpus:
    """Test corpus-level feature matrices."""

    def test_rows_and_labels(self, small_corpus):
        _, corpus, labeled = small_corpus

        matrix = featurize_corpus(corpus, labeled.labels)

        assert matrix.values.shape == (len(corpus), 17)
        assert list(matrix.row_ids) == [trace.trace_id for trace in corpus]
        assert sorted(matrix.labels) == ["downgrade", "lifetime", "reuse"]
        assert matrix.labels["reuse"].tolist() == [int(labels.reuse) for labels in labeled.labels]
        assert matrix.is_finite()

    def test_downgraded_traces_are_fully_weak(self, small_corpus):
        _, corpus, labeled = small_corpus

        matrix = featurize_corpus(corpus, labeled.labels)
        weak = matrix.column("frac_weak_algorithm_ops")

        assert np.all(weak[matrix.labels["downgrade"] == 1] == 1.0)
        assert np.all(weak[matrix.labels["downgrade"] == 0] == 0.0)
