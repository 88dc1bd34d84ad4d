"""Unit tests for flow ingestion, splitting, labeling, standardization and shifts."""
import numpy as np
import pandas as pd
import pytest

from app.exceptions import ConfigError, DegenerateFeature, EmptyDataset, SchemaError, ShapeError, SplitError
from app.models.flow import FLOW_FEATURES, FeatureMatrix
from app.services.dataset_service import (
    DatasetService,
    class_balance,
    ks_two_sample,
    random_split,
    read_feature_csv,
    scaler_report,
    split_sizes,
    standardize_threshold,
    write_feature_csv,
)
from app.services.features import featurize_corpus


def raw_flows(n=5, **overrides):
    """A small raw flow frame with every required column."""
    data = {
        "duration": np.linspace(100.0, 500.0, n),
        "fwd_packets": np.arange(1.0, n + 1.0),
        "bwd_packets": np.arange(n, 0.0, -1.0),
        "fwd_mean_pkt_size": np.full(n, 60.0) + np.arange(n),
        "bwd_mean_pkt_size": np.full(n, 80.0) - np.arange(n),
        "bytes_per_sec": np.linspace(1e3, 5e3, n),
        "pkts_per_sec": np.linspace(10.0, 50.0, n),
        "label": ["BENIGN"] * (n - 1) + ["DDoS"],
    }
    data.update(overrides)
    return pd.DataFrame(data)


class TestSplitSizes:
    """Test partition sizes."""

    def test_ten_rows(self):
        assert split_sizes(10, (0.6, 0.2, 0.2)) == [6, 2, 2]

    def test_large_table_remainder_goes_last(self):
        assert split_sizes(2_827_876, (0.6, 0.2, 0.2)) == [1_696_725, 565_575, 565_576]

    def test_too_few_rows(self):
        with pytest.raises(SplitError):
            split_sizes(2, (0.6, 0.2, 0.2))

    def test_bad_fractions(self):
        with pytest.raises(SplitError):
            split_sizes(100, (0.5, 0.2, 0.2))


class TestIngest:
    """Test flow cleaning."""

    def test_non_finite_rows_dropped(self):
        frame = raw_flows(duration=[100.0, np.inf, 300.0, 400.0, 500.0])

        table = DatasetService().ingest_frame(frame)

        assert len(table) == 4
        assert table.n_dropped == 1
        assert np.all(np.isfinite(table.durations))

    def test_missing_duration_column(self):
        frame = raw_flows().drop(columns=["duration"])

        with pytest.raises(SchemaError) as exc_info:
            DatasetService().ingest_frame(frame, source="flows.csv")

        assert exc_info.value.details["missing_columns"] == ["duration"]
        assert exc_info.value.exit_code == 2

    def test_cic_column_names(self):
        """Test that the public export's headers, with stray spaces, are recognized."""
        frame = raw_flows().rename(columns={
            "duration": " Flow Duration",
            "fwd_packets": " Total Fwd Packets",
            "bwd_packets": " Total Backward Packets",
            "fwd_mean_pkt_size": " Fwd Packet Length Mean",
            "bwd_mean_pkt_size": " Bwd Packet Length Mean",
            "bytes_per_sec": "Flow Bytes/s",
            "pkts_per_sec": " Flow Packets/s",
            "label": " Label",
        })

        table = DatasetService().ingest_frame(frame)

        assert list(table.frame.columns) == [*FLOW_FEATURES, "label"]
        assert int(table.benign_mask.sum()) == 4

    def test_all_rows_invalid(self):
        frame = raw_flows(duration=[np.nan] * 5)

        with pytest.raises(EmptyDataset):
            DatasetService().ingest_frame(frame)

    def test_ingest_csv(self, tmp_path):
        path = tmp_path / "flows.csv"
        raw_flows().to_csv(path, index=False)

        table = DatasetService().ingest_flows(path)

        assert len(table) == 5
        assert table.source == str(path)


class TestLifetimeLabeling:
    """Test the percentile threshold and labels."""

    def test_nearest_rank_percentile(self):
        assert DatasetService().derive_lifetime_threshold(np.arange(1, 101)) == 95.0

    def test_labels_are_strict(self):
        labels = DatasetService().label_lifetime([94.0, 95.0, 95.5], 95.0)

        assert labels.tolist() == [0, 0, 1]

    def test_no_durations(self):
        with pytest.raises(EmptyDataset):
            DatasetService().derive_lifetime_threshold([])

    def test_non_finite_threshold(self):
        with pytest.raises(ConfigError):
            DatasetService().label_lifetime([1.0], float("nan"))


class TestTemporalSplit:
    """Test the chronological split."""

    def test_order_preserved(self, flow_table):
        train, val, test = DatasetService().temporal_split(flow_table)

        assert (len(train), len(val), len(test)) == (6000, 2000, 2000)
        assert train.durations[0] == flow_table.durations[0]
        assert test.durations[-1] == flow_table.durations[-1]
        assert val.durations[0] == flow_table.durations[6000]

    def test_threshold_uses_benign_training_rows_only(self, flow_table):
        service = DatasetService()
        matrices, parts, manifest = service.prepare_flow_splits(flow_table)

        train = parts["train"]
        expected = service.derive_lifetime_threshold(train.durations[train.benign_mask])
        assert manifest.lifetime_threshold == expected
        assert manifest.boundaries == [6000, 8000]
        assert manifest.standardized_threshold == pytest.approx(
            standardize_threshold(expected, manifest.scaler)
        )
        assert matrices["test"].labels["lifetime"].tolist() == (parts["test"].durations > expected).astype(int).tolist()

    def test_train_rows_standardized(self, flow_table):
        matrices, _, _ = DatasetService().prepare_flow_splits(flow_table)

        values = matrices["train"].values
        np.testing.assert_allclose(values.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(values.std(axis=0), 1.0, atol=1e-9)


class TestStandardization:
    """Test the training-only scaler."""

    def test_constant_column_rejected(self):
        matrix = FeatureMatrix(values=np.column_stack([np.arange(5.0), np.ones(5)]), row_ids=np.arange(5),
                               columns=["a", "b"])

        with pytest.raises(DegenerateFeature) as exc_info:
            DatasetService().fit_scaler(matrix)

        assert exc_info.value.details["column"] == "b"

    def test_column_mismatch(self):
        service = DatasetService()
        train = FeatureMatrix(values=np.arange(10.0).reshape(5, 2), row_ids=np.arange(5), columns=["a", "b"])
        other = FeatureMatrix(values=np.arange(10.0).reshape(5, 2), row_ids=np.arange(5), columns=["b", "a"])

        with pytest.raises(ShapeError):
            service.apply_scaler(service.fit_scaler(train), other)

    def test_scaler_ignores_test_rows(self, small_corpus):
        """Test that changing test rows never changes the fitted statistics."""
        _, corpus, labeled = small_corpus
        matrix = featurize_corpus(corpus, labeled.labels)
        service = DatasetService()

        _, manifest = service.prepare_trace_splits(matrix, seed=3)
        train_index, _, test_index = random_split(len(matrix), seed=3)
        values = matrix.values.copy()
        values[test_index] *= 1000.0
        _, tampered = service.prepare_trace_splits(matrix.with_values(values), seed=3)

        assert manifest.scaler == tampered.scaler
        assert len(train_index) == manifest.sizes[0]

    def test_scaler_report_on_training_split(self, flow_table):
        matrices, _, _ = DatasetService().prepare_flow_splits(flow_table)

        report = scaler_report(matrices)

        for column in FLOW_FEATURES:
            assert report["train"][column]["mean"] == pytest.approx(0.0, abs=1e-9)
            assert report["train"][column]["std"] == pytest.approx(1.0, abs=1e-6)
        assert set(report) == {"train", "val", "test"}

    def test_scaler_report_empty_split(self):
        empty = FeatureMatrix(values=np.empty((0, 2)), row_ids=np.arange(0), columns=["a", "b"])

        assert scaler_report({"test": empty}) == {"test": {}}


class TestClassBalance:
    """Test per-split positive counts."""

    def test_counts_and_rates(self):
        balance = class_balance({
            "train": {"reuse": np.array([1, 0, 0, 1]), "lifetime": np.zeros(4)},
            "test": {"reuse": np.array([], dtype=int)},
        })

        assert balance["train"]["reuse"] == {"n": 4, "n_pos": 2, "rate": 0.5}
        assert balance["train"]["lifetime"]["n_pos"] == 0
        assert balance["test"]["reuse"] == {"n": 0, "n_pos": 0, "rate": 0.0}


class TestTraceSplits:
    """Test the synthetic-path split."""

    def test_random_split_partitions_rows(self):
        parts = random_split(100, seed=7)

        assert [len(part) for part in parts] == [80, 10, 10]
        assert sorted(np.concatenate(parts).tolist()) == list(range(100))

    def test_random_split_seeded(self):
        first = random_split(50, seed=1)
        second = random_split(50, seed=1)
        third = random_split(50, seed=2)

        assert all(np.array_equal(a, b) for a, b in zip(first, second))
        assert not all(np.array_equal(a, b) for a, b in zip(first, third))

    def test_temporal_mode_is_contiguous(self, small_corpus):
        _, corpus, labeled = small_corpus
        matrix = featurize_corpus(corpus, labeled.labels)

        matrices, manifest = DatasetService().prepare_trace_splits(matrix, mode="temporal")

        assert manifest.mode == "temporal"
        assert matrices["train"].row_ids.tolist() == list(range(manifest.sizes[0]))

    def test_unknown_mode(self, small_corpus):
        _, corpus, labeled = small_corpus

        with pytest.raises(ConfigError):
            DatasetService().prepare_trace_splits(featurize_corpus(corpus, labeled.labels), mode="shuffled")


class TestShift:
    """Test the duration shift and the KS statistic."""

    def test_labels_and_other_columns_untouched(self, flow_table):
        shifted = DatasetService().scale_duration_shift(flow_table, 2.0)

        np.testing.assert_allclose(shifted.durations, 2.0 * flow_table.durations)
        assert shifted.frame["label"].tolist() == flow_table.frame["label"].tolist()
        pd.testing.assert_series_equal(shifted.frame["fwd_packets"], flow_table.frame["fwd_packets"])

    def test_non_positive_factor(self, flow_table):
        with pytest.raises(ConfigError):
            DatasetService().scale_duration_shift(flow_table, 0.0)

    def test_doubling_and_tripling(self, flow_table):
        """Test that the shifts are detectable and grow with the factor."""
        service = DatasetService()
        base = flow_table.durations

        statistic_2, p_2 = ks_two_sample(base, service.scale_duration_shift(flow_table, 2.0).durations)
        statistic_3, _ = ks_two_sample(base, service.scale_duration_shift(flow_table, 3.0).durations)

        assert statistic_2 > 0.2
        assert p_2 < 0.01
        assert statistic_3 > statistic_2

    def test_identical_samples(self):
        statistic, p_value = ks_two_sample([1.0, 2.0, 3.0], [3.0, 2.0, 1.0])

        assert statistic == 0.0
        assert p_value == 1.0

    def test_disjoint_samples(self):
        statistic, _ = ks_two_sample([1.0, 2.0], [5.0, 6.0, 7.0])

        assert statistic == 1.0

    def test_empty_sample(self):
        with pytest.raises(EmptyDataset):
            ks_two_sample([], [1.0])


class TestFeatureCsv:
    """Test feature CSV files."""

    def test_write_then_read(self, tmp_path, small_corpus):
        _, corpus, labeled = small_corpus
        matrix = featurize_corpus(corpus, labeled.labels)

        restored = read_feature_csv(write_feature_csv(matrix, tmp_path / "features.csv"))

        np.testing.assert_array_equal(restored.values, matrix.values)
        assert restored.columns == matrix.columns
        assert restored.labels["lifetime"].tolist() == matrix.labels["lifetime"].tolist()

    def test_missing_row_id(self, tmp_path):
        path = tmp_path / "bad.csv"
        pd.DataFrame({"a": [1.0]}).to_csv(path, index=False)

        with pytest.raises(SchemaError):
            read_feature_csv(path)


class TestSyntheticFlows:
    """Test the flow-like fixture."""

    def test_deterministic(self):
        service = DatasetService()

        pd.testing.assert_frame_equal(service.synthesize_flows(200, seed=5).frame,
                                      service.synthesize_flows(200, seed=5).frame)

    def test_columns_and_finiteness(self, flow_table):
        assert len(flow_table) == 10_000
        assert np.all(np.isfinite(flow_table.frame[list(FLOW_FEATURES)].to_numpy()))
        assert 0.7 < flow_table.benign_mask.mean() < 0.9

    def test_needs_rows(self):
        with pytest.raises(ConfigError):
            DatasetService().synthesize_flows(0, seed=1)
