"""
Integration tests for the full pipelines.

These run on the 21,000-trace desk corpus and the 10,000-row flow fixture
and take minutes; select them with ``-m integration``.
"""
import json

import numpy as np
import pytest

from app.cli import main
from app.detectors.registry import MODEL_KINDS, build_detector
from app.metrics import auroc, evaluate
from app.models.intent import ONE_HOT_ORDER, IntentSpec
from app.models.labels import Category
from app.models.run_config import IsolationForestConfig, TrainConfig
from app.services.dataset_service import DatasetService
from app.services.features import featurize_corpus
from app.services.manifest_service import sha256_file
from app.services.oracle_service import AnnotationConfig, OracleService
from app.services.tracegen_service import TraceGenService
from tests.conftest import TEST_SEED


pytestmark = pytest.mark.integration

INTENTS = [IntentSpec.one_hot(kind) for kind in ONE_HOT_ORDER]
UNSUPERVISED = ("iforest", "deep_svdd", "ae_nonlinear", "ae_linear")


@pytest.fixture(scope="module")
def desk_models(desk_corpus):
    """
    Every detector trained on the desk split, with its test AUROC per intent.
    """
    config, corpus, labeled = desk_corpus
    annotation = AnnotationConfig.from_gen_config(config)
    matrix = featurize_corpus(corpus, labeled.labels, annotation)
    service = DatasetService()
    matrices, manifest = service.prepare_trace_splits(matrix, seed=TEST_SEED)

    models, scores = {}, {}
    for kind in MODEL_KINDS:
        detector = build_detector(kind, TrainConfig(seed=TEST_SEED), IsolationForestConfig())
        detector.fit(matrices["train"], matrices["val"], INTENTS)
        models[kind] = detector
        test = matrices["test"]
        scores[kind] = {
            intent.kind.value: auroc(detector.score(test.values, intent), test.labels[intent.kind.value])
            for intent in INTENTS
        }
    return {"models": models, "auroc": scores, "scaler": manifest.scaler, "config": config}


class TestGeneratorOracleSoundness:
    """Test the annotated desk corpus."""

    def test_every_injection_flagged(self, desk_corpus):
        config, _, labeled = desk_corpus
        oracle = OracleService(AnnotationConfig.from_gen_config(config))

        report = oracle.agreement_report(labeled)

        assert report["missed_injections"] == 0

    def test_normal_traces_clean(self, desk_corpus):
        _, corpus, labeled = desk_corpus

        normal = [labels for trace, labels in labeled if trace.category is Category.NORMAL]
        clean = sum(1 for labels in normal if not any(labels.as_tuple()))

        assert clean >= 0.99 * len(normal)

    def test_category_counts_exact(self, desk_corpus):
        config, corpus, _ = desk_corpus

        counts = {category: 0 for category in Category}
        for trace in corpus:
            counts[trace.category] += 1

        assert counts == config.category_counts
        assert len(corpus) == 21_000


class TestDeskDetection:
    """Test detection quality on the desk corpus."""

    @pytest.mark.parametrize("kind", ["supervised", "intact"])
    def test_downgrade_separable(self, desk_models, kind):
        assert desk_models["auroc"][kind]["downgrade"] >= 0.99

    def test_lifetime_intent(self, desk_models):
        assert desk_models["auroc"]["intact"]["lifetime"] >= 0.93

    def test_reuse_beats_unsupervised(self, desk_models):
        best_unsupervised = max(desk_models["auroc"][kind]["reuse"] for kind in UNSUPERVISED)

        assert desk_models["auroc"]["intact"]["reuse"] >= best_unsupervised + 0.05

    def test_intact_tracks_supervised(self, desk_models):
        for intent in INTENTS:
            key = intent.kind.value
            assert abs(desk_models["auroc"]["intact"][key] - desk_models["auroc"]["supervised"][key]) <= 0.03, key

    def test_all_normal_shift_is_undefined(self, desk_models):
        """Test that every model evaluates an all-normal shift corpus without failing."""
        config = desk_models["config"]
        annotation = AnnotationConfig.from_gen_config(config)
        corpus = TraceGenService(config).generate_shift_corpus(3.0, 1_000)
        labels = OracleService(annotation).annotate_corpus(corpus).labels
        shifted = DatasetService().apply_scaler(desk_models["scaler"], featurize_corpus(corpus, labels, annotation))

        for kind, detector in desk_models["models"].items():
            for intent in INTENTS[:2]:
                report = evaluate(detector.score(shifted.values, intent), shifted.labels[intent.kind.value],
                                  detector.threshold_for(intent))
                assert report.defined is False, kind
                assert report.n_neg == 1_000


class TestFlowPath:
    """Test the standardized-threshold intent on the flow fixture."""

    def test_near_perfect_detection(self, flow_table):
        service = DatasetService()
        matrices, _, manifest = service.prepare_flow_splits(flow_table)
        intent = IntentSpec.threshold(manifest.standardized_threshold)

        detector = build_detector("intact", TrainConfig(seed=TEST_SEED))
        detector.fit(matrices["train"], matrices["val"], [intent])
        test = matrices["test"]
        report = evaluate(detector.score(test.values, intent), test.labels["lifetime"], detector.threshold_for(intent))

        assert report.auroc >= 0.999
        assert report.f1 >= 0.99

    def test_threshold_from_training_benign_rows(self, flow_table):
        matrices, parts, manifest = DatasetService().prepare_flow_splits(flow_table)

        train = parts["train"]
        assert manifest.lifetime_threshold in set(train.durations[train.benign_mask])
        expected = (train.durations > manifest.lifetime_threshold).astype(int)
        np.testing.assert_array_equal(matrices["train"].labels["lifetime"], expected)


class TestBenchmarkDeterminism:
    """Test that one seed reproduces the benchmark byte for byte."""

    def test_report_files_identical(self, tmp_path, tiny_run_config, capsys):
        config_path = tmp_path / "config.json"
        config_path.write_text(tiny_run_config.model_dump_json(), encoding="utf-8")

        for name in ("first", "second"):
            assert main(["benchmark", "--config", str(config_path), "--out-dir", str(tmp_path / name)]) == 0
        capsys.readouterr()

        for file_name in ("benchmark_report.json", "benchmark_table.csv", "benchmark_manifest.json"):
            assert sha256_file(tmp_path / "first" / file_name) == sha256_file(tmp_path / "second" / file_name)
        report = json.loads((tmp_path / "first" / "benchmark_report.json").read_text(encoding="utf-8"))
        assert sorted(report["synthetic"]["models"]) == sorted(tiny_run_config.models)
