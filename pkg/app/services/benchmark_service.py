"""End-to-end comparison of the six detectors on both data paths."""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from app.config import settings
from app.detectors import Detector, build_detector
from app.exceptions import PipelineError
from app.metrics import evaluate
from app.models.flow import FeatureMatrix, FlowTable, Scaler
from app.models.intent import ONE_HOT_ORDER, IntentSpec
from app.models.run_config import RunConfig
from app.services.corpus_store import dump_json
from app.services.dataset_service import DatasetService, ks_two_sample, scaler_report
from app.services.features import featurize_corpus
from app.services.oracle_service import AnnotationConfig, OracleService
from app.services.tracegen_service import TraceGenService, corpus_summary


# Configure logging
logger = logging.getLogger(__name__)

REPORT_FILE = "benchmark_report.json"
TABLE_FILE = "benchmark_table.csv"
TABLE_COLUMNS = ("path", "model", "intent", "subset", "auroc", "auprc", "f1", "precision", "recall",
                 "threshold", "n_pos", "n_neg", "defined")


def shift_subset_name(factor: float) -> str:
    return f"shift_x{factor:g}"


def evaluate_detector(detector: Detector, subsets: Dict[str, FeatureMatrix],
                      intents: Sequence[IntentSpec]) -> Dict[str, Dict[str, Any]]:
    """
    Score every subset under every intent at the detector's own thresholds.

    Returns:
        intent -> subset -> EvalReport dict
    """
    results: Dict[str, Dict[str, Any]] = {}
    for intent in intents:
        key = intent.kind.value
        threshold = detector.threshold_for(intent)
        results[key] = {}
        for name, matrix in subsets.items():
            scores = detector.score(matrix.values, intent)
            report = evaluate(scores, matrix.labels[key], threshold)
            results[key][name] = report.model_dump(mode="json")
    return results


class BenchmarkService:
    """Service running the detector comparison of one run configuration."""

    def __init__(self, config: Optional[RunConfig] = None):
        """
        Initialize benchmark service.

        Args:
            config: Run configuration; every random choice derives from its seed
        """
        self.config = config or RunConfig()
        self.dataset_service = DatasetService(self.config.percentile)
        self.annotation = AnnotationConfig.from_gen_config(self.config.gen)
        self.oracle = OracleService(self.annotation)

    # -- shared ------------------------------------------------------------

    def _run_models(self, train_matrix: FeatureMatrix, val: FeatureMatrix, subsets: Dict[str, FeatureMatrix],
                    intents: Sequence[IntentSpec]) -> Dict[str, Any]:
        results: Dict[str, Any] = {}
        for kind in self.config.models:
            detector = build_detector(kind, self.config.train, self.config.iforest)
            try:
                detector.fit(train_matrix, val, intents)
            except PipelineError as e:
                # A failed model is reported in place; the other models still run.
                logger.error(f"{kind} failed to train: {e.message}", exc_info=True)
                results[kind] = {"error": e.to_dict()["error"]}
                continue
            results[kind] = {
                "thresholds": {key: detector.thresholds[key] for key in sorted(detector.thresholds)},
                "results": evaluate_detector(detector, subsets, intents),
            }
            logger.info(f"Evaluated {kind} on {', '.join(subsets)}")
        return results

    # -- synthetic path ----------------------------------------------------

    def shift_matrices(self, generator: TraceGenService) -> Dict[str, FeatureMatrix]:
        """Raw feature matrices of the all-normal shift corpora, labeled by the oracle."""
        matrices = {}
        if self.config.shift_traces == 0:
            return matrices
        for factor in self.config.trace_shift_factors:
            corpus = generator.generate_shift_corpus(factor, self.config.shift_traces)
            labeled = self.oracle.annotate_corpus(corpus)
            matrices[shift_subset_name(factor)] = featurize_corpus(corpus, labeled.labels, self.annotation)
        return matrices

    def run_synthetic(self) -> Dict[str, Any]:
        """
        Generate, annotate, featurize and split the trace corpus, then train
        and evaluate every model on the validation and test splits and the shift corpora.

        Returns:
            Synthetic-path section of the report
        """
        generator = TraceGenService(self.config.gen)
        corpus = generator.generate_corpus()
        labeled = self.oracle.annotate_corpus(corpus)
        matrix = featurize_corpus(corpus, labeled.labels, self.annotation)
        matrices, manifest = self.dataset_service.prepare_trace_splits(
            matrix, self.config.split_fractions, self.config.seed, self.config.split_mode
        )

        subsets = {"val": matrices["val"], "test": matrices["test"]}
        for name, raw in self.shift_matrices(generator).items():
            subsets[name] = self.dataset_service.apply_scaler(manifest.scaler, raw)

        intents = [IntentSpec.one_hot(kind) for kind in ONE_HOT_ORDER]
        return {
            "corpus": corpus_summary(corpus),
            "agreement": self.oracle.agreement_report(labeled),
            "split": {
                "mode": manifest.mode,
                "sizes": manifest.sizes,
                "class_balance": manifest.class_balance,
                "scaler_check": scaler_report(matrices),
            },
            "subsets": {name: len(m) for name, m in subsets.items()},
            "models": self._run_models(matrices["train"], matrices["val"], subsets, intents),
        }

    # -- flow path ---------------------------------------------------------

    def load_flows(self) -> FlowTable:
        if self.config.flows_csv:
            return self.dataset_service.ingest_flows(self.config.flows_csv)
        return self.dataset_service.synthesize_flows(self.config.flow_rows, self.config.seed)

    def flow_shifts(self, raw_test: FlowTable, test: FeatureMatrix, scaler: Scaler
                    ) -> Tuple[Dict[str, FeatureMatrix], Dict[str, Dict[str, float]]]:
        """
        Duration-scaled copies of the test split with labels held fixed.

        Returns:
            (standardized shifted matrices, KS statistic and p-value per shift)
        """
        matrices, ks = {}, {}
        offset = int(test.row_ids[0]) if len(test) else 0
        for factor in self.config.flow_shift_factors:
            shifted = self.dataset_service.scale_duration_shift(raw_test, factor)
            statistic, p_value = ks_two_sample(raw_test.durations, shifted.durations)
            name = shift_subset_name(factor)
            ks[name] = {"factor": factor, "statistic": statistic, "p_value": p_value}
            raw = self.dataset_service.flow_matrix(shifted, test.labels, row_offset=offset)
            matrices[name] = self.dataset_service.apply_scaler(scaler, raw)
            logger.info(f"Duration shift x{factor:g}: KS {statistic:.4f} (p={p_value:.3g})")
        return matrices, ks

    def run_flows(self, table: Optional[FlowTable] = None) -> Dict[str, Any]:
        """
        Temporal split, lifetime labeling, shift construction and evaluation
        of every model under the standardized-threshold intent.

        Args:
            table: Cleaned flow table; loaded from the configuration if omitted

        Returns:
            Flow-path section of the report
        """
        table = table if table is not None else self.load_flows()
        matrices, parts, manifest = self.dataset_service.prepare_flow_splits(
            table, self.config.flow_split_fractions, self.config.percentile
        )
        shifted, ks = self.flow_shifts(parts["test"], matrices["test"], manifest.scaler)
        subsets = {"val": matrices["val"], "test": matrices["test"], **shifted}
        intent = IntentSpec.threshold(manifest.standardized_threshold)
        return {
            "n_rows": len(table),
            "n_dropped": table.n_dropped,
            "split": {
                "mode": manifest.mode,
                "sizes": manifest.sizes,
                "class_balance": manifest.class_balance,
                "scaler_check": scaler_report(matrices),
            },
            "lifetime_threshold": manifest.lifetime_threshold,
            "standardized_threshold": manifest.standardized_threshold,
            "percentile": manifest.percentile,
            "ks": ks,
            "subsets": {name: len(m) for name, m in subsets.items()},
            "models": self._run_models(matrices["train"], matrices["val"], subsets, [intent]),
        }

    # -- report ------------------------------------------------------------

    def run(self) -> Dict[str, Any]:
        """
        Run the configured data paths.

        Returns:
            The report: configuration hash, seed and one section per path
        """
        report: Dict[str, Any] = {
            "tool_version": settings.tool_version,
            "seed": self.config.seed,
            "config_sha256": self.config.config_hash(),
            "models": list(self.config.models),
        }
        if "synthetic" in self.config.data_paths:
            logger.info("Running the synthetic trace path")
            report["synthetic"] = self.run_synthetic()
        if "flows" in self.config.data_paths:
            logger.info("Running the flow path")
            report["flows"] = self.run_flows()
        return report


def report_rows(report: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Flatten a report into one row per (path, model, intent, subset)."""
    rows = []
    for path in ("synthetic", "flows"):
        section = report.get(path)
        if section is None:
            continue
        for model, entry in section["models"].items():
            for intent, by_subset in entry.get("results", {}).items():
                for subset, metrics in by_subset.items():
                    rows.append({"path": path, "model": model, "intent": intent, "subset": subset,
                                 **{column: metrics.get(column) for column in TABLE_COLUMNS[4:]}})
    return rows


def write_report(report: Dict[str, Any], out_dir: Union[str, Path]) -> List[Path]:
    """
    Write the JSON report and its flat comparison table.

    Returns:
        Paths of the written files
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / REPORT_FILE
    report_path.write_text(dump_json(report), encoding="utf-8")
    table_path = out_dir / TABLE_FILE
    frame = pd.DataFrame(report_rows(report), columns=list(TABLE_COLUMNS))
    frame.to_csv(table_path, index=False, lineterminator="\n", float_format="%.6f")
    logger.info(f"Wrote benchmark report with {len(frame)} rows to {out_dir}")
    return [report_path, table_path]
