"""Command-line entry point for the violation detection lab.

Every command writes its artifacts to ``--out-dir`` together with a
``<command>_manifest.json`` from which ``replay`` can rerun it.
"""
import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError as PydanticValidationError

from app.config import settings
from app.detectors import MODEL_KINDS, build_detector, load_detector, save_detector
from app.exceptions import (
    ConfigError,
    InvalidValue,
    LabError,
    MissingInput,
    PipelineError,
    UsageError,
    format_error_for_cli,
)
from app.metrics import evaluate, pr_curve, roc_curve, write_curve_csv
from app.models.flow import FeatureMatrix
from app.models.intent import ONE_HOT_ORDER, IntentKind, IntentSpec
from app.models.run_config import RunConfig
from app.services.benchmark_service import BenchmarkService, write_report
from app.services.corpus_store import KEYS_FILE, OPERATIONS_STEM, TRACES_FILE, dump_json, read_corpus, write_corpus
from app.services.dataset_service import (
    ROW_ID,
    SPLIT_NAMES,
    DatasetService,
    ks_two_sample,
    read_feature_csv,
    read_split_manifest,
    write_feature_csv,
    write_flow_csv,
    write_scaler,
    write_split_manifest,
)
from app.services.features import featurize_corpus
from app.services.manifest_service import ManifestService
from app.services.oracle_service import AnnotationConfig, OracleService
from app.services.tracegen_service import TraceGenService


# Configure logging
logger = logging.getLogger(__name__)

SPLIT_MANIFEST = "splits.json"
TEST_RAW = "test_raw.csv"
CORPUS_FILES = (f"{OPERATIONS_STEM}.jsonl", f"{OPERATIONS_STEM}.csv", KEYS_FILE, TRACES_FILE)


@dataclass
class CommandResult:
    """Files a command read and wrote, plus a short summary for stdout."""
    inputs: List[Path] = field(default_factory=list)
    outputs: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _require(path: Any) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingInput(str(path))
    return path


def load_run_config(config_path: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    """
    Load and validate a run configuration.

    Args:
        config_path: JSON file of RunConfig fields, defaults when omitted
        seed: Master seed overriding the file's

    Returns:
        Validated RunConfig

    Raises:
        MissingInput: If the file does not exist
        ConfigError: If the JSON is malformed or fails validation
    """
    try:
        payload: Dict[str, Any] = {}
        if config_path is not None:
            payload = json.loads(_require(config_path).read_text(encoding="utf-8"))
            if not isinstance(payload, dict):
                raise ConfigError(f"{config_path} must hold a JSON object")
        config = RunConfig.model_validate(payload)
        return config.with_seed(seed) if seed is not None else config
    except json.JSONDecodeError as e:
        raise ConfigError(f"{config_path} is not valid JSON: {e.msg}", details={"line": e.lineno}) from e
    except PydanticValidationError as e:
        raise ConfigError(
            "Invalid run configuration",
            details={"errors": json.loads(e.json(include_url=False, include_input=False))},
        ) from e


def _is_corpus(path: Path) -> bool:
    return path.is_dir() or path.stem == OPERATIONS_STEM


def _has_columns(path: Path, columns: Sequence[str]) -> bool:
    header = pd.read_csv(path, nrows=0).columns
    return all(column in header for column in columns)


def _split_intents(matrix: FeatureMatrix, standardized_threshold: Optional[float]) -> List[IntentSpec]:
    if standardized_threshold is not None:
        return [IntentSpec.threshold(standardized_threshold)]
    intents = [IntentSpec.one_hot(kind) for kind in ONE_HOT_ORDER if kind.value in matrix.labels]
    if not intents:
        raise ConfigError("training data carries no intent labels", details={"columns": matrix.columns})
    return intents


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(args: Dict[str, Any], config: RunConfig, out_dir: Path) -> CommandResult:
    """Generate the labeled trace corpus."""
    corpus = TraceGenService(config.gen).generate_corpus()
    outputs = write_corpus(corpus, out_dir, fmt=args.get("format", "jsonl"), config=config.gen)
    oracle = OracleService(AnnotationConfig.from_gen_config(config.gen))
    labeled = oracle.annotate_corpus(corpus)
    outputs.append(oracle.write_labels(labeled, out_dir / "labels.csv"))
    agreement = oracle.agreement_report(labeled)
    agreement_path = out_dir / "agreement.json"
    agreement_path.write_text(dump_json(agreement), encoding="utf-8")
    outputs.append(agreement_path)
    return CommandResult(outputs=outputs, summary={
        "n_traces": len(corpus),
        "missed_injections": agreement["missed_injections"],
    })


def cmd_ingest(args: Dict[str, Any], config: RunConfig, out_dir: Path) -> CommandResult:
    """Clean a flow CSV."""
    csv_path = _require(args["csv"])
    table = DatasetService(config.percentile).ingest_flows(csv_path)
    flows_path = write_flow_csv(table, out_dir / "flows.csv")
    summary = {"n_rows": len(table), "n_dropped": table.n_dropped, "n_benign": int(table.benign_mask.sum())}
    summary_path = out_dir / "ingest_summary.json"
    summary_path.write_text(dump_json(summary), encoding="utf-8")
    return CommandResult(inputs=[csv_path], outputs=[flows_path, summary_path], summary=summary)


def cmd_synth_flows(args: Dict[str, Any], config: RunConfig, out_dir: Path) -> CommandResult:
    """Write the synthetic flow-like fixture."""
    rows = args.get("rows") or config.flow_rows
    table = DatasetService(config.percentile).synthesize_flows(rows, config.seed, args.get("attack_rate", 0.2))
    flows_path = write_flow_csv(table, out_dir / "flows.csv")
    return CommandResult(outputs=[flows_path], summary={"n_rows": len(table)})


def cmd_featurize(args: Dict[str, Any], config: RunConfig, out_dir: Path) -> CommandResult:
    """Trace corpus to 17-feature CSV with oracle labels, or flow table to 7-feature CSV."""
    source = _require(args["input"])
    service = DatasetService(config.percentile)
    if _is_corpus(source):
        corpus = read_corpus(source)
        annotation = AnnotationConfig.from_gen_config(config.gen)
        labeled = OracleService(annotation).annotate_corpus(corpus)
        matrix = featurize_corpus(corpus, labeled.labels, annotation)
        directory = source if source.is_dir() else source.parent
        inputs = sorted(p for p in directory.iterdir() if p.name in CORPUS_FILES)
    else:
        table = service.ingest_flows(source)
        matrix = service.flow_matrix(table)
        inputs = [source]
    path = write_feature_csv(matrix, out_dir / "features.csv")
    return CommandResult(inputs=inputs, outputs=[path],
                         summary={"n_rows": len(matrix), "n_features": matrix.n_features})


def cmd_split(args: Dict[str, Any], config: RunConfig, out_dir: Path) -> CommandResult:
    """Split a trace feature CSV (seeded) or a flow CSV (temporal) and standardize."""
    source = _require(args["input"])
    service = DatasetService(config.percentile)
    outputs: List[Path] = []
    if _has_columns(source, [ROW_ID]):
        matrices, manifest = service.prepare_trace_splits(
            read_feature_csv(source), config.split_fractions, config.seed, config.split_mode
        )
    else:
        table = service.ingest_flows(source)
        matrices, parts, manifest = service.prepare_flow_splits(table, config.flow_split_fractions, config.percentile)
        outputs.append(write_flow_csv(parts["test"], out_dir / TEST_RAW))
    for name in SPLIT_NAMES:
        outputs.append(write_feature_csv(matrices[name], out_dir / f"{name}.csv"))
    outputs.append(write_split_manifest(manifest, out_dir / SPLIT_MANIFEST))
    outputs.append(write_scaler(manifest.scaler, out_dir / "scaler.json"))
    return CommandResult(inputs=[source], outputs=outputs, summary={"mode": manifest.mode, "sizes": manifest.sizes})


def cmd_train(args: Dict[str, Any], config: RunConfig, out_dir: Path) -> CommandResult:
    """Train one detector on a split directory."""
    split_dir = _require(args["split_dir"])
    paths = [_require(split_dir / "train.csv"), _require(split_dir / "val.csv"), _require(split_dir / SPLIT_MANIFEST)]
    train, val = read_feature_csv(paths[0]), read_feature_csv(paths[1])
    manifest = read_split_manifest(paths[2])
    intents = _split_intents(train, manifest.standardized_threshold)

    detector = build_detector(args["model"], config.train, config.iforest)
    detector.fit(train, val, intents)
    checkpoint = save_detector(detector, out_dir / f"{detector.kind}_checkpoint.json")
    history_path = out_dir / f"{detector.kind}_history.json"
    history_path.write_text(dump_json({"history": detector.history, "thresholds": detector.thresholds}),
                            encoding="utf-8")
    return CommandResult(inputs=paths, outputs=[checkpoint, history_path],
                         summary={"model": detector.kind, "thresholds": detector.thresholds})


def cmd_evaluate(args: Dict[str, Any], config: RunConfig, out_dir: Path) -> CommandResult:
    """Evaluate a checkpoint on a feature CSV at its stored thresholds."""
    checkpoint, data = _require(args["checkpoint"]), _require(args["data"])
    detector = load_detector(checkpoint)
    matrix = read_feature_csv(data)
    keys = sorted(detector.intents)
    if args.get("intent"):
        keys = [IntentKind(args["intent"]).value]

    reports, outputs = {}, []
    for key in keys:
        if key not in detector.intents:
            raise ConfigError(f"{detector.kind} was not trained for intent '{key}'",
                              details={"available": sorted(detector.intents)})
        if key not in matrix.labels:
            raise ConfigError(f"{data} has no '{key}' labels", details={"available": sorted(matrix.labels)})
        intent = detector.intents[key]
        scores = detector.score(matrix.values, intent)
        report = evaluate(scores, matrix.labels[key], detector.threshold_for(intent))
        reports[key] = report.model_dump(mode="json")
        if report.defined:
            fpr, tpr, _ = roc_curve(scores, matrix.labels[key])
            curve = pr_curve(scores, matrix.labels[key])
            outputs.append(write_curve_csv(out_dir / f"roc_{key}.csv", fpr, tpr, ("fpr", "tpr")))
            outputs.append(write_curve_csv(out_dir / f"pr_{key}.csv", curve.recall, curve.precision,
                                           ("recall", "precision")))
    report_path = out_dir / "evaluation.json"
    report_path.write_text(dump_json({"model": detector.kind, "reports": reports}), encoding="utf-8")
    outputs.insert(0, report_path)
    return CommandResult(inputs=[checkpoint, data], outputs=outputs,
                         summary={key: {"auroc": r["auroc"], "f1": r["f1"]} for key, r in reports.items()})


def _shift_flows(factor: float, split_dir: Path, config: RunConfig, out_dir: Path) -> CommandResult:
    service = DatasetService(config.percentile)
    paths = [_require(split_dir / TEST_RAW), _require(split_dir / "test.csv"), _require(split_dir / SPLIT_MANIFEST)]
    raw_test = service.ingest_flows(paths[0])
    test = read_feature_csv(paths[1])
    manifest = read_split_manifest(paths[2])
    shifted = service.scale_duration_shift(raw_test, factor)
    statistic, p_value = ks_two_sample(raw_test.durations, shifted.durations)
    matrix = service.apply_scaler(manifest.scaler, service.flow_matrix(shifted, test.labels, int(test.row_ids[0])))
    ks = {"factor": factor, "feature": "duration", "statistic": statistic, "p_value": p_value,
          "n": len(raw_test)}
    return CommandResult(inputs=paths, outputs=[write_feature_csv(matrix, out_dir / "shifted_test.csv")],
                         summary=ks)


def _shift_traces(factor: float, split_dir: Optional[Path], config: RunConfig, out_dir: Path) -> CommandResult:
    generator = TraceGenService(config.gen)
    annotation = AnnotationConfig.from_gen_config(config.gen)
    oracle = OracleService(annotation)
    n = config.shift_traces
    reference = featurize_corpus(generator.generate_shift_corpus(1.0, n), annotation=annotation)
    corpus = generator.generate_shift_corpus(factor, n)
    outputs = write_corpus(corpus, out_dir / "shift_corpus", config=config.gen.scaled(factor))
    matrix = featurize_corpus(corpus, oracle.annotate_corpus(corpus).labels, annotation)
    ks = {"factor": factor, "n": n}
    for column in ("mean_inter_arrival", "mean_op_duration", "trace_time_span"):
        statistic, p_value = ks_two_sample(reference.column(column), matrix.column(column))
        ks[column] = {"statistic": statistic, "p_value": p_value}
    inputs = []
    if split_dir is not None:
        manifest_path = _require(split_dir / SPLIT_MANIFEST)
        matrix = DatasetService(config.percentile).apply_scaler(read_split_manifest(manifest_path).scaler, matrix)
        inputs.append(manifest_path)
    outputs.append(write_feature_csv(matrix, out_dir / "shifted_test.csv"))
    return CommandResult(inputs=inputs, outputs=outputs, summary=ks)


def cmd_shift(args: Dict[str, Any], config: RunConfig, out_dir: Path) -> CommandResult:
    """Duration shift of a flow test split, or an all-normal temporally scaled trace corpus."""
    factor = float(args["factor"])
    if factor <= 0:
        raise ConfigError(f"shift factor must be positive, got {factor}")
    split_dir = _require(args["split_dir"]) if args.get("split_dir") else None
    if split_dir is not None and (split_dir / TEST_RAW).exists():
        result = _shift_flows(factor, split_dir, config, out_dir)
    else:
        result = _shift_traces(factor, split_dir, config, out_dir)
    ks_path = out_dir / "ks_report.json"
    ks_path.write_text(dump_json(result.summary), encoding="utf-8")
    result.outputs.append(ks_path)
    return result


def cmd_benchmark(args: Dict[str, Any], config: RunConfig, out_dir: Path) -> CommandResult:
    """Run every configured model on every configured data path."""
    inputs = []
    if config.flows_csv and "flows" in config.data_paths:
        inputs.append(_require(config.flows_csv))
    report = BenchmarkService(config).run()
    outputs = write_report(report, out_dir)
    return CommandResult(inputs=inputs, outputs=outputs,
                         summary={"paths": [p for p in ("synthetic", "flows") if p in report]})


COMMANDS: Dict[str, Callable[[Dict[str, Any], RunConfig, Path], CommandResult]] = {
    "generate": cmd_generate,
    "ingest": cmd_ingest,
    "synth-flows": cmd_synth_flows,
    "featurize": cmd_featurize,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "shift": cmd_shift,
    "benchmark": cmd_benchmark,
}


def run_command(command: str, args: Dict[str, Any], config: RunConfig, out_dir: Path,
                manifests: Optional[ManifestService] = None) -> Dict[str, Any]:
    """
    Execute one pipeline command and write its manifest.

    Args:
        command: Name in ``COMMANDS``
        args: Command arguments (recorded verbatim in the manifest)
        config: Validated run configuration
        out_dir: Run directory

    Returns:
        Summary printed by the CLI
    """
    manifests = manifests or ManifestService()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Running '{command}' into {out_dir} (seed {config.seed})")
    result = COMMANDS[command](args, config, out_dir)
    manifest = manifests.build_manifest(command, args, config, result.inputs, result.outputs, out_dir)
    manifest_path = manifests.write_manifest(manifest, out_dir)
    return {
        "success": True,
        "command": command,
        "manifest": str(manifest_path),
        "outputs": [digest.path for digest in manifest.outputs],
        "summary": result.summary,
    }


def cmd_replay(manifest_path: str, out_dir: Path) -> Dict[str, Any]:
    """Rerun a recorded command into ``out_dir/replayed`` and compare output hashes."""
    manifests = ManifestService()

    def runner(command: str, args: Dict[str, Any], config: RunConfig, target: Path) -> List[Path]:
        if command not in COMMANDS:
            raise ConfigError(f"Command '{command}' cannot be replayed", details={"replayable": sorted(COMMANDS)})
        target.mkdir(parents=True, exist_ok=True)
        return COMMANDS[command](args, config, target).outputs

    source = _require(manifest_path)
    outcome = manifests.replay(source, runner, out_dir / "replayed")
    report_path = out_dir / "replay_report.json"
    report_path.write_text(dump_json(outcome), encoding="utf-8")
    recorded = manifests.read_manifest(source)
    manifest = manifests.build_manifest("replay", {"manifest": manifest_path}, recorded.run_config(),
                                        [source], [report_path], out_dir)
    manifests.write_manifest(manifest, out_dir)
    return {"success": True, "command": "replay", **outcome}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

class LabArgumentParser(argparse.ArgumentParser):
    """Parser whose usage errors surface as JSON error documents."""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}", self.format_usage().strip())


def build_parser() -> argparse.ArgumentParser:
    common = LabArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--seed", type=int, help="master seed overriding the config")
    common.add_argument("--out-dir", default=settings.output_dir, help="run directory")
    common.add_argument("--format", choices=("jsonl", "csv"), default="jsonl", help="corpus row format")
    common.add_argument("--log-level", default=settings.log_level, help="logging level")

    parser = LabArgumentParser(prog="intact", description="Intent-conditioned violation detection lab")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="generate and annotate the trace corpus")
    p = sub.add_parser("ingest", parents=[common], help="clean a flow CSV")
    p.add_argument("csv")
    p = sub.add_parser("synth-flows", parents=[common], help="write a synthetic flow-like fixture")
    p.add_argument("--rows", type=int)
    p.add_argument("--attack-rate", type=float, default=0.2)
    p = sub.add_parser("featurize", parents=[common], help="corpus or flow table to feature CSV")
    p.add_argument("input")
    p = sub.add_parser("split", parents=[common], help="split and standardize a feature or flow CSV")
    p.add_argument("input")
    p = sub.add_parser("train", parents=[common], help="train one detector")
    p.add_argument("model", choices=MODEL_KINDS)
    p.add_argument("--split-dir", required=True)
    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--intent", choices=[kind.value for kind in IntentKind])
    p = sub.add_parser("shift", parents=[common], help="build a covariate-shifted dataset")
    p.add_argument("--factor", type=float, required=True)
    p.add_argument("--split-dir")
    sub.add_parser("benchmark", parents=[common], help="compare all detectors end to end")
    p = sub.add_parser("replay", parents=[common], help="rerun a manifest and verify its outputs")
    p.add_argument("manifest")
    return parser


def command_args(namespace: argparse.Namespace) -> Dict[str, Any]:
    """Command-specific arguments as recorded in manifests."""
    skip = {"command", "config", "seed", "out_dir", "log_level"}
    return {key: value for key, value in sorted(vars(namespace).items()) if key not in skip}


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI.

    Returns:
        0 on success, 2 on validation errors, 3 on runtime errors
    """
    try:
        namespace = build_parser().parse_args(argv)
    except UsageError as e:
        print(format_error_for_cli(e), file=sys.stderr)
        return e.exit_code
    configure_logging(namespace.log_level)
    out_dir = Path(namespace.out_dir)
    try:
        if namespace.command == "replay":
            result = cmd_replay(namespace.manifest, out_dir)
        else:
            config = load_run_config(namespace.config, namespace.seed)
            result = run_command(namespace.command, command_args(namespace), config, out_dir)
    except LabError as e:
        logger.error(f"{namespace.command} failed: {e.message}", exc_info=isinstance(e, PipelineError))
        print(format_error_for_cli(e), file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        logger.error(f"{namespace.command} rejected a value: {e}")
        error = InvalidValue(str(e), type(e).__name__)
        print(format_error_for_cli(error), file=sys.stderr)
        return error.exit_code
    except Exception as e:
        logger.error(f"{namespace.command} failed unexpectedly: {e}", exc_info=True)
        error = PipelineError(str(e), "INTERNAL_ERROR", {"type": type(e).__name__})
        print(format_error_for_cli(error), file=sys.stderr)
        return error.exit_code
    print(json.dumps(result, sort_keys=True, default=str))
    return 0
