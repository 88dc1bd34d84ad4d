"""Corpus serialization: operation rows, key table, trace categories and manifest."""
import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import pandas as pd

from app.exceptions import SchemaError
from app.models.gen_config import GenConfig
from app.models.labels import Category
from app.models.trace import OPERATION_COLUMNS, Corpus, CryptoOperation, KeyRecord, Trace
from app.services.tracegen_service import corpus_summary


# Configure logging
logger = logging.getLogger(__name__)

CorpusFormat = Literal["jsonl", "csv"]

OPERATIONS_STEM = "operations"
KEYS_FILE = "keys.jsonl"
TRACES_FILE = "traces.jsonl"
CORPUS_MANIFEST = "corpus_manifest.json"
KEY_COLUMNS = ("key_id", "trace_id", "created_at", "lifetime", "strength_bits")


def dump_json(payload: object) -> str:
    """Stable JSON text used for every written artifact."""
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _write_jsonl(path: Path, rows: List[Dict[str, object]]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=False, separators=(",", ":")))
            handle.write("\n")


def _read_jsonl(path: Path) -> List[Dict[str, object]]:
    with path.open("r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_corpus(corpus: Corpus, out_dir: Union[str, Path], fmt: CorpusFormat = "jsonl",
                 config: Optional[GenConfig] = None) -> List[Path]:
    """
    Write a corpus as operation rows plus its sidecar files.

    Args:
        corpus: Corpus to write
        out_dir: Destination directory (created if missing)
        fmt: ``jsonl`` (one operation per line) or ``csv``
        config: Generator configuration recorded in the manifest

    Returns:
        Paths of the written files
    """
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"Unsupported corpus format: {fmt}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    operations_path = out_dir / f"{OPERATIONS_STEM}.{fmt}"
    if fmt == "jsonl":
        _write_jsonl(operations_path, [
            dict(zip(OPERATION_COLUMNS, op.as_row())) for trace in corpus for op in trace.operations
        ])
    else:
        frame = pd.DataFrame(
            [op.as_row() for trace in corpus for op in trace.operations],
            columns=list(OPERATION_COLUMNS),
        )
        frame.to_csv(operations_path, index=False, lineterminator="\n")

    keys_path = out_dir / KEYS_FILE
    _write_jsonl(keys_path, [
        {
            "key_id": record.key_id,
            "trace_id": trace.trace_id,
            "created_at": record.created_at,
            "lifetime": record.lifetime,
            "strength_bits": record.strength_bits,
        }
        for trace in corpus for record in sorted(trace.keys.values(), key=lambda r: r.key_id)
    ])

    traces_path = out_dir / TRACES_FILE
    _write_jsonl(traces_path, [
        {"trace_id": trace.trace_id, "category": trace.category.value} for trace in corpus
    ])

    manifest_path = out_dir / CORPUS_MANIFEST
    manifest = {
        "format": fmt,
        "summary": corpus_summary(corpus),
        "seed": config.seed if config is not None else None,
        "gen_config": config.model_dump(mode="json") if config is not None else None,
    }
    manifest_path.write_text(dump_json(manifest), encoding="utf-8")

    logger.info(f"Wrote {len(corpus)} traces to {out_dir} ({fmt})")
    return [operations_path, keys_path, traces_path, manifest_path]


def _operations_frame(path: Path) -> pd.DataFrame:
    if path.suffix == ".csv":
        frame = pd.read_csv(path, float_precision="round_trip")
    else:
        frame = pd.DataFrame(_read_jsonl(path))
    missing = [column for column in OPERATION_COLUMNS if column not in frame.columns]
    if missing:
        raise SchemaError(str(path), missing)
    return frame


def read_corpus(path: Union[str, Path]) -> Corpus:
    """
    Reconstruct a corpus written by :func:`write_corpus`.

    Args:
        path: Corpus directory, or the operations file inside it

    Returns:
        The corpus, registries rebuilt from the key table

    Raises:
        SchemaError: If the operations file lacks a column
        FileNotFoundError: If no operations file exists
    """
    path = Path(path)
    if path.is_dir():
        candidates = [path / f"{OPERATIONS_STEM}.jsonl", path / f"{OPERATIONS_STEM}.csv"]
        existing = [candidate for candidate in candidates if candidate.exists()]
        if not existing:
            raise FileNotFoundError(f"No operations file in {path}")
        operations_path, directory = existing[0], path
    else:
        operations_path, directory = path, path.parent

    frame = _operations_frame(operations_path)

    registries: Dict[int, Dict[int, KeyRecord]] = {}
    keys_path = directory / KEYS_FILE
    if keys_path.exists():
        for row in _read_jsonl(keys_path):
            record = KeyRecord(**{column: row[column] for column in KEY_COLUMNS if column != "trace_id"})
            registries.setdefault(int(row["trace_id"]), {})[record.key_id] = record

    categories: Dict[int, Category] = {}
    traces_path = directory / TRACES_FILE
    if traces_path.exists():
        categories = {int(row["trace_id"]): Category(row["category"]) for row in _read_jsonl(traces_path)}

    traces: List[Trace] = []
    for trace_id, group in frame.groupby("trace_id", sort=False):
        trace_id = int(trace_id)
        operations = tuple(
            CryptoOperation(**row) for row in group[list(OPERATION_COLUMNS)].to_dict("records")
        )
        keys = registries.get(trace_id)
        if keys is None:
            # Without a key table the registry is rebuilt from the KeyGen rows.
            keys = {}
            for op in operations:
                if op.key_id not in keys:
                    keys[op.key_id] = KeyRecord(
                        key_id=op.key_id, created_at=op.timestamp, lifetime=op.key_lifetime, strength_bits=1
                    )
        traces.append(Trace(
            trace_id=trace_id,
            operations=operations,
            keys=keys,
            category=categories.get(trace_id, Category.NORMAL),
        ))

    logger.info(f"Read {len(traces)} traces from {operations_path}")
    return Corpus(traces=tuple(traces))
