"""Flow ingestion, splitting, intent labeling, standardization and shift construction."""
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import kolmogorov

from app.config import settings
from app.exceptions import (
    ConfigError,
    DegenerateFeature,
    EmptyDataset,
    SchemaError,
    ShapeError,
    SplitError,
)
from app.models.flow import FLOW_FEATURES, FLOW_LABEL, FeatureMatrix, FlowTable, Scaler, SplitManifest
from app.models.intent import IntentKind
from app.services.corpus_store import dump_json


# Configure logging
logger = logging.getLogger(__name__)

LABEL_PREFIX = "label_"
ROW_ID = "row_id"
SPLIT_NAMES = ("train", "val", "test")

# Column names of the public CIC-style flow export, after stripping whitespace.
CIC_ALIASES: Dict[str, str] = {
    "Flow Duration": "duration",
    "Total Fwd Packets": "fwd_packets",
    "Total Backward Packets": "bwd_packets",
    "Fwd Packet Length Mean": "fwd_mean_pkt_size",
    "Bwd Packet Length Mean": "bwd_mean_pkt_size",
    "Flow Bytes/s": "bytes_per_sec",
    "Flow Packets/s": "pkts_per_sec",
    "Label": FLOW_LABEL,
}

ATTACK_LABELS = ("DoS Hulk", "PortScan", "DDoS", "FTP-Patator")


# ---------------------------------------------------------------------------
# Pure helpers
# ---------------------------------------------------------------------------

def split_sizes(n_rows: int, fractions: Sequence[float]) -> List[int]:
    """
    Partition sizes: floor of each fraction, remainder to the last split.

    Args:
        n_rows: Number of rows
        fractions: Positive fractions summing to 1

    Returns:
        One size per fraction

    Raises:
        SplitError: If the rows cannot give every split at least one row
    """
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(n_rows, f"fractions must be positive and sum to 1, got {list(fractions)}")
    if n_rows < len(fractions):
        raise SplitError(n_rows, f"need at least {len(fractions)} rows")
    sizes = [int(math.floor(n_rows * f + 1e-9)) for f in fractions[:-1]]
    sizes.append(n_rows - sum(sizes))
    if min(sizes) < 1:
        raise SplitError(n_rows, f"an empty split would result from fractions {list(fractions)}")
    return sizes


def random_split(n_rows: int, fractions: Sequence[float] = (0.8, 0.1, 0.1),
                 seed: int = 0) -> Tuple[np.ndarray, ...]:
    """
    Seeded row-level split (synthetic path).

    Args:
        n_rows: Number of rows
        fractions: Split fractions
        seed: Permutation seed

    Returns:
        Sorted row index arrays, one per split
    """
    sizes = split_sizes(n_rows, fractions)
    permutation = np.random.default_rng(seed).permutation(n_rows)
    bounds = np.cumsum([0, *sizes])
    return tuple(np.sort(permutation[bounds[i]:bounds[i + 1]]) for i in range(len(sizes)))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """
    Two-sample Kolmogorov-Smirnov test.

    The statistic is the largest EDF difference over the merged sample; the
    p-value uses the asymptotic Kolmogorov tail with the effective-size
    correction.

    Args:
        a: First sample
        b: Second sample

    Returns:
        (statistic, p_value)

    Raises:
        EmptyDataset: If either sample is empty
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise EmptyDataset("KS sample")
    n, m = a.size, b.size
    merged = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, merged, side="right") / n
    cdf_b = np.searchsorted(b, merged, side="right") / m
    statistic = float(np.max(np.abs(cdf_a - cdf_b)))
    en = math.sqrt(n * m / (n + m))
    p_value = float(np.clip(kolmogorov((en + 0.12 + 0.11 / en) * statistic), 0.0, 1.0))
    return statistic, p_value


def standardize_threshold(threshold: float, scaler: Scaler, column: str = "duration") -> float:
    """Intent payload of the flow path: the threshold in standardized units."""
    return scaler.standardize_value(column, threshold)


def scaler_report(matrices: Dict[str, FeatureMatrix]) -> Dict[str, Dict[str, Dict[str, float]]]:
    """
    Per-split mean and population std of already standardized matrices.

    Args:
        matrices: Split name to standardized matrix

    Returns:
        split -> column -> {"mean", "std"}
    """
    report = {}
    for name, matrix in matrices.items():
        if len(matrix) == 0:
            report[name] = {}
            continue
        means = matrix.values.mean(axis=0)
        stds = matrix.values.std(axis=0)
        report[name] = {
            column: {"mean": float(means[i]), "std": float(stds[i])}
            for i, column in enumerate(matrix.columns)
        }
    return report


def class_balance(labels_by_split: Dict[str, Dict[str, np.ndarray]]) -> Dict[str, Dict[str, Dict[str, float]]]:
    """
    Positive counts and rates per split and intent.

    Args:
        labels_by_split: split -> intent -> binary label vector

    Returns:
        split -> intent -> {"n", "n_pos", "rate"}
    """
    balance = {}
    for split, labels in labels_by_split.items():
        balance[split] = {}
        for intent, vector in labels.items():
            vector = np.asarray(vector)
            n_pos = int(vector.sum())
            balance[split][intent] = {
                "n": int(vector.size),
                "n_pos": n_pos,
                "rate": n_pos / vector.size if vector.size else 0.0,
            }
    return balance


def write_feature_csv(matrix: FeatureMatrix, path: Union[str, Path]) -> Path:
    """
    Write a feature matrix as CSV: row_id, feature columns, label_<intent> columns.

    Args:
        matrix: Matrix to write
        path: Destination file

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(matrix.values, columns=matrix.columns)
    frame.insert(0, ROW_ID, matrix.row_ids)
    for name, vector in sorted(matrix.labels.items()):
        frame[f"{LABEL_PREFIX}{name}"] = np.asarray(vector, dtype=np.int64)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def read_feature_csv(path: Union[str, Path]) -> FeatureMatrix:
    """
    Read a feature CSV written by :func:`write_feature_csv`.

    Raises:
        SchemaError: If the row id column is missing
        EmptyDataset: If the file has no feature columns
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    if ROW_ID not in frame.columns:
        raise SchemaError(str(path), [ROW_ID])
    label_columns = [column for column in frame.columns if column.startswith(LABEL_PREFIX)]
    feature_columns = [column for column in frame.columns if column != ROW_ID and column not in label_columns]
    if not feature_columns:
        raise EmptyDataset(str(path))
    return FeatureMatrix(
        values=frame[feature_columns].to_numpy(dtype=np.float64),
        row_ids=frame[ROW_ID].to_numpy(),
        columns=feature_columns,
        labels={column[len(LABEL_PREFIX):]: frame[column].to_numpy(dtype=np.int64) for column in label_columns},
    )


def write_scaler(scaler: Scaler, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(dump_json(scaler.model_dump(mode="json")), encoding="utf-8")
    return path


def read_scaler(path: Union[str, Path]) -> Scaler:
    return Scaler.model_validate_json(Path(path).read_text(encoding="utf-8"))


def write_flow_csv(table: FlowTable, path: Union[str, Path]) -> Path:
    """Write a cleaned flow table (seven features and the raw label) in row order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.frame[[*FLOW_FEATURES, FLOW_LABEL]].to_csv(path, index=False, lineterminator="\n")
    return path


def read_split_manifest(path: Union[str, Path]) -> SplitManifest:
    return SplitManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Service
# ---------------------------------------------------------------------------

class DatasetService:
    """Service preparing leak-free feature matrices for both data paths."""

    def __init__(self, percentile: Optional[float] = None):
        """
        Initialize dataset service.

        Args:
            percentile: Nearest-rank percentile of benign training durations
                used as the lifetime threshold
        """
        self.percentile = settings.lifetime_percentile if percentile is None else percentile

    # -- ingestion ---------------------------------------------------------

    def ingest_frame(self, frame: pd.DataFrame, source: str = "<memory>") -> FlowTable:
        """
        Clean a raw flow frame.

        Args:
            frame: Raw flow records in chronological order
            source: Name used in errors and logs

        Returns:
            FlowTable with non-finite rows removed

        Raises:
            SchemaError: If a feature or the label column is missing
            EmptyDataset: If no row survives cleaning
        """
        frame = frame.rename(columns=lambda column: str(column).strip())
        frame = frame.rename(columns=CIC_ALIASES)
        required = [*FLOW_FEATURES, FLOW_LABEL]
        missing = [column for column in required if column not in frame.columns]
        if missing:
            raise SchemaError(source, missing)

        frame = frame[required].copy()
        for column in FLOW_FEATURES:
            frame[column] = pd.to_numeric(frame[column], errors="coerce")
        frame[list(FLOW_FEATURES)] = frame[list(FLOW_FEATURES)].replace([np.inf, -np.inf], np.nan)
        n_raw = len(frame)
        frame = frame.dropna(subset=required).reset_index(drop=True)
        frame[FLOW_LABEL] = frame[FLOW_LABEL].astype(str).str.strip()
        n_dropped = n_raw - len(frame)

        if len(frame) == 0:
            raise EmptyDataset(source)
        if n_dropped:
            logger.warning(f"Dropped {n_dropped} of {n_raw} rows with missing or non-finite values from {source}")
        logger.info(f"Ingested {len(frame)} flows from {source}")
        return FlowTable(frame=frame, n_dropped=n_dropped, source=source)

    def ingest_flows(self, csv_path: Union[str, Path]) -> FlowTable:
        """
        Read and clean a flow CSV.

        Args:
            csv_path: Flow CSV with the seven features and a label column

        Returns:
            Cleaned FlowTable in file order
        """
        frame = pd.read_csv(csv_path, low_memory=False)
        return self.ingest_frame(frame, source=str(csv_path))

    def synthesize_flows(self, n_rows: int, seed: int, attack_rate: float = 0.2) -> FlowTable:
        """
        Build a chronologically ordered flow-like fixture.

        Durations are log-normal; packet counts grow with duration; rates are
        derived from counts, sizes and duration.

        Args:
            n_rows: Number of flows
            seed: Generator seed
            attack_rate: Fraction of flows carrying an attack label

        Returns:
            FlowTable with the seven features and a raw label column
        """
        if n_rows < 1:
            raise ConfigError(f"flow fixture needs at least one row, got {n_rows}")
        rng = np.random.default_rng(seed)
        is_attack = rng.random(n_rows) < attack_rate
        duration = rng.lognormal(mean=np.where(is_attack, 10.5, 11.0), sigma=1.0)
        seconds = duration / 1e6
        fwd_packets = 1 + rng.poisson(2.0 + 4.0 * np.log1p(seconds * 10.0))
        bwd_packets = rng.poisson(1.0 + 3.0 * np.log1p(seconds * 10.0))
        fwd_size = rng.lognormal(mean=5.0, sigma=0.5, size=n_rows)
        bwd_size = np.where(bwd_packets > 0, rng.lognormal(mean=6.0, sigma=0.5, size=n_rows), 0.0)
        total_bytes = fwd_packets * fwd_size + bwd_packets * bwd_size
        total_packets = fwd_packets + bwd_packets
        labels = np.where(
            is_attack,
            np.asarray(ATTACK_LABELS, dtype=object)[rng.integers(len(ATTACK_LABELS), size=n_rows)],
            "BENIGN",
        )
        frame = pd.DataFrame({
            "duration": duration,
            "fwd_packets": fwd_packets.astype(np.float64),
            "bwd_packets": bwd_packets.astype(np.float64),
            "fwd_mean_pkt_size": fwd_size,
            "bwd_mean_pkt_size": bwd_size,
            "bytes_per_sec": total_bytes / seconds,
            "pkts_per_sec": total_packets / seconds,
            FLOW_LABEL: labels,
        })
        return FlowTable(frame=frame, n_dropped=0, source=f"synthetic(n={n_rows}, seed={seed})")

    # -- splitting and labeling ------------------------------------------

    def temporal_split(self, table: FlowTable,
                       fractions: Sequence[float] = (0.6, 0.2, 0.2)) -> Tuple[FlowTable, FlowTable, FlowTable]:
        """
        Chronological split: earliest rows to train, no shuffling.

        Args:
            table: Flow table in chronological order
            fractions: Train, validation and test fractions

        Returns:
            (train, val, test) contiguous slices

        Raises:
            SplitError: If the table has fewer rows than splits
        """
        sizes = split_sizes(len(table), fractions)
        first, second = sizes[0], sizes[0] + sizes[1]
        logger.info(f"Temporal split of {len(table)} rows into {sizes}")
        return table.slice(0, first), table.slice(first, second), table.slice(second, len(table))

    def derive_lifetime_threshold(self, benign_train_durations: Sequence[float],
                                  percentile: Optional[float] = None) -> float:
        """
        Nearest-rank percentile of benign training durations.

        Args:
            benign_train_durations: Durations of benign training flows only
            percentile: Percentile in (0, 100], defaults to the service setting

        Returns:
            The threshold (an observed duration)

        Raises:
            EmptyDataset: If no durations are given
        """
        durations = np.asarray(benign_train_durations, dtype=np.float64)
        if durations.size == 0:
            raise EmptyDataset("benign training durations")
        percentile = self.percentile if percentile is None else percentile
        return float(np.percentile(durations, percentile, method="inverted_cdf"))

    def label_lifetime(self, durations: Union[FlowTable, Sequence[float]], threshold: float) -> np.ndarray:
        """
        Lifetime intent labels: 1 where duration exceeds the threshold.

        Raises:
            ConfigError: If the threshold is not finite
        """
        if not math.isfinite(threshold):
            raise ConfigError(f"lifetime threshold must be finite, got {threshold}")
        values = durations.durations if isinstance(durations, FlowTable) else np.asarray(durations, dtype=np.float64)
        return (values > threshold).astype(np.int64)

    def scale_duration_shift(self, table: FlowTable, factor: float) -> FlowTable:
        """
        Covariate shift: multiply raw durations by ``factor``, labels untouched.

        Args:
            table: Raw (unstandardized) flow table
            factor: Positive multiplier

        Returns:
            Shifted copy of the table
        """
        if factor <= 0:
            raise ConfigError(f"shift factor must be positive, got {factor}")
        frame = table.frame.copy()
        frame["duration"] = frame["duration"] * factor
        return FlowTable(frame=frame, n_dropped=table.n_dropped, source=f"{table.source}*duration x{factor}")

    # -- standardization ---------------------------------------------------

    def flow_matrix(self, table: FlowTable, labels: Optional[Dict[str, np.ndarray]] = None,
                    row_offset: int = 0) -> FeatureMatrix:
        """Raw feature matrix of a flow table; row ids are chronological positions."""
        return FeatureMatrix(
            values=table.frame[list(FLOW_FEATURES)].to_numpy(dtype=np.float64),
            row_ids=np.arange(row_offset, row_offset + len(table), dtype=np.int64),
            columns=list(FLOW_FEATURES),
            labels=dict(labels or {}),
        )

    def fit_scaler(self, train: FeatureMatrix) -> Scaler:
        """
        Fit per-column mean and population std on the training partition.

        Raises:
            EmptyDataset: If the matrix has no rows
            DegenerateFeature: If a column is constant
        """
        if len(train) == 0:
            raise EmptyDataset("training partition")
        mean = train.values.mean(axis=0)
        std = train.values.std(axis=0)
        for i, column in enumerate(train.columns):
            if not std[i] > 0:
                raise DegenerateFeature(column)
        return Scaler(columns=list(train.columns), mean=mean.tolist(), std=std.tolist())

    def apply_scaler(self, scaler: Scaler, matrix: FeatureMatrix) -> FeatureMatrix:
        """
        Standardize a matrix with training statistics.

        Raises:
            ShapeError: If the columns differ from the scaler's
        """
        if list(matrix.columns) != list(scaler.columns):
            raise ShapeError("feature columns do not match the scaler", expected=scaler.columns,
                             actual=matrix.columns)
        mean = np.asarray(scaler.mean, dtype=np.float64)
        std = np.asarray(scaler.std, dtype=np.float64)
        return matrix.with_values((matrix.values - mean) / std)

    # -- end-to-end preparation -------------------------------------------

    def prepare_flow_splits(self, table: FlowTable, fractions: Sequence[float] = (0.6, 0.2, 0.2),
                            percentile: Optional[float] = None
                            ) -> Tuple[Dict[str, FeatureMatrix], Dict[str, FlowTable], SplitManifest]:
        """
        Flow path: temporal split, training-only threshold and scaler.

        Args:
            table: Cleaned flow table
            fractions: Split fractions
            percentile: Threshold percentile

        Returns:
            (standardized matrices per split, raw tables per split, manifest)
        """
        percentile = self.percentile if percentile is None else percentile
        parts = dict(zip(SPLIT_NAMES, self.temporal_split(table, fractions)))
        train = parts["train"]
        threshold = self.derive_lifetime_threshold(train.durations[train.benign_mask], percentile)

        raw: Dict[str, FeatureMatrix] = {}
        offset = 0
        for name, part in parts.items():
            labels = {IntentKind.LIFETIME.value: self.label_lifetime(part, threshold)}
            raw[name] = self.flow_matrix(part, labels, row_offset=offset)
            offset += len(part)

        scaler = self.fit_scaler(raw["train"])
        matrices = {name: self.apply_scaler(scaler, matrix) for name, matrix in raw.items()}
        sizes = [len(parts[name]) for name in SPLIT_NAMES]
        manifest = SplitManifest(
            mode="temporal",
            n_rows=len(table),
            sizes=sizes,
            boundaries=[sizes[0], sizes[0] + sizes[1]],
            scaler=scaler,
            label_columns=[IntentKind.LIFETIME.value],
            lifetime_threshold=threshold,
            standardized_threshold=standardize_threshold(threshold, scaler),
            percentile=percentile,
            class_balance=class_balance({name: m.labels for name, m in matrices.items()}),
        )
        logger.info(
            f"Lifetime threshold {threshold:.6g} (standardized {manifest.standardized_threshold:.4f}) "
            f"from {int(train.benign_mask.sum())} benign training flows"
        )
        return matrices, parts, manifest

    def prepare_trace_splits(self, matrix: FeatureMatrix, fractions: Sequence[float] = (0.8, 0.1, 0.1),
                             seed: int = 0, mode: str = "random"
                             ) -> Tuple[Dict[str, FeatureMatrix], SplitManifest]:
        """
        Synthetic path: seeded random (or order-preserving) split and training-only scaler.

        Args:
            matrix: Raw trace feature matrix with intent labels
            fractions: Split fractions
            seed: Split seed
            mode: ``random`` or ``temporal`` (contiguous by row order)

        Returns:
            (standardized matrices per split, manifest)
        """
        if mode == "random":
            indices = random_split(len(matrix), fractions, seed)
        elif mode == "temporal":
            sizes = split_sizes(len(matrix), fractions)
            bounds = np.cumsum([0, *sizes])
            indices = tuple(np.arange(bounds[i], bounds[i + 1]) for i in range(len(sizes)))
        else:
            raise ConfigError(f"Unknown split mode: {mode}")

        raw = {name: matrix.take(index) for name, index in zip(SPLIT_NAMES, indices)}
        scaler = self.fit_scaler(raw["train"])
        matrices = {name: self.apply_scaler(scaler, part) for name, part in raw.items()}
        sizes = [len(raw[name]) for name in SPLIT_NAMES]
        manifest = SplitManifest(
            mode=mode,
            n_rows=len(matrix),
            sizes=sizes,
            boundaries=[sizes[0], sizes[0] + sizes[1]] if mode == "temporal" else None,
            seed=seed if mode == "random" else None,
            scaler=scaler,
            label_columns=sorted(matrix.labels),
            class_balance=class_balance({name: m.labels for name, m in matrices.items()}),
        )
        logger.info(f"{mode.capitalize()} split of {len(matrix)} traces into {sizes}")
        return matrices, manifest


def write_split_manifest(manifest: SplitManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(manifest.model_dump(mode="json")), encoding="utf-8")
    return path
