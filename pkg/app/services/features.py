"""Trace-level feature extraction."""
from typing import Dict, Optional, Sequence

import numpy as np

from app.models.flow import FeatureMatrix
from app.models.intent import ONE_HOT_ORDER
from app.models.labels import ViolationLabels
from app.models.trace import OP_TYPES, Corpus, Trace
from app.services.oracle_service import AnnotationConfig


TRACE_FEATURES: tuple = (
    "n_ops",
    "n_unique_keys",
    "n_keygen",
    "n_encrypt",
    "n_decrypt",
    "n_sign",
    "n_verify",
    "n_unique_algorithms",
    "frac_weak_algorithm_ops",
    "mean_op_duration",
    "std_op_duration",
    "mean_inter_arrival",
    "std_inter_arrival",
    "trace_time_span",
    "min_key_lifetime",
    "mean_key_lifetime",
    "min_numeric_key_id",
)


def featurize_trace(trace: Trace, annotation: Optional[AnnotationConfig] = None) -> np.ndarray:
    """
    Aggregate a trace into its 17 features (order of ``TRACE_FEATURES``).

    Standard deviations are population statistics. A single-operation trace
    has no gaps, so its gap and spread features are 0.

    Args:
        trace: Nonempty trace
        annotation: Strength table used for the weak-algorithm fraction

    Returns:
        Float vector of length 17

    Raises:
        ValueError: If the trace is empty
        UnknownAlgorithm: If an algorithm id has no declared strength
    """
    if not trace.operations:
        raise ValueError(f"Trace {trace.trace_id} is empty")
    annotation = annotation or AnnotationConfig()

    ops = trace.operations
    timestamps = np.fromiter((op.timestamp for op in ops), dtype=np.float64, count=len(ops))
    durations = np.fromiter((op.duration for op in ops), dtype=np.float64, count=len(ops))
    gaps = np.diff(timestamps)

    # Lifetime as carried by the first row of each key.
    lifetimes: Dict[int, float] = {}
    for op in ops:
        lifetimes.setdefault(op.key_id, op.key_lifetime)
    lifetime_values = np.fromiter(lifetimes.values(), dtype=np.float64)

    op_counts = [sum(1 for op in ops if op.op_type is op_type) for op_type in OP_TYPES]
    algorithms = {op.algorithm_id for op in ops}
    n_weak = sum(1 for op in ops if annotation.is_weak(op.algorithm_id))

    return np.array([
        float(len(ops)),
        float(len(lifetimes)),
        *map(float, op_counts),
        float(len(algorithms)),
        n_weak / len(ops),
        float(durations.mean()),
        float(durations.std()) if len(ops) > 1 else 0.0,
        float(gaps.mean()) if gaps.size else 0.0,
        float(gaps.std()) if gaps.size else 0.0,
        float(timestamps[-1] - timestamps[0]),
        float(lifetime_values.min()),
        float(lifetime_values.mean()),
        float(min(lifetimes)),
    ], dtype=np.float64)


def featurize_corpus(corpus: Corpus, labels: Optional[Sequence[ViolationLabels]] = None,
                     annotation: Optional[AnnotationConfig] = None) -> FeatureMatrix:
    """
    Featurize every trace of a corpus.

    Args:
        corpus: Corpus of nonempty traces
        labels: Oracle labels in corpus order, attached as one vector per intent
        annotation: Strength table

    Returns:
        FeatureMatrix with one row per trace, row ids = trace ids
    """
    values = np.array([featurize_trace(trace, annotation) for trace in corpus], dtype=np.float64)
    if values.size == 0:
        values = np.zeros((0, len(TRACE_FEATURES)))
    row_ids = np.array([trace.trace_id for trace in corpus], dtype=np.int64)
    label_vectors = {}
    if labels is not None:
        flags = np.array([item.as_tuple() for item in labels], dtype=np.int64).reshape(-1, 3)
        label_vectors = {kind.value: flags[:, i] for i, kind in enumerate(ONE_HOT_ORDER)}
    return FeatureMatrix(values=values, row_ids=row_ids, columns=list(TRACE_FEATURES), labels=label_vectors)
