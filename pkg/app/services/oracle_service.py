"""Deterministic violation annotation of trace corpora."""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, Set, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from app.config import settings
from app.exceptions import IndexMismatch, UnknownAlgorithm
from app.models.gen_config import DEFAULT_ALGORITHM_STRENGTHS, GenConfig
from app.models.labeled import LabeledCorpus
from app.models.labels import Category, KeyIndex, ViolationLabels, category_of
from app.models.trace import Corpus, Trace


# Configure logging
logger = logging.getLogger(__name__)

LABEL_COLUMNS = ("trace_id", "reuse", "downgrade", "lifetime", "category")


class AnnotationConfig(BaseModel):
    """Strength threshold and algorithm strength table used by the oracle."""

    model_config = ConfigDict(frozen=True)

    strength_threshold_bits: int = Field(default_factory=lambda: settings.strength_threshold_bits, gt=0)
    algorithm_strengths: Dict[int, int] = Field(default_factory=lambda: dict(DEFAULT_ALGORITHM_STRENGTHS))

    @classmethod
    def from_gen_config(cls, config: GenConfig) -> "AnnotationConfig":
        return cls(
            strength_threshold_bits=config.strength_threshold_bits,
            algorithm_strengths=dict(config.algorithm_strengths),
        )

    def strength_of(self, algorithm_id: int) -> int:
        """
        Declared strength of an algorithm.

        Raises:
            UnknownAlgorithm: If the id has no declared strength
        """
        try:
            return self.algorithm_strengths[algorithm_id]
        except KeyError:
            raise UnknownAlgorithm(algorithm_id) from None

    def is_weak(self, algorithm_id: int) -> bool:
        return self.strength_of(algorithm_id) < self.strength_threshold_bits


class OracleService:
    """Service computing ground-truth violation flags from trace data alone."""

    def __init__(self, config: AnnotationConfig = None):
        """
        Initialize oracle service.

        Args:
            config: Annotation configuration (defaults to the built-in strength table)
        """
        self.config = config or AnnotationConfig()

    def build_key_index(self, corpus: Corpus) -> KeyIndex:
        """
        Map every key id of the corpus to the traces using it.

        Args:
            corpus: Corpus to index

        Returns:
            Exact usage map over all referenced key ids
        """
        usage: Dict[int, Set[int]] = defaultdict(set)
        for trace in corpus:
            for op in trace.operations:
                usage[op.key_id].add(trace.trace_id)
        return KeyIndex(usage={key_id: frozenset(traces) for key_id, traces in usage.items()})

    def annotate_trace(self, trace: Trace, index: KeyIndex) -> ViolationLabels:
        """
        Compute the three violation flags of one trace.

        Lifetime is strict: an operation exactly at expiry is compliant.

        Args:
            trace: Trace to annotate
            index: Corpus-wide key index

        Returns:
            ViolationLabels of the trace

        Raises:
            IndexMismatch: If a referenced key is missing from the index or registry
            UnknownAlgorithm: If an algorithm id has no declared strength
        """
        reuse = downgrade = lifetime = False
        for op in trace.operations:
            if op.key_id not in index or trace.trace_id not in index[op.key_id]:
                raise IndexMismatch(trace.trace_id, op.key_id)
            record = trace.keys.get(op.key_id)
            if record is None:
                raise IndexMismatch(trace.trace_id, op.key_id)
            if len(index[op.key_id]) >= 2:
                reuse = True
            if self.config.is_weak(op.algorithm_id):
                downgrade = True
            if op.timestamp > record.created_at + record.lifetime:
                lifetime = True
        return ViolationLabels(reuse=reuse, downgrade=downgrade, lifetime=lifetime)

    def annotate_corpus(self, corpus: Corpus) -> LabeledCorpus:
        """
        Annotate every trace of a corpus.

        Args:
            corpus: Corpus to annotate

        Returns:
            Corpus paired with its labels, in corpus order
        """
        index = self.build_key_index(corpus)
        labels = tuple(self.annotate_trace(trace, index) for trace in corpus)
        labeled = LabeledCorpus(corpus=corpus, labels=labels)
        logger.info(
            f"Annotated {len(labeled)} traces: "
            f"{len(list(index.shared_keys()))} shared keys, flag rates {labeled.flag_rates()}"
        )
        return labeled

    def agreement_report(self, labeled: LabeledCorpus) -> Dict[str, object]:
        """
        Compare oracle categories with generation categories.

        Args:
            labeled: Annotated corpus

        Returns:
            Confusion table, missed injections and agreement rates
        """
        confusion = {
            generated.value: {oracle.value: 0 for oracle in Category} for generated in Category
        }
        missed_injections = 0
        incidental = 0
        exact = 0
        for trace, labels in labeled:
            injected = trace.category.flags.as_tuple()
            flagged = labels.as_tuple()
            confusion[trace.category.value][category_of(labels).value] += 1
            missed_injections += sum(1 for i, f in zip(injected, flagged) if i and not f)
            if any(f and not i for i, f in zip(injected, flagged)):
                incidental += 1
            if injected == flagged:
                exact += 1

        n = len(labeled)
        return {
            "n_traces": n,
            "confusion": confusion,
            "missed_injections": missed_injections,
            "traces_with_incidental_flags": incidental,
            "exact_match_rate": exact / n if n else 1.0,
            "flagged_implies_injected_rate": (n - incidental) / n if n else 1.0,
        }

    def write_labels(self, labeled: LabeledCorpus, path: Union[str, Path]) -> Path:
        """
        Write the labels CSV (trace_id, reuse, downgrade, lifetime, category).

        Args:
            labeled: Annotated corpus
            path: Destination file

        Returns:
            The written path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(
            [
                (trace.trace_id, int(labels.reuse), int(labels.downgrade), int(labels.lifetime),
                 category_of(labels).value)
                for trace, labels in labeled
            ],
            columns=list(LABEL_COLUMNS),
        )
        frame.to_csv(path, index=False, lineterminator="\n")
        return path


def read_labels(path: Union[str, Path]) -> Dict[int, ViolationLabels]:
    """
    Read a labels CSV written by :meth:`OracleService.write_labels`.

    Args:
        path: Labels file

    Returns:
        Mapping from trace id to labels
    """
    frame = pd.read_csv(path)
    return {
        int(row["trace_id"]): ViolationLabels(
            reuse=bool(row["reuse"]), downgrade=bool(row["downgrade"]), lifetime=bool(row["lifetime"])
        )
        for row in frame.to_dict("records")
    }
