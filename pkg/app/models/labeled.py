"""Corpus paired with oracle labels."""
from typing import Iterator, List, Tuple

from pydantic import BaseModel, ConfigDict, model_validator

from app.models.labels import Category, ViolationLabels, category_of
from app.models.trace import Corpus, Trace


class LabeledCorpus(BaseModel):
    """Every trace of a corpus with the flags the oracle computed for it."""

    model_config = ConfigDict(frozen=True)

    corpus: Corpus
    labels: Tuple[ViolationLabels, ...]

    @model_validator(mode="after")
    def _check_lengths(self) -> "LabeledCorpus":
        if len(self.labels) != len(self.corpus):
            raise ValueError(f"{len(self.labels)} labels for {len(self.corpus)} traces")
        return self

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[Tuple[Trace, ViolationLabels]]:
        return iter(zip(self.corpus.traces, self.labels))

    def oracle_categories(self) -> List[Category]:
        return [category_of(labels) for labels in self.labels]

    def flag_rates(self) -> Tuple[float, float, float]:
        """Fraction of traces flagged per dimension (reuse, downgrade, lifetime)."""
        if not self.labels:
            return (0.0, 0.0, 0.0)
        n = len(self.labels)
        return tuple(sum(labels.as_tuple()[i] for labels in self.labels) / n for i in range(3))
