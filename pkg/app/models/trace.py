"""Cryptographic operation traces: operations, key records, traces and corpora."""
import enum
from collections import Counter
from typing import Dict, List, Tuple

from pydantic import BaseModel, ConfigDict, Field

from app.models.labels import Category


class OpType(str, enum.Enum):
    """Operation vocabulary."""
    KEYGEN = "KeyGen"
    ENCRYPT = "Encrypt"
    DECRYPT = "Decrypt"
    SIGN = "Sign"
    VERIFY = "Verify"


OP_TYPES: Tuple[OpType, ...] = tuple(OpType)

# Column order of the expanded operation table.
OPERATION_COLUMNS: Tuple[str, ...] = (
    "trace_id",
    "step_index",
    "timestamp",
    "op_type",
    "key_id",
    "algorithm_id",
    "key_lifetime",
    "duration",
)


class KeyRecord(BaseModel):
    """Lifecycle record of one key."""

    model_config = ConfigDict(frozen=True)

    key_id: int = Field(ge=0, lt=2**64)
    created_at: float
    lifetime: float = Field(gt=0)
    strength_bits: int = Field(gt=0)

    @property
    def expires_at(self) -> float:
        return self.created_at + self.lifetime

    def __repr__(self) -> str:
        return f"<KeyRecord(key_id={self.key_id}, created_at={self.created_at:.3f}, lifetime={self.lifetime:.3f})>"


class CryptoOperation(BaseModel):
    """One row of the expanded trace table (exactly eight fields)."""

    model_config = ConfigDict(frozen=True)

    trace_id: int = Field(ge=0)
    step_index: int = Field(ge=0)
    timestamp: float = Field(ge=0)
    op_type: OpType
    key_id: int = Field(ge=0, lt=2**64)
    algorithm_id: int
    key_lifetime: float = Field(gt=0)
    duration: float = Field(gt=0)

    def as_row(self) -> list:
        """Values in table column order."""
        return [
            self.trace_id,
            self.step_index,
            self.timestamp,
            self.op_type.value,
            self.key_id,
            self.algorithm_id,
            self.key_lifetime,
            self.duration,
        ]


class Trace(BaseModel):
    """Ordered operation sequence with its own key registry."""

    model_config = ConfigDict(frozen=True)

    trace_id: int = Field(ge=0)
    operations: Tuple[CryptoOperation, ...]
    keys: Dict[int, KeyRecord]
    category: Category = Category.NORMAL

    def __len__(self) -> int:
        return len(self.operations)

    def __repr__(self) -> str:
        return f"<Trace(id={self.trace_id}, ops={len(self.operations)}, category={self.category.value})>"

    @property
    def timestamps(self) -> List[float]:
        return [op.timestamp for op in self.operations]

    def uses_of(self, key_id: int) -> List[CryptoOperation]:
        """Operations referencing ``key_id`` in step order."""
        return [op for op in self.operations if op.key_id == key_id]

    def referenced_keys(self) -> List[int]:
        """Distinct key ids in order of first reference."""
        return list(dict.fromkeys(op.key_id for op in self.operations))

    def check(self) -> None:
        """Validate ordering and registry consistency.

        Raises:
            ValueError: If an invariant does not hold
        """
        previous = 0.0
        seen = set()
        for index, op in enumerate(self.operations):
            if op.step_index != index:
                raise ValueError(f"Trace {self.trace_id}: step {index} carries index {op.step_index}")
            if op.trace_id != self.trace_id:
                raise ValueError(f"Trace {self.trace_id}: operation {index} belongs to trace {op.trace_id}")
            if op.timestamp < previous:
                raise ValueError(f"Trace {self.trace_id}: timestamps decrease at step {index}")
            previous = op.timestamp
            if op.key_id not in self.keys:
                raise ValueError(f"Trace {self.trace_id}: key {op.key_id} missing from registry")
            if op.key_id not in seen:
                if op.op_type is not OpType.KEYGEN:
                    raise ValueError(
                        f"Trace {self.trace_id}: key {op.key_id} used at step {index} before generation"
                    )
                seen.add(op.key_id)


class Corpus(BaseModel):
    """Ordered collection of traces."""

    model_config = ConfigDict(frozen=True)

    traces: Tuple[Trace, ...] = ()

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __getitem__(self, index: int) -> Trace:
        return self.traces[index]

    @property
    def n_operations(self) -> int:
        return sum(len(trace) for trace in self.traces)

    def category_counts(self) -> Dict[Category, int]:
        """Number of traces per generation category (all eight present)."""
        counts = Counter(trace.category for trace in self.traces)
        return {category: counts.get(category, 0) for category in Category}
