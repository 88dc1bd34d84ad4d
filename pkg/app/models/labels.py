"""Violation labels, generation categories and the corpus-wide key index."""
import enum
from typing import Dict, FrozenSet, Iterator, Tuple

from pydantic import BaseModel, ConfigDict


class Category(str, enum.Enum):
    """The eight trace categories (power set of the three violation flags)."""
    NORMAL = "Normal"
    REUSE_ONLY = "Reuse-only"
    DOWNGRADE_ONLY = "Downgrade-only"
    LIFETIME_ONLY = "Lifetime-only"
    REUSE_DOWNGRADE = "Reuse+Downgrade"
    REUSE_LIFETIME = "Reuse+Lifetime"
    DOWNGRADE_LIFETIME = "Downgrade+Lifetime"
    REUSE_DOWNGRADE_LIFETIME = "Reuse+Downgrade+Lifetime"

    @property
    def flags(self) -> "ViolationLabels":
        """Flag vector this category stands for."""
        return _CATEGORY_FLAGS[self]

    @property
    def has_reuse(self) -> bool:
        return self.flags.reuse


class ViolationLabels(BaseModel):
    """The three boolean intent flags of one trace."""

    model_config = ConfigDict(frozen=True)

    reuse: bool = False
    downgrade: bool = False
    lifetime: bool = False

    def as_tuple(self) -> Tuple[bool, bool, bool]:
        return (self.reuse, self.downgrade, self.lifetime)

    def any(self) -> bool:
        return self.reuse or self.downgrade or self.lifetime


_CATEGORY_FLAGS: Dict[Category, ViolationLabels] = {
    Category.NORMAL: ViolationLabels(),
    Category.REUSE_ONLY: ViolationLabels(reuse=True),
    Category.DOWNGRADE_ONLY: ViolationLabels(downgrade=True),
    Category.LIFETIME_ONLY: ViolationLabels(lifetime=True),
    Category.REUSE_DOWNGRADE: ViolationLabels(reuse=True, downgrade=True),
    Category.REUSE_LIFETIME: ViolationLabels(reuse=True, lifetime=True),
    Category.DOWNGRADE_LIFETIME: ViolationLabels(downgrade=True, lifetime=True),
    Category.REUSE_DOWNGRADE_LIFETIME: ViolationLabels(reuse=True, downgrade=True, lifetime=True),
}

_FLAGS_CATEGORY: Dict[Tuple[bool, bool, bool], Category] = {
    flags.as_tuple(): category for category, flags in _CATEGORY_FLAGS.items()
}


def category_of(labels: ViolationLabels) -> Category:
    """
    Map a flag vector to its category name.

    Args:
        labels: Oracle flags

    Returns:
        The unique category with exactly these flags
    """
    return _FLAGS_CATEGORY[labels.as_tuple()]


class KeyIndex(BaseModel):
    """Corpus-wide map from key id to the set of trace ids using it."""

    model_config = ConfigDict(frozen=True)

    usage: Dict[int, FrozenSet[int]]

    def __getitem__(self, key_id: int) -> FrozenSet[int]:
        return self.usage[key_id]

    def __contains__(self, key_id: object) -> bool:
        return key_id in self.usage

    def __len__(self) -> int:
        return len(self.usage)

    def shared_keys(self) -> Iterator[int]:
        """Key ids referenced by two or more traces."""
        return (key_id for key_id, traces in self.usage.items() if len(traces) >= 2)
