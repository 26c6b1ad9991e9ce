from enum import Enum as _Enum
from functools import total_ordering as _total_ordering


@_total_ordering
class Tier(_Enum):
    """Segmentation granularity, ordered from finest to coarsest."""

    Frame = "frame"
    Phone = "phone"
    Word = "word"
    Utterance = "utterance"

    def __str__(self):
        return self.value

    def __lt__(self, other):
        if not isinstance(other, Tier):
            return NotImplemented
        return self.tag < other.tag

    @property
    def tag(self) -> int:
        """Position in the granularity order, also the on-disk tier tag."""
        return _TIER_ORDER.index(self)

    @classmethod
    def from_tag(cls, tag: int):
        return _TIER_ORDER[tag]

    # Let's be case insensitive
    @classmethod
    def _missing_(cls, value):
        for item in cls:
            if isinstance(value, str) and item.value.lower() == value.lower():
                return item
        return super()._missing_(value)


_TIER_ORDER = (Tier.Frame, Tier.Phone, Tier.Word, Tier.Utterance)

ALL_TIERS = _TIER_ORDER
SEGMENT_TIERS = _TIER_ORDER[1:]
