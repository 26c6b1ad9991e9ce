"""Time-stamped segmentations and their projection onto frame indices."""

import math as _math
from dataclasses import dataclass as _dataclass
from typing import Optional as _Optional
from typing import Tuple as _Tuple

import numpy as _np

from .errors import InvalidValue as _InvalidValue
from .tier import Tier as _Tier
from .tier import SEGMENT_TIERS as _SEGMENT_TIERS

UNCOVERED = -1

# Alignment tools print times with a handful of decimals
_TIME_TOLERANCE = 1e-6


@_dataclass(frozen=True)
class Segment:
    tier: _Tier
    label: _Optional[str]
    start: float
    end: float

    def __post_init__(self):
        object.__setattr__(self, "tier", _Tier(self.tier))
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "end", float(self.end))
        if not (_math.isfinite(self.start) and _math.isfinite(self.end)):
            raise _InvalidValue(f"{self}: times must be finite")
        if self.start < 0:
            raise _InvalidValue(f"{self}: start must be >= 0")
        if self.end <= self.start:
            raise _InvalidValue(f"{self}: end must be greater than start")

    def __str__(self):
        return f"[{self.tier}] {self.label!r} ({self.start:.4f}, {self.end:.4f})"

    def to_dict(self):
        return {"start": self.start, "end": self.end, "label": self.label}


def _check_tier(segments, tier, duration):
    for segment in segments:
        if segment.tier != tier:
            raise _InvalidValue(f"{segment} listed in the {tier} tier")
        if segment.end > duration + _TIME_TOLERANCE:
            raise _InvalidValue(f"{segment} ends after the utterance ({duration:.4f} s)")
    for previous, current in zip(segments, segments[1:]):
        if current.start < previous.start:
            raise _InvalidValue(f"{tier} tier is not sorted: {previous} before {current}")
        if current.start < previous.end - _TIME_TOLERANCE:
            raise _InvalidValue(f"{tier} tier overlaps: {previous} and {current}")


@_dataclass(frozen=True)
class Segmentation:
    """Phone and word segments of one utterance.

    The utterance tier is implicit: a single segment spanning ``[0, duration)``.
    """

    duration: float
    phones: _Tuple[Segment, ...] = ()
    words: _Tuple[Segment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "duration", float(self.duration))
        object.__setattr__(self, "phones", tuple(self.phones))
        object.__setattr__(self, "words", tuple(self.words))
        if not (self.duration > 0 and _math.isfinite(self.duration)):
            raise _InvalidValue(f"Segmentation: duration must be > 0, got {self.duration}")
        _check_tier(self.phones, _Tier.Phone, self.duration)
        _check_tier(self.words, _Tier.Word, self.duration)

    def segments(self, tier) -> _Tuple[Segment, ...]:
        tier = _Tier(tier)
        if tier == _Tier.Phone:
            return self.phones
        if tier == _Tier.Word:
            return self.words
        if tier == _Tier.Utterance:
            return (Segment(_Tier.Utterance, None, 0.0, self.duration),)
        raise _InvalidValue("the frame tier has no segments")

    def to_dict(self):
        return {
            "duration": self.duration,
            "phones": [segment.to_dict() for segment in self.phones],
            "words": [segment.to_dict() for segment in self.words],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["duration"],
            tuple(
                Segment(_Tier.Phone, item.get("label"), item["start"], item["end"])
                for item in data.get("phones", [])
            ),
            tuple(
                Segment(_Tier.Word, item.get("label"), item["start"], item["end"])
                for item in data.get("words", [])
            ),
        )


class FrameSpanMap:
    """Per segment tier, the index of the segment covering each frame.

    Frames whose centers fall in no segment hold ``UNCOVERED``. The utterance
    tier covers every frame.
    """

    def __init__(self, indices: dict, num_segments: dict):
        self._indices = {}
        self._num_segments = {}
        lengths = set()
        for tier in _SEGMENT_TIERS:
            array = _np.array(indices[tier], dtype=_np.int64, copy=True)
            count = int(num_segments[tier])
            if array.ndim != 1:
                raise _InvalidValue(f"FrameSpanMap: {tier} indices must be 1-D")
            if _np.any((array < UNCOVERED) | (array >= count)):
                raise _InvalidValue(f"FrameSpanMap: {tier} index out of range")
            covered = array[array != UNCOVERED]
            if _np.any(_np.diff(covered) < 0):
                raise _InvalidValue(f"FrameSpanMap: {tier} indices must be monotonic")
            array.setflags(write=False)
            self._indices[tier] = array
            self._num_segments[tier] = count
            lengths.add(array.shape[0])
        if len(lengths) != 1 or 0 in lengths:
            raise _InvalidValue("FrameSpanMap: all tiers must cover the same T >= 1 frames")
        if _np.any(self._indices[_Tier.Utterance] == UNCOVERED):
            raise _InvalidValue("FrameSpanMap: the utterance tier must cover every frame")

    @property
    def num_frames(self) -> int:
        return self._indices[_Tier.Utterance].shape[0]

    def indices(self, tier) -> _np.ndarray:
        return self._indices[_Tier(tier)]

    def num_segments(self, tier) -> int:
        return self._num_segments[_Tier(tier)]

    def covered_segments(self, tier) -> _np.ndarray:
        """Sorted indices of the segments covering at least one frame."""
        indices = self.indices(tier)
        return _np.unique(indices[indices != UNCOVERED])

    def stream_positions(self, tier) -> _np.ndarray:
        """Per frame, the position of its covering segment in the tier's DSU stream."""
        indices = self.indices(tier)
        positions = _np.full(indices.shape, UNCOVERED, dtype=_np.int64)
        covered = indices != UNCOVERED
        positions[covered] = _np.searchsorted(
            self.covered_segments(tier), indices[covered]
        )
        return positions

    def to_dict(self):
        return {
            str(tier): {
                "num_segments": self._num_segments[tier],
                "indices": self._indices[tier].tolist(),
            }
            for tier in _SEGMENT_TIERS
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            {tier: data[str(tier)]["indices"] for tier in _SEGMENT_TIERS},
            {tier: data[str(tier)]["num_segments"] for tier in _SEGMENT_TIERS},
        )

    def __eq__(self, other):
        if not isinstance(other, FrameSpanMap):
            return NotImplemented
        return all(
            self._num_segments[tier] == other._num_segments[tier]
            and _np.array_equal(self._indices[tier], other._indices[tier])
            for tier in _SEGMENT_TIERS
        )

    __hash__ = None
