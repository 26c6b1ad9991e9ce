"""Discrete-unit streams, encoded utterances and bitrate reports."""

import json as _json
import math as _math
from dataclasses import dataclass as _dataclass
from dataclasses import field as _field
from pathlib import Path as _Path
from typing import Optional as _Optional

import numpy as _np

from .errors import InvalidValue as _InvalidValue
from .errors import MalformedJson as _MalformedJson
from .errors import SchemaViolation as _SchemaViolation
from .segmentation import FrameSpanMap as _FrameSpanMap
from .tier import ALL_TIERS as _ALL_TIERS
from .tier import Tier as _Tier

ENCODED_FORMAT_VERSION = 1


@_dataclass(frozen=True, eq=False)
class DsuStream:
    tier: _Tier
    codes: _np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tier", _Tier(self.tier))
        codes = _np.array(self.codes, dtype=_np.int64, copy=True).reshape(-1)
        if _np.any(codes < 0):
            raise _InvalidValue(f"DsuStream [{self.tier}]: code ids must be >= 0")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    def __len__(self):
        return self.codes.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DsuStream):
            return NotImplemented
        return self.tier == other.tier and _np.array_equal(self.codes, other.codes)

    __hash__ = None


@_dataclass(frozen=True, eq=False)
class EncodedUtterance:
    """Four parallel DSU streams of one utterance plus the timing needed to fuse them."""

    utterance_id: str
    streams: dict
    duration: float
    frame_hop: float
    frame_span_map: _FrameSpanMap
    dim: _Optional[int] = None

    def __post_init__(self):
        streams = {_Tier(tier): stream for tier, stream in self.streams.items()}
        object.__setattr__(self, "streams", streams)
        object.__setattr__(self, "duration", float(self.duration))
        object.__setattr__(self, "frame_hop", float(self.frame_hop))
        name = f"EncodedUtterance '{self.utterance_id}'"
        missing = [str(tier) for tier in _ALL_TIERS if tier not in streams]
        if missing:
            raise _InvalidValue(f"{name}: missing streams {', '.join(missing)}")
        if not (self.duration > 0 and self.frame_hop > 0):
            raise _InvalidValue(f"{name}: duration and frame_hop must be > 0")
        num_frames = len(streams[_Tier.Frame])
        if num_frames != self.frame_span_map.num_frames:
            raise _InvalidValue(
                f"{name}: frame stream has {num_frames} codes but the span map"
                f" {self.frame_span_map.num_frames} frames"
            )
        if abs(num_frames * self.frame_hop - self.duration) > self.frame_hop + 1e-9:
            raise _InvalidValue(
                f"{name}: {num_frames} frames of {self.frame_hop} s disagree with"
                f" duration {self.duration} s"
            )
        for tier in _ALL_TIERS[1:]:
            covered = self.frame_span_map.covered_segments(tier).shape[0]
            if len(streams[tier]) != covered:
                raise _InvalidValue(
                    f"{name}: [{tier}] stream has {len(streams[tier])} codes for"
                    f" {covered} covered segments"
                )

    @property
    def num_frames(self) -> int:
        return len(self.streams[_Tier.Frame])

    def stream_lengths(self) -> dict:
        return {tier: len(self.streams[tier]) for tier in _ALL_TIERS}

    def to_dict(self) -> dict:
        return {
            "version": ENCODED_FORMAT_VERSION,
            "id": self.utterance_id,
            "duration": self.duration,
            "frame_hop": self.frame_hop,
            "streams": {
                str(tier): self.streams[tier].codes.tolist() for tier in _ALL_TIERS
            },
            "span_map": self.frame_span_map.to_dict(),
            "dim": self.dim,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                data["id"],
                {
                    tier: DsuStream(tier, data["streams"][str(tier)])
                    for tier in _ALL_TIERS
                },
                data["duration"],
                data["frame_hop"],
                _FrameSpanMap.from_dict(data["span_map"]),
                data.get("dim"),
            )
        except (KeyError, TypeError) as error:
            raise _SchemaViolation(f"encoded utterance: missing or bad field {error}") from error
        except _InvalidValue as error:
            raise _SchemaViolation(str(error)) from error

    def __eq__(self, other):
        if not isinstance(other, EncodedUtterance):
            return NotImplemented
        return (
            self.utterance_id == other.utterance_id
            and self.duration == other.duration
            and self.frame_hop == other.frame_hop
            and self.dim == other.dim
            and self.frame_span_map == other.frame_span_map
            and all(self.streams[t] == other.streams[t] for t in _ALL_TIERS)
        )

    __hash__ = None


def save_encoded(encoded: EncodedUtterance, path) -> None:
    path = _Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_json.dumps(encoded.to_dict(), sort_keys=True) + "\n")


def load_encoded(path) -> EncodedUtterance:
    path = _Path(path)
    try:
        data = _json.loads(path.read_text(encoding="utf-8"))
    except _json.JSONDecodeError as error:
        raise _MalformedJson(f"{path}: {error}") from error
    return EncodedUtterance.from_dict(data)


@_dataclass(frozen=True)
class BitrateReport:
    """Bits spent per stream over one utterance and the resulting bits per second."""

    stream_bits: dict
    stream_units: dict
    vocabulary_sizes: dict
    duration: float
    utterance_id: str = ""
    total_bits: float = _field(init=False)
    bits_per_second: float = _field(init=False)

    def __post_init__(self):
        if not self.duration > 0:
            raise _InvalidValue("BitrateReport: duration must be > 0")
        if any(bits < 0 for bits in self.stream_bits.values()):
            raise _InvalidValue("BitrateReport: stream bits must be non-negative")
        total = _math.fsum(self.stream_bits[tier] for tier in sorted(self.stream_bits))
        object.__setattr__(self, "total_bits", total)
        object.__setattr__(self, "bits_per_second", total / self.duration)

    def to_dict(self) -> dict:
        return {
            "id": self.utterance_id,
            "duration": self.duration,
            "streams": {
                str(tier): {
                    "units": self.stream_units[tier],
                    "k": self.vocabulary_sizes[tier],
                    "bits": self.stream_bits[tier],
                }
                for tier in sorted(self.stream_bits)
            },
            "total_bits": self.total_bits,
            "bits_per_second": self.bits_per_second,
        }

    @classmethod
    def from_dict(cls, data):
        streams = data["streams"]
        return cls(
            {_Tier(name): item["bits"] for name, item in streams.items()},
            {_Tier(name): item["units"] for name, item in streams.items()},
            {_Tier(name): item["k"] for name, item in streams.items()},
            data["duration"],
            data.get("id", ""),
        )
