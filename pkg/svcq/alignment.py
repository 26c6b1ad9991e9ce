"""
Readers for forced-alignment files and the mapping of their time intervals
onto feature frames.

Two input formats are understood:

- Praat TextGrid files in long or short text form, UTF-8 (optionally with BOM),
  as written by the Montreal Forced Aligner;
- a plain JSON document ``{"duration": s, "phones": [...], "words": [...]}``
  whose list entries are ``{"start": s, "end": s, "label": text}`` objects.

A frame belongs to the segment whose half-open interval ``[start, end)``
contains the frame center ``(n + 0.5) * frame_hop``.
"""

import json as _json
import logging as _logging
import re as _re
from dataclasses import dataclass as _dataclass
from pathlib import Path as _Path
from typing import Tuple as _Tuple

import numpy as _np

from .errors import AlignmentMismatch as _AlignmentMismatch
from .errors import InvalidValue as _InvalidValue
from .errors import MalformedJson as _MalformedJson
from .errors import MalformedTextGrid as _MalformedTextGrid
from .errors import MissingTier as _MissingTier
from .errors import SchemaViolation as _SchemaViolation
from .errors import UnsupportedEncoding as _UnsupportedEncoding
from .segmentation import UNCOVERED as _UNCOVERED
from .segmentation import FrameSpanMap as _FrameSpanMap
from .segmentation import Segment as _Segment
from .segmentation import Segmentation as _Segmentation
from .tier import Tier as _Tier

_LOGGER = _logging.getLogger(__name__)

DEFAULT_SILENCE_LABELS = frozenset({"", "sil", "sp", "spn"})
DEFAULT_PHONE_TIER = "phones"
DEFAULT_WORD_TIER = "words"

_TIME_TOLERANCE = 1e-6

_TOKEN_PATTERN = _re.compile(
    r"""
    (?P<string>"(?:[^"]|"")*")
    | (?P<flag><exists>|<absent>)
    | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(?![\w.])
    | (?P<index>\[[^\]\n]*\])
    | (?P<word>[A-Za-z_][\w?]*:?|=|:)
    | (?P<space>\s+)
    | (?P<bad>.)
    """,
    _re.VERBOSE,
)


@_dataclass(frozen=True)
class Interval:
    xmin: float
    xmax: float
    text: str


@_dataclass(frozen=True)
class IntervalTier:
    name: str
    xmin: float
    xmax: float
    intervals: _Tuple[Interval, ...]


@_dataclass(frozen=True)
class TextGridDocument:
    xmin: float
    xmax: float
    tiers: _Tuple[IntervalTier, ...]
    warnings: _Tuple[str, ...] = ()

    def __post_init__(self):
        if self.xmax < self.xmin:
            raise _InvalidValue(f"TextGrid: xmax {self.xmax} < xmin {self.xmin}")
        for tier in self.tiers:
            previous = None
            for interval in tier.intervals:
                if interval.xmax <= interval.xmin:
                    raise _InvalidValue(
                        f"tier '{tier.name}': empty interval {interval}"
                    )
                if (
                    interval.xmin < self.xmin - _TIME_TOLERANCE
                    or interval.xmax > self.xmax + _TIME_TOLERANCE
                ):
                    raise _InvalidValue(
                        f"tier '{tier.name}': interval {interval} outside the document"
                    )
                if previous is not None and abs(interval.xmin - previous.xmax) > _TIME_TOLERANCE:
                    raise _InvalidValue(
                        f"tier '{tier.name}': intervals {previous} and {interval}"
                        " are not contiguous"
                    )
                previous = interval

    def tier(self, name: str) -> IntervalTier:
        for tier in self.tiers:
            if tier.name == name:
                return tier
        available = ", ".join(f"'{tier.name}'" for tier in self.tiers) or "none"
        raise _MissingTier(
            f"TextGrid has no interval tier '{name}' (available: {available})", tier=name
        )


def _decode_text(data: bytes, name: str) -> str:
    data = bytes(data)
    if data.startswith((b"\xff\xfe", b"\xfe\xff")):
        raise _UnsupportedEncoding(f"{name}: UTF-16 files are not supported, convert to UTF-8")
    if data.startswith(b"\xef\xbb\xbf"):
        data = data[3:]
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as error:
        raise _UnsupportedEncoding(f"{name}: not valid UTF-8 ({error})") from error


def _tokenize(text):
    tokens = []
    line = 1
    for match in _TOKEN_PATTERN.finditer(text):
        kind = match.lastgroup
        value = match.group()
        if kind == "bad":
            raise _MalformedTextGrid(f"unexpected character {value!r}", line=line)
        if kind == "string":
            tokens.append(("string", value[1:-1].replace('""', '"'), line))
        elif kind == "number":
            tokens.append(("number", float(value), line))
        elif kind == "flag":
            tokens.append(("flag", value, line))
        line += value.count("\n")
    return tokens, (tokens[-1][2] if tokens else line)


class _TokenReader:
    """Sequential access to the value tokens of a TextGrid.

    Long and short TextGrid files differ only in the labels around the
    values, which the tokenizer drops, so both forms read identically.
    """

    def __init__(self, tokens, last_line):
        self._tokens = tokens
        self._position = 0
        self._last_line = last_line

    @property
    def line(self):
        if self._position < len(self._tokens):
            return self._tokens[self._position][2]
        return self._last_line

    def _next(self, kind, what):
        if self._position >= len(self._tokens):
            raise _MalformedTextGrid(
                f"unexpected end of file, expected {what}", line=self._last_line
            )
        token_kind, value, line = self._tokens[self._position]
        if token_kind != kind:
            raise _MalformedTextGrid(f"expected {what}, found {value!r}", line=line)
        self._position += 1
        return value

    def string(self, what="a quoted string"):
        return self._next("string", what)

    def number(self, what="a number"):
        return self._next("number", what)

    def count(self, what="a count"):
        line = self.line
        value = self.number(what)
        if value < 0 or value != int(value):
            raise _MalformedTextGrid(f"expected {what}, found {value!r}", line=line)
        return int(value)

    def flag(self):
        return self._next("flag", "<exists> or <absent>")

    def at_end(self):
        return self._position >= len(self._tokens)


def parse_textgrid(data: bytes, name: str = "TextGrid") -> TextGridDocument:
    """Parse a Praat TextGrid (long or short text form).

    Point tiers are skipped; a warning is logged and kept on the document.
    """
    tokens, last_line = _tokenize(_decode_text(data, name))
    reader = _TokenReader(tokens, last_line)

    line = reader.line
    file_type = reader.string("the file type")
    if not file_type.startswith("ooTextFile"):
        raise _MalformedTextGrid(f"unknown file type {file_type!r}", line=line)
    line = reader.line
    object_class = reader.string("the object class")
    if object_class != "TextGrid":
        raise _MalformedTextGrid(f"object class {object_class!r} is not TextGrid", line=line)

    xmin = reader.number("document xmin")
    xmax = reader.number("document xmax")
    num_tiers = reader.count("the tier count") if reader.flag() == "<exists>" else 0

    tiers = []
    warnings = []
    for _ in range(num_tiers):
        tier_line = reader.line
        tier_class = reader.string("a tier class")
        tier_name = reader.string("a tier name")
        tier_xmin = reader.number("tier xmin")
        tier_xmax = reader.number("tier xmax")
        size = reader.count("an interval count")
        if tier_class == "IntervalTier":
            intervals = []
            for _ in range(size):
                interval_xmin = reader.number("interval xmin")
                interval_xmax = reader.number("interval xmax")
                intervals.append(
                    Interval(interval_xmin, interval_xmax, reader.string("interval text"))
                )
            tiers.append(IntervalTier(tier_name, tier_xmin, tier_xmax, tuple(intervals)))
        elif tier_class == "TextTier":
            for _ in range(size):
                reader.number("point time")
                reader.string("point mark")
            message = f"{name}: ignoring point tier '{tier_name}'"
            _LOGGER.warning(message)
            warnings.append(message)
        else:
            raise _MalformedTextGrid(f"unknown tier class {tier_class!r}", line=tier_line)

    if not reader.at_end():
        raise _MalformedTextGrid("unexpected content after the last tier", line=reader.line)

    try:
        return TextGridDocument(xmin, xmax, tuple(tiers), tuple(warnings))
    except _InvalidValue as error:
        raise _MalformedTextGrid(str(error)) from error


def _is_silence(label, silence_labels):
    return label is None or label.strip().lower() in silence_labels


def textgrid_to_segmentation(
    doc: TextGridDocument,
    phone_tier: str = DEFAULT_PHONE_TIER,
    word_tier: str = DEFAULT_WORD_TIER,
    silence_labels=DEFAULT_SILENCE_LABELS,
) -> _Segmentation:
    """Collect the phone and word segments of a document, dropping silence intervals."""
    silence_labels = {label.lower() for label in silence_labels}

    def _segments(tier_name, tier):
        return tuple(
            _Segment(tier, interval.text, max(interval.xmin, 0.0), interval.xmax)
            for interval in doc.tier(tier_name).intervals
            if not _is_silence(interval.text, silence_labels)
        )

    phones = _segments(phone_tier, _Tier.Phone)
    words = _segments(word_tier, _Tier.Word)
    return _Segmentation(doc.xmax, phones, words)


def _json_segments(items, tier, silence_labels, name):
    if not isinstance(items, list):
        raise _SchemaViolation(f"{name}: '{tier}s' must be a list")
    segments = []
    for position, item in enumerate(items):
        if not isinstance(item, dict):
            raise _SchemaViolation(f"{name}: {tier} entry {position} is not an object")
        try:
            start, end = item["start"], item["end"]
        except KeyError as error:
            raise _SchemaViolation(f"{name}: {tier} entry {position} lacks {error}") from error
        label = item.get("label")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (start, end)):
            raise _SchemaViolation(f"{name}: {tier} entry {position} has non-numeric times")
        if label is not None and not isinstance(label, str):
            raise _SchemaViolation(f"{name}: {tier} entry {position} label is not text")
        if end <= start:
            raise _SchemaViolation(
                f"{name}: {tier} entry {position} ends at {end} <= start {start}"
            )
        if _is_silence(label, silence_labels):
            continue
        try:
            segments.append(_Segment(tier, label, start, end))
        except _InvalidValue as error:
            raise _SchemaViolation(f"{name}: {tier} entry {position}: {error}") from error
    return tuple(sorted(segments, key=lambda segment: segment.start))


def parse_json_alignment(
    data: bytes, silence_labels=DEFAULT_SILENCE_LABELS, name: str = "alignment"
) -> _Segmentation:
    """Read the JSON alignment format into a Segmentation. Unknown keys are ignored."""
    text = _decode_text(data, name)
    try:
        document = _json.loads(text)
    except _json.JSONDecodeError as error:
        raise _MalformedJson(f"{name}: {error}") from error
    if not isinstance(document, dict):
        raise _SchemaViolation(f"{name}: top level must be an object")
    duration = document.get("duration")
    if not isinstance(duration, (int, float)) or isinstance(duration, bool) or duration <= 0:
        raise _SchemaViolation(f"{name}: 'duration' must be a positive number")

    silence_labels = {label.lower() for label in silence_labels}
    phones = _json_segments(document.get("phones", []), _Tier.Phone, silence_labels, name)
    words = _json_segments(document.get("words", []), _Tier.Word, silence_labels, name)
    try:
        return _Segmentation(duration, phones, words)
    except _InvalidValue as error:
        raise _SchemaViolation(f"{name}: {error}") from error


def load_alignment(
    path,
    phone_tier: str = DEFAULT_PHONE_TIER,
    word_tier: str = DEFAULT_WORD_TIER,
    silence_labels=DEFAULT_SILENCE_LABELS,
) -> _Segmentation:
    """Read a ``.json`` alignment or a TextGrid (any other suffix) from disk."""
    path = _Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".json":
        return parse_json_alignment(data, silence_labels, name=str(path))
    return textgrid_to_segmentation(
        parse_textgrid(data, name=str(path)), phone_tier, word_tier, silence_labels
    )


def build_frame_span_map(
    seg: _Segmentation, frame_hop: float, num_frames: int
) -> _FrameSpanMap:
    """Assign each frame to the phone, word and utterance segment containing its center."""
    if num_frames < 1 or not frame_hop > 0:
        raise _InvalidValue("build_frame_span_map: need num_frames >= 1 and frame_hop > 0")
    centers = (_np.arange(num_frames, dtype=_np.float64) + 0.5) * frame_hop

    indices = {_Tier.Utterance: _np.zeros(num_frames, dtype=_np.int64)}
    num_segments = {_Tier.Utterance: 1}
    for tier in (_Tier.Phone, _Tier.Word):
        segments = seg.segments(tier)
        num_segments[tier] = len(segments)
        tier_indices = _np.full(num_frames, _UNCOVERED, dtype=_np.int64)
        if segments:
            starts = _np.array([segment.start for segment in segments])
            ends = _np.array([segment.end for segment in segments])
            candidates = _np.searchsorted(starts, centers, side="right") - 1
            valid = candidates >= 0
            inside = _np.zeros(num_frames, dtype=bool)
            inside[valid] = centers[valid] < ends[candidates[valid]]
            tier_indices[inside] = candidates[inside]
        indices[tier] = tier_indices
    return _FrameSpanMap(indices, num_segments)


def check_alignment(seg: _Segmentation, frame_hop: float, num_frames: int, name: str = ""):
    """Reject alignments whose duration differs from the features by more than one frame."""
    expected = seg.duration / frame_hop
    if abs(expected - num_frames) > 1 + 1e-6:
        raise _AlignmentMismatch(
            f"{name}: alignment of {seg.duration:.4f} s spans {expected:.1f} frames"
            f" of {frame_hop} s but the features have {num_frames}"
        )


def _format_time(value):
    return repr(float(value))


def _quote(text):
    return '"' + text.replace('"', '""') + '"'


def write_textgrid(doc: TextGridDocument, short: bool = False) -> bytes:
    """Serialize a document as a Praat TextGrid, for debugging and inspection."""
    if short:
        lines = ['File type = "ooTextFile"', 'Object class = "TextGrid"', ""]
        lines += [_format_time(doc.xmin), _format_time(doc.xmax), "<exists>", str(len(doc.tiers))]
        for tier in doc.tiers:
            lines += ['"IntervalTier"', _quote(tier.name)]
            lines += [_format_time(tier.xmin), _format_time(tier.xmax), str(len(tier.intervals))]
            for interval in tier.intervals:
                lines += [
                    _format_time(interval.xmin),
                    _format_time(interval.xmax),
                    _quote(interval.text),
                ]
    else:
        lines = [
            'File type = "ooTextFile"',
            'Object class = "TextGrid"',
            "",
            f"xmin = {_format_time(doc.xmin)}",
            f"xmax = {_format_time(doc.xmax)}",
            "tiers? <exists>",
            f"size = {len(doc.tiers)}",
            "item []:",
        ]
        for tier_number, tier in enumerate(doc.tiers, start=1):
            lines += [
                f"    item [{tier_number}]:",
                '        class = "IntervalTier"',
                f"        name = {_quote(tier.name)}",
                f"        xmin = {_format_time(tier.xmin)}",
                f"        xmax = {_format_time(tier.xmax)}",
                f"        intervals: size = {len(tier.intervals)}",
            ]
            for number, interval in enumerate(tier.intervals, start=1):
                lines += [
                    f"        intervals [{number}]:",
                    f"            xmin = {_format_time(interval.xmin)}",
                    f"            xmax = {_format_time(interval.xmax)}",
                    f"            text = {_quote(interval.text)}",
                ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def segmentation_to_textgrid(
    seg: _Segmentation,
    phone_tier: str = DEFAULT_PHONE_TIER,
    word_tier: str = DEFAULT_WORD_TIER,
) -> TextGridDocument:
    """Build a document from a segmentation, filling gaps with empty (silence) intervals."""

    def _tier(name, segments):
        intervals = []
        cursor = 0.0
        for segment in segments:
            if segment.start > cursor + _TIME_TOLERANCE:
                intervals.append(Interval(cursor, segment.start, ""))
            intervals.append(Interval(segment.start, segment.end, segment.label or ""))
            cursor = segment.end
        if seg.duration > cursor + _TIME_TOLERANCE:
            intervals.append(Interval(cursor, seg.duration, ""))
        return IntervalTier(name, 0.0, seg.duration, tuple(intervals))

    return TextGridDocument(
        0.0,
        seg.duration,
        (_tier(word_tier, seg.words), _tier(phone_tier, seg.phones)),
    )
