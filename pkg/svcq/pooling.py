"""Segment mean pooling and multi-stream fusion.

All accumulation happens in float64 with a fixed, sequential order so that
results are reproducible bit-for-bit.
"""

from dataclasses import dataclass as _dataclass

import numpy as _np

from .codebook import Codebook as _Codebook
from .errors import CodeOutOfRange as _CodeOutOfRange
from .errors import DimensionMismatch as _DimensionMismatch
from .errors import InvalidValue as _InvalidValue
from .errors import ModelMismatch as _ModelMismatch
from .features import FeatureMatrix as _FeatureMatrix
from .features import FusedFrameSequence as _FusedFrameSequence
from .segmentation import UNCOVERED as _UNCOVERED
from .segmentation import FrameSpanMap as _FrameSpanMap
from .streams import DsuStream as _DsuStream
from .tier import ALL_TIERS as _ALL_TIERS
from .tier import Tier as _Tier


@_dataclass(frozen=True, eq=False)
class PooledSegments:
    """Mean vectors of the segments of one tier that cover at least one frame."""

    tier: _Tier
    segment_indices: _np.ndarray
    vectors: _np.ndarray
    num_empty: int

    def __len__(self):
        return self.segment_indices.shape[0]

    def __iter__(self):
        return iter(zip(self.segment_indices.tolist(), self.vectors))


def _pool_rows(rows, span_map, tier):
    tier = _Tier(tier)
    if tier == _Tier.Frame:
        raise _InvalidValue("pooling needs a segment tier (phone, word or utterance)")
    if span_map.num_frames != rows.shape[0]:
        raise _DimensionMismatch(
            f"span map covers {span_map.num_frames} frames, features have {rows.shape[0]}",
            expected=rows.shape[0],
            actual=span_map.num_frames,
        )
    indices = span_map.indices(tier)
    covered = indices != _UNCOVERED
    segment_ids = span_map.covered_segments(tier)
    positions = _np.searchsorted(segment_ids, indices[covered])

    sums = _np.zeros((segment_ids.shape[0], rows.shape[1]), dtype=_np.float64)
    _np.add.at(sums, positions, rows[covered].astype(_np.float64))
    counts = _np.bincount(positions, minlength=segment_ids.shape[0])
    vectors = sums / counts[:, None] if segment_ids.shape[0] else sums

    return PooledSegments(
        tier,
        segment_ids,
        vectors,
        span_map.num_segments(tier) - segment_ids.shape[0],
    )


def pool_segments(features: _FeatureMatrix, span_map: _FrameSpanMap, tier) -> PooledSegments:
    """Arithmetic mean of the feature rows inside every covered segment of ``tier``."""
    return _pool_rows(features.values, span_map, tier)


def _lookup(codebook: _Codebook, codes):
    codes = _np.asarray(codes, dtype=_np.int64)
    if codes.size and (codes.min() < 0 or codes.max() >= codebook.k):
        raise _CodeOutOfRange(
            f"{codebook}: code ids must lie in [0, {codebook.k}),"
            f" found range [{codes.min()}, {codes.max()}]"
        )
    return codebook.centroids[codes]


def post_pool_codes(
    frame_codes: _DsuStream, frame_codebook: _Codebook, span_map: _FrameSpanMap, tier
) -> PooledSegments:
    """Mean of the frame codes' centroid vectors inside every covered segment."""
    if len(frame_codes) != span_map.num_frames:
        raise _DimensionMismatch(
            f"frame stream has {len(frame_codes)} codes, span map {span_map.num_frames} frames",
            expected=span_map.num_frames,
            actual=len(frame_codes),
        )
    return _pool_rows(_lookup(frame_codebook, frame_codes.codes), span_map, tier)


def fuse_streams(encoded, model, tiers=_ALL_TIERS) -> _FusedFrameSequence:
    """Average, per frame, the centroids of every stream whose segment covers the frame.

    The frame tier always participates. Tiers not covering a frame are left out
    of that frame's mean rather than counted as zero vectors. ``tiers`` restricts
    fusion to a subset of the streams.
    """
    tiers = sorted({_Tier(tier) for tier in tiers} | {_Tier.Frame})
    if encoded.dim is not None and encoded.dim != model.dim:
        raise _ModelMismatch(
            f"'{encoded.utterance_id}' was encoded with dim {encoded.dim},"
            f" the model has dim {model.dim}"
        )
    span_map = encoded.frame_span_map
    num_frames = encoded.num_frames

    frame_codebook = model.feature_codebook(_Tier.Frame)
    sums = _lookup(frame_codebook, encoded.streams[_Tier.Frame].codes).astype(_np.float64)
    counts = _np.ones(num_frames, dtype=_np.float64)

    for tier in tiers:
        if tier == _Tier.Frame:
            continue
        codebook = model.feature_codebook(tier)
        if codebook.dim != frame_codebook.dim:
            raise _ModelMismatch(
                f"{codebook} has dim {codebook.dim}, frame codebook {frame_codebook.dim}"
            )
        stream = encoded.streams[tier]
        positions = span_map.stream_positions(tier)
        if positions.shape[0] != num_frames:
            raise _ModelMismatch(f"[{tier}] span map does not match the frame stream")
        covered = positions != _UNCOVERED
        if covered.any() and positions[covered].max() >= len(stream):
            raise _ModelMismatch(
                f"[{tier}] stream has {len(stream)} codes, span map refers to more"
            )
        centroids = _lookup(codebook, stream.codes).astype(_np.float64)
        sums[covered] += centroids[positions[covered]]
        counts[covered] += 1.0

    return _FusedFrameSequence(sums / counts[:, None])
