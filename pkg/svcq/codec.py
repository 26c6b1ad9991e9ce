"""Training of the four tier codebooks over a corpus, encoding of utterances
into parallel DSU streams, fusion and bitrate accounting.
"""

import logging as _logging
import math as _math
import os as _os
from dataclasses import dataclass as _dataclass
from dataclasses import field as _field
from multiprocessing import Pool as _Pool

import numpy as _np

from .alignment import DEFAULT_PHONE_TIER as _DEFAULT_PHONE_TIER
from .alignment import DEFAULT_SILENCE_LABELS as _DEFAULT_SILENCE_LABELS
from .alignment import DEFAULT_WORD_TIER as _DEFAULT_WORD_TIER
from .alignment import build_frame_span_map as _build_frame_span_map
from .alignment import check_alignment as _check_alignment
from .alignment import load_alignment as _load_alignment
from .codebook import POOLING_MODES as _POOLING_MODES
from .codebook import SvcModel as _SvcModel
from .errors import CorpusError as _CorpusError
from .errors import DimensionMismatch as _DimensionMismatch
from .errors import DimMismatchAcrossCorpus as _DimMismatchAcrossCorpus
from .errors import EmptyInput as _EmptyInput
from .errors import EmptySplit as _EmptySplit
from .errors import InvalidValue as _InvalidValue
from .errors import ModelMismatch as _ModelMismatch
from .errors import SvcqError as _SvcqError
from .errors import TooFewPoints as _TooFewPoints
from .errors import ZeroDuration as _ZeroDuration
from .features import FeatureMatrix as _FeatureMatrix
from .features import Standardizer as _Standardizer
from .features import load_features as _load_features
from .logging_tools import NamedLogger as _NamedLogger
from .pooling import fuse_streams as _fuse_streams
from .pooling import pool_segments as _pool_segments
from .pooling import post_pool_codes as _post_pool_codes
from .progress_bar import corpus_progress as _corpus_progress
from .quantizer import DEFAULT_MAX_ITERS as _DEFAULT_MAX_ITERS
from .quantizer import DEFAULT_TOL as _DEFAULT_TOL
from .quantizer import assign_batch as _assign_batch
from .quantizer import train_codebook as _train_codebook
from .streams import BitrateReport as _BitrateReport
from .streams import DsuStream as _DsuStream
from .streams import EncodedUtterance as _EncodedUtterance
from .tier import ALL_TIERS as _ALL_TIERS
from .tier import SEGMENT_TIERS as _SEGMENT_TIERS
from .tier import Tier as _Tier

_LOGGER = _logging.getLogger(__name__)

TIER_SEED_OFFSETS = {
    _Tier.Frame: 0,
    _Tier.Phone: 1,
    _Tier.Word: 2,
    _Tier.Utterance: 3,
}


@_dataclass(frozen=True)
class KMeansParams:
    max_iters: int = _DEFAULT_MAX_ITERS
    tol: float = _DEFAULT_TOL
    standardize: bool = False


@_dataclass(frozen=True)
class AlignmentOptions:
    phone_tier: str = _DEFAULT_PHONE_TIER
    word_tier: str = _DEFAULT_WORD_TIER
    silence_labels: frozenset = _field(default=_DEFAULT_SILENCE_LABELS)


@_dataclass(frozen=True)
class LoadedUtterance:
    utterance_id: str
    features: _FeatureMatrix
    segmentation: object
    span_map: object


def default_jobs() -> int:
    return len(_os.sched_getaffinity(0)) if hasattr(_os, "sched_getaffinity") else (
        _os.cpu_count() or 1
    )


# ----- ordered batch processing over manifest entries

_WORKER_STATE = {}


def _init_worker(function, state):
    _WORKER_STATE["function"] = function
    _WORKER_STATE["state"] = state


def _run_guarded(function, entry, state):
    try:
        return entry.id, function(entry, state), None
    except (_SvcqError, OSError) as error:
        return entry.id, None, f"{type(error).__name__}: {error}"


def _run_in_worker(entry):
    return _run_guarded(_WORKER_STATE["function"], entry, _WORKER_STATE["state"])


def map_entries(function, entries, state, jobs=1, progress=False, name="Processing"):
    """Apply ``function(entry, state)`` to every entry, results in manifest order.

    With ``jobs > 1`` entries are distributed over a process pool. Failures are
    collected and raised together as a :class:`CorpusError`.
    """
    entries = list(entries)
    results = []
    errors = {}
    disable = not progress
    if jobs is not None and jobs > 1 and len(entries) > 1:
        with _Pool(
            processes=min(jobs, len(entries)),
            initializer=_init_worker,
            initargs=(function, state),
        ) as process_pool:
            outcomes = _corpus_progress(
                process_pool.imap(_run_in_worker, entries), disable, len(entries), name
            )
            outcomes = list(outcomes)
    else:
        outcomes = [
            _run_guarded(function, entry, state)
            for entry in _corpus_progress(entries, disable, len(entries), name)
        ]
    for utterance_id, result, error in outcomes:
        if error is not None:
            errors[utterance_id] = error
        else:
            results.append(result)
    if errors:
        raise _CorpusError(f"{name} failed for {len(errors)} utterance(s)", errors)
    return results


# ----- loading


def load_utterance(entry, options: AlignmentOptions = AlignmentOptions()) -> LoadedUtterance:
    """Read the features and alignment of a manifest entry and map segments to frames."""
    features = _load_features(entry.features)
    segmentation = _load_alignment(
        entry.alignment, options.phone_tier, options.word_tier, options.silence_labels
    )
    _check_alignment(segmentation, features.frame_hop, features.num_frames, name=entry.id)
    span_map = _build_frame_span_map(segmentation, features.frame_hop, features.num_frames)
    return LoadedUtterance(entry.id, features, segmentation, span_map)


def load_corpus(entries, options=AlignmentOptions(), jobs=1, progress=False):
    return map_entries(load_utterance, entries, options, jobs, progress, "Load")


def _model_space(features: _FeatureMatrix, standardizer) -> _FeatureMatrix:
    if standardizer is None:
        return features
    return _FeatureMatrix(standardizer.apply(features.values), features.frame_hop)


class _TierCorpus(_NamedLogger):
    """Training vectors gathered for one tier across the corpus."""

    def __init__(self, tier):
        _NamedLogger.__init__(self, _LOGGER)
        self.tier = tier
        self.blocks = []
        self.num_empty = 0

    def __str__(self):
        return f"[{self.tier}]"

    def add(self, vectors, num_empty=0):
        self.blocks.append(_np.asarray(vectors, dtype=_np.float64))
        self.num_empty += num_empty

    def data(self, dim):
        if not self.blocks:
            return _np.empty((0, dim))
        return _np.concatenate(self.blocks, axis=0)

    def train(self, k, seed, params, dim):
        data = self.data(dim)
        self._logger.info(
            "%d training vectors (%d segments without frames)", data.shape[0], self.num_empty
        )
        if data.shape[0] < k:
            raise _TooFewPoints(
                f"{data.shape[0]} training vectors available, k={k} requested",
                tier=self.tier,
                available=data.shape[0],
                required=k,
            )
        return _train_codebook(
            data,
            k,
            seed=seed + TIER_SEED_OFFSETS[self.tier],
            max_iters=params.max_iters,
            tol=params.tol,
            tier=self.tier,
        )


def train_svc_from_utterances(
    utterances, k_per_tier: dict, seed: int = 0, kmeans_params=KMeansParams(), pooling="pre"
) -> _SvcModel:
    """Train the four codebooks from already loaded training utterances."""
    utterances = list(utterances)
    if not utterances:
        raise _EmptySplit("no training utterances")
    if pooling not in _POOLING_MODES:
        raise _InvalidValue(f"pooling must be one of {_POOLING_MODES}, got {pooling!r}")
    k_per_tier = {_Tier(tier): int(k) for tier, k in k_per_tier.items()}
    missing = [str(tier) for tier in _ALL_TIERS if tier not in k_per_tier]
    if missing:
        raise _InvalidValue(f"no vocabulary size given for {', '.join(missing)}")

    dims = {u.utterance_id: u.features.dim for u in utterances}
    if len(set(dims.values())) != 1:
        raise _DimMismatchAcrossCorpus(
            f"feature dims differ across the corpus: {sorted(set(dims.values()))}"
        )
    hops = {u.features.frame_hop for u in utterances}
    if len(hops) != 1:
        raise _InvalidValue(f"frame hops differ across the corpus: {sorted(hops)}")
    dim = next(iter(dims.values()))
    frame_hop = hops.pop()

    standardizer = None
    if kmeans_params.standardize:
        standardizer = _Standardizer.fit(
            _np.concatenate([u.features.values for u in utterances], axis=0)
        )
    spaces = [_model_space(u.features, standardizer) for u in utterances]

    frames = _TierCorpus(_Tier.Frame)
    for features in spaces:
        frames.add(features.values)
    codebooks = {}
    stats = {}
    codebooks[_Tier.Frame], stats[_Tier.Frame] = frames.train(
        k_per_tier[_Tier.Frame], seed, kmeans_params, dim
    )

    for tier in _SEGMENT_TIERS:
        corpus = _TierCorpus(tier)
        for utterance, features in zip(utterances, spaces):
            if pooling == "pre":
                pooled = _pool_segments(features, utterance.span_map, tier)
            else:
                codes = _DsuStream(
                    _Tier.Frame, _assign_batch(codebooks[_Tier.Frame], features.values)
                )
                pooled = _post_pool_codes(
                    codes, codebooks[_Tier.Frame], utterance.span_map, tier
                )
            corpus.add(pooled.vectors, pooled.num_empty)
        codebooks[tier], stats[tier] = corpus.train(
            k_per_tier[tier], seed, kmeans_params, dim
        )

    model = _SvcModel(codebooks, frame_hop, standardizer=standardizer, pooling=pooling)
    model.training_stats = stats
    return model


def train_svc(
    manifest,
    k_per_tier: dict,
    seed: int = 0,
    kmeans_params=KMeansParams(),
    options=AlignmentOptions(),
    pooling="pre",
    jobs=1,
    progress=False,
) -> _SvcModel:
    """Train one codebook per tier on the train split of ``manifest``.

    The frame codebook sees the raw frame rows; the phone, word and utterance
    codebooks see the segment vectors pooled at their tier. Tier seeds are
    ``seed`` plus a fixed per-tier offset. Per-tier TrainingStats are attached
    to the returned model as ``training_stats``.
    """
    entries = manifest.split("train")
    if not entries:
        raise _EmptySplit(f"manifest {manifest.path} has no train entries")
    utterances = load_corpus(entries, options, jobs, progress)
    return train_svc_from_utterances(utterances, k_per_tier, seed, kmeans_params, pooling)


# ----- encoding and decoding


def encode_utterance(
    model: _SvcModel, features: _FeatureMatrix, seg, utterance_id: str = "", pooling=None
):
    """Quantize an utterance into frame, phone, word and utterance DSU streams.

    ``pooling`` defaults to the mode the model was trained with: "pre" pools the
    continuous features of each segment, "post" pools the frame centroids.
    """
    pooling = pooling or model.pooling
    if pooling not in _POOLING_MODES:
        raise _InvalidValue(f"pooling must be one of {_POOLING_MODES}, got {pooling!r}")
    if features.dim != model.dim:
        raise _DimensionMismatch(
            f"'{utterance_id}': features have dim {features.dim}, the model {model.dim}",
            expected=model.dim,
            actual=features.dim,
        )
    if abs(features.frame_hop - model.frame_hop) > 1e-9:
        raise _ModelMismatch(
            f"'{utterance_id}': frame hop {features.frame_hop} s differs from the"
            f" model's {model.frame_hop} s"
        )
    _check_alignment(seg, features.frame_hop, features.num_frames, name=utterance_id)

    span_map = _build_frame_span_map(seg, features.frame_hop, features.num_frames)
    space = _model_space(features, model.standardizer)
    frame_codebook = model.codebook(_Tier.Frame)
    streams = {_Tier.Frame: _DsuStream(_Tier.Frame, _assign_batch(frame_codebook, space.values))}
    for tier in _SEGMENT_TIERS:
        if pooling == "pre":
            pooled = _pool_segments(space, span_map, tier)
        else:
            pooled = _post_pool_codes(streams[_Tier.Frame], frame_codebook, span_map, tier)
        codes = _assign_batch(model.codebook(tier), pooled.vectors.reshape(-1, model.dim))
        streams[tier] = _DsuStream(tier, codes)

    return _EncodedUtterance(
        utterance_id,
        streams,
        features.num_frames * features.frame_hop,
        features.frame_hop,
        span_map,
        dim=model.dim,
    )


def _encode_entry(entry, state):
    model, options, pooling = state
    utterance = load_utterance(entry, options)
    return encode_utterance(
        model, utterance.features, utterance.segmentation, entry.id, pooling
    )


def encode_corpus(model, entries, options=AlignmentOptions(), pooling=None, jobs=1, progress=False):
    """Encode manifest entries, results in manifest order."""
    return map_entries(_encode_entry, entries, (model, options, pooling), jobs, progress, "Encode")


def decode_fused(model: _SvcModel, encoded, tiers=_ALL_TIERS):
    """Frame-aligned mean of the decoded streams, one row per frame code."""
    return _fuse_streams(encoded, model, tiers)


# ----- bitrate


def utterance_bitrate(encoded, model: _SvcModel, frames_only: bool = False) -> _BitrateReport:
    """Bits per second of an encoding: sum over streams of N_m * log2(k_m), over the duration."""
    if not encoded.duration > 0:
        raise _ZeroDuration(f"'{encoded.utterance_id}' has no duration")
    tiers = (_Tier.Frame,) if frames_only else _ALL_TIERS
    units = {tier: len(encoded.streams[tier]) for tier in tiers}
    sizes = {tier: model.codebook(tier).k for tier in tiers}
    bits = {tier: units[tier] * _math.log2(sizes[tier]) for tier in tiers}
    return _BitrateReport(bits, units, sizes, encoded.duration, encoded.utterance_id)


@_dataclass(frozen=True)
class CorpusBitrate:
    mean_bps: float
    totals_bps: float
    num_utterances: int
    total_seconds: float

    def to_dict(self) -> dict:
        return {
            "utterances": self.num_utterances,
            "seconds": self.total_seconds,
            "mean_bps": self.mean_bps,
            "totals_bps": self.totals_bps,
        }


def corpus_bitrate(reports) -> CorpusBitrate:
    """Average bitrate of a corpus: unweighted utterance mean and total bits over total time."""
    reports = list(reports)
    if not reports:
        raise _EmptyInput("corpus_bitrate needs at least one report")
    total_seconds = _math.fsum(report.duration for report in reports)
    return CorpusBitrate(
        mean_bps=_math.fsum(report.bits_per_second for report in reports) / len(reports),
        totals_bps=_math.fsum(report.total_bits for report in reports) / total_seconds,
        num_utterances=len(reports),
        total_seconds=total_seconds,
    )
