"""Probe datasets built from a corpus at frame or segment granularity.

Input kinds:

``continuous``
    the feature rows themselves, one row per frame
``frames``
    the frame codes decoded to their centroids, one row per frame
``pre-pooled`` / ``post-pooled``
    the centroid of the tier code of every covered segment, with segments
    pooled before or after frame quantization
``fused`` / ``fused-post``
    the fused SVC stream, one row per frame, encoded with pre or post pooling

An utterance label (an integer) is broadcast to every frame or segment of its
utterance. Word labels (a list with one integer per non-silence word) go to
the frames of each word; frames outside words are left out.
"""

import logging as _logging

import numpy as _np

from .codec import AlignmentOptions as _AlignmentOptions
from .codec import encode_utterance as _encode_utterance
from .codec import load_utterance as _load_utterance
from .codec import map_entries as _map_entries
from .errors import InvalidValue as _InvalidValue
from .errors import SchemaViolation as _SchemaViolation
from .pooling import fuse_streams as _fuse_streams
from .probe import ProbeDataset as _ProbeDataset
from .segmentation import UNCOVERED as _UNCOVERED
from .tier import Tier as _Tier

_LOGGER = _logging.getLogger(__name__)

INPUT_KINDS = ("continuous", "frames", "pre-pooled", "post-pooled", "fused", "fused-post")
SEGMENT_KINDS = ("pre-pooled", "post-pooled")


def _entry_label(utterance_id, labels, label_key, num_words):
    if label_key not in labels:
        raise _SchemaViolation(f"'{utterance_id}': no label '{label_key}'")
    value = labels[label_key]
    if isinstance(value, list):
        if len(value) != num_words:
            raise _SchemaViolation(
                f"'{utterance_id}': {len(value)} word labels for {num_words} words"
            )
        return _np.asarray(value, dtype=_np.int64)
    if isinstance(value, bool) or not isinstance(value, int):
        raise _SchemaViolation(
            f"'{utterance_id}': label '{label_key}' must be an integer or a list of integers"
        )
    return int(value)


def _frame_rows(rows, label, span_map):
    if isinstance(label, int):
        return rows, _np.full(rows.shape[0], label, dtype=_np.int64)
    words = span_map.indices(_Tier.Word)
    covered = words != _UNCOVERED
    return rows[covered], label[words[covered]]


def utterance_examples(kind, utterance, label, model=None, tier=None):
    """Input rows and labels contributed by one loaded utterance.

    ``label`` is an utterance label or an array of word labels; ``tier`` selects
    the segment tier of the pooled kinds and defaults to the utterance tier for
    utterance labels and the word tier for word labels.
    """
    if kind not in INPUT_KINDS:
        raise _InvalidValue(f"unknown input kind {kind!r}, expected one of {INPUT_KINDS}")
    if kind != "continuous" and model is None:
        raise _InvalidValue(f"input kind {kind!r} needs a trained model")
    span_map = utterance.span_map

    if kind == "continuous":
        return _frame_rows(utterance.features.values.astype(_np.float64), label, span_map)

    pooling = "post" if kind in ("post-pooled", "fused-post") else "pre"
    encoded = _encode_utterance(
        model, utterance.features, utterance.segmentation, utterance.utterance_id, pooling
    )

    if kind == "frames":
        frame_codebook = model.feature_codebook(_Tier.Frame)
        rows = frame_codebook.centroids[encoded.streams[_Tier.Frame].codes]
        return _frame_rows(rows.astype(_np.float64), label, span_map)
    if kind in ("fused", "fused-post"):
        fused = _fuse_streams(encoded, model)
        return _frame_rows(fused.values.astype(_np.float64), label, span_map)

    if tier is None:
        tier = _Tier.Utterance if isinstance(label, int) else _Tier.Word
    tier = _Tier(tier)
    if tier == _Tier.Frame:
        raise _InvalidValue("pooled input kinds need a segment tier")
    if not isinstance(label, int) and tier != _Tier.Word:
        raise _InvalidValue(f"word labels cannot be probed at the {tier} tier")
    codebook = model.feature_codebook(tier)
    rows = codebook.centroids[encoded.streams[tier].codes].astype(_np.float64)
    segments = span_map.covered_segments(tier)
    if isinstance(label, int):
        labels = _np.full(segments.shape[0], label, dtype=_np.int64)
    else:
        labels = label[segments]
    return rows, labels


def _entry_examples(entry, state):
    kind, model, label_key, tier, options = state
    utterance = _load_utterance(entry, options)
    label = _entry_label(
        entry.id, entry.labels, label_key, len(utterance.segmentation.words)
    )
    return utterance_examples(kind, utterance, label, model, tier)


def build_probe_dataset(
    kind,
    entries,
    label_key,
    model=None,
    split="train",
    tier=None,
    options=_AlignmentOptions(),
    jobs=1,
    progress=False,
) -> _ProbeDataset:
    """Concatenate the examples of ``entries``, in manifest order, into a ProbeDataset."""
    entries = list(entries)
    if not entries:
        raise _InvalidValue(f"no entries for the {split} split")
    parts = _map_entries(
        _entry_examples,
        entries,
        (kind, model, label_key, tier, options),
        jobs,
        progress,
        f"Probe inputs ({split})",
    )
    inputs = _np.concatenate([rows for rows, _ in parts], axis=0)
    labels = _np.concatenate([labels for _, labels in parts], axis=0)
    _LOGGER.info("%s split: %d %s examples from %d utterances", split, len(labels), kind, len(parts))
    return _ProbeDataset(inputs, labels, split)
