"""Codebooks, the four-tier SVC model and their on-disk formats.

SVCB layout (little-endian)::

    magic "SVCB" | u16 version (=1) | u8 tier tag | u32 k | u32 dim | u64 seed
    | u32 iterations_run | f64 final_inertia
    | f32 centroids, row-major, k*dim | u32 CRC32 over all preceding bytes

A trained model is a directory holding one SVCB file per tier and the
``svc-model.toml`` manifest.
"""

import logging as _logging
import struct as _struct
from dataclasses import dataclass as _dataclass
from dataclasses import field as _field
from pathlib import Path as _Path
from typing import Optional as _Optional

import numpy as _np
import toml as _toml

from .errors import DimensionMismatch as _DimensionMismatch
from .errors import InvalidValue as _InvalidValue
from .errors import SchemaViolation as _SchemaViolation
from .features import DEFAULT_FRAME_HOP as _DEFAULT_FRAME_HOP
from .features import Standardizer as _Standardizer
from .features import load_features as _load_features
from .features import save_features as _save_features
from .io_tools import append_checksum as _append_checksum
from .io_tools import unpack_checked as _unpack_checked
from .tier import ALL_TIERS as _ALL_TIERS
from .tier import Tier as _Tier

_LOGGER = _logging.getLogger(__name__)

SVCB_MAGIC = b"SVCB"
SVCB_VERSION = 1
_SVCB_HEADER = "<4sHBIIQId"
SVCB_HEADER_SIZE = _struct.calcsize(_SVCB_HEADER)

MODEL_MANIFEST = "svc-model.toml"
MODEL_FORMAT_VERSION = 1
POOLING_MODES = ("pre", "post")


@_dataclass(frozen=True)
class TrainingMeta:
    seed: int = 0
    iterations_run: int = 0
    final_inertia: float = 0.0


@_dataclass(frozen=True, eq=False)
class Codebook:
    """k x D centroid table for one segmentation tier."""

    tier: _Tier
    centroids: _np.ndarray
    training_meta: TrainingMeta = _field(default_factory=TrainingMeta)

    def __post_init__(self):
        object.__setattr__(self, "tier", _Tier(self.tier))
        centroids = _np.array(self.centroids, dtype=_np.float32, copy=True)
        if centroids.ndim != 2 or centroids.shape[0] < 1 or centroids.shape[1] < 1:
            raise _InvalidValue(
                f"Codebook [{self.tier}]: centroids must be a non-empty k x D matrix"
            )
        if not _np.all(_np.isfinite(centroids)):
            raise _InvalidValue(f"Codebook [{self.tier}]: centroids must be finite")
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def __str__(self):
        return f"[{self.tier}]"

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            self.tier == other.tier
            and self.training_meta == other.training_meta
            and _np.array_equal(self.centroids, other.centroids)
        )

    __hash__ = None


def save_codebook(codebook: Codebook) -> bytes:
    meta = codebook.training_meta
    header = _struct.pack(
        _SVCB_HEADER,
        SVCB_MAGIC,
        SVCB_VERSION,
        codebook.tier.tag,
        codebook.k,
        codebook.dim,
        meta.seed,
        meta.iterations_run,
        meta.final_inertia,
    )
    payload = _np.ascontiguousarray(codebook.centroids, dtype="<f4").tobytes()
    return _append_checksum(header + payload)


def load_codebook(data: bytes, name: str = "SVCB") -> Codebook:
    fields, payload = _unpack_checked(
        data,
        SVCB_MAGIC,
        _SVCB_HEADER,
        SVCB_VERSION,
        lambda f: f[3] * f[4] * 4,
        name,
    )
    _, _, tier_tag, k, dim, seed, iterations_run, final_inertia = fields
    if tier_tag >= len(_ALL_TIERS):
        raise _SchemaViolation(f"{name}: unknown tier tag {tier_tag}")
    centroids = _np.frombuffer(payload, dtype="<f4").reshape(k, dim)
    return Codebook(
        _Tier.from_tag(tier_tag),
        centroids,
        TrainingMeta(seed, iterations_run, final_inertia),
    )


def read_codebook_header(data: bytes) -> dict:
    """Decode only the SVCB header, for inspection."""
    magic, version, tier_tag, k, dim, seed, iterations, inertia = _struct.unpack_from(
        _SVCB_HEADER, data, 0
    )
    return {
        "format": magic.decode("ascii", errors="replace"),
        "version": version,
        "tier": str(_Tier.from_tag(tier_tag)) if tier_tag < len(_ALL_TIERS) else tier_tag,
        "k": k,
        "dim": dim,
        "seed": seed,
        "iterations_run": iterations,
        "final_inertia": inertia,
        "size_bytes": len(data),
    }


class SvcModel:
    """One codebook per tier, sharing the feature dimension.

    If a ``standardizer`` is present, the codebooks live in standardized space
    and :meth:`feature_codebook` maps them back to feature space.
    """

    def __init__(
        self,
        codebooks: dict,
        frame_hop: float = _DEFAULT_FRAME_HOP,
        standardizer: _Optional[_Standardizer] = None,
        pooling: str = "pre",
    ):
        self._codebooks = {_Tier(tier): cb for tier, cb in codebooks.items()}
        missing = [str(tier) for tier in _ALL_TIERS if tier not in self._codebooks]
        if missing:
            raise _InvalidValue(f"SvcModel: missing codebooks for {', '.join(missing)}")
        for tier, codebook in self._codebooks.items():
            if codebook.tier != tier:
                raise _InvalidValue(f"SvcModel: codebook {codebook} stored as [{tier}]")
        dims = {codebook.dim for codebook in self._codebooks.values()}
        if len(dims) != 1:
            raise _DimensionMismatch(
                f"SvcModel: codebooks disagree on dim: {sorted(dims)}"
            )
        if not frame_hop > 0:
            raise _InvalidValue(f"SvcModel: frame_hop must be > 0, got {frame_hop}")
        if standardizer is not None and standardizer.dim not in dims:
            raise _DimensionMismatch("SvcModel: standardizer dim differs from codebooks")
        if pooling not in POOLING_MODES:
            raise _InvalidValue(f"SvcModel: pooling must be one of {POOLING_MODES}")
        self._frame_hop = float(frame_hop)
        self._standardizer = standardizer
        self._pooling = pooling
        self._feature_codebooks = {}

    @property
    def dim(self) -> int:
        return self._codebooks[_Tier.Frame].dim

    @property
    def frame_hop(self) -> float:
        return self._frame_hop

    @property
    def standardizer(self):
        return self._standardizer

    @property
    def pooling(self) -> str:
        """Whether the segment codebooks were trained on "pre" or "post" pooled vectors."""
        return self._pooling

    def codebook(self, tier) -> Codebook:
        return self._codebooks[_Tier(tier)]

    def vocabulary_sizes(self) -> dict:
        return {tier: self._codebooks[tier].k for tier in _ALL_TIERS}

    def feature_codebook(self, tier) -> Codebook:
        """The tier's codebook with centroids expressed in feature space."""
        tier = _Tier(tier)
        if self._standardizer is None:
            return self._codebooks[tier]
        if tier not in self._feature_codebooks:
            codebook = self._codebooks[tier]
            self._feature_codebooks[tier] = Codebook(
                tier,
                self._standardizer.invert(codebook.centroids),
                codebook.training_meta,
            )
        return self._feature_codebooks[tier]

    def __eq__(self, other):
        if not isinstance(other, SvcModel):
            return NotImplemented
        standardizers_equal = (self._standardizer is None) == (
            other._standardizer is None
        ) and (
            self._standardizer is None
            or (
                _np.array_equal(self._standardizer.mean, other._standardizer.mean)
                and _np.array_equal(self._standardizer.scale, other._standardizer.scale)
            )
        )
        return (
            self._frame_hop == other._frame_hop
            and self._pooling == other._pooling
            and standardizers_equal
            and all(self._codebooks[t] == other._codebooks[t] for t in _ALL_TIERS)
        )

    __hash__ = None


def save_model(model: SvcModel, directory) -> list:
    """Write the SVCB files and the model manifest, return the written paths."""
    directory = _Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    manifest = {
        "model": {
            "version": MODEL_FORMAT_VERSION,
            "frame_hop": model.frame_hop,
            "dim": model.dim,
            "pooling": model.pooling,
        },
        "codebooks": {},
    }
    for tier in _ALL_TIERS:
        filename = f"{tier}.svcb"
        (directory / filename).write_bytes(save_codebook(model.codebook(tier)))
        manifest["codebooks"][str(tier)] = filename
        written.append(directory / filename)
    if model.standardizer is not None:
        filename = "standardizer.fmat"
        _save_features(model.standardizer.to_feature_matrix(), directory / filename)
        manifest["model"]["standardizer"] = filename
        written.append(directory / filename)
    manifest_file = directory / MODEL_MANIFEST
    manifest_file.write_text(_toml.dumps(manifest))
    written.append(manifest_file)
    _LOGGER.info("Wrote model to '%s'", directory)
    return written


def load_model(directory) -> SvcModel:
    directory = _Path(directory)
    manifest_file = directory / MODEL_MANIFEST
    if not manifest_file.is_file():
        raise FileNotFoundError(f"No model manifest '{manifest_file}'")
    manifest = _toml.load(manifest_file)
    try:
        header = manifest["model"]
        if header.get("version") != MODEL_FORMAT_VERSION:
            raise _SchemaViolation(
                f"{manifest_file}: unsupported model version {header.get('version')}"
            )
        codebooks = {}
        for tier in _ALL_TIERS:
            path = directory / manifest["codebooks"][str(tier)]
            codebooks[tier] = load_codebook(path.read_bytes(), name=str(path))
        standardizer = None
        if "standardizer" in header:
            standardizer = _Standardizer.from_feature_matrix(
                _load_features(directory / header["standardizer"])
            )
        return SvcModel(
            codebooks,
            frame_hop=header["frame_hop"],
            standardizer=standardizer,
            pooling=header.get("pooling", "pre"),
        )
    except KeyError as error:
        raise _SchemaViolation(f"{manifest_file}: missing key {error}") from error
