"""Frame-wise feature matrices, fused sequences and the FMAT file format.

FMAT layout (little-endian)::

    magic "FMAT" | u16 version (=1) | u32 T | u32 D | f64 frame_hop
    | f32 values, row-major, T*D | u32 CRC32 over all preceding bytes
"""

import logging as _logging
import struct as _struct
from dataclasses import dataclass as _dataclass
from pathlib import Path as _Path

import numpy as _np

from .errors import InvalidValue as _InvalidValue
from .errors import DimensionMismatch as _DimensionMismatch
from .io_tools import append_checksum as _append_checksum
from .io_tools import unpack_checked as _unpack_checked

_LOGGER = _logging.getLogger(__name__)

DEFAULT_FRAME_HOP = 0.020
DEFAULT_DIM = 1024

FMAT_MAGIC = b"FMAT"
FMAT_VERSION = 1
_FMAT_HEADER = "<4sHIId"
FMAT_HEADER_SIZE = _struct.calcsize(_FMAT_HEADER)


def _frozen_matrix(values, name):
    matrix = _np.array(values, dtype=_np.float32, copy=True)
    if matrix.ndim != 2:
        raise _InvalidValue(f"{name}: expected a 2-D matrix, got shape {matrix.shape}")
    if matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise _InvalidValue(f"{name}: matrix must have at least one row and column")
    if not _np.all(_np.isfinite(matrix)):
        raise _InvalidValue(f"{name}: values must be finite")
    matrix.setflags(write=False)
    return matrix


@_dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """T x D frame-wise continuous representations with their frame hop in seconds."""

    values: _np.ndarray
    frame_hop: float = DEFAULT_FRAME_HOP

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_matrix(self.values, "FeatureMatrix"))
        if not (self.frame_hop > 0 and _np.isfinite(self.frame_hop)):
            raise _InvalidValue(f"FeatureMatrix: frame_hop must be > 0, got {self.frame_hop}")
        object.__setattr__(self, "frame_hop", float(self.frame_hop))

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return self.num_frames * self.frame_hop

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return self.frame_hop == other.frame_hop and _np.array_equal(
            self.values, other.values
        )

    __hash__ = None


@_dataclass(frozen=True, eq=False)
class FusedFrameSequence:
    """T x D frame-aligned output of multi-stream fusion."""

    values: _np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _frozen_matrix(self.values, "FusedFrameSequence")
        )

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def to_feature_matrix(self, frame_hop: float) -> FeatureMatrix:
        return FeatureMatrix(self.values, frame_hop)

    def __eq__(self, other):
        if not isinstance(other, FusedFrameSequence):
            return NotImplemented
        return _np.array_equal(self.values, other.values)

    __hash__ = None


def dumps_features(features: FeatureMatrix) -> bytes:
    header = _struct.pack(
        _FMAT_HEADER,
        FMAT_MAGIC,
        FMAT_VERSION,
        features.num_frames,
        features.dim,
        features.frame_hop,
    )
    payload = _np.ascontiguousarray(features.values, dtype="<f4").tobytes()
    return _append_checksum(header + payload)


def loads_features(data: bytes, name: str = "FMAT") -> FeatureMatrix:
    fields, payload = _unpack_checked(
        data,
        FMAT_MAGIC,
        _FMAT_HEADER,
        FMAT_VERSION,
        lambda f: f[2] * f[3] * 4,
        name,
    )
    _, _, num_frames, dim, frame_hop = fields
    values = _np.frombuffer(payload, dtype="<f4").reshape(num_frames, dim)
    return FeatureMatrix(values, frame_hop)


def read_fmat_header(data: bytes) -> dict:
    """Decode only the FMAT header, for inspection."""
    magic, version, num_frames, dim, frame_hop = _struct.unpack_from(
        _FMAT_HEADER, data, 0
    )
    return {
        "format": magic.decode("ascii", errors="replace"),
        "version": version,
        "num_frames": num_frames,
        "dim": dim,
        "frame_hop": frame_hop,
        "size_bytes": len(data),
    }


def save_features(features: FeatureMatrix, path) -> None:
    path = _Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_features(features))
    _LOGGER.debug(
        "wrote %s (%d x %d)", path, features.num_frames, features.dim
    )


def load_features(path) -> FeatureMatrix:
    path = _Path(path)
    return loads_features(path.read_bytes(), name=str(path))


@_dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-dimension affine normalization fitted on training frames."""

    mean: _np.ndarray
    scale: _np.ndarray

    def __post_init__(self):
        mean = _np.asarray(self.mean, dtype=_np.float64).copy()
        scale = _np.asarray(self.scale, dtype=_np.float64).copy()
        if mean.ndim != 1 or mean.shape != scale.shape:
            raise _InvalidValue("Standardizer: mean and scale must be equal-length vectors")
        if not (_np.all(_np.isfinite(mean)) and _np.all(scale > 0)):
            raise _InvalidValue("Standardizer: scale must be positive and finite")
        mean.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def fit(cls, rows):
        rows = _np.asarray(rows, dtype=_np.float64)
        scale = rows.std(axis=0)
        # constant dimensions are left unscaled
        scale[scale <= 1e-12] = 1.0
        # rounded to the f32 storage precision so a reloaded model encodes identically
        mean = rows.mean(axis=0).astype(_np.float32)
        return cls(mean, scale.astype(_np.float32))

    def apply(self, rows):
        rows = _np.asarray(rows, dtype=_np.float64)
        if rows.shape[-1] != self.dim:
            raise _DimensionMismatch(
                f"Standardizer of dim {self.dim} applied to dim {rows.shape[-1]}",
                expected=self.dim,
                actual=rows.shape[-1],
            )
        return (rows - self.mean) / self.scale

    def invert(self, rows):
        return _np.asarray(rows, dtype=_np.float64) * self.scale + self.mean

    def to_feature_matrix(self) -> FeatureMatrix:
        """Two-row matrix (mean, scale), stored with the model as an FMAT file."""
        return FeatureMatrix(_np.stack([self.mean, self.scale]), DEFAULT_FRAME_HOP)

    @classmethod
    def from_feature_matrix(cls, matrix: FeatureMatrix):
        if matrix.num_frames != 2:
            raise _InvalidValue("Standardizer file must hold exactly two rows")
        return cls(matrix.values[0], matrix.values[1])
