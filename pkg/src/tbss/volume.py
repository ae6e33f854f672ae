"""Volumetric data model and TBV file I/O.

Volumes are plain numpy arrays indexed ``(slice, row, col)``:

* probability volumes are ``float32`` with values in ``[0, 1]``,
* label volumes are ``uint8`` in ``{0, 1, 2}`` (background, inner, outer),
* masks are ``uint8``/``bool`` in ``{0, 1}``.

The TBV container is little-endian::

    b"TBV1" | kind:u8 | 3 reserved zero bytes | N:u32 | H:u32 | W:u32 | payload

with ``kind`` 0 = float32 probability, 1 = u8 label, 2 = u8 mask.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

BACKGROUND, INNER, OUTER = 0, 1, 2

MAGIC = b"TBV1"
KIND_PROBABILITY, KIND_LABEL, KIND_MASK = 0, 1, 2
_HEADER = struct.Struct("<4sB3sIII")
_PAYLOAD_DTYPE = {KIND_PROBABILITY: np.dtype("<f4"), KIND_LABEL: np.dtype("u1"), KIND_MASK: np.dtype("u1")}


class VolumeError(ValueError):
    """Base class for invalid volume data."""


class MalformedHeaderError(VolumeError):
    pass


class PayloadLengthError(VolumeError):
    pass


class ValueRangeError(VolumeError):
    pass


class KindMismatchError(VolumeError):
    pass


class VoxelCoord(NamedTuple):
    slice: int
    row: int
    col: int


@dataclass(frozen=True)
class VoxelSpacing:
    in_plane_mm: float = 0.06
    between_slice_mm: float = 0.8

    def __post_init__(self):
        if not (self.in_plane_mm > 0 and self.between_slice_mm > 0):
            raise ValueError("voxel spacing must be strictly positive")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _check_3d(arr: np.ndarray) -> None:
    if arr.ndim != 3:
        raise VolumeError(f"expected a (N, H, W) volume, got shape {arr.shape}")


def as_probability_volume(data) -> np.ndarray:
    """Validate ``data`` and return it as a float32 (N, H, W) array.

    Out-of-range values (including NaN) raise; nothing is clamped.
    """
    arr = np.asarray(data, dtype=np.float32)
    _check_3d(arr)
    if arr.size and not np.all((arr >= 0.0) & (arr <= 1.0)):
        bad = np.argwhere(~((arr >= 0.0) & (arr <= 1.0)))[0]
        raise ValueRangeError(f"probability {arr[tuple(bad)]!r} at {tuple(int(i) for i in bad)} outside [0, 1]")
    return arr


def as_label_volume(data) -> np.ndarray:
    arr = np.asarray(data)
    _check_3d(arr)
    if arr.size and (arr.min() < 0 or arr.max() > 2 or not np.all(arr == np.round(arr))):
        raise ValueRangeError("labels must be in {0, 1, 2}")
    return arr.astype(np.uint8)


def as_mask(data, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(data)
    if ndim is not None and arr.ndim != ndim:
        raise VolumeError(f"expected a {ndim}-d mask, got shape {arr.shape}")
    if arr.dtype != bool and arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueRangeError("mask values must be 0 or 1")
    return arr.astype(np.uint8)


def split_channels(labels) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(inner, outer)`` uint8 masks of a label volume."""
    labels = np.asarray(labels)
    if labels.size and labels.max() > 2:
        raise ValueRangeError("labels must be in {0, 1, 2}")
    return (labels == INNER).astype(np.uint8), (labels == OUTER).astype(np.uint8)


def merge_labels(inner, outer) -> np.ndarray:
    """Combine two channel masks with inner > outer > background priority."""
    inner = np.asarray(inner, dtype=bool)
    outer = np.asarray(outer, dtype=bool)
    if inner.shape != outer.shape:
        raise VolumeError(f"mask shapes differ: {inner.shape} vs {outer.shape}")
    out = np.zeros(inner.shape, dtype=np.uint8)
    out[outer] = OUTER
    out[inner] = INNER
    return out


# ---------------------------------------------------------------------------
# TBV I/O
# ---------------------------------------------------------------------------

def _write_tbv(path, kind: int, arr: np.ndarray) -> None:
    n, h, w = arr.shape
    payload = np.ascontiguousarray(arr, dtype=_PAYLOAD_DTYPE[kind]).tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, kind, b"\0\0\0", n, h, w))
        fh.write(payload)


def read_tbv(path) -> tuple[int, np.ndarray]:
    """Read a TBV file and return ``(kind, array)`` without value checks."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise MalformedHeaderError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, kind, reserved, n, h, w = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if kind not in _PAYLOAD_DTYPE:
        raise MalformedHeaderError(f"{path}: unknown payload kind {kind}")
    if reserved != b"\0\0\0":
        raise MalformedHeaderError(f"{path}: reserved header bytes are not zero")
    dtype = _PAYLOAD_DTYPE[kind]
    expected = n * h * w * dtype.itemsize
    got = len(blob) - _HEADER.size
    if got != expected:
        raise PayloadLengthError(
            f"{path}: header declares {n}x{h}x{w} ({expected} bytes) but payload has {got} bytes")
    arr = np.frombuffer(blob, dtype=dtype, offset=_HEADER.size).reshape(n, h, w)
    return kind, arr.astype(dtype.newbyteorder("="))


def _read_kind(path, kind: int) -> np.ndarray:
    got, arr = read_tbv(path)
    if got != kind:
        raise KindMismatchError(f"{path}: payload kind {got}, expected {kind}")
    return arr


def load_probability_volume(path) -> np.ndarray:
    return as_probability_volume(_read_kind(path, KIND_PROBABILITY))


def save_probability_volume(vol, path) -> None:
    _write_tbv(path, KIND_PROBABILITY, as_probability_volume(vol))


def load_label_volume(path) -> np.ndarray:
    return as_label_volume(_read_kind(path, KIND_LABEL))


def save_label_volume(labels, path) -> None:
    _write_tbv(path, KIND_LABEL, as_label_volume(labels))


def load_mask(path) -> np.ndarray:
    return as_mask(_read_kind(path, KIND_MASK), ndim=3)


def save_mask(mask, path) -> None:
    mask = as_mask(mask)
    if mask.ndim == 2:
        mask = mask[None]
    if mask.ndim != 3:
        raise VolumeError(f"expected a 2-d or 3-d mask, got shape {mask.shape}")
    _write_tbv(path, KIND_MASK, mask)


# ---------------------------------------------------------------------------
# JSON side files
# ---------------------------------------------------------------------------

def save_slice_meta(healthy: Sequence[bool], path) -> None:
    with open(path, "w") as fh:
        json.dump({"healthy": [bool(h) for h in healthy]}, fh)


def load_slice_meta(path) -> list[bool]:
    with open(path) as fh:
        doc = json.load(fh)
    flags = doc.get("healthy") if isinstance(doc, dict) else None
    if not isinstance(flags, list) or not all(isinstance(f, bool) for f in flags):
        raise VolumeError(f"{path}: expected {{\"healthy\": [true|false, ...]}}")
    return flags


def check_slice_meta(healthy: Sequence[bool], n_slices: int) -> None:
    if len(healthy) != n_slices:
        raise VolumeError(f"slice meta has {len(healthy)} entries for {n_slices} slices")


def save_spacing(spacing: VoxelSpacing, path) -> None:
    with open(path, "w") as fh:
        json.dump({"in_plane_mm": spacing.in_plane_mm, "between_slice_mm": spacing.between_slice_mm}, fh)


def load_spacing(path) -> VoxelSpacing:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return VoxelSpacing(float(doc["in_plane_mm"]), float(doc["between_slice_mm"]))
    except (KeyError, TypeError) as exc:
        raise VolumeError(f"{path}: malformed spacing file") from exc

