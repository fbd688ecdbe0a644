"""Run-length-encoded binary voxel masks and the annotation mask algebra.

Masks are congruent with a volume grid and stored as maximally merged
(start, length) runs over the flattened z-major index space. All operations
are pure: they return new masks and never mutate their inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from radstack.core.volume import ShapeError, VolumeTensor

# Face neighbors (6-connectivity cross) and full 3x3x3 cube (26-connectivity).
OFFSETS_6 = (
    (-1, 0, 0), (1, 0, 0),
    (0, -1, 0), (0, 1, 0),
    (0, 0, -1), (0, 0, 1),
)
OFFSETS_26 = tuple(
    (dz, dy, dx)
    for dz in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dz, dy, dx) != (0, 0, 0)
)

MORPH_OPS = ("erode", "dilate", "open", "close")


class CorruptMaskError(ValueError):
    """Run list is unsorted, overlapping, unmerged, or exceeds the grid."""


def encode_rle(dense):
    """Encode a dense boolean grid into (n, 2) uint32 [start, length] runs."""
    flat = np.asarray(dense, dtype=bool).ravel()
    if flat.size == 0:
        return np.zeros((0, 2), dtype=np.uint32)
    padded = np.concatenate(([False], flat, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts = edges[0::2]
    lengths = edges[1::2] - starts
    return np.column_stack([starts, lengths]).astype(np.uint32)


def decode_rle(runs, dims):
    """Decode runs into a dense boolean grid of shape dims."""
    nz, ny, nx = dims
    total = nz * ny * nx
    flat = np.zeros(total, dtype=bool)
    for start, length in np.asarray(runs, dtype=np.int64):
        if length < 1 or start + length > total:
            raise CorruptMaskError(f"run ({start}, {length}) exceeds grid of {total} voxels")
        flat[start : start + length] = True
    return flat.reshape(nz, ny, nx)


def _validate_runs(runs, total):
    prev_end = -1  # gap of >= 1 required between runs (maximally merged)
    for start, length in runs.astype(np.int64):
        if length < 1:
            raise CorruptMaskError(f"run at {start} has non-positive length {length}")
        if start <= prev_end:
            raise CorruptMaskError(f"runs unsorted, overlapping, or unmerged at index {start}")
        if start + length > total:
            raise CorruptMaskError(f"run ({start}, {length}) exceeds grid of {total} voxels")
        prev_end = start + length  # next run must start at >= prev_end + 1


class VoxelMask:
    """Binary mask over a volume grid with an optional categorical label.

    Invariant: runs are sorted, non-overlapping, and non-adjacent, so the
    encoding of any voxel set is canonical and decode(encode(m)) == m.
    """

    __slots__ = ("dims", "runs", "label")

    def __init__(self, dims, runs, label=""):
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ShapeError(f"dims must be 3 positive components, got {dims}")
        arr = np.asarray(runs, dtype=np.uint32).reshape(-1, 2)
        _validate_runs(arr, dims[0] * dims[1] * dims[2])
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "runs", arr)
        object.__setattr__(self, "label", str(label))

    def __setattr__(self, name, value):
        raise AttributeError("VoxelMask is immutable")

    @classmethod
    def from_dense(cls, dense, label=""):
        dense = np.asarray(dense, dtype=bool)
        if dense.ndim != 3:
            raise ShapeError(f"dense mask must be 3-D, got shape {dense.shape}")
        return cls(dense.shape, encode_rle(dense), label)

    @classmethod
    def empty(cls, dims, label=""):
        return cls(dims, np.zeros((0, 2), dtype=np.uint32), label)

    def to_dense(self):
        return decode_rle(self.runs, self.dims)

    @property
    def voxel_count(self):
        return int(self.runs[:, 1].sum()) if len(self.runs) else 0

    def volume_mm3(self, spacing_mm):
        dz, dy, dx = spacing_mm
        return self.voxel_count * dz * dy * dx

    def with_label(self, label):
        return VoxelMask(self.dims, self.runs, label)

    # Canonical wire format (see docs/wire-formats.md): little-endian uint32
    # header nz, ny, nx, label_len, then label bytes, then uint32 run_count
    # and run_count (start, length) uint32 pairs.
    def to_bytes(self):
        label_bytes = self.label.encode("utf-8")
        head = struct.pack("<4I", *self.dims, len(label_bytes))
        count = struct.pack("<I", len(self.runs))
        body = self.runs.astype("<u4", copy=False).tobytes()
        return head + label_bytes + count + body

    @classmethod
    def from_bytes(cls, data):
        if len(data) < 20:
            raise CorruptMaskError("mask payload shorter than fixed header")
        nz, ny, nx, label_len = struct.unpack_from("<4I", data, 0)
        off = 16
        label = data[off : off + label_len].decode("utf-8")
        off += label_len
        (run_count,) = struct.unpack_from("<I", data, off)
        off += 4
        expected = off + run_count * 8
        if len(data) != expected:
            raise CorruptMaskError(f"mask payload is {len(data)} bytes, header implies {expected}")
        runs = np.frombuffer(data, dtype="<u4", count=run_count * 2, offset=off).reshape(-1, 2)
        return cls((nz, ny, nx), runs, label)

    def __eq__(self, other):
        if not isinstance(other, VoxelMask):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.label == other.label
            and np.array_equal(self.runs, other.runs)
        )

    def __hash__(self):
        return hash((self.dims, self.label, self.runs.tobytes()))

    def __repr__(self):
        return f"VoxelMask(dims={self.dims}, voxels={self.voxel_count}, label={self.label!r})"


def _require_same_dims(a_dims, b_dims, what):
    if tuple(a_dims) != tuple(b_dims):
        raise ShapeError(f"{what}: dims {tuple(a_dims)} != {tuple(b_dims)}")


def _intersect_count(a_runs, b_runs):
    """Count voxels common to two sorted run lists without decoding."""
    i = j = 0
    total = 0
    a = a_runs.astype(np.int64)
    b = b_runs.astype(np.int64)
    while i < len(a) and j < len(b):
        a0, a1 = a[i][0], a[i][0] + a[i][1]
        b0, b1 = b[j][0], b[j][0] + b[j][1]
        lo, hi = max(a0, b0), min(a1, b1)
        if hi > lo:
            total += hi - lo
        if a1 <= b1:
            i += 1
        else:
            j += 1
    return int(total)


def apply_range_mask(volume, lo, hi, base=None, mode="include"):
    """Select voxels whose intensity falls in [lo, hi] and merge with base.

    include: result = base u selection (base empty if absent)
    exclude: result = base \\ selection
    """
    if not isinstance(volume, VolumeTensor):
        raise TypeError("volume must be a VolumeTensor")
    if lo > hi:
        raise ValueError(f"intensity range rejected: lo {lo} > hi {hi}")
    if mode not in ("include", "exclude"):
        raise ValueError(f"mode must be include or exclude, got {mode!r}")
    label = ""
    if base is not None:
        _require_same_dims(base.dims, volume.dims, "range mask base")
        label = base.label

    selected = (volume.voxels >= lo) & (volume.voxels <= hi)
    if base is None:
        combined = selected if mode == "include" else np.zeros(volume.dims, dtype=bool)
    else:
        base_dense = base.to_dense()
        combined = (base_dense | selected) if mode == "include" else (base_dense & ~selected)
    return VoxelMask.from_dense(combined, label)


def paint(mask, slice_range, stencil, mode="add"):
    """Apply a 2-D stencil to every slice in [z0, z1] (inclusive)."""
    if mode not in ("add", "erase"):
        raise ValueError(f"mode must be add or erase, got {mode!r}")
    nz, ny, nx = mask.dims
    z0, z1 = int(slice_range[0]), int(slice_range[1])
    if not (0 <= z0 <= z1 < nz):
        raise ShapeError(f"slice range [{z0}, {z1}] out of bounds for nz={nz}")
    stencil = np.asarray(stencil, dtype=bool)
    if stencil.shape != (ny, nx):
        raise ShapeError(f"stencil shape {stencil.shape} does not fit slice ({ny}, {nx})")

    dense = mask.to_dense()
    if mode == "add":
        dense[z0 : z1 + 1] |= stencil
    else:
        dense[z0 : z1 + 1] &= ~stencil
    return VoxelMask.from_dense(dense, mask.label)


def _shifted(dense, dz, dy, dx):
    """Translate a dense grid, filling vacated cells with background."""
    out = np.zeros_like(dense)
    nz, ny, nx = dense.shape

    def sl(n, d):
        if d == 0:
            return slice(0, n), slice(0, n)
        if d > 0:
            return slice(d, n), slice(0, n - d)
        return slice(0, n + d), slice(-d, n)

    dzo, dzi = sl(nz, dz)
    dyo, dyi = sl(ny, dy)
    dxo, dxi = sl(nx, dx)
    out[dzo, dyo, dxo] = dense[dzi, dyi, dxi]
    return out


def _dilate_dense(dense, offsets):
    out = dense.copy()
    for dz, dy, dx in offsets:
        out |= _shifted(dense, dz, dy, dx)
    return out


def _erode_dense(dense, offsets):
    out = dense.copy()
    for dz, dy, dx in offsets:
        # Neighbor is read at p + offset; out-of-bounds reads are background.
        out &= _shifted(dense, -dz, -dy, -dx)
    return out


def morph(mask, op, connectivity=6):
    """Binary morphology with a 6-cross or 26-cube structuring element.

    open = dilate(erode(m)); close = erode(dilate(m)). Out-of-bounds
    neighbors are background for both primitives.
    """
    if op not in MORPH_OPS:
        raise ValueError(f"op must be one of {MORPH_OPS}, got {op!r}")
    if connectivity == 6:
        offsets = OFFSETS_6
    elif connectivity == 26:
        offsets = OFFSETS_26
    else:
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")

    dense = mask.to_dense()
    if op == "erode":
        result = _erode_dense(dense, offsets)
    elif op == "dilate":
        result = _dilate_dense(dense, offsets)
    elif op == "open":
        result = _dilate_dense(_erode_dense(dense, offsets), offsets)
    else:
        result = _erode_dense(_dilate_dense(dense, offsets), offsets)
    return VoxelMask.from_dense(result, mask.label)


@dataclass(frozen=True)
class OverlapMetrics:
    dice: float
    iou: float
    a_volume_mm3: float
    b_volume_mm3: float
    intersection_voxels: int


def overlap_metrics(a, b, spacing_mm=(1.0, 1.0, 1.0)):
    """Dice and IoU between two masks plus physical volumes.

    Two empty masks score dice = iou = 1.0 by convention, so identical
    annotations always compare as a perfect match.
    """
    _require_same_dims(a.dims, b.dims, "overlap")
    na, nb = a.voxel_count, b.voxel_count
    inter = _intersect_count(a.runs, b.runs)
    union = na + nb - inter
    if na == 0 and nb == 0:
        dice, iou = 1.0, 1.0
    else:
        dice = 2.0 * inter / (na + nb)
        iou = inter / union if union else 1.0
    return OverlapMetrics(
        dice=dice,
        iou=iou,
        a_volume_mm3=a.volume_mm3(spacing_mm),
        b_volume_mm3=b.volume_mm3(spacing_mm),
        intersection_voxels=inter,
    )
