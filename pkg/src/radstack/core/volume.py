"""The ML-ready image object: a dense z-major signed-16-bit intensity grid."""

from __future__ import annotations

import hashlib

import numpy as np

# Row/column direction cosines for a plain axial stack.
AXIAL_ORIENTATION = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

_UNIT_NORM_TOL = 1e-6


class ShapeError(ValueError):
    """Dimension or geometry mismatch between grids."""


class VolumeTensor:
    """A 3-D intensity volume with physical geometry.

    Voxels are stored z-major, row-major as int16 after rescale slope and
    intercept have been applied. Instances are immutable; the backing array
    is marked read-only.
    """

    __slots__ = ("voxels", "spacing_mm", "orientation", "rescale")

    def __init__(self, voxels, spacing_mm, orientation=AXIAL_ORIENTATION, rescale=(1.0, 0.0)):
        arr = np.asarray(voxels)
        if arr.ndim != 3:
            raise ShapeError(f"volume must be 3-D (nz, ny, nx), got shape {arr.shape}")
        if any(d < 1 for d in arr.shape):
            raise ShapeError(f"all dims must be >= 1, got {arr.shape}")
        if arr.dtype != np.int16:
            arr = arr.astype(np.int16)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)

        spacing = tuple(float(s) for s in spacing_mm)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing_mm must be 3 positive components, got {spacing_mm}")

        orient = tuple(float(c) for c in orientation)
        if len(orient) != 6:
            raise ValueError("orientation must be 6 direction cosines (row xyz, col xyz)")
        row, col = np.array(orient[:3]), np.array(orient[3:])
        for name, vec in (("row", row), ("column", col)):
            if abs(np.linalg.norm(vec) - 1.0) > _UNIT_NORM_TOL:
                raise ValueError(f"{name} cosines not unit-norm: {vec}")

        object.__setattr__(self, "voxels", arr)
        object.__setattr__(self, "spacing_mm", spacing)
        object.__setattr__(self, "orientation", orient)
        object.__setattr__(self, "rescale", (float(rescale[0]), float(rescale[1])))

    def __setattr__(self, name, value):
        raise AttributeError("VolumeTensor is immutable")

    @property
    def dims(self):
        """(nz, ny, nx) voxel counts."""
        return self.voxels.shape

    @property
    def slice_nbytes(self):
        """Size in bytes of one z slice (ny * nx * 2)."""
        nz, ny, nx = self.dims
        return ny * nx * 2

    def slice_normal(self):
        """Unit normal of the slice plane: row cosines x column cosines."""
        row = np.array(self.orientation[:3])
        col = np.array(self.orientation[3:])
        return np.cross(row, col)

    def to_bytes(self):
        """Raw voxel payload: z-major row-major int16 little-endian."""
        return self.voxels.astype("<i2", copy=False).tobytes()

    @classmethod
    def from_bytes(cls, data, dims, spacing_mm, orientation=AXIAL_ORIENTATION, rescale=(1.0, 0.0)):
        nz, ny, nx = dims
        expected = nz * ny * nx * 2
        if len(data) != expected:
            raise ShapeError(f"payload is {len(data)} bytes, dims {dims} require {expected}")
        arr = np.frombuffer(data, dtype="<i2").reshape(nz, ny, nx)
        return cls(arr, spacing_mm, orientation, rescale)

    def content_hash(self):
        """Stable digest of voxels plus geometry, for regression pinning."""
        h = hashlib.sha256()
        h.update(repr((self.dims, self.spacing_mm, self.orientation, self.rescale)).encode())
        h.update(self.to_bytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, VolumeTensor):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing_mm == other.spacing_mm
            and self.orientation == other.orientation
            and self.rescale == other.rescale
            and np.array_equal(self.voxels, other.voxels)
        )

    def __hash__(self):
        return hash(self.content_hash())

    def __repr__(self):
        return f"VolumeTensor(dims={self.dims}, spacing_mm={self.spacing_mm})"
