"""Dense 3D scalar volumes and complex spectra.

Arrays are indexed ``data[x, y, z]``. The flat storage convention is
x-fastest (``index = x + nx * (y + ny * z)``), i.e. Fortran order, which is
also the on-disk order of NIfTI voxel data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _check_shape(shape) -> tuple[int, int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or any(s < 1 for s in shape):
        raise ValueError(f"shape must be three positive integers, got {shape}")
    return shape


def _check_spacing(spacing) -> tuple[float, float, float]:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or not all(math.isfinite(s) and s > 0 for s in spacing):
        raise ValueError(f"spacing must be three finite positive values, got {spacing}")
    return spacing


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Real scalar field on a regular grid.

    Attributes:
        data: float64 array of shape ``(nx, ny, nz)``, read-only.
        spacing: voxel size in millimetres along x, y, z.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3D, got ndim={arr.ndim}")
        _check_shape(arr.shape)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def flatten(self) -> np.ndarray:
        """Voxel values in x-fastest order."""
        return self.data.ravel(order="F")

    @classmethod
    def from_flat(cls, values, shape, spacing=(1.0, 1.0, 1.0)) -> "Volume3D":
        shape = _check_shape(shape)
        values = np.asarray(values, dtype=np.float64)
        if values.size != shape[0] * shape[1] * shape[2]:
            raise ValueError(f"{values.size} values cannot fill shape {shape}")
        return cls(values.reshape(shape, order="F"), spacing)

    def with_data(self, data) -> "Volume3D":
        """New volume with the same spacing and different voxel values."""
        return Volume3D(data, self.spacing)

    def __repr__(self):
        return f"Volume3D(shape={self.shape}, spacing={self.spacing})"


@dataclass(frozen=True, eq=False)
class Spectrum3D:
    """Full (unpacked) complex spectrum of a volume."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.ndim != 3:
            raise ValueError(f"spectrum data must be 3D, got ndim={arr.ndim}")
        _check_shape(arr.shape)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def at(self, k) -> complex:
        """Value at frequency index ``k``, taken modulo the shape."""
        kx, ky, kz = (int(k[i]) % self.shape[i] for i in range(3))
        return complex(self.data[kx, ky, kz])

    def mirrored(self) -> np.ndarray:
        """Array whose entry at ``k`` is the spectrum value at ``-k`` (mod shape)."""
        out = self.data
        for axis in range(3):
            out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
        return out

    def hermitian_error(self) -> float:
        """Max ``|S(k) - conj(S(-k))|``; zero for spectra of real volumes."""
        return float(np.max(np.abs(self.data - np.conj(self.mirrored()))))

    def __repr__(self):
        return f"Spectrum3D(shape={self.shape})"


def new_volume(shape, spacing=(1.0, 1.0, 1.0), fill: float = 0.0) -> Volume3D:
    shape = _check_shape(shape)
    return Volume3D(np.full(shape, float(fill)), _check_spacing(spacing))


def flat_index(x: int, y: int, z: int, shape) -> int:
    nx, ny, nz = shape
    if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
        raise IndexError(f"({x}, {y}, {z}) outside shape {tuple(shape)}")
    return x + nx * (y + ny * z)


def unflatten_index(i: int, shape) -> tuple[int, int, int]:
    nx, ny, nz = shape
    if not 0 <= i < nx * ny * nz:
        raise IndexError(f"flat index {i} outside shape {tuple(shape)}")
    x = i % nx
    y = (i // nx) % ny
    z = i // (nx * ny)
    return x, y, z


def as_array(v) -> np.ndarray:
    """Voxel array of a Volume3D, or the input itself coerced to float64."""
    if isinstance(v, Volume3D):
        return v.data
    return np.asarray(v, dtype=np.float64)


def linf_distance(a, b) -> float:
    """Largest absolute voxelwise difference between two volumes."""
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))
