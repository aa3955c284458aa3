"""Intensity normalization and resampling to the working grid.

Pipeline order is percentile normalization, then z resampling to 1 mm,
then trilinear resize to the target grid.
"""

from __future__ import annotations

import math

import numpy as np

from fieldflow.volume import Volume3D


def percentile(values, p: float) -> float:
    """Linear-interpolation percentile at rank ``p/100 * (N - 1)`` of the sorted values."""
    return float(np.percentile(np.asarray(values, dtype=np.float64), p, method="linear"))


def percentile_normalize(v: Volume3D, p_lo: float = 0.5, p_hi: float = 99.5) -> Volume3D:
    """Clip to the [p_lo, p_hi] percentile window and map it onto [0, 1].

    A degenerate window (both percentiles equal) yields an all-zero volume.
    """
    if not p_lo < p_hi:
        raise ValueError(f"need p_lo < p_hi, got {p_lo}, {p_hi}")
    lo, hi = np.percentile(v.data, [p_lo, p_hi], method="linear")
    if hi == lo:
        return v.with_data(np.zeros(v.shape))
    out = (np.clip(v.data, lo, hi) - lo) / (hi - lo)
    # guard the last ulp so the range stays inside [0, 1]
    return v.with_data(np.clip(out, 0.0, 1.0))


def _linear_weights(pos: np.ndarray, n: int):
    """Lower index and fractional weight for linear interpolation at ``pos``."""
    i0 = np.clip(np.floor(pos).astype(np.intp), 0, max(n - 2, 0))
    frac = pos - i0
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, frac


def _interp_axis(data: np.ndarray, pos: np.ndarray, axis: int) -> np.ndarray:
    n = data.shape[axis]
    if n == 1:
        return np.repeat(data, len(pos), axis=axis)
    i0, i1, frac = _linear_weights(pos, n)
    a = np.take(data, i0, axis=axis)
    b = np.take(data, i1, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = len(pos)
    frac = frac.reshape(shape)
    out = a * (1.0 - frac) + b * frac
    # exact endpoint samples keep interpolation of conformed data an identity
    exact = np.isclose(frac, 0.0, rtol=0, atol=0)
    return np.where(exact, a, out)


def resample_z(v: Volume3D, target_sz_mm: float = 1.0) -> Volume3D:
    """Linear resampling along z onto a ``target_sz_mm`` grid starting at slice 0."""
    nz = v.shape[2]
    if nz < 2:
        raise ValueError("z resampling needs at least 2 slices")
    if target_sz_mm <= 0:
        raise ValueError("target spacing must be positive")
    sz = v.spacing[2]
    extent = (nz - 1) * sz
    n_out = int(math.floor(extent / target_sz_mm + 1e-9)) + 1
    pos = np.arange(n_out) * target_sz_mm / sz
    data = _interp_axis(v.data, pos, axis=2)
    return Volume3D(data, (v.spacing[0], v.spacing[1], float(target_sz_mm)))


def resize_trilinear(v: Volume3D, target_shape=(256, 256, 160)) -> Volume3D:
    """Corner-aligned trilinear resize; spacing is rescaled to keep the physical extent."""
    target_shape = tuple(int(s) for s in target_shape)
    if len(target_shape) != 3 or any(s < 1 for s in target_shape):
        raise ValueError(f"target shape must be three positive integers, got {target_shape}")
    data = v.data
    spacing = []
    for axis, n_out in enumerate(target_shape):
        n_in = v.shape[axis]
        if n_out == 1:
            pos = np.zeros(1)
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        if n_out != n_in:
            data = _interp_axis(data, pos, axis)
        if n_out > 1 and n_in > 1:
            spacing.append(v.spacing[axis] * (n_in - 1) / (n_out - 1))
        else:
            spacing.append(v.spacing[axis] * n_in / n_out)
    return Volume3D(data, tuple(spacing))


def conform(v: Volume3D, p_lo=0.5, p_hi=99.5, target_sz_mm=1.0, target_shape=(256, 256, 160)) -> Volume3D:
    """normalize -> resample_z -> resize."""
    out = percentile_normalize(v, p_lo, p_hi)
    out = resample_z(out, target_sz_mm)
    return resize_trilinear(out, target_shape)
