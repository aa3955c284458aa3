import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fieldflow.preprocess import conform, percentile, percentile_normalize, resample_z, resize_trilinear
from fieldflow.volume import Volume3D
from oracles import percentile_sorted, trilinear_direct


def test_percentile_identity_scaling():
    v = Volume3D(np.arange(101, dtype=float).reshape(101, 1, 1))
    out = percentile_normalize(v, 0, 100)
    assert np.max(np.abs(out.data.ravel() - np.arange(101) / 100)) < 1e-15


def test_constant_volume_normalizes_to_zero():
    assert np.all(percentile_normalize(Volume3D(np.full((3, 3, 3), 7.0))).data == 0)


def test_percentiles_match_sort_oracle():
    x = np.random.default_rng(0).standard_normal((10, 10, 10))
    for p in (0.5, 99.5, 37.3):
        assert abs(percentile(x, p) - percentile_sorted(x, p)) < 1e-12
    out = percentile_normalize(Volume3D(x))
    assert out.data.min() == 0 and out.data.max() == 1


def test_percentile_order_check():
    with pytest.raises(ValueError):
        percentile_normalize(Volume3D(np.zeros((2, 2, 2))), 50, 50)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 4, 2), elements=st.floats(-1e6, 1e6)))
def test_normalized_range(x):
    out = percentile_normalize(Volume3D(x)).data
    assert out.min() >= 0 and out.max() <= 1


def test_resample_identity():
    x = np.random.default_rng(1).random((3, 3, 6))
    v = Volume3D(x, (1.0, 1.0, 1.0))
    out = resample_z(v)
    assert np.array_equal(out.data, x)


def test_resample_linear_data():
    z = np.arange(5) * 2.0
    x = np.broadcast_to(3.0 + 0.5 * z, (2, 2, 5)).copy()
    out = resample_z(Volume3D(x, (1.0, 1.0, 2.0)))
    assert out.shape == (2, 2, 9) and out.spacing[2] == 1.0
    assert out.data[0, 0, 3] == pytest.approx((x[0, 0, 1] + x[0, 0, 2]) / 2, abs=1e-15)
    assert np.max(np.abs(out.data[0, 0] - (3.0 + 0.5 * np.arange(9)))) < 1e-12


def test_resample_matches_column_oracle():
    x = np.random.default_rng(2).random((4, 4, 7))
    sz = 1.7
    out = resample_z(Volume3D(x, (1.0, 1.0, sz)))
    extent = 6 * sz
    positions = np.arange(0, extent + 1e-9, 1.0)
    assert out.shape[2] == len(positions) == 11
    for i in range(4):
        for j in range(4):
            for k, zmm in enumerate(positions):
                s = zmm / sz
                lo = min(int(s), 5)
                f = s - lo
                want = x[i, j, lo] * (1 - f) + x[i, j, lo + 1] * f
                assert abs(out.data[i, j, k] - want) < 1e-12


def test_resample_needs_two_slices():
    with pytest.raises(ValueError):
        resample_z(Volume3D(np.zeros((2, 2, 1))))


def test_resize_identity_constant_and_oracle():
    x = np.random.default_rng(3).random((4, 4, 4))
    assert np.array_equal(resize_trilinear(Volume3D(x), (4, 4, 4)).data, x)
    c = resize_trilinear(Volume3D(np.full((3, 5, 2), 0.3)), (7, 2, 9)).data
    assert np.max(np.abs(c - 0.3)) < 1e-15
    out = resize_trilinear(Volume3D(x), (7, 7, 7))
    assert np.max(np.abs(out.data - trilinear_direct(x, (7, 7, 7)))) < 1e-12
    odd = resize_trilinear(Volume3D(x), (1, 5, 3))
    assert np.max(np.abs(odd.data - trilinear_direct(x, (1, 5, 3)))) < 1e-12


def test_resize_preserves_extent():
    v = Volume3D(np.zeros((5, 5, 5)), (2.0, 1.0, 0.5))
    out = resize_trilinear(v, (9, 3, 5))
    assert out.spacing == pytest.approx((1.0, 2.0, 0.5))


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (3, 3, 4), elements=st.floats(0, 1)), st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)))
def test_resize_is_convex(x, shape):
    out = resize_trilinear(Volume3D(x), shape).data
    assert out.min() >= x.min() - 1e-15 and out.max() <= x.max() + 1e-15


def test_conform_idempotent():
    rng = np.random.default_rng(4)
    raw = Volume3D(rng.random((6, 5, 7)) * 300, (0.9, 0.9, 1.3))
    first = conform(raw, target_shape=(8, 8, 6))
    assert first.shape == (8, 8, 6)
    # a conformed volume: 1 mm slices, target grid, saturated tails at 0 and 1
    x = rng.random((8, 8, 6))
    x.ravel()[:20] = 0.0
    x.ravel()[20:40] = 1.0
    v = Volume3D(x, (0.7, 0.7, 1.0))
    out = conform(v, target_shape=(8, 8, 6))
    assert out.shape == v.shape and out.spacing == v.spacing
    assert np.max(np.abs(out.data - x)) < 1e-12
