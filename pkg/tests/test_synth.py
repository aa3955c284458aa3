import numpy as np
import pytest

from fieldflow.fasrm import build_bands
from fieldflow.fourier import fftn
from fieldflow.synth import (
    DegradeSpec,
    PhantomSpec,
    apply_b1_bias,
    bias_field,
    degrade_lowfield,
    gaussian_kernel,
    make_paired_dataset,
    make_phantom,
    split_counts,
)
from fieldflow.task import FieldTask
from fieldflow.volume import Volume3D
from oracles import conv_direct

LF = FieldTask("T1", "64mT", "3T")
HF = FieldTask("FLAIR", "3T", "7T")


def test_empty_phantom_is_zero():
    v = make_phantom(PhantomSpec((8, 8, 8), n_ellipsoids=0, texture_amp=0.0))
    assert np.all(v.data == 0)


@pytest.mark.parametrize("modality", ["T1", "T2", "FLAIR"])
def test_phantom_deterministic_and_bounded(modality):
    spec = PhantomSpec((16, 12, 10), seed=4, modality=modality)
    a, b = make_phantom(spec), make_phantom(spec)
    assert np.array_equal(a.data, b.data)
    assert a.data.min() >= 0 and a.data.max() <= 1


def test_default_phantom_foreground():
    for seed in range(5):
        v = make_phantom(PhantomSpec(seed=seed))
        assert np.mean(v.data > 0.1) >= 0.2


@pytest.mark.parametrize("kw", [{"shape": (4, 8, 8)}, {"texture_amp": 0.5}, {"n_ellipsoids": -1}])
def test_phantom_spec_validation(kw):
    with pytest.raises(ValueError):
        PhantomSpec(**kw)


def test_gaussian_kernel():
    k = gaussian_kernel(1.5)
    assert len(k) == 2 * 5 + 1
    assert k.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(k, k[::-1])


def test_degrade_identity_and_constant():
    x = make_phantom(PhantomSpec((8, 8, 8), seed=1))
    same = degrade_lowfield(x, DegradeSpec(LF, blur_sigma_vox=0.0, noise_sigma=0.0))
    assert np.array_equal(same.data, x.data)
    c = Volume3D(np.full((8, 8, 8), 0.42))
    blurred = degrade_lowfield(c, DegradeSpec(LF, blur_sigma_vox=2.0, noise_sigma=0.0))
    assert np.max(np.abs(blurred.data - 0.42)) < 1e-15


def test_impulse_blur_matches_dense_convolution():
    x = np.zeros((16, 16, 16))
    x[8, 8, 8] = 1.0
    out = degrade_lowfield(x, DegradeSpec(LF, blur_sigma_vox=1.5, noise_sigma=0.0))
    ref = np.clip(conv_direct(x, gaussian_kernel(1.5)), 0, 1)
    assert np.max(np.abs(out.data - ref)) < 1e-10


def test_boundary_blur_matches_dense_convolution():
    rng = np.random.default_rng(0)
    x = rng.random((8, 8, 8)) * 0.5
    out = degrade_lowfield(x, DegradeSpec(LF, blur_sigma_vox=0.6, noise_sigma=0.0))
    ref = conv_direct(x, gaussian_kernel(0.6))
    assert np.max(np.abs(out.data - ref)) < 1e-10


def test_task_defaults():
    assert (DegradeSpec(LF).blur_sigma_vox, DegradeSpec(LF).noise_sigma) == (1.5, 0.05)
    assert (DegradeSpec(HF).blur_sigma_vox, DegradeSpec(HF).noise_sigma) == (0.6, 0.02)
    with pytest.raises(ValueError):
        DegradeSpec(HF, bias_amp=0.6)


def _high_fraction(x, bands):
    e = np.abs(fftn(x)) ** 2
    return e[bands.masks[2]].sum() / e.sum()


@pytest.mark.parametrize("sigma", [1.0, 1.5])
def test_blur_reduces_high_band_fraction(sigma):
    # white noise adds high-band energy by construction, so the blur is checked on its own
    bands = build_bands((32, 32, 32))
    for seed in range(10):
        x = make_phantom(PhantomSpec(seed=seed))
        y = degrade_lowfield(x, DegradeSpec(LF, blur_sigma_vox=sigma, noise_sigma=0.0, seed=seed))
        assert _high_fraction(y.data, bands) < _high_fraction(x.data, bands)


def test_default_degradation_adds_noise_energy():
    bands = build_bands((32, 32, 32))
    x = make_phantom(PhantomSpec(seed=0))
    y = degrade_lowfield(x, DegradeSpec(LF, seed=0))
    assert _high_fraction(y.data, bands) > _high_fraction(x.data, bands)


def test_bias_identity_and_determinism():
    x = make_phantom(PhantomSpec((8, 8, 8), seed=2))
    assert np.array_equal(apply_b1_bias(x, DegradeSpec(HF, bias_amp=0.0)).data, x.data)
    spec = DegradeSpec(HF, seed=3)
    g = bias_field((16, 16, 16), spec)
    assert np.array_equal(g, bias_field((16, 16, 16), spec))
    assert np.max(np.abs(g)) == pytest.approx(1.0)


def test_bias_energy_is_low_frequency():
    bands = build_bands((32, 32, 32))
    for seed in range(10):
        g = bias_field((32, 32, 32), DegradeSpec(HF, seed=seed))
        e = np.abs(fftn(g)) ** 2
        assert e[~bands.masks[0]].sum() < 0.05 * e.sum()


@pytest.mark.parametrize("n, expected", [(10, (8, 2)), (5, (4, 1)), (1, (0, 1)), (20, (16, 4)), (3, (2, 1))])
def test_split_counts(n, expected):
    assert split_counts(n) == expected


def test_paired_dataset():
    ds = make_paired_dataset(10, (8, 8, 8), [LF, HF], seed=1)
    again = make_paired_dataset(10, (8, 8, 8), [LF, HF], seed=1)
    assert len(ds) == 10
    for a, b in zip(ds.items, again.items):
        assert np.array_equal(a[0].data, b[0].data) and np.array_equal(a[1].data, b[1].data)
    # 8:2 within each task: 5 items each -> 4 train / 1 test
    assert len(ds.train) == 8 and len(ds.test) == 2
    assert sorted(str(t) for _, _, t in ds.test) == sorted([str(LF), str(HF)])
    for lf, hf, task in ds.items:
        assert 0 <= lf.data.min() and lf.data.max() <= 1 and 0 <= hf.data.min() and hf.data.max() <= 1
    single = make_paired_dataset(10, (8, 8, 8), [LF], seed=1)
    assert (len(single.train), len(single.test)) == (8, 2)
    with pytest.raises(ValueError):
        make_paired_dataset(0, (8, 8, 8), [LF], seed=1)
