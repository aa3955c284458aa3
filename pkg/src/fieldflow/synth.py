"""Seeded phantoms and field-specific degradations.

High-field ground truth is a union of smooth ellipsoids with textured
plateaus. Low-field inputs are blurred and noisy copies of it. 7T targets
additionally carry a smooth multiplicative B1-style shading field whose
energy sits in the lowest spatial frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import correlate1d

from fieldflow.task import FieldTask
from fieldflow.volume import Volume3D, as_array

# soft edge width of the ellipsoids, in units of normalized radius
EDGE = 0.08

# contrast remapping of plateau intensities per modality
_CONTRAST = {
    "T1": lambda v: v,
    "T2": lambda v: 1.1 - v,
    "FLAIR": lambda v: 0.2 + 0.7 * (v - 0.2) ** 2 / 0.49,
}


@dataclass(frozen=True)
class PhantomSpec:
    shape: tuple = (32, 32, 32)
    n_ellipsoids: int = 6
    texture_amp: float = 0.1
    seed: int = 0
    modality: str = "T1"

    def __post_init__(self):
        if len(self.shape) != 3 or any(int(s) < 8 for s in self.shape):
            raise ValueError(f"phantom shape must be at least (8, 8, 8), got {self.shape}")
        if not 0.0 <= self.texture_amp <= 0.3:
            raise ValueError(f"texture_amp must lie in [0, 0.3], got {self.texture_amp}")
        if self.n_ellipsoids < 0:
            raise ValueError("n_ellipsoids must be nonnegative")


@dataclass(frozen=True)
class DegradeSpec:
    """Degradation parameters; ``None`` fields take the task's defaults."""

    task: FieldTask
    blur_sigma_vox: Optional[float] = None
    noise_sigma: Optional[float] = None
    bias_amp: float = 0.15
    bias_scale_vox: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        low_field = self.task.source_field == "64mT"
        if self.blur_sigma_vox is None:
            object.__setattr__(self, "blur_sigma_vox", 1.5 if low_field else 0.6)
        if self.noise_sigma is None:
            object.__setattr__(self, "noise_sigma", 0.05 if low_field else 0.02)
        if self.blur_sigma_vox < 0 or self.noise_sigma < 0:
            raise ValueError("blur and noise sigmas must be nonnegative")
        if not 0.0 <= self.bias_amp <= 0.5:
            raise ValueError(f"bias_amp must lie in [0, 0.5], got {self.bias_amp}")
        if self.bias_scale_vox is not None and self.bias_scale_vox <= 0:
            raise ValueError("bias_scale_vox must be positive")


def _grid(shape):
    # voxel centres mapped to [-1, 1] along each axis
    return np.meshgrid(*[np.linspace(-1.0, 1.0, n) for n in shape], indexing="ij")


def _rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    return q * np.sign(np.diag(r))


def make_phantom(spec: PhantomSpec, spacing=(1.0, 1.0, 1.0)) -> Volume3D:
    """Ellipsoid phantom in [0, 1], deterministic in ``spec.seed``.

    The first ellipsoid is a large centred body; later ones are smaller,
    randomly rotated inclusions painted over it.
    """
    shape = tuple(int(s) for s in spec.shape)
    rng = np.random.default_rng(spec.seed)
    gx, gy, gz = _grid(shape)
    coords = np.stack([gx, gy, gz], axis=-1)
    vol = np.zeros(shape)
    fg = np.zeros(shape)
    contrast = _CONTRAST[spec.modality]
    for i in range(spec.n_ellipsoids):
        if i == 0:
            center = rng.uniform(-0.05, 0.05, 3)
            axes = rng.uniform(0.7, 0.85, 3)
        else:
            center = rng.uniform(-0.4, 0.4, 3)
            axes = rng.uniform(0.15, 0.4, 3)
        rel = (coords - center) @ _rotation(rng)
        radius = np.sqrt(np.sum((rel / axes) ** 2, axis=-1))
        mask = 0.5 * (1.0 - np.tanh((radius - 1.0) / EDGE))
        level = contrast(rng.uniform(0.2, 0.9))
        vol = vol * (1.0 - mask) + level * mask
        fg = np.maximum(fg, mask)
    if spec.texture_amp > 0:
        texture = np.zeros(shape)
        for _ in range(4):
            freq = rng.uniform(2.0, 6.0, 3) * rng.choice([-1.0, 1.0], 3)
            phase = rng.uniform(0, 2 * np.pi)
            texture += np.cos(np.pi * (freq[0] * gx + freq[1] * gy + freq[2] * gz) + phase)
        texture /= max(np.max(np.abs(texture)), 1e-12)
        vol = vol + spec.texture_amp * texture * fg
    return Volume3D(np.clip(vol, 0.0, 1.0), spacing)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at 3 sigma, normalized to sum 1."""
    radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(x: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with mirror-symmetric boundaries."""
    if sigma == 0:
        return np.array(x, dtype=np.float64)
    k = gaussian_kernel(sigma)
    out = np.asarray(x, dtype=np.float64)
    for axis in range(3):
        out = correlate1d(out, k, axis=axis, mode="reflect")
    return out


def degrade_lowfield(x_hf, spec: DegradeSpec) -> Volume3D:
    """Blur, add seeded Gaussian noise, clamp to [0, 1]."""
    x = as_array(x_hf)
    out = gaussian_blur(x, spec.blur_sigma_vox)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        out = out + spec.noise_sigma * rng.standard_normal(x.shape)
    spacing = x_hf.spacing if isinstance(x_hf, Volume3D) else (1.0, 1.0, 1.0)
    return Volume3D(np.clip(out, 0.0, 1.0), spacing)


def bias_field(shape, spec: DegradeSpec) -> np.ndarray:
    """Smooth shading pattern ``g`` with ``max |g| = 1``.

    Superposes three cosine modes with an integer number of cycles across
    each axis, so the pattern is periodic on the grid and its spectrum is
    confined to the few bins of those modes. Every mode's wavelength is at
    least ``bias_scale_vox`` (a quarter of the smallest extent by default).
    """
    shape = tuple(int(s) for s in shape)
    scale = spec.bias_scale_vox or min(shape) / 4.0
    rng = np.random.default_rng(spec.seed)
    idx = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    max_cycles = [max(1, int(n // scale)) for n in shape]
    g = np.zeros(shape)
    for _ in range(3):
        while True:
            cycles = np.array([rng.integers(0, min(2, m) + 1) for m in max_cycles])
            spatial_freq = np.sqrt(np.sum((cycles / np.array(shape)) ** 2))
            if cycles.any() and 1.0 / spatial_freq >= scale:
                break
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.5, 1.0)
        arg = sum(2 * np.pi * c * i / n for c, i, n in zip(cycles, idx, shape))
        g += amp * np.cos(arg + phase)
    return g / max(np.max(np.abs(g)), 1e-12)


def apply_b1_bias(x, spec: DegradeSpec) -> Volume3D:
    """Multiply by ``1 + bias_amp * g`` and clamp to [0, 1]."""
    arr = as_array(x)
    spacing = x.spacing if isinstance(x, Volume3D) else (1.0, 1.0, 1.0)
    if spec.bias_amp == 0:
        return Volume3D(arr, spacing)
    out = arr * (1.0 + spec.bias_amp * bias_field(arr.shape, spec))
    return Volume3D(np.clip(out, 0.0, 1.0), spacing)


def split_counts(n: int) -> tuple[int, int]:
    """(train, test) sizes for an 8:2 split with at least one test item."""
    n_test = max(1, int(math.floor(0.2 * n + 0.5)))
    return n - n_test, n_test


@dataclass
class PairedDataset:
    items: list  # (x_lf, x_hf, task)
    train_idx: list = field(default_factory=list)
    test_idx: list = field(default_factory=list)

    @property
    def train(self):
        return [self.items[i] for i in self.train_idx]

    @property
    def test(self):
        return [self.items[i] for i in self.test_idx]

    def __len__(self):
        return len(self.items)


def make_paired_dataset(n: int, shape, tasks, seed: int, n_ellipsoids: int = 6, texture_amp: float = 0.1) -> PairedDataset:
    """Deterministic list of (x_lf, x_hf, task) pairs with an 8:2 split.

    Items cycle through ``tasks``. The split is taken within each task so
    every task keeps the 8:2 ratio; the last items of a task go to test.
    """
    if n < 1:
        raise ValueError("need at least one item")
    if not tasks:
        raise ValueError("need at least one task")
    root = np.random.SeedSequence(seed)
    children = root.spawn(n)
    items = []
    for i, child in enumerate(children):
        task = tasks[i % len(tasks)]
        s_phantom, s_noise, s_bias = (int(x) for x in child.generate_state(3))
        phantom = make_phantom(
            PhantomSpec(tuple(shape), n_ellipsoids, texture_amp, s_phantom, task.modality)
        )
        if task.target_field == "7T":
            x_hf = apply_b1_bias(phantom, DegradeSpec(task, seed=s_bias))
        else:
            x_hf = phantom
        x_lf = degrade_lowfield(phantom, DegradeSpec(task, seed=s_noise))
        items.append((x_lf, x_hf, task))
    ds = PairedDataset(items)
    for task in dict.fromkeys(tasks):
        idx = [i for i, item in enumerate(items) if item[2] == task]
        n_train, _ = split_counts(len(idx))
        ds.train_idx += idx[:n_train]
        ds.test_idx += idx[n_train:]
    ds.train_idx.sort()
    ds.test_idx.sort()
    return ds
