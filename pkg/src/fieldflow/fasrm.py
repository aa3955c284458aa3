"""Field-aware spatial-frequency loss.

The loss pairs a mean-absolute spatial term with a frequency-domain term
split over three radial bands (low, mid, high). Each band carries a weight
that depends on the field transition being learned, and each frequency bin
is modulated by a focal factor ``|D(k)|**alpha`` where ``D`` is the spectral
difference between prediction and target.

By default the focal factor is a detached weight: it scales the penalty but
no gradient flows through it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from fieldflow.fourier import fftn, ifftn
from fieldflow.volume import Volume3D, as_array

log = logging.getLogger(__name__)

BAND_NAMES = ("low", "mid", "high")

DEFAULT_WEIGHTS = {
    "64mT_to_3T": (0.2, 0.5, 0.3),
    "3T_to_7T": (0.1, 0.3, 0.6),
}
UNIFORM_WEIGHTS = (1 / 3, 1 / 3, 1 / 3)


def normalized_radius(shape) -> np.ndarray:
    """Centred frequency radius of every DFT bin, 0 at DC and 1 at the Nyquist corner."""
    shape = tuple(int(n) for n in shape)
    grids = np.meshgrid(*[np.fft.fftfreq(n) * n for n in shape], indexing="ij")
    k_max = np.sqrt(sum((n / 2) ** 2 for n in shape))
    return np.sqrt(sum(g**2 for g in grids)) / k_max


@dataclass(frozen=True, eq=False)
class BandSpec:
    """Partition of the DFT grid into low/mid/high radial bands."""

    shape: tuple[int, int, int]
    cutoffs: tuple[float, float]
    masks: tuple[np.ndarray, np.ndarray, np.ndarray]
    # integer band id (0, 1, 2) per frequency bin
    labels: np.ndarray

    @property
    def counts(self) -> tuple[int, int, int]:
        return tuple(int(m.sum()) for m in self.masks)


def build_bands(shape, cutoffs=(1 / 3, 2 / 3)) -> BandSpec:
    r1, r2 = (float(c) for c in cutoffs)
    if not 0 < r1 < r2 < 1:
        raise ValueError(f"band cutoffs must satisfy 0 < r1 < r2 < 1, got {(r1, r2)}")
    shape = tuple(int(n) for n in shape)
    radius = normalized_radius(shape)
    labels = np.where(radius < r1, 0, np.where(radius < r2, 1, 2)).astype(np.int8)
    masks = tuple(labels == b for b in range(3))
    for arr in (labels, *masks):
        arr.setflags(write=False)
    return BandSpec(shape, (r1, r2), masks, labels)


@dataclass
class FasrmConfig:
    """Hyperparameters of the loss.

    ``weights`` maps a field transition key (``FieldTask.transition``) to the
    (low, mid, high) band weights. Unknown transitions fall back to uniform
    weights. ``focal_grad`` lets gradient flow through the focal factor
    instead of treating it as a constant.
    """

    lambda_freq: float = 0.1
    alpha: float = 1.0
    lambda_spat: float = 1.0
    cutoffs: tuple[float, float] = (1 / 3, 2 / 3)
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    focal_grad: bool = False

    def __post_init__(self):
        for name in ("lambda_freq", "lambda_spat"):
            val = float(getattr(self, name))
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {val}")
        if not np.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite, got {self.alpha}")
        for key, w in self.weights.items():
            w = tuple(float(x) for x in w)
            if len(w) != 3 or not all(np.isfinite(x) and x >= 0 for x in w):
                raise ValueError(f"weights for {key} must be three finite nonnegative values")
            self.weights[key] = w

    def weights_for(self, task) -> tuple[float, float, float]:
        key = getattr(task, "transition", task)
        if key in self.weights:
            return self.weights[key]
        log.warning("no band weights for task %r, using uniform weights", key)
        return UNIFORM_WEIGHTS


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    spatial_l1: float
    freq_per_band: tuple[float, float, float]


def _operands(v_pred, v_target, bands: BandSpec):
    pred, target = as_array(v_pred), as_array(v_target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs target {target.shape}")
    if tuple(bands.shape) != pred.shape:
        raise ValueError(f"bands built for {bands.shape}, volumes are {pred.shape}")
    return pred, target


def focal_weights(spec_diff: np.ndarray, alpha: float) -> np.ndarray:
    """``|D(k)|**alpha`` for a spectral difference ``D``."""
    mag = np.abs(spec_diff)
    if alpha < 0 and np.any(mag == 0):
        raise ValueError("focal factor is singular: alpha < 0 with a zero spectral difference")
    return mag**alpha


def _bin_weights(bands: BandSpec, w) -> np.ndarray:
    # w_b / |M_b| per bin; empty bands contribute nothing
    per_band = np.array([w[b] / c if c else 0.0 for b, c in enumerate(bands.counts)])
    return per_band[bands.labels]


def spectral_difference(v_pred, v_target) -> np.ndarray:
    """``F(v_pred) - F(v_target)`` under the orthonormal DFT."""
    return fftn(as_array(v_pred) - as_array(v_target))


def fasfl_loss(v_pred, v_target, task, cfg: FasrmConfig, bands: BandSpec, focal=None) -> LossBreakdown:
    """Evaluate the loss and its per-band decomposition.

    Args:
        v_pred: predicted velocity (Volume3D or array).
        v_target: target velocity, same shape.
        task: FieldTask (or transition key) selecting the band weights.
        cfg: loss hyperparameters.
        bands: band partition built for this shape.
        focal: optional precomputed focal factor ``|D|**alpha``. Passing the
            factor from a fixed reference point evaluates the loss with the
            modulation held constant, which is what the detached gradient
            differentiates.
    """
    pred, target = _operands(v_pred, v_target, bands)
    diff = pred - target
    spatial = float(np.mean(np.abs(diff)))
    spec = fftn(diff)
    if focal is None:
        focal = focal_weights(spec, cfg.alpha)
    energy = focal * (spec.real**2 + spec.imag**2)
    w = cfg.weights_for(task)
    per_band = []
    for b, count in enumerate(bands.counts):
        term = w[b] / count * float(np.sum(energy[bands.masks[b]])) if count else 0.0
        per_band.append(term)
    total = cfg.lambda_spat * spatial + cfg.lambda_freq * sum(per_band)
    return LossBreakdown(float(total), spatial, tuple(per_band))


def fasfl_gradient(v_pred, v_target, task, cfg: FasrmConfig, bands: BandSpec) -> np.ndarray:
    """Gradient of the loss with respect to ``v_pred``.

    Returns a Volume3D when ``v_pred`` is one, otherwise a plain array.

    With the focal factor detached the frequency term is a weighted sum of
    squared spectral moduli, whose gradient under a unitary transform is
    ``2 * Re(ifft(W * D))``. With ``cfg.focal_grad`` the factor is
    differentiated too, which rescales each bin by ``(alpha + 2) / 2``.
    """
    pred, target = _operands(v_pred, v_target, bands)
    diff = pred - target
    n = diff.size
    grad = cfg.lambda_spat * np.sign(diff) / n
    if cfg.lambda_freq:
        spec = fftn(diff)
        weight = _bin_weights(bands, cfg.weights_for(task)) * focal_weights(spec, cfg.alpha)
        if cfg.focal_grad:
            weight = weight * (cfg.alpha + 2.0) / 2.0
        grad = grad + cfg.lambda_freq * np.real(ifftn(2.0 * weight * spec))
    if isinstance(v_pred, Volume3D):
        return v_pred.with_data(grad)
    return grad


def band_relative_error(pred, target, bands: BandSpec, band: int = 2) -> float:
    """Relative spectral error restricted to one band: ``||M(F p - F t)||^2 / ||M F t||^2``."""
    p, t = as_array(pred), as_array(target)
    ft = fftn(t)
    diff = fftn(p) - ft
    mask = bands.masks[band]
    denom = float(np.sum(np.abs(ft[mask]) ** 2))
    if denom == 0:
        raise ValueError("target has no energy in the requested band")
    return float(np.sum(np.abs(diff[mask]) ** 2)) / denom
