"""Rectified-flow path construction and the Euler sampler.

The path runs from clean data at ``t = 0`` to standard Gaussian noise at
``t = 1``; the velocity along it is constant, ``z1 - z0``. Enhancement
integrates the learned velocity backwards from ``t = 1`` to ``t = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fieldflow.volume import Volume3D, as_array


class DivergedSamplerError(RuntimeError):
    pass


class IdentityCodec:
    """Latent codec that leaves volumes untouched.

    Any object with ``encode(array) -> array`` and ``decode(array) -> array``
    can be passed where this is accepted.
    """

    def encode(self, x: np.ndarray) -> np.ndarray:
        return x

    def decode(self, z: np.ndarray) -> np.ndarray:
        return z


@dataclass(frozen=True, eq=False)
class FlowState:
    z: Volume3D
    t: float

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {self.t}")


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 20
    seed: int = 0

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")


def _pair(z0, z1):
    a, b = as_array(z0), as_array(z1)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def interpolate(z0, z1, t: float) -> FlowState:
    """``z_t = (1 - t) z0 + t z1``, exact at both endpoints."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    a, b = _pair(z0, z1)
    if t == 0.0:
        zt = a.copy()
    elif t == 1.0:
        zt = b.copy()
    else:
        zt = (1.0 - t) * a + t * b
    spacing = z0.spacing if isinstance(z0, Volume3D) else (1.0, 1.0, 1.0)
    return FlowState(Volume3D(zt, spacing), float(t))


def velocity_target(z0, z1) -> Volume3D:
    a, b = _pair(z0, z1)
    spacing = z0.spacing if isinstance(z0, Volume3D) else (1.0, 1.0, 1.0)
    return Volume3D(b - a, spacing)


def noise_array(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(tuple(shape))


def sample_noise(shape, seed: int, spacing=(1.0, 1.0, 1.0)) -> Volume3D:
    """I.i.d. standard normal volume from a PCG64 generator seeded with ``seed``."""
    rng = np.random.default_rng(seed)
    return Volume3D(noise_array(shape, rng), spacing)


def euler_enhance(model, x_lf, task, cfg: SamplerConfig, codec=None, z1=None, clamp=True) -> Volume3D:
    """Integrate the learned velocity from noise at t=1 down to t=0.

    Args:
        model: anything with ``forward(z, x_lf, task, t)`` returning a velocity
            array of the input shape.
        x_lf: low-field input volume.
        task: FieldTask conditioning the model.
        cfg: step count and noise seed.
        codec: latent codec, identity when omitted.
        z1: explicit starting noise; drawn from ``cfg.seed`` when omitted.
        clamp: clip the decoded output to [0, 1].
    """
    codec = codec or IdentityCodec()
    x = as_array(x_lf)
    cond = codec.encode(x)
    if z1 is None:
        z = noise_array(cond.shape, np.random.default_rng(cfg.seed))
    else:
        z = np.array(as_array(z1), dtype=np.float64)
    dt = 1.0 / cfg.steps
    for i in range(cfg.steps):
        t = 1.0 - i / cfg.steps
        z = z - dt * np.asarray(model.forward(z, cond, task, t))
        if not np.all(np.isfinite(z)):
            raise DivergedSamplerError(f"non-finite state after Euler step {i}")
    out = codec.decode(z)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    spacing = x_lf.spacing if isinstance(x_lf, Volume3D) else (1.0, 1.0, 1.0)
    return Volume3D(out, spacing)
