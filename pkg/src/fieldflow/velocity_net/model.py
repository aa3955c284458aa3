"""Conditioned 3D convolutional velocity network.

Architecture: ``z_t`` and ``x_lf`` form two input channels; hidden 3x3x3
convolutions are each followed by a FiLM modulation
``u * (1 + gamma) + beta`` and a tanh; the last convolution is linear and
produces one channel. ``gamma`` and ``beta`` are affine functions of the
condition vector ``h = embed[task] + W_t phi(t) + b_t`` where ``phi`` holds
sinusoidal features of the timestep.

All parameters live in one flat float64 array; per-tensor arrays are views
into it, so optimizer updates on the flat array are seen by the layers.
"""

from __future__ import annotations

import numpy as np

from fieldflow.task import ALL_PROMPTS
from fieldflow.velocity_net.layers import activation, activation_grad, conv3d_backward, conv3d_forward
from fieldflow.volume import as_array

IN_CHANNELS = 2
EMBED_DIM = 16
N_FREQS = 8
# angular frequencies (rad per unit t) of the timestep features
TIME_OMEGAS = np.geomspace(1.0, 10.0, N_FREQS)


def time_features(t: float) -> np.ndarray:
    ang = TIME_OMEGAS * float(t)
    return np.concatenate([np.sin(ang), np.cos(ang)])


def prompt_index(task) -> int:
    prompt = getattr(task, "prompt", task)
    try:
        return ALL_PROMPTS.index(prompt)
    except ValueError:
        raise ValueError(f"no embedding for condition {prompt!r}") from None


class VelocityModel:
    """Velocity network with flat parameter, gradient and Adam moment arrays.

    Args:
        hidden: channel counts of the hidden layers; ``(16, 16, 16)`` gives
            the 2-16-16-16-1 four-layer plan.
        seed: seed of the parameter initialisation.
        embed_dim: width of the condition vector.
    """

    def __init__(self, hidden=(16, 16, 16), seed: int = 0, embed_dim: int = EMBED_DIM):
        self.hidden = tuple(int(c) for c in hidden)
        if not self.hidden or any(c < 1 for c in self.hidden):
            raise ValueError(f"hidden channels must be positive, got {hidden}")
        self.embed_dim = int(embed_dim)
        self.layout = self._layout()
        total = sum(int(np.prod(shape)) for _, shape in self.layout)
        self.params = np.zeros(total)
        self.grads = np.zeros(total)
        self.adam_m = np.zeros(total)
        self.adam_v = np.zeros(total)
        self.p = self._views(self.params)
        self.g = self._views(self.grads)
        self._cache = None
        self.init_params(seed)

    def _layout(self):
        e = self.embed_dim
        layout = [
            ("embed", (len(ALL_PROMPTS), e)),
            ("time_w", (e, 2 * N_FREQS)),
            ("time_b", (e,)),
        ]
        chans = (IN_CHANNELS,) + self.hidden + (1,)
        for i in range(len(chans) - 1):
            cin, cout = chans[i], chans[i + 1]
            layout += [(f"conv{i}.w", (cout, cin, 3, 3, 3)), (f"conv{i}.b", (cout,))]
            if i < len(chans) - 2:
                layout += [
                    (f"film{i}.scale_w", (cout, e)),
                    (f"film{i}.scale_b", (cout,)),
                    (f"film{i}.shift_w", (cout, e)),
                    (f"film{i}.shift_b", (cout,)),
                ]
        return layout

    def _views(self, flat):
        views, off = {}, 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            views[name] = flat[off : off + size].reshape(shape)
            off += size
        return views

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    @property
    def n_params(self) -> int:
        return self.params.size

    def init_params(self, seed: int):
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases."""
        rng = np.random.default_rng(seed)
        self.params[:] = 0.0
        for name, shape in self.layout:
            if name.endswith("_b") or name.endswith(".b"):
                continue
            if name == "embed":
                fan_in = shape[0]  # one-hot lookup
            else:
                fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            self.p[name][...] = rng.uniform(-bound, bound, size=shape)

    def zero_grad(self):
        self.grads[:] = 0.0

    def condition(self, task, t: float):
        idx = prompt_index(task)
        phi = time_features(t)
        h = self.p["embed"][idx] + self.p["time_w"] @ phi + self.p["time_b"]
        return h, idx, phi

    def forward(self, z_t, x_lf, task, t: float, cache: bool = False) -> np.ndarray:
        """Predicted velocity for state ``z_t`` at time ``t``.

        With ``cache=True`` the activations needed by ``backward`` are kept;
        otherwise the call leaves the model untouched.
        """
        z, x = as_array(z_t), as_array(x_lf)
        if z.shape != x.shape:
            raise ValueError(f"shape mismatch: z_t {z.shape} vs x_lf {x.shape}")
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        h, idx, phi = self.condition(task, t)
        a = np.stack([z, x])
        layers = []
        for i in range(len(self.hidden)):
            u, cols = conv3d_forward(a, self.p[f"conv{i}.w"], self.p[f"conv{i}.b"])
            gamma = self.p[f"film{i}.scale_w"] @ h + self.p[f"film{i}.scale_b"]
            beta = self.p[f"film{i}.shift_w"] @ h + self.p[f"film{i}.shift_b"]
            m = u * (1.0 + gamma)[:, None, None, None] + beta[:, None, None, None]
            layers.append((a.shape, cols, u, gamma, m))
            a = activation(m)
        last = len(self.hidden)
        out, cols = conv3d_forward(a, self.p[f"conv{last}.w"], self.p[f"conv{last}.b"])
        layers.append((a.shape, cols))
        if cache:
            self._cache = (idx, phi, h, layers)
        return out[0]

    def backward(self, loss_grad):
        """Accumulate d(loss)/d(params) into ``grads`` given d(loss)/d(output)."""
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        idx, phi, h, layers = self._cache
        g, p = self.g, self.p
        last = len(self.hidden)
        in_shape, cols = layers[last]
        dout = as_array(loss_grad)[None]
        dw, db, da = conv3d_backward(dout, cols, p[f"conv{last}.w"], in_shape)
        g[f"conv{last}.w"] += dw
        g[f"conv{last}.b"] += db
        dh = np.zeros_like(h)
        for i in reversed(range(last)):
            in_shape, cols, u, gamma, m = layers[i]
            dm = da * activation_grad(m)
            dgamma = np.einsum("cxyz,cxyz->c", dm, u)
            dbeta = dm.sum(axis=(1, 2, 3))
            g[f"film{i}.scale_w"] += np.outer(dgamma, h)
            g[f"film{i}.scale_b"] += dgamma
            g[f"film{i}.shift_w"] += np.outer(dbeta, h)
            g[f"film{i}.shift_b"] += dbeta
            dh += p[f"film{i}.scale_w"].T @ dgamma + p[f"film{i}.shift_w"].T @ dbeta
            du = dm * (1.0 + gamma)[:, None, None, None]
            dw, db, da = conv3d_backward(du, cols, p[f"conv{i}.w"], in_shape, need_dx=i > 0)
            g[f"conv{i}.w"] += dw
            g[f"conv{i}.b"] += db
        g["embed"][idx] += dh
        g["time_w"] += np.outer(dh, phi)
        g["time_b"] += dh

    def config(self) -> dict:
        return {"hidden": list(self.hidden), "embed_dim": self.embed_dim}
