"""3x3x3 'same' convolution with explicit backward pass, plus the tanh activation."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL = 3


def im2col(x: np.ndarray) -> np.ndarray:
    """(C, nx, ny, nz) -> (C*27, nx*ny*nz) patch matrix, zero padded by one voxel."""
    c = x.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (KERNEL,) * 3, axis=(1, 2, 3))
    return win.transpose(0, 4, 5, 6, 1, 2, 3).reshape(c * KERNEL**3, -1)


def conv3d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Cross-correlation of ``x`` (Cin, nx, ny, nz) with ``w`` (Cout, Cin, 3, 3, 3).

    Returns the output and the patch matrix needed by ``conv3d_backward``.
    """
    cols = im2col(x)
    cout = w.shape[0]
    out = w.reshape(cout, -1) @ cols + b[:, None]
    return out.reshape((cout,) + x.shape[1:]), cols


def conv3d_backward(dout: np.ndarray, cols: np.ndarray, w: np.ndarray, in_shape, need_dx=True):
    """Gradients of the convolution w.r.t. weights, bias and (optionally) input."""
    cout = w.shape[0]
    d2 = dout.reshape(cout, -1)
    dw = (d2 @ cols.T).reshape(w.shape)
    db = d2.sum(axis=1)
    if not need_dx:
        return dw, db, None
    cin, nx, ny, nz = in_shape
    dcols = (w.reshape(cout, -1).T @ d2).reshape(cin, KERNEL, KERNEL, KERNEL, nx, ny, nz)
    dxp = np.zeros((cin, nx + 2, ny + 2, nz + 2))
    for i in range(KERNEL):
        for j in range(KERNEL):
            for k in range(KERNEL):
                dxp[:, i : i + nx, j : j + ny, k : k + nz] += dcols[:, i, j, k]
    return dw, db, dxp[:, 1:-1, 1:-1, 1:-1]


def activation(x):
    return np.tanh(x)


def activation_grad(x):
    return 1.0 - np.tanh(x) ** 2
