"""Quadratic B-spline particle/grid transfer weights.

Each particle couples to a 3x3x3 node stencil. For a particle at x the
stencil base is floor(x/dx - 0.5) and the per-axis weights are evaluated
at fx = x/dx - base, fx in [0.5, 1.5]. Weights are a partition of unity
and reproduce linear functions, which is what the APIC affine gather
relies on.
"""

from __future__ import annotations

import numpy as np

SUPPORT = 3  # nodes per axis


def stencil(x: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Stencil base indices and per-axis weights for positions x.

    x: (..., 3) positions. Returns (base (..., 3) int64, w (..., 3, 3))
    where w[..., o, axis] is the weight of stencil offset o on that axis.
    """
    x = np.asarray(x, dtype=np.float64)
    xp = x / dx
    base = np.floor(xp - 0.5).astype(np.int64)
    fx = xp - base
    w = np.empty(x.shape[:-1] + (3, 3))
    w[..., 0, :] = 0.5 * (1.5 - fx) ** 2
    w[..., 1, :] = 0.75 - (fx - 1.0) ** 2
    w[..., 2, :] = 0.5 * (fx - 0.5) ** 2
    return base, w


def node_weights(x: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Full 27-node stencil for positions x.

    Returns (nodes (..., 27, 3) int64, weights (..., 27)).
    """
    base, w = stencil(x, dx)
    offsets = np.array([(i, j, k) for i in range(3) for j in range(3) for k in range(3)],
                       dtype=np.int64)
    nodes = base[..., None, :] + offsets
    weights = (w[..., :, 0][..., offsets[:, 0]]
               * w[..., :, 1][..., offsets[:, 1]]
               * w[..., :, 2][..., offsets[:, 2]])
    return nodes, weights


class TransferKernel:
    """Quadratic B-spline kernel bound to a grid spacing."""

    kind = "quadratic-bspline"
    support = SUPPORT

    def __init__(self, dx: float):
        if not dx > 0:
            raise ValueError(f"dx must be > 0, got {dx}")
        self.dx = float(dx)

    def weights(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return node_weights(x, self.dx)

    def weight_sum(self, x: np.ndarray) -> np.ndarray:
        return self.weights(x)[1].sum(axis=-1)
