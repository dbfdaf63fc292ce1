"""Dense local embedding distances and exponential affinity masks.

A distance column matrix holds, for each pixel, the distances between its
embedding vector and each neighbor's embedding inside the window.  Passing
distances through exp(-hardness * d) turns them into filter weights in
(0, 1]: near-identical embeddings get weight ~1, dissimilar ones ~0.  Both
stages have exact backward passes so embeddings and hardness are trainable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grid import ColumnMatrix, FeatureMap, WindowSpec, iter_window_slices

__all__ = [
    "DistanceNorm",
    "MaskParams",
    "im2dist",
    "im2dist_backward",
    "mask_from_dist",
    "mask_backward",
]


class DistanceNorm(Enum):
    """Vector norm used over embedding channels: L1 (default) or L2."""

    L1 = "l1"
    L2 = "l2"

    @classmethod
    def from_name(cls, name: str) -> "DistanceNorm":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown distance norm {name!r}, expected 'l1' or 'l2'") from None


@dataclass(frozen=True)
class MaskParams:
    """Exponential mask hardness; larger values give sharper masks."""

    hardness: float = 30.0

    def __post_init__(self):
        if not self.hardness > 0:
            raise ValueError(f"mask hardness must be > 0, got {self.hardness}")


def im2dist(e: FeatureMap, w: WindowSpec, norm: DistanceNorm = DistanceNorm.L1) -> ColumnMatrix:
    """Per-pixel distances between the center embedding and each neighbor.

    Entry (i, j, q) is the channel-norm of e[center] - e[neighbor q]; the
    center offset (when included) is exactly 0 and out-of-bounds neighbors
    are invalid.  Channel reductions accumulate in double precision.
    """
    h, wd = e.height, e.width
    oh, ow = w.out_shape(h, wd)
    values = np.zeros((oh, ow, w.k, 1), dtype=e.data.dtype)
    valid = np.zeros((oh, ow, w.k), dtype=bool)
    for q, _, out_sl, nbr_sl, ctr_sl in iter_window_slices(h, wd, w):
        diff = e.data[ctr_sl] - e.data[nbr_sl]
        if norm is DistanceNorm.L1:
            dist = np.abs(diff, out=diff).sum(axis=-1, dtype=np.float64)
        else:
            dist = np.sqrt(np.square(diff, out=diff).sum(axis=-1, dtype=np.float64))
        values[out_sl[0], out_sl[1], q, 0] = dist
        valid[out_sl[0], out_sl[1], q] = True
    return ColumnMatrix(values, valid, w)


def im2dist_backward(
    e: FeatureMap,
    w: WindowSpec,
    norm: DistanceNorm,
    grad_out: ColumnMatrix,
) -> FeatureMap:
    """Gradient of im2dist with respect to the embedding map.

    Each pair contributes to both endpoints with opposite signs.  The L1
    subgradient at zero difference is 0, and the L2 gradient at zero distance
    is defined as 0, so identical embeddings receive no pull.
    """
    h, wd = e.height, e.width
    _check_columns(grad_out, w, e, depth=1)
    grad = np.zeros((h, wd, e.channels), dtype=np.float64)
    for q, _, out_sl, nbr_sl, ctr_sl in iter_window_slices(h, wd, w):
        g = grad_out.values[out_sl[0], out_sl[1], q, 0]
        diff = e.data[ctr_sl] - e.data[nbr_sl]
        if norm is DistanceNorm.L1:
            direction = np.sign(diff)
        else:
            dist = np.sqrt(np.square(diff).sum(axis=-1, dtype=np.float64))
            direction = np.zeros_like(diff, dtype=np.float64)
            np.divide(diff, dist[..., None], out=direction, where=dist[..., None] > 0)
        contrib = g[..., None] * direction
        grad[ctr_sl] += contrib
        grad[nbr_sl] -= contrib
    return FeatureMap(grad.astype(e.data.dtype, copy=False))


def mask_from_dist(d: ColumnMatrix, p: MaskParams) -> ColumnMatrix:
    """Affinity mask exp(-hardness * d) on valid entries, 0 elsewhere.

    Distances are clamped below at 0 first (L2 rounding can leave a tiny
    negative), so every valid weight lies in (0, 1] and the center entry is
    exactly 1.
    """
    if d.depth != 1:
        raise ValueError(f"distance columns must have depth 1, got {d.depth}")
    dist = np.maximum(d.values[..., 0], 0.0)
    m = np.exp(-p.hardness * dist)
    values = np.where(d.valid, m, 0.0)[..., None].astype(d.values.dtype, copy=False)
    return ColumnMatrix(values, d.valid.copy(), d.window)


def mask_backward(
    d: ColumnMatrix, p: MaskParams, grad_out: ColumnMatrix
) -> tuple[ColumnMatrix, float]:
    """Gradients of mask_from_dist w.r.t. the distances and the hardness.

    dm/dd = -hardness * m and dm/dhardness = -d * m per valid entry; the
    hardness gradient is the sum over valid entries, accumulated in double
    precision in a single fixed pass (K fastest, then pixels).
    """
    if grad_out.values.shape != d.values.shape:
        raise ValueError(
            f"upstream gradient shape {grad_out.values.shape} does not match "
            f"distance shape {d.values.shape}"
        )
    dist = np.maximum(d.values[..., 0], 0.0)
    m = np.exp(-p.hardness * dist)
    g = grad_out.values[..., 0]
    grad_d = np.where(d.valid, -p.hardness * m * g, 0.0)
    grad_hardness = float(np.sum(-dist * m * g, where=d.valid, dtype=np.float64))
    grad_cols = ColumnMatrix(
        grad_d[..., None].astype(d.values.dtype, copy=False), d.valid.copy(), d.window
    )
    return grad_cols, grad_hardness


def _check_columns(cols: ColumnMatrix, w: WindowSpec, x: FeatureMap, depth: int | None = None):
    if cols.window != w:
        raise ValueError(f"column window {cols.window} does not match {w}")
    if (cols.out_height, cols.out_width) != w.out_shape(x.height, x.width):
        raise ValueError(
            f"columns {cols.out_height}x{cols.out_width} inconsistent with map "
            f"{x.height}x{x.width} at stride {w.stride}"
        )
    if depth is not None and cols.depth != depth:
        raise ValueError(f"expected column depth {depth}, got {cols.depth}")
