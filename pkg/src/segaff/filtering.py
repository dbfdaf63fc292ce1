"""Masked convolutional filtering: affinity-weighted local averaging.

Filtering replaces each pixel with a weighted sum of its window neighbors,
the weights coming from an affinity column matrix.  With normalization the
output is a convex combination of the neighborhood, which preserves constant
maps exactly and keeps every channel inside the local value range; repeating
the application compounds the smoothing without recomputing the mask.
"""

from __future__ import annotations

import numpy as np

from .affinity import DistanceNorm, MaskParams, im2dist, mask_from_dist
from .grid import ColumnMatrix, FeatureMap, WindowSpec, iter_window_slices

__all__ = [
    "masked_filter",
    "masked_filter_backward",
    "repeat_filter",
    "bilateral_reference",
]

DENOM_EPS = 1e-12


def _check_filter_args(x: FeatureMap, m: ColumnMatrix, w: WindowSpec):
    if w.stride != 1:
        raise ValueError("masked filtering requires stride 1")
    if m.depth != 1:
        raise ValueError(f"mask must have depth 1, got {m.depth}")
    if m.window != w:
        raise ValueError(f"mask window {m.window} does not match {w}")
    if (m.out_height, m.out_width) != (x.height, x.width):
        raise ValueError(
            f"mask grid {m.out_height}x{m.out_width} does not match map "
            f"{x.height}x{x.width}"
        )


def _filter_sums(x: FeatureMap, m: ColumnMatrix, w: WindowSpec, shifted: bool):
    """Accumulate weighted neighbor sums and the weight total per pixel.

    With ``shifted`` the numerator accumulates m * (x_neighbor - x_center)
    instead of m * x_neighbor; adding x_center back after the division gives
    the same normalized result but makes constant maps reproduce exactly
    (every term of the numerator is exactly zero).
    """
    num = np.zeros(x.data.shape, dtype=np.float64)
    den = np.zeros((x.height, x.width), dtype=np.float64)
    for q, _, out_sl, nbr_sl, _ in iter_window_slices(x.height, x.width, w):
        mq = m.values[out_sl[0], out_sl[1], q, 0]
        den[out_sl] += mq
        nbr = x.data[nbr_sl]
        if shifted:
            num[out_sl[0], out_sl[1], :] += mq[:, :, None] * (nbr - x.data[out_sl])
        else:
            num[out_sl[0], out_sl[1], :] += mq[:, :, None] * nbr
    return num, den


def masked_filter(
    x: FeatureMap, m: ColumnMatrix, w: WindowSpec, normalize: bool = True
) -> FeatureMap:
    """Weighted local average of x under the mask, one weight per neighbor.

    The same scalar weight applies to every channel.  Invalid mask entries
    are zero by construction and contribute nothing.  With ``normalize`` the
    weighted sum is divided by the weight total, which must exceed 1e-12
    everywhere (with a center-inclusive affinity mask it is always >= 1).
    """
    _check_filter_args(x, m, w)
    num, den = _filter_sums(x, m, w, shifted=normalize)
    if not normalize:
        return FeatureMap(num.astype(x.data.dtype, copy=False))
    if np.any(den <= DENOM_EPS):
        raise ValueError("mask weight total underflows at some pixel; cannot normalize")
    y = x.data + num / den[:, :, None]
    return FeatureMap(y.astype(x.data.dtype, copy=False))


def masked_filter_backward(
    x: FeatureMap,
    m: ColumnMatrix,
    w: WindowSpec,
    normalize: bool,
    grad_y: FeatureMap,
) -> tuple[FeatureMap, ColumnMatrix]:
    """Exact gradients of masked_filter w.r.t. the input map and the mask.

    Unnormalized: dy_i/dx_j = m(i,q) and dy_i/dm(i,q) = x_j (product rule).
    Normalized, with D_i the weight total: dy_i/dx_j = m(i,q)/D_i and
    dy_i/dm(i,q) = (x_j - y_i)/D_i (quotient rule).
    """
    _check_filter_args(x, m, w)
    if (grad_y.height, grad_y.width, grad_y.channels) != x.data.shape:
        raise ValueError(
            f"upstream gradient shape {grad_y.data.shape} does not match map {x.data.shape}"
        )
    h, wd = x.height, x.width
    grad_x = np.zeros(x.data.shape, dtype=np.float64)
    grad_m = np.zeros(m.values.shape[:3], dtype=np.float64)

    if normalize:
        num, den = _filter_sums(x, m, w, shifted=True)
        if np.any(den <= DENOM_EPS):
            raise ValueError("mask weight total underflows at some pixel; cannot normalize")
        y = x.data + num / den[:, :, None]
        g_over_d = grad_y.data / den[:, :, None]
        for q, _, out_sl, nbr_sl, _ in iter_window_slices(h, wd, w):
            mq = m.values[out_sl[0], out_sl[1], q, 0]
            gn = g_over_d[out_sl]
            grad_x[nbr_sl] += mq[:, :, None] * gn
            grad_m[out_sl[0], out_sl[1], q] = np.sum(
                gn * (x.data[nbr_sl] - y[out_sl]), axis=-1, dtype=np.float64
            )
    else:
        for q, _, out_sl, nbr_sl, _ in iter_window_slices(h, wd, w):
            mq = m.values[out_sl[0], out_sl[1], q, 0]
            g = grad_y.data[out_sl]
            grad_x[nbr_sl] += mq[:, :, None] * g
            grad_m[out_sl[0], out_sl[1], q] = np.sum(
                g * x.data[nbr_sl], axis=-1, dtype=np.float64
            )

    grad_m[~m.valid] = 0.0
    grad_cols = ColumnMatrix(
        grad_m[..., None].astype(m.values.dtype, copy=False), m.valid.copy(), w
    )
    return FeatureMap(grad_x.astype(x.data.dtype, copy=False)), grad_cols


def repeat_filter(
    x: FeatureMap,
    e: FeatureMap,
    w: WindowSpec,
    p: MaskParams,
    norm: DistanceNorm = DistanceNorm.L1,
    times: int = 1,
) -> FeatureMap:
    """Apply the embedding-derived mask to x repeatedly, normalizing each pass.

    The mask is computed once from the embeddings and reused: filtering the
    score map does not change the embedding map, so there is nothing to
    recompute between applications.
    """
    if times < 1:
        raise ValueError(f"repeat count must be >= 1, got {times}")
    if (e.height, e.width) != (x.height, x.width):
        raise ValueError(
            f"embedding grid {e.height}x{e.width} does not match map {x.height}x{x.width}"
        )
    mask = mask_from_dist(im2dist(e, w, norm), p)
    y = x
    for _ in range(times):
        y = masked_filter(y, mask, w, normalize=True)
    return y


def bilateral_reference(
    x: FeatureMap,
    hardness: float,
    w: WindowSpec,
    norm: DistanceNorm = DistanceNorm.L1,
) -> FeatureMap:
    """Range-only bilateral filter: the mask comes from distances on x itself.

    Exposed as the equivalence witness between affinity masking and classic
    edge-preserving smoothing; there is no spatial falloff term beyond the
    hard window.
    """
    mask = mask_from_dist(im2dist(x, w, norm), MaskParams(hardness=hardness))
    return masked_filter(x, mask, w, normalize=True)
