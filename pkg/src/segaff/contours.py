"""Intervening-contour affinities from a precomputed boundary probability map.

For each pixel pair within a window, a straight line is rasterized between
them and the maximum boundary probability along the line is recorded; a high
value means a contour separates the pair.  The resulting columns plug into
the same exponential-mask and filtering machinery as embedding distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ColumnMatrix, WindowSpec, iter_window_slices

__all__ = ["BoundaryMap", "bresenham", "im2interv", "interv_mask"]


@dataclass(frozen=True)
class BoundaryMap:
    """(height, width) per-pixel boundary probabilities in [0, 1]."""

    prob: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.prob, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"boundary map must have shape (height, width), got {arr.shape}")
        if arr.size == 0:
            raise ValueError("boundary map must be non-empty")
        if not np.isfinite(arr).all():
            raise ValueError("boundary map contains NaN or Inf")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("boundary probabilities must lie in [0, 1]")
        object.__setattr__(self, "prob", arr)

    @property
    def height(self) -> int:
        return self.prob.shape[0]

    @property
    def width(self) -> int:
        return self.prob.shape[1]


def bresenham(p0: tuple[int, int], p1: tuple[int, int]) -> list[tuple[int, int]]:
    """Integer line rasterization from p0 to p1, both endpoints included.

    Classic error-accumulation form over (row, col) points; the path stays
    inside the bounding box of the endpoints and is monotone along both axes.
    """
    r0, c0 = p0
    r1, c1 = p1
    dr = abs(r1 - r0)
    dc = abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dc - dr
    points = []
    r, c = r0, c0
    while True:
        points.append((r, c))
        if r == r1 and c == c1:
            break
        e2 = 2 * err
        if e2 >= -dr:
            err -= dr
            c += sc
        if e2 <= dc:
            err += dc
            r += sr
    return points


def im2interv(b: BoundaryMap, w: WindowSpec) -> ColumnMatrix:
    """Max boundary probability along the line from each neighbor to its center.

    Lines are always traced neighbor -> center (Bresenham is not symmetric
    under direction reversal, so one direction is fixed for determinism) and
    include both endpoints; the center entry is the center's own probability.

    Because the line shape only depends on the offset, each (offset, line
    point) pair is one shifted slice of the map, and the column reduces to an
    elementwise running maximum over those slices.
    """
    h, wd = b.height, b.width
    oh, ow = w.out_shape(h, wd)
    values = np.zeros((oh, ow, w.k, 1), dtype=np.float64)
    valid = np.zeros((oh, ow, w.k), dtype=bool)
    s = w.stride
    for q, (dy, dx), out_sl, _, ctr_sl in iter_window_slices(h, wd, w):
        acc = None
        for py, px in bresenham((dy, dx), (0, 0)):
            # Line points lie between neighbor and center, so the shifted
            # slice is in bounds wherever the neighbor is.
            sl = (
                slice(ctr_sl[0].start + py, ctr_sl[0].stop + py, s),
                slice(ctr_sl[1].start + px, ctr_sl[1].stop + px, s),
            )
            chunk = b.prob[sl]
            if acc is None:
                acc = chunk.copy()
            else:
                np.maximum(acc, chunk, out=acc)
        values[out_sl[0], out_sl[1], q, 0] = acc
        valid[out_sl[0], out_sl[1], q] = True
    return ColumnMatrix(values, valid, w)


def interv_mask(cols: ColumnMatrix, hardness: float) -> ColumnMatrix:
    """Affinity mask exp(-hardness * p) from intervening-contour columns.

    A clean line (p = 0) gives weight 1; a certain contour (p = 1) gives
    exp(-hardness).  The output feeds masked_filter directly.
    """
    if cols.depth != 1:
        raise ValueError(f"contour columns must have depth 1, got {cols.depth}")
    p = cols.values[..., 0]
    if np.any((p[cols.valid] < 0.0) | (p[cols.valid] > 1.0)):
        raise ValueError("contour values must lie in [0, 1]")
    m = np.where(cols.valid, np.exp(-hardness * p), 0.0)
    return ColumnMatrix(m[..., None], cols.valid.copy(), cols.window)
