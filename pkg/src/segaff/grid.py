"""Dense grid containers, window geometry, and column lowering.

Everything in this package is expressed over two array shapes: a feature map
of shape (height, width, channels) and a "column matrix" of shape
(out_height, out_width, K, depth) obtained by lowering each pixel's square
neighborhood into a fixed-length column.  The K axis enumerates window
offsets in row-major order; that ordering is the single canonical one shared
by every module, so column matrices produced by different operations can be
combined entry-for-entry.

Out-of-bounds neighbors are never padded: they are stored as zeros and
flagged invalid, and every downstream sum skips them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WindowSpec",
    "FeatureMap",
    "LabelMap",
    "ColumnMatrix",
    "window_offsets",
    "valid_mask",
    "im2col",
    "col2im_scatter",
    "iter_window_slices",
]

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def _as_float(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    return arr


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class WindowSpec:
    """Square neighborhood geometry: odd side length, center stride, center flag.

    Window centers sit at stride multiples of the source grid; K counts the
    offsets in the window (side*side, minus one when the center is excluded).
    """

    side: int
    stride: int = 1
    include_center: bool = True

    def __post_init__(self):
        if self.side < 1 or self.side % 2 == 0:
            raise ValueError(f"window side must be odd and >= 1, got {self.side}")
        if self.stride < 1:
            raise ValueError(f"window stride must be >= 1, got {self.stride}")

    @property
    def radius(self) -> int:
        return (self.side - 1) // 2

    @property
    def k(self) -> int:
        return self.side * self.side - (0 if self.include_center else 1)

    @property
    def center_index(self) -> int | None:
        """Position of offset (0, 0) in the canonical K ordering, if present."""
        return (self.side * self.side - 1) // 2 if self.include_center else None

    def out_shape(self, height: int, width: int) -> tuple[int, int]:
        """Output grid size: one entry per window center, ceil(size / stride)."""
        return _ceil_div(height, self.stride), _ceil_div(width, self.stride)


@dataclass(frozen=True)
class FeatureMap:
    """Dense (height, width, channels) grid of finite real values.

    Images, embeddings, score maps, and single-channel maps all use this one
    container.  Data is coerced to float32/float64 and checked finite once,
    at construction.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float(self.data)
        if arr.ndim != 3:
            raise ValueError(
                f"feature map must have shape (height, width, channels), got {arr.shape}"
            )
        if arr.size == 0:
            raise ValueError("feature map must be non-empty")
        if not np.isfinite(arr).all():
            raise ValueError("feature map contains NaN or Inf")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LabelMap:
    """(height, width) integer class ids with a designated ignore id."""

    labels: np.ndarray
    ignore_id: int = 255

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"labels must be integers, got dtype {arr.dtype}")
        if arr.ndim != 2:
            raise ValueError(f"label map must have shape (height, width), got {arr.shape}")
        if arr.size == 0:
            raise ValueError("label map must be non-empty")
        if arr.min() < 0:
            raise ValueError("class ids must be non-negative")
        object.__setattr__(self, "labels", arr.astype(np.int64, copy=False))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class ColumnMatrix:
    """Lowered (out_height, out_width, K, depth) neighborhood matrix.

    values[i, j, q] holds whatever the producing operation recorded for the
    q-th window offset around the center at (i*stride, j*stride), and
    valid[i, j, q] is False exactly when that neighbor is unusable (out of
    bounds, or touching the ignore label for parity columns).  By convention
    every producer stores 0 at invalid entries, so plain sums over the K axis
    never pick up out-of-bounds contributions.
    """

    values: np.ndarray
    valid: np.ndarray
    window: WindowSpec

    def __post_init__(self):
        vals = _as_float(self.values)
        valid = np.asarray(self.valid)
        if valid.dtype != np.bool_:
            valid = valid.astype(bool)
        if vals.ndim != 4:
            raise ValueError(
                f"column matrix must have shape (out_h, out_w, K, depth), got {vals.shape}"
            )
        if valid.shape != vals.shape[:3]:
            raise ValueError(
                f"valid flags shape {valid.shape} does not match values shape {vals.shape[:3]}"
            )
        if vals.shape[2] != self.window.k:
            raise ValueError(
                f"K dimension {vals.shape[2]} does not match window K {self.window.k}"
            )
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "valid", valid)

    @property
    def out_height(self) -> int:
        return self.values.shape[0]

    @property
    def out_width(self) -> int:
        return self.values.shape[1]

    @property
    def k(self) -> int:
        return self.values.shape[2]

    @property
    def depth(self) -> int:
        return self.values.shape[3]


def window_offsets(w: WindowSpec) -> list[tuple[int, int]]:
    """Canonical K ordering: (row, col) offsets in row-major order around (0, 0).

    The center offset is omitted when the window excludes it.  Every column
    matrix in this package indexes its K axis by this list.
    """
    r = w.radius
    offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
    if not w.include_center:
        offsets.remove((0, 0))
    return offsets


def iter_window_slices(height: int, width: int, w: WindowSpec):
    """Yield (q, offset, out_slices, neighbor_slices, center_slices) per offset.

    For offset q this describes, in slice form, exactly the window centers
    whose q-th neighbor lies inside the (height, width) grid:

    - out_slices indexes the strided (out_height, out_width) output grid,
    - neighbor_slices and center_slices index the full-resolution source with
      step == stride, selecting the neighbor and center pixels of those same
      windows.

    Offsets whose in-bounds region is empty are skipped, which makes the
    validity pattern a pure function of (height, width, w).
    """
    s = w.stride
    max_i = (height - 1) // s
    max_j = (width - 1) // s
    for q, (dy, dx) in enumerate(window_offsets(w)):
        i0 = max(0, _ceil_div(-dy, s))
        i1 = min(max_i, (height - 1 - dy) // s)
        j0 = max(0, _ceil_div(-dx, s))
        j1 = min(max_j, (width - 1 - dx) // s)
        if i1 < i0 or j1 < j0:
            continue
        out_sl = (slice(i0, i1 + 1), slice(j0, j1 + 1))
        nbr_sl = (
            slice(i0 * s + dy, i1 * s + dy + 1, s),
            slice(j0 * s + dx, j1 * s + dx + 1, s),
        )
        ctr_sl = (slice(i0 * s, i1 * s + 1, s), slice(j0 * s, j1 * s + 1, s))
        yield q, (dy, dx), out_sl, nbr_sl, ctr_sl


def valid_mask(height: int, width: int, w: WindowSpec) -> np.ndarray:
    """(out_h, out_w, K) bool mask: True where the neighbor is in bounds."""
    oh, ow = w.out_shape(height, width)
    mask = np.zeros((oh, ow, w.k), dtype=bool)
    for q, _, out_sl, _, _ in iter_window_slices(height, width, w):
        mask[out_sl[0], out_sl[1], q] = True
    return mask


def im2col(x: FeatureMap, w: WindowSpec) -> ColumnMatrix:
    """Lower every (strided) pixel's neighborhood into a column matrix.

    Entry (i, j, q, :) is the full channel vector of the q-th neighbor of the
    window centered at (i*stride, j*stride); out-of-bounds neighbors are
    zero-valued and flagged invalid.
    """
    h, wd = x.height, x.width
    oh, ow = w.out_shape(h, wd)
    values = np.zeros((oh, ow, w.k, x.channels), dtype=x.data.dtype)
    valid = np.zeros((oh, ow, w.k), dtype=bool)
    for q, _, out_sl, nbr_sl, _ in iter_window_slices(h, wd, w):
        values[out_sl[0], out_sl[1], q, :] = x.data[nbr_sl]
        valid[out_sl[0], out_sl[1], q] = True
    return ColumnMatrix(values, valid, w)


def col2im_scatter(
    cols: ColumnMatrix, w: WindowSpec, target_shape: tuple[int, int]
) -> FeatureMap:
    """Adjoint of im2col: add each column entry back onto the pixel it read.

    For a fixed offset the source pixels of distinct windows are distinct, so
    the scatter is a plain strided add; invalid entries are never touched and
    contribute nothing.
    """
    h, wd = target_shape
    if cols.window != w:
        raise ValueError(f"column window {cols.window} does not match {w}")
    if (cols.out_height, cols.out_width) != w.out_shape(h, wd):
        raise ValueError(
            f"columns {cols.out_height}x{cols.out_width} inconsistent with "
            f"target {h}x{wd} at stride {w.stride}"
        )
    out = np.zeros((h, wd, cols.depth), dtype=np.float64)
    for q, _, out_sl, nbr_sl, _ in iter_window_slices(h, wd, w):
        out[nbr_sl] += cols.values[out_sl[0], out_sl[1], q, :]
    return FeatureMap(out.astype(cols.values.dtype, copy=False))
