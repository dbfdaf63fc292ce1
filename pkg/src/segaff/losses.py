"""Label parity columns and the pairwise hinge embedding loss.

Each pixel is compared with its window neighbors: same-label pairs pay for
embedding distance beyond the near threshold, different-label pairs pay for
distance short of the far threshold.  Pairs touching the ignore label and the
trivial center self-pair are left out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import DistanceNorm, im2dist, im2dist_backward
from .grid import ColumnMatrix, FeatureMap, LabelMap, WindowSpec, iter_window_slices

__all__ = [
    "LossParams",
    "EmbeddingLossResult",
    "im2parity",
    "pair_loss",
    "pair_loss_backward",
    "embedding_loss",
]


@dataclass(frozen=True)
class LossParams:
    """Near/far hinge thresholds: same-label pairs should sit below alpha,
    different-label pairs above beta."""

    alpha: float = 0.5
    beta: float = 2.0

    def __post_init__(self):
        if not 0 <= self.alpha < self.beta:
            raise ValueError(
                f"need 0 <= alpha < beta, got alpha={self.alpha}, beta={self.beta}"
            )


def im2parity(l: LabelMap, w: WindowSpec) -> ColumnMatrix:
    """Binary columns: 1 where the neighbor label equals the center label.

    Entries are invalid (and zero) when the neighbor is out of bounds or when
    either pixel carries the ignore id; an ignored center invalidates its
    whole column.
    """
    h, wd = l.height, l.width
    oh, ow = w.out_shape(h, wd)
    values = np.zeros((oh, ow, w.k, 1), dtype=np.float64)
    valid = np.zeros((oh, ow, w.k), dtype=bool)
    for q, _, out_sl, nbr_sl, ctr_sl in iter_window_slices(h, wd, w):
        ctr = l.labels[ctr_sl]
        nbr = l.labels[nbr_sl]
        ok = (ctr != l.ignore_id) & (nbr != l.ignore_id)
        valid[out_sl[0], out_sl[1], q] = ok
        values[out_sl[0], out_sl[1], q, 0] = np.where(ok & (ctr == nbr), 1.0, 0.0)
    return ColumnMatrix(values, valid, w)


def _pair_masks(d: ColumnMatrix, parity: ColumnMatrix):
    """Shared validity and same/different-label masks, center column excluded."""
    if d.window != parity.window:
        raise ValueError(f"distance window {d.window} does not match parity window {parity.window}")
    if d.values.shape != parity.values.shape:
        raise ValueError(
            f"distance shape {d.values.shape} does not match parity shape {parity.values.shape}"
        )
    counted = d.valid & parity.valid
    ci = d.window.center_index
    if ci is not None:
        counted = counted.copy()
        counted[..., ci] = False
    same = parity.values[..., 0] > 0.5
    return counted, same


def pair_loss(
    d: ColumnMatrix, parity: ColumnMatrix, p: LossParams
) -> tuple[float, ColumnMatrix]:
    """Hinge loss per pair plus the total over all counted pairs.

    per_pair = max(d - alpha, 0) on same-label pairs, max(beta - d, 0) on
    different-label pairs; invalid pairs and the center self-pair contribute
    nothing.  The total is the raw (unnormalized) double sum.
    """
    counted, same = _pair_masks(d, parity)
    dist = d.values[..., 0]
    hinge = np.where(same, dist - p.alpha, p.beta - dist)
    per = np.where(counted, np.maximum(hinge, 0.0), 0.0)
    total = float(per.sum(dtype=np.float64))
    per_pair = ColumnMatrix(per[..., None], counted, d.window)
    return total, per_pair


def pair_loss_backward(d: ColumnMatrix, parity: ColumnMatrix, p: LossParams) -> ColumnMatrix:
    """d(total)/d(distance): +1 on active same-label hinges (d > alpha),
    -1 on active different-label hinges (d < beta), 0 elsewhere.

    Pairs sitting exactly on a threshold take the inactive side (gradient 0).
    """
    counted, same = _pair_masks(d, parity)
    dist = d.values[..., 0]
    grad = np.zeros_like(dist, dtype=np.float64)
    grad[counted & same & (dist > p.alpha)] = 1.0
    grad[counted & ~same & (dist < p.beta)] = -1.0
    return ColumnMatrix(grad[..., None], counted, d.window)


@dataclass(frozen=True)
class EmbeddingLossResult:
    """Pairwise loss over one embedding map.

    ``total`` is normalized by the counted-pair count so its scale does not
    depend on window size or stride; ``unnormalized`` is the raw double sum.
    ``grad`` is the gradient of the normalized total w.r.t. the embeddings.
    """

    total: float
    unnormalized: float
    pair_count: int
    grad: FeatureMap


def embedding_loss(
    e: FeatureMap,
    l: LabelMap,
    w: WindowSpec,
    norm: DistanceNorm = DistanceNorm.L1,
    p: LossParams = LossParams(),
) -> EmbeddingLossResult:
    """Fused distance -> hinge -> gradient chain over one map and its labels."""
    if (e.height, e.width) != (l.height, l.width):
        raise ValueError(
            f"embedding grid {e.height}x{e.width} does not match labels {l.height}x{l.width}"
        )
    d = im2dist(e, w, norm)
    parity = im2parity(l, w)
    unnormalized, per_pair = pair_loss(d, parity, p)
    count = int(per_pair.valid.sum())
    grad_d = pair_loss_backward(d, parity, p)
    if count == 0:
        zero = FeatureMap(np.zeros_like(e.data))
        return EmbeddingLossResult(0.0, 0.0, 0, zero)
    scaled = ColumnMatrix(grad_d.values / count, grad_d.valid, grad_d.window)
    grad_e = im2dist_backward(e, w, norm, scaled)
    return EmbeddingLossResult(unnormalized / count, unnormalized, count, grad_e)
