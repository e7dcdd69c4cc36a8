"""Pixelwise cross entropy for the segmentation head."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, as_tensor, record
from ..errors import DegenerateBatchError, ShapeError

IGNORE_INDEX = 255


def cross_entropy_seg(logits, labels: np.ndarray, ignore_index: int = IGNORE_INDEX) -> Tensor:
    """Mean negative log-softmax of the true class over non-ignored pixels.

    ``logits`` is (N, C, H, W); ``labels`` (N, H, W) integer class ids in
    [0, C) or ``ignore_index``. Ignored pixels contribute neither loss nor
    gradient.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 4 or labels.shape != (logits.shape[0],) + logits.shape[2:]:
        raise ShapeError(f"cross_entropy_seg: logits {logits.shape} vs labels {labels.shape}")
    n, c = logits.shape[0], logits.shape[1]
    kept = labels != ignore_index
    if not kept.any():
        raise DegenerateBatchError("all pixels carry the ignore label")
    if labels[kept].min() < 0 or labels[kept].max() >= c:
        raise ValueError(f"labels must lie in [0, {c}) or equal {ignore_index}")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_den = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_den  # (N, C, H, W)
    safe_labels = np.where(kept, labels, 0)
    true_logp = np.take_along_axis(log_probs, safe_labels[:, None], axis=1)[:, 0]
    n_kept = int(kept.sum())
    out = Tensor(-(true_logp * kept).sum() / n_kept)

    def backward(g):
        soft = np.exp(log_probs)
        onehot = np.zeros_like(soft)
        np.put_along_axis(onehot, safe_labels[:, None], 1.0, axis=1)
        dlogits = (soft - onehot) * kept[:, None] * (float(g) / n_kept)
        return (dlogits,)

    return record(out, (logits,), backward)
