"""Softmax cross-entropy with trainable class weights.

The weight vector is w = C * softmax(theta), so the weights stay positive
with a fixed total mass of C and theta = 0 reduces exactly to unweighted
cross-entropy. Pixels labelled 255 are ignored.
"""

from __future__ import annotations

import numpy as np

from .layers import softmax
from .params import Param

IGNORE = 255


class WeightedCrossEntropy:
    def __init__(self, n_classes: int = 2, dtype=np.float32):
        self.n_classes = n_classes
        self.theta = Param(np.zeros(n_classes, dtype=dtype))

    def params(self):
        return {"theta": self.theta}

    def class_weights(self) -> np.ndarray:
        return self.n_classes * softmax(self.theta.value.astype(np.float64))

    def forward(self, logits: np.ndarray, mask: np.ndarray) -> float:
        """Mean over non-ignore pixels of -w[y] * log softmax(logits)[y]."""
        if logits.shape[:-1] != mask.shape or logits.shape[-1] != self.n_classes:
            raise ValueError(f"logits {logits.shape} incompatible with mask {mask.shape}")
        valid = mask != IGNORE
        m = int(valid.sum())
        if m == 0:
            raise ValueError("all pixels are ignore; loss undefined")
        p = softmax(logits.astype(np.float64))
        y = np.where(valid, mask, 0).astype(np.int64)
        p_y = np.take_along_axis(p, y[..., None], axis=-1)[..., 0]
        log_p_y = np.log(np.maximum(p_y, 1e-300))
        w = self.class_weights()
        w_y = w[y]
        loss = -(w_y * log_p_y * valid).sum() / m
        self._cache = (p, y, valid, m, log_p_y, w, logits.dtype)
        return float(loss)

    def backward(self) -> np.ndarray:
        """Returns dloss/dlogits; accumulates the theta gradient."""
        p, y, valid, m, log_p_y, w, in_dtype = self._cache
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, y[..., None], 1.0, axis=-1)
        dlogits = w[y][..., None] * (p - onehot) * valid[..., None] / m
        # dL/dw_c, then through w = C * softmax(theta)
        g = np.zeros(self.n_classes)
        np.add.at(g, y[valid].ravel(), -log_p_y[valid].ravel())
        g /= m
        s = w / self.n_classes
        dtheta = self.n_classes * s * (g - float(np.dot(g, s)))
        self.theta.grad += dtheta.astype(self.theta.grad.dtype)
        return dlogits.astype(in_dtype)
