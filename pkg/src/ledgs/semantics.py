"""Decoder from rendered feature maps to codebook-index distributions,
plus the cross-entropy language loss and codebook-expectation embedding.

The decoder is a single-hidden-layer ReLU MLP (d_f -> hidden -> N). The
language loss averages cross-entropy over valid pixels so its weight is
resolution-independent; it returns gradients for the decoder parameters
and for the input feature map, which the rasterizer backward then carries
to per-Gaussian features.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .quantizer import INVALID_INDEX
from .scene import snap_f32


class Decoder:
    """d_f -> hidden (ReLU) -> N logits."""

    def __init__(self, w1, b1, w2, b2):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)

    @classmethod
    def create(cls, d_f, n_entries, hidden=64, seed=0):
        rng = np.random.default_rng(seed)
        w1 = rng.normal(scale=np.sqrt(2.0 / d_f), size=(d_f, hidden))
        w2 = rng.normal(scale=np.sqrt(2.0 / hidden), size=(hidden, n_entries))
        return cls(snap_f32(w1), np.zeros(hidden), snap_f32(w2), np.zeros(n_entries))

    @property
    def input_dim(self):
        return self.w1.shape[0]

    @property
    def hidden_dim(self):
        return self.w1.shape[1]

    @property
    def n_entries(self):
        return self.w2.shape[1]

    def copy(self):
        return Decoder(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def logits(self, x):
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def forward(self, x):
        """Returns (probs, cache) for flattened inputs (P, d_f)."""
        pre = x @ self.w1 + self.b1
        h = np.maximum(pre, 0.0)
        logits = h @ self.w2 + self.b2
        probs = _softmax(logits)
        return probs, {"x": x, "pre": pre, "h": h, "probs": probs}

    def backward(self, cache, d_logits):
        """Gradients of the decoder parameters and the input."""
        d_w2 = cache["h"].T @ d_logits
        d_b2 = d_logits.sum(axis=0)
        d_h = d_logits @ self.w2.T
        d_pre = d_h * (cache["pre"] > 0)
        d_w1 = cache["x"].T @ d_pre
        d_b1 = d_pre.sum(axis=0)
        d_x = d_pre @ self.w1.T
        return {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2}, d_x


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def decode_map(feature_image, decoder: Decoder):
    """Pixelwise index distribution (H, W, N) from a feature map (H, W, d_f)."""
    h, w, d = feature_image.shape
    if d != decoder.input_dim:
        raise ValueError("feature dimension does not match decoder input")
    probs, _ = decoder.forward(feature_image.reshape(-1, d))
    return probs.reshape(h, w, decoder.n_entries)


def decode_gaussians(features, decoder: Decoder):
    """Per-Gaussian index distribution (G, N)."""
    probs, _ = decoder.forward(np.asarray(features, dtype=np.float64))
    return probs


@dataclass
class LangLoss:
    value: float
    d_input: np.ndarray       # same shape as the feature input
    d_params: dict            # decoder parameter gradients
    n_valid: int


def lang_loss(feature_image, decoder: Decoder, targets, valid) -> LangLoss:
    """Mean cross-entropy -log p[target] over valid pixels; gradients flow
    to the decoder parameters and to the feature map. An empty valid mask
    yields loss 0 with a warning."""
    h, w, d = feature_image.shape
    flat_x = feature_image.reshape(-1, d)
    flat_t = np.asarray(targets).reshape(-1)
    flat_v = np.asarray(valid, dtype=bool).reshape(-1) & (flat_t != INVALID_INDEX)
    n_valid = int(flat_v.sum())
    if n_valid == 0:
        warnings.warn("language loss: empty valid mask, returning 0")
        zero = {k: np.zeros_like(v) for k, v in decoder.params().items()}
        return LangLoss(0.0, np.zeros_like(feature_image), zero, 0)
    tgt = flat_t[flat_v]
    if tgt.min() < 0 or tgt.max() >= decoder.n_entries:
        raise ValueError("targets outside [0, N)")
    probs, cache = decoder.forward(flat_x[flat_v])
    picked = probs[np.arange(n_valid), tgt]
    value = float(np.mean(-np.log(np.maximum(picked, 1e-300))))
    d_logits = probs.copy()
    d_logits[np.arange(n_valid), tgt] -= 1.0
    d_logits /= n_valid
    d_params, d_x = decoder.backward(cache, d_logits)
    d_input = np.zeros((h * w, d))
    d_input[flat_v] = d_x
    return LangLoss(value, d_input.reshape(h, w, d), d_params, n_valid)


def expected_embedding(probs, entries):
    """Softmax-weighted codebook expectation: probs (..., N) x entries
    (N, c) -> (..., c)."""
    return np.asarray(probs) @ np.asarray(entries)
