"""Cosine vector quantization of dense per-pixel embedding stacks.

The codebook is trained by alternating hard nearest-entry assignment
(argmax cosine similarity, ties to the lowest index) with Adam steps on
the summed 1 - cos(feature, assigned entry) loss; features are fixed
inputs, only the codebook moves. Entries that receive no pixels for a
full alternation are re-seeded from the currently worst-fit pixels.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .optim import Adam

INVALID_INDEX = -1


@dataclass
class Codebook:
    entries: np.ndarray  # (N, c)

    @property
    def n_entries(self):
        return self.entries.shape[0]

    @property
    def dim(self):
        return self.entries.shape[1]


@dataclass
class FeatureStack:
    """Dense per-pixel embeddings (t, h, w, c) plus a validity mask."""

    values: np.ndarray
    valid: np.ndarray  # (t, h, w) bool

    def __post_init__(self):
        if self.values.shape[:3] != self.valid.shape:
            raise ValueError("validity mask shape does not match features")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite feature values")

    def flat_valid(self):
        """(P, c) valid pixel features and their flat positions."""
        mask = self.valid.ravel()
        return self.values.reshape(-1, self.values.shape[-1])[mask], np.nonzero(mask)[0]


@dataclass
class IndexStack:
    """Per-pixel nearest-entry indices; INVALID_INDEX marks invalid pixels."""

    indices: np.ndarray  # (t, h, w) int32
    n_entries: int
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = self.indices[self.indices != INVALID_INDEX]
        if vals.size and (vals.min() < 0 or vals.max() >= self.n_entries):
            raise ValueError("index values outside [0, N)")


def _cosine_many(feats, entries):
    """Cosine similarity matrix (P, N); zero-norm rows yield all -2."""
    fn = np.linalg.norm(feats, axis=1)
    en = np.linalg.norm(entries, axis=1)
    sim = feats @ entries.T
    good = fn > 0
    sim[good] /= fn[good, None]
    sim[~good] = -2.0
    sim /= np.where(en > 0, en, 1.0)[None, :]
    return sim, good


def assign(features: FeatureStack, book: Codebook) -> IndexStack:
    """Nearest-entry index per valid pixel (argmax cosine, lowest index on
    ties). Valid pixels with zero-norm features are marked invalid and
    counted in stats."""
    if features.values.shape[-1] != book.dim:
        raise ValueError("feature / codebook dimension mismatch")
    feats, pos = features.flat_valid()
    if feats.shape[0] == 0:
        raise ValueError("no valid pixels to assign")
    sim, good = _cosine_many(feats, book.entries)
    idx = np.argmax(sim, axis=1)  # np.argmax returns the first (lowest) maximum
    out = np.full(features.valid.shape, INVALID_INDEX, dtype=np.int32).ravel()
    out[pos] = np.where(good, idx, INVALID_INDEX)
    n_zero = int(np.sum(~good))
    if n_zero:
        warnings.warn(f"{n_zero} valid pixel(s) had zero-norm features; marked invalid")
    return IndexStack(out.reshape(features.valid.shape), book.n_entries, {"n_zero_norm": n_zero})


def quant_loss(features: FeatureStack, book: Codebook, assignment: IndexStack) -> float:
    """Sum over valid pixels of 1 - cos(feature, assigned entry)."""
    loss, _ = _quant_loss_grad(features, book, assignment, with_grad=False)
    return loss


def _quant_loss_grad(features, book, assignment, with_grad=True):
    flat_idx = assignment.indices.ravel()
    sel = flat_idx != INVALID_INDEX
    feats = features.values.reshape(-1, features.values.shape[-1])[sel]
    idx = flat_idx[sel]
    entries = book.entries[idx]
    fn = np.linalg.norm(feats, axis=1)
    en = np.linalg.norm(entries, axis=1)
    cos = np.sum(feats * entries, axis=1) / (fn * en)
    loss = float(np.sum(1.0 - cos))
    if not with_grad:
        return loss, None
    # d(1-cos)/dB = -(f_hat - cos * b_hat) / |B|
    f_hat = feats / fn[:, None]
    b_hat = entries / en[:, None]
    per_pixel = -(f_hat - cos[:, None] * b_hat) / en[:, None]
    grad = np.zeros_like(book.entries)
    for d in range(book.dim):
        grad[:, d] = np.bincount(idx, weights=per_pixel[:, d], minlength=book.n_entries)
    return loss, grad


def _farthest_point_init(feats, n_entries, seed):
    """Greedy farthest-point sampling of distinct valid pixel features:
    the seeded generator picks the first entry, each further entry is the
    pixel least similar (max cosine) to the entries chosen so far. Avoids
    seeding two entries inside one tight direction cluster."""
    rng = np.random.default_rng(seed)
    norms = np.linalg.norm(feats, axis=1)
    unit = feats / np.where(norms > 0, norms, 1.0)[:, None]
    first = int(rng.integers(0, feats.shape[0]))
    chosen = [first]
    best = unit @ unit[first]
    for _ in range(1, n_entries):
        best[chosen] = np.inf  # never re-pick a chosen pixel
        nxt = int(np.argmin(best))
        chosen.append(nxt)
        best = np.maximum(best, unit @ unit[nxt])
    return feats[chosen].copy()


def learn_codebook(features: FeatureStack, n_entries: int, epochs: int = 30,
                   lr: float = 1e-2, seed: int = 0, inner_steps: int = 5):
    """Alternating cosine k-means with Adam inner steps on the codebook.

    Initialization is seeded farthest-point sampling of distinct valid
    pixel features. Returns the trained Codebook, the final IndexStack,
    and per-alternation loss history (recorded right after each
    assignment) in the IndexStack stats.
    """
    feats, _ = features.flat_valid()
    if n_entries > feats.shape[0]:
        raise ValueError(f"N={n_entries} exceeds {feats.shape[0]} valid pixels")
    if n_entries < 1:
        raise ValueError("N must be >= 1")
    book = Codebook(_farthest_point_init(feats, n_entries, seed))

    opt = Adam(lr)
    history = []
    n_reseeded = 0
    assignment = assign(features, book)
    for _ in range(epochs):
        loss, _ = _quant_loss_grad(features, book, assignment, with_grad=False)
        history.append(loss)
        # re-seed entries that received no pixels this alternation
        counts = np.bincount(assignment.indices.ravel()[assignment.indices.ravel() >= 0],
                             minlength=n_entries)
        dead = np.nonzero(counts == 0)[0]
        if dead.size:
            flat_idx = assignment.indices.ravel()
            sel = flat_idx != INVALID_INDEX
            pix = features.values.reshape(-1, features.values.shape[-1])[sel]
            ent = book.entries[flat_idx[sel]]
            cos = np.sum(pix * ent, axis=1) / (np.linalg.norm(pix, axis=1) * np.linalg.norm(ent, axis=1))
            worst = np.argsort(cos, kind="stable")[: dead.size]
            book.entries[dead] = pix[worst]
            n_reseeded += int(dead.size)
            assignment = assign(features, book)
        for _ in range(inner_steps):
            _, grad = _quant_loss_grad(features, book, assignment)
            opt.step("entries", book.entries, grad)
        assignment = assign(features, book)
    history.append(quant_loss(features, book, assignment))
    assignment.stats["n_reseeded"] = n_reseeded
    assignment.stats["loss_history"] = history
    return book, assignment
