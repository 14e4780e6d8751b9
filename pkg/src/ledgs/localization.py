"""Point-level localization of Gaussians for a text-query embedding.

Per-Gaussian relevance is the cosine between the query embedding and the
Gaussian's decoded codebook expectation; the localized set L3D is every
Gaussian with relevance strictly above tau. Two refinement stages repair
the set: the recall stage renders the complement set and supervises its
features with the stored index maps inside the 2D relevance mask (pulling
missed Gaussians toward the query's semantics), the precision stage
supervises selected Gaussians whose footprint leaks outside the mask with
the index maps there (pushing false positives back to their original
semantics). Only per-Gaussian features move; decoder, codebook, geometry
and motion stay frozen.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .quantizer import INVALID_INDEX, Codebook
from .rasterizer import RenderSettings, render, render_backward
from .scene import GaussianScene
from .semantics import Decoder, decode_gaussians, decode_map, expected_embedding, lang_loss

DEFAULT_TAU = 0.95
DEFAULT_RECALL_EPOCHS = 50
DEFAULT_PRECISION_EPOCHS = 10
ALPHA_VALID = 0.5
FOOTPRINT_WEIGHT = 1e-3

# Refinement takes plain gradient steps so the movement of a Gaussian's
# feature is proportional to its actual contributed blending weight on the
# supervised pixels (an adaptive optimizer would drag barely-contributing
# Gaussians as fast as fully exposed ones). The cross-entropy is averaged
# over valid pixels, so these defaults absorb the pixel count.
DEFAULT_RECALL_LR = 100.0
DEFAULT_PRECISION_LR = 300.0

# Per-epoch trust region of the recall stage: each complement Gaussian's
# feature may move at most this far per epoch. False negatives sit just
# across the decision boundary and recover within a few epochs; converting
# background from scratch needs far more total movement than
# budget * step allows, keeping the recall stage from annexing scenery
# regardless of gradient magnitude.
RECALL_STEP_MAX = 0.01


class QueryEmbedding:
    """External query embedding, unit-normalized at load."""

    def __init__(self, vector, label=""):
        vector = np.asarray(vector, dtype=np.float64)
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ValueError("query embedding must be nonzero")
        self.vector = vector / norm
        self.label = label


@dataclass
class RelevanceMap:
    values: np.ndarray  # (H, W) in [-1, 1], invalid pixels -1
    t: int


@dataclass
class FrameContext:
    """Per-frame supervision available to the refinement stages."""

    t: int
    cam: object
    index_map: np.ndarray  # (H, W) int32, INVALID_INDEX outside coverage


@dataclass
class LocalizationResult:
    scores: np.ndarray     # (G,) per-Gaussian relevance
    l3d: np.ndarray        # sorted indices with scores > tau
    tau: float
    label: str = ""
    log: list = field(default_factory=list)

    def selected_mask(self):
        mask = np.zeros(self.scores.shape[0], dtype=bool)
        mask[self.l3d] = True
        return mask

    def consistent(self):
        return np.array_equal(self.l3d, np.nonzero(self.scores > self.tau)[0])


def _cos_rows(vectors, query):
    norms = np.linalg.norm(vectors, axis=-1)
    out = np.full(norms.shape, -1.0)
    ok = norms > 1e-12
    out[ok] = (vectors[ok] @ query) / norms[ok]
    return out


def relevance_from_feature_image(feature_image, alpha, decoder, book, query):
    probs = decode_map(feature_image, decoder)
    emb = expected_embedding(probs, book.entries)
    rel = _cos_rows(emb.reshape(-1, book.dim), query.vector).reshape(alpha.shape)
    rel[alpha < ALPHA_VALID] = -1.0
    return rel


def relevance_map(scene, decoder, book, query: QueryEmbedding, t, cam,
                  settings: RenderSettings | None = None) -> RelevanceMap:
    """Per-pixel cosine between the decoded expected embedding and the
    query; pixels without coverage (alpha < 0.5) are -1."""
    out = render(scene, t, cam, channels="feature", settings=settings)
    return RelevanceMap(relevance_from_feature_image(out.feature, out.alpha, decoder, book, query), t)


def mask_2d(rel: RelevanceMap, tau: float):
    """Binary query mask: strictly greater than tau."""
    return rel.values > tau


def scores_for_features(feats, decoder, book, query: QueryEmbedding):
    """Relevance scores for raw feature rows (decode -> expected embedding
    -> cosine with the query)."""
    probs = decode_gaussians(feats, decoder)
    emb = expected_embedding(probs, book.entries)
    return _cos_rows(emb, query.vector)


def gaussian_scores(scene, decoder, book, query: QueryEmbedding):
    return scores_for_features(scene.feat, decoder, book, query)


def localize(scene, decoder, book: Codebook, query: QueryEmbedding, tau: float = DEFAULT_TAU) -> LocalizationResult:
    """Select L3D = {i : cos(decoded embedding_i, query) > tau}."""
    scores = gaussian_scores(scene, decoder, book, query)
    l3d = np.nonzero(scores > tau)[0]
    log = [("localize", int(l3d.size))]
    if l3d.size == 0:
        log.append(("warning", "empty localization"))
    return LocalizationResult(scores, l3d, tau, query.label, log)


def query_masks(scene, decoder, book, query: QueryEmbedding, tau, frames,
                settings: RenderSettings | None = None):
    """Per-frame binary 2D query masks from the current scene. The
    refinement stages freeze these at entry: the mask is the (trusted)
    bridge between the query and image space, and recomputing it per epoch
    would let feature drift move the supervision target."""
    masks = []
    for fr in frames:
        rel = relevance_map(scene, decoder, book, query, fr.t, fr.cam, settings=settings)
        masks.append(mask_2d(rel, tau))
    return masks


def refine_recall(scene: GaussianScene, decoder: Decoder, book: Codebook, query: QueryEmbedding,
                  tau: float, frames: list, n_epochs: int,
                  lr: float = DEFAULT_RECALL_LR, settings: RenderSettings | None = None,
                  masks=None):
    """Recover false negatives: for n epochs, render the complement set per
    frame and supervise its features with the index maps inside the fixed
    2D relevance mask. Only complement features are updated; the selected
    set is recomputed each epoch.

    Per-Gaussian updates are trust-region limited to RECALL_STEP_MAX per
    epoch. Returns the updated scene copy and a per-epoch log."""
    work = scene.copy()
    log = []
    if n_epochs <= 0:
        return work, log
    if masks is None:
        masks = query_masks(work, decoder, book, query, tau, frames, settings)
    if not any(m.any() for m in masks):
        warnings.warn("recall refinement: empty 2D mask on every frame, nothing to do")
        return work, log
    for epoch in range(n_epochs):
        result = localize(work, decoder, book, query, tau)
        comp_mask = ~result.selected_mask()
        comp = np.nonzero(comp_mask)[0]
        grad_sum = np.zeros_like(work.feat)
        touched = 0
        for fr, m2d in zip(frames, masks):
            if not m2d.any():
                continue
            out = render(work, fr.t, fr.cam, channels="feature", subset=comp, settings=settings)
            valid = (out.alpha >= ALPHA_VALID) & m2d & (fr.index_map != INVALID_INDEX)
            ll = lang_loss(out.feature, decoder, fr.index_map, valid)
            if ll.n_valid == 0:
                continue
            grads = render_backward(out, d_feature=ll.d_input)
            grad_sum += grads.d_feature
            touched += 1
        if touched == 0:
            break
        delta = lr * grad_sum[comp_mask]
        norms = np.linalg.norm(delta, axis=1, keepdims=True)
        delta *= np.minimum(1.0, RECALL_STEP_MAX / np.maximum(norms, 1e-12))
        work.feat[comp_mask] -= delta
        recomputed = localize(work, decoder, book, query, tau)
        log.append(("recall_epoch", epoch, int(recomputed.l3d.size)))
    return work, log


def refine_precision(scene: GaussianScene, decoder: Decoder, book: Codebook, query: QueryEmbedding,
                     tau: float, frames: list, m_epochs: int,
                     lr: float = DEFAULT_PRECISION_LR, settings: RenderSettings | None = None,
                     masks=None):
    """Suppress false positives: for m epochs, supervise selected Gaussians
    that project predominantly outside the fixed 2D mask with the original
    index maps on out-of-mask pixels. A selected Gaussian is eligible when
    it has a contributed pixel outside the mask with blending weight > 1e-3
    AND the majority of its contributed weight (summed over frames) lies
    outside; Gaussians mostly inside the mask are frozen. Returns the
    updated scene copy and a per-epoch log."""
    work = scene.copy()
    log = []
    if m_epochs <= 0:
        return work, log
    if masks is None:
        masks = query_masks(work, decoder, book, query, tau, frames, settings)
    n_g = scene.n_total
    for epoch in range(m_epochs):
        result = localize(work, decoder, book, query, tau)
        sel_mask = result.selected_mask()
        grad_sum = np.zeros_like(work.feat)
        w_in_sum = np.zeros(n_g)
        w_out_sum = np.zeros(n_g)
        leaks = np.zeros(n_g, dtype=bool)
        touched = 0
        for fr, m2d in zip(frames, masks):
            outside = ~m2d
            full = render(work, fr.t, fr.cam, channels="feature", settings=settings)
            contrib = full.contributors
            w_in, w_out = contrib.weight_split(m2d)
            w_in_sum += w_in
            w_out_sum += w_out
            leaks |= contrib.gaussians_touching(outside, FOOTPRINT_WEIGHT)
            valid = (full.alpha >= ALPHA_VALID) & outside & (fr.index_map != INVALID_INDEX)
            ll = lang_loss(full.feature, decoder, fr.index_map, valid)
            if ll.n_valid == 0:
                continue
            grads = render_backward(full, d_feature=ll.d_input)
            grad_sum += grads.d_feature
            touched += 1
        eligible = leaks & (w_out_sum > w_in_sum) & sel_mask
        if touched == 0 or not eligible.any():
            warnings.warn("precision refinement: nothing eligible, stopping")
            log.append(("precision_epoch", epoch, int(result.l3d.size)))
            break
        work.feat[eligible] -= lr * grad_sum[eligible]
        recomputed = localize(work, decoder, book, query, tau)
        log.append(("precision_epoch", epoch, int(recomputed.l3d.size)))
    return work, log


def localize_refined(scene, decoder, book, query: QueryEmbedding, tau: float = DEFAULT_TAU,
                     n_epochs: int = DEFAULT_RECALL_EPOCHS, m_epochs: int = DEFAULT_PRECISION_EPOCHS,
                     frames: list | None = None, alternations: int = 1,
                     recall_lr: float = DEFAULT_RECALL_LR, precision_lr: float = DEFAULT_PRECISION_LR,
                     settings: RenderSettings | None = None):
    """Recall stage, then precision stage, then a final localize.

    Returns (LocalizationResult, refined scene). The result log records the
    set-size trajectory across every stage.
    """
    if frames is None:
        frames = []
    work = scene.copy()
    traj = [("init", int(localize(work, decoder, book, query, tau).l3d.size))]
    # each stage freezes the 2D masks at its own entry: recall sees the
    # pre-refinement masks, precision sees masks that already reflect the
    # recall stage's recoveries (otherwise it would demote them again)
    for _ in range(max(alternations, 0)):
        work, rlog = refine_recall(work, decoder, book, query, tau, frames, n_epochs,
                                   lr=recall_lr, settings=settings)
        traj.extend(rlog)
        work, plog = refine_precision(work, decoder, book, query, tau, frames, m_epochs,
                                      lr=precision_lr, settings=settings)
        traj.extend(plog)
    final = localize(work, decoder, book, query, tau)
    final.log = traj + final.log
    return final, work
