"""Desk-scale evaluation metrics: masked PSNR, mIoU over Gaussian index
sets or pixel masks, and a feature-space directional-similarity surrogate
(reported for trend analysis only)."""

import math
from dataclasses import dataclass, field

import numpy as np

PSNR_CAP_DB = 99.0


@dataclass
class MetricReport:
    psnr_db: float | None = None
    miou: float | None = None
    per_frame: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def capped_psnr(self):
        if self.psnr_db is None:
            return None
        return min(self.psnr_db, PSNR_CAP_DB)


def psnr(a, b, mask=None, peak=1.0):
    """10*log10(peak^2 / MSE) over masked pixels; identical inputs return
    +inf (cap to PSNR_CAP_DB when logging)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    diff = (a - b) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[: mask.ndim]:
            raise ValueError("mask shape mismatch")
        if not mask.any():
            raise ValueError("empty mask")
        diff = diff[mask]
    mse = float(np.mean(diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def miou(pred, gt, universe=None):
    """Intersection over union of two index sets or boolean masks.
    Both-empty is defined as 1.0 (nothing to find, nothing found)."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.dtype == bool or gt.dtype == bool:
        p = np.asarray(pred, dtype=bool).ravel()
        g = np.asarray(gt, dtype=bool).ravel()
        if p.shape != g.shape:
            raise ValueError("mask shapes differ")
        inter = int(np.sum(p & g))
        union = int(np.sum(p | g))
    else:
        ps, gs = set(int(i) for i in pred.ravel()), set(int(i) for i in gt.ravel())
        inter, union = len(ps & gs), len(ps | gs)
    if union == 0:
        return 1.0
    return inter / union


def feature_dir_sim(feat_a, feat_b, query_a, query_b, region_mask):
    """Mean cosine between the pixelwise feature change (b - a) and the
    query embedding change over region pixels; pixels with no feature
    change are excluded. Trend-analysis surrogate only."""
    feat_a = np.asarray(feat_a, dtype=np.float64)
    feat_b = np.asarray(feat_b, dtype=np.float64)
    if feat_a.shape != feat_b.shape:
        raise ValueError("feature shapes differ")
    mask = np.asarray(region_mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty edited region")
    dq = np.asarray(query_b, dtype=np.float64) - np.asarray(query_a, dtype=np.float64)
    nq = np.linalg.norm(dq)
    if nq == 0:
        raise ValueError("query change direction is zero")
    dq = dq / nq
    delta = (feat_b - feat_a)[mask]
    norms = np.linalg.norm(delta, axis=-1)
    used = norms > 1e-12
    if not used.any():
        return 0.0
    return float(np.mean(delta[used] @ dq / norms[used]))
