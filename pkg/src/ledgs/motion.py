"""Motion model: canonical Gaussians posed at time t via a simplex-weighted
blend of global rigid motion bases.

Translations blend linearly. Rotations blend as a sign-aligned weighted
quaternion sum followed by normalization (the chordal mean): each basis
quaternion is flipped to have a non-negative dot product with basis 0
before summing, ties keep the original sign. One-hot weights therefore
reproduce the selected basis exactly, and the blend stays differentiable.
"""

from dataclasses import dataclass

import numpy as np

from . import quatmath as qm
from .scene import GaussianScene

DEGENERATE_NORM = 1e-8


class DegenerateBlendError(ValueError):
    """Weighted quaternion sum vanished (antipodal cancellation)."""


@dataclass
class PosedGaussians:
    """Per-Gaussian pose at one frame; static rows carry canonical values."""

    mu_t: np.ndarray  # (G, 3)
    q_t: np.ndarray   # (G, 4)
    t: int
    _cache: dict | None = None


def _align_signs(basis_quats):
    """Sign flips (B,) making every basis quaternion agree with basis 0."""
    dots = basis_quats @ basis_quats[0]
    return np.where(dots < 0.0, -1.0, 1.0)


def blend_bases(weights, basis_quats, basis_trans):
    """Blend B rigid transforms with simplex weights into one (quat, trans).

    Raises DegenerateBlendError when the aligned weighted quaternion sum
    has vanishing norm.
    """
    weights = np.asarray(weights, dtype=np.float64)
    sign = _align_signs(np.asarray(basis_quats, dtype=np.float64))
    u = (weights[:, None] * sign[:, None] * basis_quats).sum(axis=0)
    norm = np.linalg.norm(u)
    if norm < DEGENERATE_NORM:
        raise DegenerateBlendError("weighted quaternion sum is degenerate (antipodal cancellation)")
    return u / norm, weights @ basis_trans


def _blend_many(weights, basis_quats, basis_trans):
    """Vectorized blend for all dynamic Gaussians; returns blend + cache."""
    sign = _align_signs(basis_quats)
    aligned = sign[:, None] * basis_quats  # (B, 4)
    u = weights @ aligned                  # (Gd, 4)
    norms = np.linalg.norm(u, axis=1)
    bad = np.nonzero(norms < DEGENERATE_NORM)[0]
    if bad.size:
        raise DegenerateBlendError(f"degenerate quaternion blend for dynamic Gaussian {int(bad[0])}")
    q_blend = u / norms[:, None]
    t_blend = weights @ basis_trans
    return q_blend, t_blend, {"sign": sign, "aligned": aligned, "u": u}


def pose_at(scene: GaussianScene, t: int) -> PosedGaussians:
    """Pose every Gaussian at frame t. Static rows pass through; at the
    canonical frame the output equals the canonical parameters exactly."""
    if not 0 <= t < scene.n_frames:
        raise IndexError(f"frame {t} outside [0, {scene.n_frames})")
    mu_t = scene.mu.copy()
    q_t = scene.q.copy()
    cache = None
    if scene.n_dynamic > 0:
        weights = scene.weights()
        q_blend, t_blend, cache = _blend_many(weights, scene.motion.quats[t], scene.motion.trans[t])
        rot = qm.quat_to_rot(q_blend)  # (Gd, 3, 3)
        dyn = slice(scene.n_static, scene.n_total)
        mu_t[dyn] = np.einsum("gij,gj->gi", rot, scene.mu[dyn]) + t_blend
        q_t[dyn] = qm.quat_mul(q_blend, scene.q[dyn])
        cache.update({"weights": weights, "q_blend": q_blend, "rot": rot})
    return PosedGaussians(mu_t, q_t, t, cache)


@dataclass
class MotionGrads:
    d_mu: np.ndarray           # (G, 3) canonical centers
    d_q: np.ndarray            # (G, 4) canonical quaternions
    d_w_logits: np.ndarray     # (n_dynamic, B)
    d_basis_quats: np.ndarray  # (B, 4) for the posed frame
    d_basis_trans: np.ndarray  # (B, 3)


def motion_gradients(scene: GaussianScene, posed: PosedGaussians, d_mu_t, d_q_t) -> MotionGrads:
    """Chain upstream gradients w.r.t. (mu_t, q_t) back to canonical
    parameters, basis-weight logits and the frame-t basis transforms.
    Sign alignment is treated as constant (it is, almost everywhere)."""
    n_bases = scene.n_bases
    d_mu = d_mu_t.copy()
    d_q = d_q_t.copy()
    d_w_logits = np.zeros((scene.n_dynamic, n_bases))
    d_bq = np.zeros((n_bases, 4))
    d_bt = np.zeros((n_bases, 3))
    if scene.n_dynamic == 0:
        return MotionGrads(d_mu, d_q, d_w_logits, d_bq, d_bt)

    cache = posed._cache
    dyn = slice(scene.n_static, scene.n_total)
    weights, q_blend = cache["weights"], cache["q_blend"]
    du_t = d_mu_t[dyn]  # gradient w.r.t. posed centers of the dynamic block
    dq_t = d_q_t[dyn]

    # q_t = q_blend ⊗ q_canon
    d_q_blend, d_q_canon = qm.quat_mul_backward(q_blend, scene.q[dyn], dq_t)
    d_q[dyn] = d_q_canon

    # mu_t = R(q_blend) mu + t_blend
    rot = cache["rot"]
    d_mu[dyn] = np.einsum("gij,gi->gj", rot, du_t)
    d_rot = np.einsum("gi,gj->gij", du_t, scene.mu[dyn])
    d_q_blend = d_q_blend + qm.rot_backward(q_blend, d_rot)

    # q_blend = normalize(u), u = sum_b w_b * aligned_b
    d_u = qm.normalize_backward(cache["u"], d_q_blend)
    aligned = cache["aligned"]
    d_w = d_u @ aligned.T + du_t @ scene.motion.trans[posed.t].T  # (Gd, B)
    d_bq = cache["sign"][:, None] * (weights.T @ d_u)
    d_bt = weights.T @ du_t

    # softmax backward on the stored logits
    inner = np.sum(d_w * weights, axis=1, keepdims=True)
    d_w_logits = weights * (d_w - inner)
    return MotionGrads(d_mu, d_q, d_w_logits, d_bq, d_bt)
