"""Canonical Gaussian scene: parameter storage, cameras, motion-basis table.

All persistent parameters are kept unconstrained for gradient descent:
rotations as quaternions (renormalized after optimizer steps), scales as
log-scales, opacities as logits, dynamic basis weights as softmax logits.
Arrays are float64 in memory; files store little-endian float32, so
synthetic constructors snap values onto the float32 grid to make
serialization round-trips bit-exact.

Layout convention: static Gaussians occupy rows [0, n_static), dynamic
Gaussians the rest. A synthetic scene's dynamic block is ordered cluster
by cluster (`per_cluster` consecutive rows each); generators rely on this.
"""

from dataclasses import dataclass, field

import numpy as np

from . import quatmath as qm

QUAT_NORM_TOL = 1e-6
SIMPLEX_TOL = 1e-6

# full-scale default for real reconstructions; synthetic fixtures use one
# basis per cluster instead so ground-truth motion assignments stay one-hot
DEFAULT_NUM_BASES = 10

# distinct, readable base colors cycled over clusters
_PALETTE = np.array(
    [
        [0.85, 0.25, 0.20],
        [0.20, 0.55, 0.85],
        [0.90, 0.75, 0.20],
        [0.45, 0.25, 0.75],
        [0.25, 0.75, 0.45],
        [0.85, 0.45, 0.70],
    ]
)


def snap_f32(a):
    """Round to the nearest float32 value, kept as float64."""
    return np.asarray(a, dtype=np.float64).astype("<f4").astype(np.float64)


def softmax(logits, axis=-1):
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    return np.log(p / (1.0 - p))


class Camera:
    """Pinhole camera: intrinsics K (pixels) and a 4x4 world-to-camera matrix.

    Convention: camera looks down +z, u grows right, v grows down; pixel
    (row, col) samples the continuous image plane at (u=col, v=row).
    """

    def __init__(self, k, w2c, width, height):
        k = np.asarray(k, dtype=np.float64)
        w2c = np.asarray(w2c, dtype=np.float64)
        if k.shape != (3, 3) or w2c.shape != (4, 4):
            raise ValueError("camera matrices must be 3x3 and 4x4")
        if abs(k[1, 0]) > 0 or abs(k[2, 0]) > 0 or abs(k[2, 1]) > 0:
            raise ValueError("intrinsics must be upper-triangular")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        rot = w2c[:3, :3]
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > QUAT_NORM_TOL:
            raise ValueError("extrinsics rotation block is not orthonormal")
        if np.max(np.abs(w2c[3] - np.array([0, 0, 0, 1.0]))) > 0:
            raise ValueError("last extrinsics row must be [0,0,0,1]")
        self.k = k
        self.w2c = w2c
        self.width = int(width)
        self.height = int(height)

    @property
    def fx(self):
        return self.k[0, 0]

    @property
    def fy(self):
        return self.k[1, 1]

    @property
    def cx(self):
        return self.k[0, 2]

    @property
    def cy(self):
        return self.k[1, 2]

    @property
    def rotation(self):
        return self.w2c[:3, :3]

    @property
    def translation(self):
        return self.w2c[:3, 3]

    def world_to_cam(self, points):
        return points @ self.rotation.T + self.translation


@dataclass
class MotionBases:
    """T x B table of rigid transforms (unit quaternion wxyz + translation).

    Frame 0 is the canonical frame: its row is pinned to the identity and
    is never optimized.
    """

    quats: np.ndarray  # (T, B, 4)
    trans: np.ndarray  # (T, B, 3)

    @property
    def n_frames(self):
        return self.quats.shape[0]

    @property
    def n_bases(self):
        return self.quats.shape[1]

    def copy(self):
        return MotionBases(self.quats.copy(), self.trans.copy())

    @staticmethod
    def identity(n_frames, n_bases=DEFAULT_NUM_BASES):
        quats = np.zeros((n_frames, n_bases, 4))
        quats[:, :, 0] = 1.0
        return MotionBases(quats, np.zeros((n_frames, n_bases, 3)))


@dataclass
class GaussianScene:
    """Structure-of-arrays Gaussian scene (static rows first)."""

    mu: np.ndarray        # (G, 3) world-space centers
    q: np.ndarray         # (G, 4) unit quaternions wxyz
    s_log: np.ndarray     # (G, 3) log-scales
    o_logit: np.ndarray   # (G,)   opacity pre-activations
    color: np.ndarray     # (G, 3) in [0, 1]
    feat: np.ndarray      # (G, d_f) semantic features
    n_static: int
    w_logits: np.ndarray  # (n_dynamic, B) basis-weight logits
    motion: MotionBases
    codebook_ref: str = ""
    seed: int = 0

    @property
    def n_total(self):
        return self.mu.shape[0]

    @property
    def n_dynamic(self):
        return self.n_total - self.n_static

    @property
    def d_f(self):
        return self.feat.shape[1]

    @property
    def n_bases(self):
        return self.motion.n_bases

    @property
    def n_frames(self):
        return self.motion.n_frames

    @property
    def is_dynamic(self):
        flags = np.zeros(self.n_total, dtype=bool)
        flags[self.n_static:] = True
        return flags

    @property
    def dynamic_indices(self):
        return np.arange(self.n_static, self.n_total)

    def weights(self):
        """Softmax-activated basis weights of the dynamic block, (n_dynamic, B)."""
        return softmax(self.w_logits, axis=-1)

    def opacities(self):
        return sigmoid(self.o_logit)

    def scales(self):
        return np.exp(self.s_log)

    def copy(self):
        return GaussianScene(
            self.mu.copy(), self.q.copy(), self.s_log.copy(), self.o_logit.copy(),
            self.color.copy(), self.feat.copy(), self.n_static, self.w_logits.copy(),
            self.motion.copy(), self.codebook_ref, self.seed,
        )

    def param_arrays(self):
        """Named views of every learnable array (motion included)."""
        return {
            "mu": self.mu, "q": self.q, "s_log": self.s_log, "o_logit": self.o_logit,
            "color": self.color, "feat": self.feat, "w_logits": self.w_logits,
            "basis_quats": self.motion.quats, "basis_trans": self.motion.trans,
        }

    def allclose(self, other, atol=0.0):
        mine, theirs = self.param_arrays(), other.param_arrays()
        return self.n_static == other.n_static and all(
            mine[k].shape == theirs[k].shape and np.allclose(mine[k], theirs[k], atol=atol, rtol=0.0)
            for k in mine
        )


@dataclass
class SyntheticSpec:
    """Parameters of the deterministic desk-scale scene fixture."""

    seed: int = 7
    clusters: int = 2
    per_cluster: int = 50
    n_static: int = 40
    frames: int = 8
    bases: int | None = None     # defaults to max(clusters, 1)
    d_f: int = 8
    extent: float = 1.6          # cluster ring radius
    cluster_radius: float = 0.30
    depth: float = 6.0           # distance of the cluster ring from the camera
    motion_amp: float = 0.45
    rot_amp_deg: float = 10.0


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)  # (index or None, message)

    @property
    def ok(self):
        return not self.violations

    def add(self, index, message):
        self.violations.append((index, message))

    def __str__(self):
        if self.ok:
            return "scene valid"
        lines = [f"{len(self.violations)} violation(s):"]
        lines += [f"  [{'-' if i is None else i}] {m}" for i, m in self.violations]
        return "\n".join(lines)


def new_synthetic_scene(spec: SyntheticSpec) -> GaussianScene:
    """Deterministic desk-scale scene: well-separated Gaussian clusters with
    distinct feature prototypes, one-hot basis weights and simple per-cluster
    rigid motions. All draws come from one seeded generator in a fixed order.
    """
    n_dynamic = spec.clusters * spec.per_cluster
    if n_dynamic + spec.n_static <= 0:
        raise ValueError("scene must contain at least one Gaussian")
    bases = spec.bases if spec.bases is not None else max(spec.clusters, 1)
    if bases <= 0:
        raise ValueError("number of motion bases must be positive")
    if spec.d_f <= 0:
        raise ValueError("feature dimension must be positive")
    if spec.frames <= 0:
        raise ValueError("frame count must be positive")

    rng = np.random.default_rng(spec.seed)
    protos = rng.normal(size=(spec.clusters + 1, spec.d_f))
    # wide separation: crossing between feature prototypes takes far more
    # movement than per-Gaussian noise or refinement nudges provide
    protos = 2.2 * protos / np.linalg.norm(protos, axis=1, keepdims=True)

    # static backdrop wall behind the cluster ring
    sx = rng.uniform(-spec.extent - 1.7, spec.extent + 1.7, size=spec.n_static)
    sy = rng.uniform(-spec.extent - 1.2, spec.extent + 1.2, size=spec.n_static)
    sz = spec.depth + 2.5 + rng.uniform(-0.2, 0.2, size=spec.n_static)
    mu_s = np.stack([sx, sy, sz], axis=1)
    q_s = qm.identity_quat(spec.n_static)
    s_log_s = np.full((spec.n_static, 3), np.log(0.28)) + rng.uniform(-0.1, 0.1, size=(spec.n_static, 3))
    o_s = np.full(spec.n_static, logit(0.92))
    color_s = np.clip(np.array([0.45, 0.5, 0.58]) + rng.normal(scale=0.04, size=(spec.n_static, 3)), 0.0, 1.0)
    feat_s = protos[-1] + rng.normal(scale=0.05, size=(spec.n_static, spec.d_f))

    # dynamic clusters on a ring at z = depth
    centers = np.zeros((spec.clusters, 3))
    mu_d = np.zeros((n_dynamic, 3))
    q_d = np.zeros((n_dynamic, 4))
    s_log_d = np.zeros((n_dynamic, 3))
    o_d = np.zeros(n_dynamic)
    color_d = np.zeros((n_dynamic, 3))
    feat_d = np.zeros((n_dynamic, spec.d_f))
    w_logits = np.zeros((n_dynamic, bases))
    for k in range(spec.clusters):
        ang = 2.0 * np.pi * k / spec.clusters + 0.4
        centers[k] = [spec.extent * np.cos(ang), 0.55 * spec.extent * np.sin(ang), spec.depth]
        rows = slice(k * spec.per_cluster, (k + 1) * spec.per_cluster)
        mu_d[rows] = centers[k] + rng.normal(scale=spec.cluster_radius, size=(spec.per_cluster, 3))
        q_d[rows] = qm.random_unit_quat(rng, spec.per_cluster)
        s_log_d[rows] = rng.uniform(np.log(0.05), np.log(0.10), size=(spec.per_cluster, 3))
        o_d[rows] = logit(0.85) + rng.normal(scale=0.2, size=spec.per_cluster)
        color_d[rows] = np.clip(_PALETTE[k % len(_PALETTE)] + rng.normal(scale=0.03, size=(spec.per_cluster, 3)), 0.0, 1.0)
        feat_d[rows] = protos[k] + rng.normal(scale=0.05, size=(spec.per_cluster, spec.d_f))
        w_logits[rows, :] = -20.0
        w_logits[rows, k % bases] = 20.0

    # per-cluster rigid motions: zero at the canonical frame, sinusoidal arc after
    motion = MotionBases.identity(spec.frames, bases)
    axes = rng.normal(size=(bases, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    dirs = rng.normal(size=(bases, 3))
    dirs[:, 2] *= 0.3  # keep motion mostly lateral so clusters stay in view
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rot_amp = np.deg2rad(spec.rot_amp_deg)
    for t in range(1, spec.frames):
        phase = np.sin(np.pi * t / max(spec.frames - 1, 1))
        for b in range(bases):
            if b >= spec.clusters:
                continue  # surplus bases stay identity
            center = centers[b % spec.clusters]
            quat = qm.axis_angle_quat(axes[b], rot_amp * phase)
            rot = qm.quat_to_rot(quat)
            offset = spec.motion_amp * phase * dirs[b]
            motion.quats[t, b] = quat
            motion.trans[t, b] = center - rot @ center + offset

    if n_dynamic > 0:
        mu = np.concatenate([mu_s, mu_d])
        q = np.concatenate([q_s, q_d])
        s_log = np.concatenate([s_log_s, s_log_d])
        o = np.concatenate([o_s, o_d])
        color = np.concatenate([color_s, color_d])
        feat = np.concatenate([feat_s, feat_d])
    else:
        mu, q, s_log, o, color, feat = mu_s, q_s, s_log_s, o_s, color_s, feat_s

    scene = GaussianScene(
        mu=snap_f32(mu), q=snap_f32(q), s_log=snap_f32(s_log), o_logit=snap_f32(o),
        color=snap_f32(color), feat=snap_f32(feat), n_static=spec.n_static,
        w_logits=snap_f32(w_logits),
        motion=MotionBases(snap_f32(motion.quats), snap_f32(motion.trans)),
        codebook_ref="", seed=spec.seed,
    )
    return scene


def validate(scene: GaussianScene) -> ValidationReport:
    """Check every scene invariant; the report lists each violation with the
    offending Gaussian index (or None for scene-level problems)."""
    report = ValidationReport()
    n = scene.n_total
    for name, arr in scene.param_arrays().items():
        if not np.all(np.isfinite(arr)):
            report.add(None, f"non-finite values in {name}")

    qn = np.linalg.norm(scene.q, axis=1)
    for i in np.nonzero(np.abs(qn - 1.0) > QUAT_NORM_TOL)[0]:
        report.add(int(i), f"quaternion norm {qn[i]:.6g} outside 1 +/- {QUAT_NORM_TOL}")

    bad_color = np.nonzero(np.any((scene.color < 0) | (scene.color > 1), axis=1))[0]
    for i in bad_color:
        report.add(int(i), "color outside [0, 1]")

    if scene.n_dynamic != scene.w_logits.shape[0]:
        report.add(None, f"counts inconsistent: {scene.n_dynamic} dynamic vs {scene.w_logits.shape[0]} weight rows")
    elif scene.n_dynamic > 0:
        if scene.w_logits.shape[1] != scene.n_bases:
            report.add(None, f"weight width {scene.w_logits.shape[1]} != {scene.n_bases} bases")
        else:
            sums = scene.weights().sum(axis=1)
            for j in np.nonzero(np.abs(sums - 1.0) > SIMPLEX_TOL)[0]:
                report.add(int(scene.n_static + j), f"weight simplex sum {sums[j]:.6g}")

    bq = scene.motion.quats
    bn = np.linalg.norm(bq, axis=-1)
    if np.any(np.abs(bn - 1.0) > QUAT_NORM_TOL):
        report.add(None, "motion basis quaternion norm outside tolerance")
    ident = np.zeros_like(bq[0])
    ident[:, 0] = 1.0
    if bq.shape[0] > 0 and (np.max(np.abs(bq[0] - ident)) > 1e-9 or np.max(np.abs(scene.motion.trans[0])) > 1e-9):
        report.add(None, "canonical-frame motion basis is not the identity")
    return report
