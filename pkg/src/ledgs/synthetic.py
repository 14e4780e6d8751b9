"""Deterministic synthetic datasets and fixtures.

Two products:

* a full dataset bundle (reference + degraded initial scene, rendered GT
  frames, masks, depths, tracks, per-pixel embedding stacks, queries with
  ground-truth membership, a recolor reference-edit video) that stands in
  for the preprocessing outputs a real capture pipeline would produce;

* a localization fixture: a scene whose features and decoder are
  constructed to decode each cluster to its own codebook entry, with a
  controllable fraction of planted false negatives / false positives for
  exercising the refinement stages.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .localization import FrameContext, QueryEmbedding, scores_for_features
from .motion import pose_at
from .optim import Adam
from .quantizer import INVALID_INDEX, Codebook
from .rasterizer import RenderSettings, project_points, render
from .scene import Camera, GaussianScene, SyntheticSpec, new_synthetic_scene, snap_f32
from .semantics import Decoder
from .training import LearningRates, SupervisionStack, TrackTable, TrainConfig


@dataclass
class DatasetParams:
    seed: int = 7
    clusters: int = 2
    per_cluster: int = 50
    n_static: int = 40
    frames: int = 8
    bases: int | None = None
    d_f: int = 8
    embed_dim: int = 16
    width: int = 64
    height: int = 48
    noise_deg: float = 5.0
    heldout_views: int = 2
    tracks_per_cluster: int = 3
    # markedly rotating clusters cycle which members are front-most, so
    # every Gaussian is visibly supervised in some frame
    rot_amp_deg: float = 25.0
    motion_amp: float = 0.45


@dataclass
class SyntheticBundle:
    params: DatasetParams
    reference: GaussianScene
    initial: GaussianScene
    cams: list
    heldout_cams: list
    gt_rgb: np.ndarray          # (T, H, W, 3)
    heldout_rgb: np.ndarray     # (V, T, H, W, 3)
    dyn_mask: np.ndarray        # (T, H, W)
    depth: np.ndarray           # (T, H, W)
    tracks: TrackTable
    features: np.ndarray        # (T, H, W, c)
    validity: np.ndarray        # (T, H, W) bool
    prototypes: np.ndarray      # (clusters + 1, c) orthonormal
    queries: list               # QueryEmbedding per cluster
    membership: dict            # label -> member indices
    group_of_gaussian: np.ndarray  # (G,) group id: clusters..., static = clusters
    edit_label: str = ""
    edit_video: np.ndarray | None = None
    edit_member_label: str = ""

    def supervision(self, index_maps=None):
        return SupervisionStack(rgb=self.gt_rgb, cams=self.cams, dyn_mask=self.dyn_mask,
                                depth=self.depth, tracks=self.tracks, index_maps=index_maps)


def desk_train_config(epochs=200, seed=0):
    """Training configuration calibrated for the desk-scale synthetic
    fixtures: feature learning runs hotter than the full-scale default so
    occlusion-starved Gaussians still align within a few hundred epochs,
    and adaptive density control is off. The fixture is initialized at the
    reference density from a single fixed camera, where densification has
    no parallax to discipline new Gaussians and only degrades held-out
    views; its clone/split/prune mechanics are exercised by unit tests."""
    return TrainConfig(epochs=epochs, seed=seed, densify=None,
                       lr=LearningRates(feature=5e-3))


def make_camera(width, height, w2c=None):
    fx = 1.1 * width
    k = np.array([[fx, 0.0, (width - 1) / 2.0], [0.0, fx, (height - 1) / 2.0], [0.0, 0.0, 1.0]])
    return Camera(k, np.eye(4) if w2c is None else w2c, width, height)


def _yaw_w2c(position, yaw_rad):
    c, s = np.cos(yaw_rad), np.sin(yaw_rad)
    rot = np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    w2c = np.eye(4)
    w2c[:3, :3] = rot
    w2c[:3, 3] = -rot @ np.asarray(position, dtype=np.float64)
    return w2c


def _orthonormal_prototypes(n, dim, rng):
    mat = rng.normal(size=(dim, n))
    q, r = np.linalg.qr(mat)
    return (q * np.sign(np.diag(r))).T  # (n, dim), rows orthonormal


def _group_alphas(scene, t, cams_t, groups, settings):
    """Alpha maps per Gaussian group plus the full render of frame t."""
    full = render(scene, t, cams_t, channels="color", settings=settings)
    alphas = []
    posed = pose_at(scene, t)
    for rows in groups:
        out = render(scene, t, cams_t, channels="none", subset=rows, settings=settings, posed=posed)
        alphas.append(out.alpha)
    return full, np.stack(alphas)


def _gaussian_groups(params):
    """Row-index groups: one per cluster, then the static backdrop."""
    ns = params.n_static
    groups = [np.arange(ns + k * params.per_cluster, ns + (k + 1) * params.per_cluster)
              for k in range(params.clusters)]
    groups.append(np.arange(0, ns))
    return groups


SILHOUETTE_ALPHA = 0.4
SILHOUETTE_FRINGE = 0.10


def _label_pixels(alphas):
    """Group label per pixel from per-group alpha maps (clusters...,
    static last): a pixel belongs to the strongest cluster whose own alpha
    clears the silhouette threshold, to the background where no cluster
    reaches the fringe level, and is UNLABELED (-1) in the fringe band in
    between. Mimics eroded mask-tracking labels: full object silhouettes,
    untrusted boundaries."""
    clusters = alphas[:-1]
    if clusters.shape[0] == 0:
        return np.full(alphas.shape[1:], alphas.shape[0] - 1, dtype=np.int32)
    best = np.argmax(clusters, axis=0)
    best_a = np.max(clusters, axis=0)
    labels = np.where(best_a >= SILHOUETTE_ALPHA, best, clusters.shape[0]).astype(np.int32)
    fringe = (best_a < SILHOUETTE_ALPHA) & (best_a >= SILHOUETTE_FRINGE)
    labels[fringe] = -1
    return labels


def _angular_noise_rows(protos_rows, sigma_deg, rng):
    """Rotate each unit row by a Gaussian angle toward a random orthogonal
    direction."""
    n, c = protos_rows.shape
    raw = rng.normal(size=(n, c))
    raw -= np.sum(raw * protos_rows, axis=1, keepdims=True) * protos_rows
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    raw /= np.where(norms > 0, norms, 1.0)
    theta = np.deg2rad(sigma_deg) * rng.normal(size=(n, 1))
    return np.cos(theta) * protos_rows + np.sin(theta) * raw


def build_bundle(params: DatasetParams, settings: RenderSettings | None = None) -> SyntheticBundle:
    settings = settings or RenderSettings()
    spec = SyntheticSpec(seed=params.seed, clusters=params.clusters, per_cluster=params.per_cluster,
                         n_static=params.n_static, frames=params.frames, bases=params.bases,
                         d_f=params.d_f, rot_amp_deg=params.rot_amp_deg,
                         motion_amp=params.motion_amp)
    reference = new_synthetic_scene(spec)
    rng = np.random.default_rng(params.seed + 1)
    cams = [make_camera(params.width, params.height) for _ in range(params.frames)]
    heldout_cams = []
    for v in range(params.heldout_views):
        side = 1.0 if v % 2 == 0 else -1.0
        w2c = _yaw_w2c([0.45 * side * (1 + v // 2), 0.1 * side, 0.0], np.deg2rad(-3.5 * side))
        heldout_cams.append(make_camera(params.width, params.height, w2c))

    groups = _gaussian_groups(params)
    group_of = np.full(reference.n_total, params.clusters, dtype=int)
    for k in range(params.clusters):
        group_of[groups[k]] = k

    prototypes = _orthonormal_prototypes(params.clusters + 1, params.embed_dim, rng)

    t_frames, h, w = params.frames, params.height, params.width
    gt_rgb = np.zeros((t_frames, h, w, 3))
    dyn_mask = np.zeros((t_frames, h, w))
    depth = np.zeros((t_frames, h, w))
    features = np.zeros((t_frames, h, w, params.embed_dim))
    validity = np.zeros((t_frames, h, w), dtype=bool)
    for t in range(t_frames):
        full, alphas = _group_alphas(reference, t, cams[t], groups, settings)
        gt_rgb[t] = full.color
        depth[t] = full.depth
        if reference.n_dynamic:
            dyn = render(reference, t, cams[t], channels="none",
                         subset=reference.dynamic_indices, settings=settings)
            dyn_mask[t] = dyn.alpha
        labels = _label_pixels(alphas)
        valid = (full.alpha >= 0.5) & (labels >= 0)
        validity[t] = valid
        rows, cols = np.nonzero(valid)
        protos_rows = prototypes[labels[rows, cols]]
        features[t][rows, cols] = _angular_noise_rows(protos_rows, params.noise_deg, rng)

    heldout_rgb = np.zeros((params.heldout_views, t_frames, h, w, 3))
    for v, cam in enumerate(heldout_cams):
        for t in range(t_frames):
            heldout_rgb[v, t] = render(reference, t, cam, channels="color", settings=settings).color

    # tracks follow the first few Gaussians of each cluster
    track_ids = np.concatenate([g[: params.tracks_per_cluster] for g in groups[:-1]]) \
        if params.clusters else np.zeros(0, dtype=int)
    px = np.zeros((t_frames, track_ids.size, 2))
    visible = np.zeros((t_frames, track_ids.size), dtype=bool)
    for t in range(t_frames):
        posed = pose_at(reference, t)
        uv, z, _ = project_points(posed.mu_t[track_ids], cams[t])
        px[t] = uv
        visible[t] = ((z > settings.z_near) & (uv[:, 0] >= 0) & (uv[:, 0] <= params.width - 1)
                      & (uv[:, 1] >= 0) & (uv[:, 1] <= params.height - 1))
    tracks = TrackTable(track_ids, px, visible)

    queries = [QueryEmbedding(prototypes[k], f"cluster-{k}") for k in range(params.clusters)]
    membership = {f"cluster-{k}": groups[k].tolist() for k in range(params.clusters)}

    initial = _degrade(reference, rng)

    edit_video = None
    edit_label = edit_member_label = ""
    if params.clusters:
        edited = reference.copy()
        edited.color[groups[0]] = np.array([0.88, 0.10, 0.10])
        edit_video = np.stack([render(edited, t, cams[t], channels="color", settings=settings).color
                               for t in range(t_frames)])
        edit_label = "recolor-cluster-0"
        edit_member_label = "cluster-0"

    return SyntheticBundle(
        params=params, reference=reference, initial=initial, cams=cams,
        heldout_cams=heldout_cams, gt_rgb=gt_rgb, heldout_rgb=heldout_rgb,
        dyn_mask=dyn_mask, depth=depth, tracks=tracks, features=features,
        validity=validity, prototypes=prototypes, queries=queries,
        membership=membership, group_of_gaussian=group_of,
        edit_label=edit_label, edit_video=edit_video, edit_member_label=edit_member_label,
    )


def _degrade(reference: GaussianScene, rng) -> GaussianScene:
    """Initial scene for training: jittered geometry, gray colors, blank
    features, softened basis weights, perturbed motion (canonical frame
    stays pinned to the identity)."""
    init = reference.copy()
    init.mu += rng.normal(scale=0.04, size=init.mu.shape)
    init.q += rng.normal(scale=0.02, size=init.q.shape)
    init.q /= np.linalg.norm(init.q, axis=1, keepdims=True)
    init.s_log += rng.normal(scale=0.05, size=init.s_log.shape)
    init.o_logit += rng.normal(scale=0.1, size=init.o_logit.shape) - 0.4
    init.color = np.clip(0.5 + rng.normal(scale=0.05, size=init.color.shape), 0.0, 1.0)
    init.feat = rng.normal(scale=0.01, size=init.feat.shape)
    if init.n_dynamic:
        hot = np.argmax(init.w_logits, axis=1)
        init.w_logits = rng.normal(scale=0.1, size=init.w_logits.shape)
        init.w_logits[np.arange(init.n_dynamic), hot] += 3.0
    for t in range(1, init.n_frames):
        init.motion.quats[t] += rng.normal(scale=0.01, size=init.motion.quats[t].shape)
        init.motion.quats[t] /= np.linalg.norm(init.motion.quats[t], axis=-1, keepdims=True)
        init.motion.trans[t] += rng.normal(scale=0.03, size=init.motion.trans[t].shape)
    for name, arr in init.param_arrays().items():
        arr[...] = snap_f32(arr)
    init.motion.quats[0] = np.array([1.0, 0.0, 0.0, 0.0])
    init.motion.trans[0] = 0.0
    return init


def write_dataset(bundle: SyntheticBundle, out_dir) -> Path:
    """Write every bundle artifact plus the dataset manifest; returns the
    manifest path."""
    out = Path(out_dir)
    for sub in ("frames", "masks", "depths", "heldout", "queries"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    t_frames = bundle.params.frames
    doc = {
        "frames": t_frames,
        "width": bundle.params.width,
        "height": bundle.params.height,
        "feature_dim": bundle.params.embed_dim,
        "gaussian_feature_dim": bundle.params.d_f,
        "clusters": bundle.params.clusters,
        "cameras": "cameras.json",
        "heldout_cameras": "heldout_cameras.json",
        "rgb": [], "dynamic_masks": [], "depths": [], "heldout_rgb": [],
        "tracks": "tracks.json",
        "features": "features.lgt",
        "feature_validity": "feature_validity.lgt",
        "index_maps": None, "codebook": None, "scene": None, "decoder": None,
        "reference_scene": "reference_scene.lgs",
        "initial_scene": "initial_scene.lgs",
        "queries": [],
        "gt_membership": "membership.json",
        "edit_videos": {},
    }
    for t in range(t_frames):
        rel = f"frames/frame_{t:03d}.png"
        formats.save_png(out / rel, bundle.gt_rgb[t])
        doc["rgb"].append(rel)
        rel = f"masks/mask_{t:03d}.lgt"
        formats.write_tensor(out / rel, bundle.dyn_mask[t], axes=["h", "w"])
        doc["dynamic_masks"].append(rel)
        rel = f"depths/depth_{t:03d}.lgt"
        formats.write_tensor(out / rel, bundle.depth[t], axes=["h", "w"])
        doc["depths"].append(rel)
    for v in range(bundle.heldout_rgb.shape[0]):
        for t in range(t_frames):
            rel = f"heldout/view{v}_frame_{t:03d}.png"
            formats.save_png(out / rel, bundle.heldout_rgb[v, t])
            doc["heldout_rgb"].append(rel)
    formats.write_cameras(out / "cameras.json", bundle.cams)
    formats.write_cameras(out / "heldout_cameras.json", bundle.heldout_cams)
    formats.write_tracks(out / "tracks.json", bundle.tracks.gaussian, bundle.tracks.px,
                         bundle.tracks.visible)
    formats.write_tensor(out / "features.lgt", bundle.features, axes=["t", "h", "w", "c"])
    formats.write_tensor(out / "feature_validity.lgt", bundle.validity, axes=["t", "h", "w"])
    formats.write_scene(out / "reference_scene.lgs", bundle.reference)
    formats.write_scene(out / "initial_scene.lgs", bundle.initial)
    for k, query in enumerate(bundle.queries):
        rel = f"queries/cluster_{k}.lgq"
        formats.write_query(out / rel, query)
        doc["queries"].append(rel)
    formats.write_membership(out / "membership.json", bundle.membership)
    if bundle.edit_video is not None:
        edit_dir = out / "edits" / bundle.edit_label
        edit_dir.mkdir(parents=True, exist_ok=True)
        for t in range(t_frames):
            formats.save_png(edit_dir / f"frame_{t:03d}.png", bundle.edit_video[t])
        doc["edit_videos"][bundle.edit_label] = f"edits/{bundle.edit_label}"
    manifest_path = out / "manifest.json"
    formats.write_manifest(manifest_path, doc)
    return manifest_path


# -------------------------------------------------------- localization fixture

@dataclass
class LocalizationFixture:
    scene: GaussianScene
    decoder: Decoder
    codebook: Codebook
    queries: list
    frames: list                   # FrameContext per supervision frame
    membership: dict               # label -> np.ndarray of member indices
    group_of_gaussian: np.ndarray
    planted_fn: dict = field(default_factory=dict)  # label -> indices pushed below tau
    planted_fp: dict = field(default_factory=dict)  # label -> indices pushed above tau
    cams: list = field(default_factory=list)


def train_feature_decoder(feats, labels, n_entries, hidden=64, seed=0, steps=400, lr=5e-3):
    """Fit the decoder to classify per-Gaussian features; used by fixtures
    to construct scenes whose features already carry clean semantics."""
    dec = Decoder.create(feats.shape[1], n_entries, hidden=hidden, seed=seed)
    opt = Adam(lr)
    n = feats.shape[0]
    onehot = np.zeros((n, n_entries))
    onehot[np.arange(n), labels] = 1.0
    for _ in range(steps):
        probs, cache = dec.forward(feats)
        d_logits = (probs - onehot) / n
        grads, _ = dec.backward(cache, d_logits)
        for name, arr in dec.params().items():
            opt.step("dec_" + name, arr, grads[name])
    return dec


def _meets_mask(scene, decoder, book, query, tau, frames_ctx, g, settings):
    """True when Gaussian g contributes meaningfully inside the current 2D
    query mask in at least one frame."""
    from .localization import query_masks

    masks = query_masks(scene, decoder, book, query, tau, frames_ctx, settings)
    for fr, m2d in zip(frames_ctx, masks):
        if not m2d.any():
            continue
        out = render(scene, fr.t, fr.cam, channels="none", settings=settings)
        if out.contributors.gaussians_touching(m2d, 1e-2)[g]:
            return True
    return False


def _push_score(feat_row, target_feat, scorer, predicate):
    """Blend feat toward target just far enough that predicate(score)
    holds: coarse scan for a bracket, then bisection, so planted rows sit
    barely across the decision boundary (their recovery distance is tiny
    no matter how far apart the prototypes are)."""
    blend = lambda g: (1 - g) * feat_row + g * target_feat
    lo, hi = 0.0, None
    for gamma in np.linspace(0.05, 1.0, 20):
        if predicate(scorer(blend(gamma))):
            hi = gamma
            break
        lo = gamma
    if hi is None:
        return target_feat.copy()
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if predicate(scorer(blend(mid))):
            hi = mid
        else:
            lo = mid
    return blend(hi)


def make_localization_fixture(seed=0, clusters=2, per_cluster=32, n_static=30, frames=3,
                              width=64, height=48, embed_dim=16, d_f=8, tau=0.95,
                              plant_fn=0.0, plant_fp=0.0, target_label="cluster-0",
                              cluster_radius=0.22,
                              settings: RenderSettings | None = None) -> LocalizationFixture:
    """Scene + trained decoder + codebook with per-frame index maps whose
    per-Gaussian scores are high for cluster members and low elsewhere;
    optionally plants false negatives/positives for the target query.
    Clusters are kept dense enough that every member's footprint overlaps
    the cluster's 2D relevance mask."""
    settings = settings or RenderSettings()
    params = DatasetParams(seed=seed, clusters=clusters, per_cluster=per_cluster,
                           n_static=n_static, frames=frames, width=width, height=height,
                           embed_dim=embed_dim, d_f=d_f)
    spec = SyntheticSpec(seed=seed, clusters=clusters, per_cluster=per_cluster,
                         n_static=n_static, frames=frames, d_f=d_f,
                         cluster_radius=cluster_radius)
    scene = new_synthetic_scene(spec)
    rng = np.random.default_rng(seed + 101)
    cams = [make_camera(width, height) for _ in range(frames)]
    groups = _gaussian_groups(params)
    group_of = np.full(scene.n_total, clusters, dtype=int)
    for k in range(clusters):
        group_of[groups[k]] = k

    prototypes = _orthonormal_prototypes(clusters + 1, embed_dim, rng)
    book = Codebook(prototypes.copy())
    decoder = train_feature_decoder(scene.feat, group_of, clusters + 1, seed=seed)

    queries = [QueryEmbedding(prototypes[k], f"cluster-{k}") for k in range(clusters)]
    membership = {f"cluster-{k}": groups[k].copy() for k in range(clusters)}

    frames_ctx = []
    for t in range(frames):
        full, alphas = _group_alphas(scene, t, cams[t], groups, settings)
        labels = _label_pixels(alphas)
        index_map = np.where(full.alpha >= 0.5, labels, INVALID_INDEX).astype(np.int32)
        frames_ctx.append(FrameContext(t, cams[t], index_map))

    fixture = LocalizationFixture(scene, decoder, book, queries, frames_ctx, membership,
                                  group_of, cams=cams)

    target_k = int(target_label.split("-")[1])
    query = queries[target_k]

    def score_of(feat_row):
        return float(scores_for_features(feat_row[None, :], decoder, book, query)[0])

    if plant_fn > 0:
        members = membership[target_label]
        n_plant = max(1, int(round(plant_fn * members.size)))
        # plant visible members (losing them leaves real holes in the
        # localized rendering, the failure mode recall repair targets), but
        # only ones whose footprint still meets the 2D query mask after
        # corruption: the recall stage can only supervise what renders
        # inside the mask, so a member that takes its whole mask region
        # down with it is unrecoverable by construction
        visibility = np.zeros(scene.n_total)
        for fr in frames_ctx:
            out = render(scene, fr.t, fr.cam, channels="none", settings=settings)
            c = out.contributors
            pixel_max = np.zeros(out.alpha.shape)
            np.maximum.at(pixel_max, (c.rows, c.cols), c.weight)
            top = c.weight >= pixel_max[c.rows, c.cols]
            np.add.at(visibility, c.gaussian[top], c.weight[top])
        order = members[np.argsort(-visibility[members], kind="stable")]
        skip = max(1, members.size // 5)
        static_feat = scene.feat[:n_static].mean(axis=0)
        chosen = []
        for g in order[skip:]:
            if len(chosen) == n_plant:
                break
            keep = scene.feat[g].copy()
            scene.feat[g] = _push_score(scene.feat[g], static_feat, score_of,
                                        lambda s: s <= tau - 0.03)
            if _meets_mask(scene, decoder, book, query, tau, frames_ctx, g, settings):
                chosen.append(g)
            else:
                scene.feat[g] = keep
        fixture.planted_fn[target_label] = np.sort(np.array(chosen, dtype=int))
    if plant_fp > 0:
        n_plant = max(1, int(round(plant_fp * n_static)))
        chosen = rng.choice(n_static, size=n_plant, replace=False)
        member_feat = scene.feat[membership[target_label]].mean(axis=0)
        for g in chosen:
            scene.feat[g] = _push_score(scene.feat[g], member_feat, score_of,
                                        lambda s: s > tau + 0.02)
        fixture.planted_fp[target_label] = np.sort(chosen)
    return fixture
