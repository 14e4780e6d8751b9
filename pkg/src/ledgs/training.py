"""End-to-end optimization of the language-embedded dynamic scene and
gradient-masked localized editing.

The joint objective is lambda_rec * L_rec + lambda_lang * L_lang. L_rec
combines mean-L1 RGB, dynamic-mask (rendered dynamic-only alpha vs the
supervision mask), expected-depth and 2D-track terms; the language term is
mean cross-entropy between decoded rendered features and the stored index
maps. Editing minimizes mean squared error against a reference video while
only the localized Gaussians' parameters receive updates; everything else
is bit-identical afterwards.
"""

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import formats
from .motion import motion_gradients, pose_at
from .optim import Adam
from .quantizer import INVALID_INDEX
from .rasterizer import (RenderSettings, project_points, project_points_backward,
                         render, render_backward)
from .scene import GaussianScene
from .semantics import Decoder, decode_gaussians, lang_loss


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class RecWeights:
    rgb: float = 1.0
    mask: float = 0.5
    depth: float = 0.5
    track: float = 2.0


@dataclass
class LearningRates:
    geometry: float = 1.6e-4
    color: float = 2.5e-3
    feature: float = 2.5e-3
    opacity: float = 5e-2
    motion: float = 1.6e-4
    decoder: float = 1e-3


@dataclass
class DensifyConfig:
    interval: int = 100
    grad_threshold: float = 2e-4   # on accumulated screen-space (NDC) gradient norm
    opacity_floor: float = 5e-3
    stop_fraction: float = 0.5    # densify only during this first fraction of epochs
    scale_threshold: float = 0.05  # clone below, split above
    split_scale: float = 1.6
    warmup: int = 500              # steps before the first densify pass


@dataclass
class TrainConfig:
    lambda_rec: float = 1.0
    lambda_lang: float = 1.0
    epochs: int = 500
    lr: LearningRates = field(default_factory=LearningRates)
    rec: RecWeights = field(default_factory=RecWeights)
    densify: DensifyConfig | None = field(default_factory=DensifyConfig)
    seed: int = 0

    def to_dict(self):
        doc = asdict(self)
        return doc

    @classmethod
    def from_dict(cls, doc):
        cfg = cls()
        for key, value in doc.items():
            if key == "lr":
                cfg.lr = LearningRates(**value)
            elif key == "rec":
                cfg.rec = RecWeights(**value)
            elif key == "densify":
                cfg.densify = DensifyConfig(**value) if value is not None else None
            elif hasattr(cfg, key):
                setattr(cfg, key, value)
        return cfg


@dataclass
class TrackTable:
    gaussian: np.ndarray  # (K,) scene indices
    px: np.ndarray        # (T, K, 2) target pixels
    visible: np.ndarray   # (T, K) bool

    @property
    def n_tracks(self):
        return self.gaussian.size


@dataclass
class SupervisionStack:
    rgb: np.ndarray                 # (T, H, W, 3)
    cams: list
    dyn_mask: np.ndarray | None = None    # (T, H, W)
    depth: np.ndarray | None = None       # (T, H, W)
    tracks: TrackTable | None = None
    index_maps: np.ndarray | None = None  # (T, H, W) int32

    @property
    def n_frames(self):
        return self.rgb.shape[0]

    def check(self):
        t, h, w = self.rgb.shape[:3]
        if len(self.cams) != t:
            raise ValueError("camera count != frame count")
        for name in ("dyn_mask", "depth", "index_maps"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[:3] != (t, h, w):
                raise ValueError(f"{name} shape mismatch")
        if self.tracks is not None:
            if self.tracks.px.shape[0] != t:
                raise ValueError("track table frame count mismatch")
            vis = self.tracks.visible
            inside = ((self.tracks.px[..., 0] >= 0) & (self.tracks.px[..., 0] <= w - 1)
                      & (self.tracks.px[..., 1] >= 0) & (self.tracks.px[..., 1] <= h - 1))
            if np.any(vis & ~inside):
                raise ValueError("visible track pixels fall outside the image")


def load_supervision(manifest: formats.Manifest) -> SupervisionStack:
    """Assemble the training inputs referenced by a dataset manifest."""
    rgb = np.stack([formats.load_png(p) for p in manifest.path_list("rgb")])
    cams = formats.read_cameras(manifest.path("cameras"))
    dyn_mask = depth = index_maps = tracks = None
    if manifest.get("dynamic_masks"):
        dyn_mask = np.stack([formats.read_tensor(p)[0].astype(np.float64) for p in manifest.path_list("dynamic_masks")])
    if manifest.get("depths"):
        depth = np.stack([formats.read_tensor(p)[0].astype(np.float64) for p in manifest.path_list("depths")])
    if manifest.get("index_maps"):
        index_maps = formats.read_tensor(manifest.path("index_maps"))[0].astype(np.int32)
    if manifest.get("tracks"):
        gaussian, px, visible = formats.read_tracks(manifest.path("tracks"))
        tracks = TrackTable(gaussian, px, visible)
    sup = SupervisionStack(rgb=rgb, cams=cams, dyn_mask=dyn_mask, depth=depth,
                           tracks=tracks, index_maps=index_maps)
    sup.check()
    return sup


# ----------------------------------------------------------------- rec loss

@dataclass
class RecLossResult:
    total: float
    parts: dict
    d_color: np.ndarray | None
    d_alpha_dyn: np.ndarray | None
    d_depth: np.ndarray | None
    d_track_uv: np.ndarray | None  # (K, 2), zero rows for non-visible tracks


def rec_loss(out_full, dyn_alpha, track_uv, supervision: SupervisionStack, t: int,
             weights: RecWeights | None = None) -> RecLossResult:
    """Reconstruction loss at frame t with gradients for every rendered
    channel it touches. Missing supervision channels are skipped with a
    warning; weights multiply each term into the total."""
    w = weights or RecWeights()
    parts = {}
    gt_rgb = supervision.rgb[t]
    diff = out_full.color - gt_rgb
    parts["rgb"] = float(np.mean(np.abs(diff)))
    d_color = w.rgb * np.sign(diff) / diff.size

    d_alpha_dyn = None
    if supervision.dyn_mask is not None and dyn_alpha is not None:
        mdiff = dyn_alpha - supervision.dyn_mask[t]
        parts["mask"] = float(np.mean(np.abs(mdiff)))
        d_alpha_dyn = w.mask * np.sign(mdiff) / mdiff.size
    else:
        if supervision.dyn_mask is None:
            warnings.warn("rec_loss: no dynamic-mask supervision, term skipped")

    d_depth = None
    if supervision.depth is not None:
        gt_d = supervision.depth[t]
        valid = gt_d > 0
        n_valid = int(valid.sum())
        if n_valid:
            ddiff = np.where(valid, out_full.depth - gt_d, 0.0)
            parts["depth"] = float(np.sum(np.abs(ddiff)) / n_valid)
            d_depth = w.depth * np.sign(ddiff) / n_valid
        else:
            parts["depth"] = 0.0
    else:
        warnings.warn("rec_loss: no depth supervision, term skipped")

    d_track = None
    if supervision.tracks is not None and track_uv is not None:
        vis = supervision.tracks.visible[t]
        d_track = np.zeros_like(track_uv)
        if vis.any():
            delta = track_uv[vis] - supervision.tracks.px[t][vis]
            dist = np.linalg.norm(delta, axis=1)
            parts["track"] = float(np.mean(dist))
            safe = np.maximum(dist, 1e-12)[:, None]
            d_track[vis] = w.track * (delta / safe) / vis.sum()
        else:
            parts["track"] = 0.0
    else:
        if supervision.tracks is None:
            warnings.warn("rec_loss: no track supervision, term skipped")

    total = (w.rgb * parts.get("rgb", 0.0) + w.mask * parts.get("mask", 0.0)
             + w.depth * parts.get("depth", 0.0) + w.track * parts.get("track", 0.0))
    return RecLossResult(total, parts, d_color, d_alpha_dyn, d_depth, d_track)


def _first_nonfinite(named):
    for name, value in named:
        if value is None:
            continue
        arr = np.asarray(value)
        if not np.all(np.isfinite(arr)):
            return name
    return None


# ------------------------------------------------------------------- train

@dataclass
class TrainResult:
    scene: GaussianScene
    decoder: Decoder
    log: list


def train(scene: GaussianScene, decoder: Decoder, codebook, supervision: SupervisionStack,
          cfg: TrainConfig, settings: RenderSettings | None = None) -> TrainResult:
    """Joint optimization (Adam per parameter group); densify/prune on the
    configured schedule; quaternions renormalized after every step."""
    supervision.check()
    if codebook is not None:
        if decoder.n_entries != codebook.n_entries:
            raise ValueError("decoder output dimension does not match the codebook")
        if supervision.index_maps is not None and supervision.index_maps.max() >= codebook.n_entries:
            raise ValueError("index maps reference entries outside the codebook")
    scene = scene.copy()
    decoder = decoder.copy()
    if supervision.tracks is not None:
        # densification remaps track indices; never mutate the caller's stack
        supervision = SupervisionStack(
            rgb=supervision.rgb, cams=supervision.cams, dyn_mask=supervision.dyn_mask,
            depth=supervision.depth, index_maps=supervision.index_maps,
            tracks=TrackTable(supervision.tracks.gaussian.copy(),
                              supervision.tracks.px.copy(),
                              supervision.tracks.visible.copy()),
        )
    settings = settings or RenderSettings()
    opt = Adam(1.0)
    rng = np.random.default_rng(cfg.seed)
    lrs = cfg.lr
    log = []
    n_frames = supervision.n_frames
    grad_accum = np.zeros(scene.n_total)
    accum_steps = 0
    step = 0

    for epoch in range(cfg.epochs):
        sums = {}
        for t in range(n_frames):
            cam = supervision.cams[t]
            posed = pose_at(scene, t)
            out_full = render(scene, t, cam, channels="both", settings=settings, posed=posed)
            dyn_alpha = None
            out_dyn = None
            if supervision.dyn_mask is not None and scene.n_dynamic > 0:
                out_dyn = render(scene, t, cam, channels="none", subset=scene.dynamic_indices,
                                 settings=settings, posed=posed)
                dyn_alpha = out_dyn.alpha
            track_uv = pcache = None
            if supervision.tracks is not None and supervision.tracks.n_tracks:
                track_uv, _, pcache = project_points(posed.mu_t[supervision.tracks.gaussian], cam)

            rec = rec_loss(out_full, dyn_alpha, track_uv, supervision, t, cfg.rec)
            lang = None
            if cfg.lambda_lang > 0 and supervision.index_maps is not None:
                valid = out_full.alpha >= 0.5
                lang = lang_loss(out_full.feature, decoder, supervision.index_maps[t], valid)

            loss_t = cfg.lambda_rec * rec.total + (cfg.lambda_lang * lang.value if lang else 0.0)
            bad = _first_nonfinite([("total", loss_t)] + list(rec.parts.items())
                                   + ([("lang", lang.value)] if lang else []))
            if bad is not None:
                raise TrainingDivergedError(f"non-finite loss term '{bad}' at epoch {epoch} frame {t}")

            g_full = render_backward(
                out_full,
                d_color=cfg.lambda_rec * rec.d_color,
                d_feature=cfg.lambda_lang * lang.d_input if lang else None,
                d_depth=cfg.lambda_rec * rec.d_depth if rec.d_depth is not None else None,
            )
            d_mu_t, d_q_t = g_full.d_mu_t, g_full.d_q_t
            d_s, d_o = g_full.d_s_log, g_full.d_o_logit
            d_c, d_f = g_full.d_color, g_full.d_feature
            d_screen = g_full.d_mean2d
            if out_dyn is not None and rec.d_alpha_dyn is not None:
                g_dyn = render_backward(out_dyn, d_alpha=cfg.lambda_rec * rec.d_alpha_dyn)
                d_mu_t = d_mu_t + g_dyn.d_mu_t
                d_q_t = d_q_t + g_dyn.d_q_t
                d_s = d_s + g_dyn.d_s_log
                d_o = d_o + g_dyn.d_o_logit
                d_screen = d_screen + g_dyn.d_mean2d
            if pcache is not None and rec.d_track_uv is not None:
                d_mu_t = d_mu_t.copy()
                np.add.at(d_mu_t, supervision.tracks.gaussian,
                          cfg.lambda_rec * project_points_backward(pcache, rec.d_track_uv))

            bad = _first_nonfinite([("d_mu_t", d_mu_t), ("d_q_t", d_q_t), ("d_s_log", d_s),
                                    ("d_o_logit", d_o), ("d_color", d_c), ("d_feature", d_f)])
            if bad is not None:
                raise TrainingDivergedError(f"non-finite gradient '{bad}' at epoch {epoch} frame {t}")

            mg = motion_gradients(scene, posed, d_mu_t, d_q_t)

            opt.step("mu", scene.mu, mg.d_mu, lr=lrs.geometry)
            opt.step("q", scene.q, mg.d_q, lr=lrs.geometry)
            opt.step("s_log", scene.s_log, d_s, lr=lrs.geometry)
            opt.step("o_logit", scene.o_logit, d_o, lr=lrs.opacity)
            opt.step("color", scene.color, d_c, lr=lrs.color)
            if lang:
                opt.step("feat", scene.feat, d_f, lr=lrs.feature)
                for name, garr in lang.d_params.items():
                    opt.step("dec_" + name, getattr(decoder, name),
                             cfg.lambda_lang * garr, lr=lrs.decoder)
            if scene.n_dynamic:
                opt.step("w_logits", scene.w_logits, mg.d_w_logits, lr=lrs.motion)
            if t > 0:
                gq = np.zeros_like(scene.motion.quats)
                gq[t] = mg.d_basis_quats
                gt_ = np.zeros_like(scene.motion.trans)
                gt_[t] = mg.d_basis_trans
                opt.step("basis_quats", scene.motion.quats, gq, rows=np.array([t]), lr=lrs.motion)
                opt.step("basis_trans", scene.motion.trans, gt_, rows=np.array([t]), lr=lrs.motion)
                scene.motion.quats[t] /= np.linalg.norm(scene.motion.quats[t], axis=-1, keepdims=True)

            scene.q /= np.linalg.norm(scene.q, axis=1, keepdims=True)
            np.clip(scene.color, 0.0, 1.0, out=scene.color)

            # densify signal: screen-space gradient norm in NDC units (3DGS convention)
            grad_accum += np.linalg.norm(d_screen * np.array([cam.width / 2.0, cam.height / 2.0]), axis=1)
            accum_steps += 1
            step += 1
            sums["total"] = sums.get("total", 0.0) + loss_t
            for key, value in rec.parts.items():
                sums[key] = sums.get(key, 0.0) + value
            if lang:
                sums["lang"] = sums.get("lang", 0.0) + lang.value

            if cfg.densify is not None and step % cfg.densify.interval == 0:
                if step > cfg.densify.warmup and epoch < cfg.epochs * cfg.densify.stop_fraction:
                    scene, grad_accum, accum_steps = _densify_and_prune(
                        scene, opt, supervision, grad_accum / max(accum_steps, 1), cfg.densify, rng)
                else:
                    # densify statistics are per interval window
                    grad_accum = np.zeros(scene.n_total)
                    accum_steps = 0

        log.append({"epoch": epoch, **{k: v / n_frames for k, v in sums.items()},
                    "n_gaussians": scene.n_total})
    return TrainResult(scene, decoder, log)


def _densify_and_prune(scene, opt, supervision, avg_grad, dcfg, rng):
    """Clone small / split large high-gradient Gaussians, prune transparent
    ones. Children inherit every attribute (including features and basis
    weights); optimizer state rows follow the row permutation, fresh rows
    start from zero state."""
    ns = scene.n_static
    grow = avg_grad > dcfg.grad_threshold
    max_scale = scene.scales().max(axis=1)
    clone = grow & (max_scale <= dcfg.scale_threshold)
    split = grow & (max_scale > dcfg.scale_threshold)
    prune = scene.opacities() < dcfg.opacity_floor
    split &= ~prune
    clone &= ~prune
    if not (clone.any() or split.any() or prune.any()):
        return scene, np.zeros(scene.n_total), 0

    keep = ~(prune | split)
    params = {k: v for k, v in scene.param_arrays().items()
              if k not in ("basis_quats", "basis_trans")}

    def block_plan(lo, hi):
        kept = [i for i in range(lo, hi) if keep[i]]
        children = []
        for i in range(lo, hi):
            if clone[i]:
                children.append(("clone", i))
            elif split[i]:
                children.extend([("split", i), ("split", i)])
        return kept, children

    kept_s, child_s = block_plan(0, ns)
    kept_d, child_d = block_plan(ns, scene.n_total)

    from . import quatmath as qm
    rot_all = qm.quat_to_rot(qm.normalize(scene.q))
    scale_all = scene.scales()

    def make_rows(entries):
        rows = {k: [] for k in params}
        for kind, i in entries:
            for key, arr in params.items():
                if key == "w_logits":
                    continue
                rows[key].append(arr[i].copy() if arr.ndim > 1 else arr[i])
            if kind == "split":
                noise = rng.normal(size=3)
                rows["mu"][-1] = scene.mu[i] + rot_all[i] @ (scale_all[i] * noise)
                rows["s_log"][-1] = scene.s_log[i] - np.log(dcfg.split_scale)
        return rows

    rows_s = make_rows(child_s)
    rows_d = make_rows(child_d)

    source = np.array(kept_s + [-1] * len(child_s) + kept_d + [-1] * len(child_d), dtype=int)
    new_arrays = {}
    for key, arr in params.items():
        if key == "w_logits":
            continue
        parts = [arr[kept_s]]
        if child_s:
            parts.append(np.array(rows_s[key]).reshape((len(child_s),) + arr.shape[1:]))
        parts.append(arr[kept_d])
        if child_d:
            parts.append(np.array(rows_d[key]).reshape((len(child_d),) + arr.shape[1:]))
        new_arrays[key] = np.concatenate(parts)

    # dynamic-local weight logits follow the dynamic block plan
    dyn_kept = [i - ns for i in kept_d]
    w_parts = [scene.w_logits[dyn_kept]]
    if child_d:
        w_parts.append(np.stack([scene.w_logits[i - ns] for _, i in child_d]))
    new_w = np.concatenate(w_parts) if scene.n_dynamic else scene.w_logits

    old_to_new = np.full(scene.n_total, -1, dtype=int)
    for new_i, old_i in enumerate(source):
        if old_i >= 0:
            old_to_new[old_i] = new_i
    # tracked Gaussians that split follow their first child
    first_child = {}
    for pos, (kind, i) in enumerate(child_s):
        if kind == "split" and i not in first_child:
            first_child[i] = len(kept_s) + pos
    dyn_child_base = len(kept_s) + len(child_s) + len(kept_d)
    for pos, (kind, i) in enumerate(child_d):
        if kind == "split" and i not in first_child:
            first_child[i] = dyn_child_base + pos
    for old_i, new_i in first_child.items():
        if old_to_new[old_i] < 0:
            old_to_new[old_i] = new_i

    for key in params:
        if key == "w_logits":
            continue
        opt.remap_rows(key, source)
    dyn_source = np.array(dyn_kept + [-1] * len(child_d), dtype=int)
    opt.remap_rows("w_logits", dyn_source)

    if supervision.tracks is not None and supervision.tracks.n_tracks:
        mapped = old_to_new[supervision.tracks.gaussian]
        lost = mapped < 0
        if lost.any():
            warnings.warn(f"densify: {int(lost.sum())} tracked Gaussian(s) pruned; tracks dropped")
        keep_tr = ~lost
        supervision.tracks.gaussian = mapped[keep_tr]
        supervision.tracks.px = supervision.tracks.px[:, keep_tr]
        supervision.tracks.visible = supervision.tracks.visible[:, keep_tr]

    new_scene = GaussianScene(
        mu=new_arrays["mu"], q=new_arrays["q"], s_log=new_arrays["s_log"],
        o_logit=new_arrays["o_logit"], color=new_arrays["color"], feat=new_arrays["feat"],
        n_static=len(kept_s) + len(child_s), w_logits=new_w, motion=scene.motion,
        codebook_ref=scene.codebook_ref, seed=scene.seed,
    )
    return new_scene, np.zeros(new_scene.n_total), 0


# -------------------------------------------------------------------- edit

def edit_loss(rendered, reference):
    """Mean squared error over frames x pixels x channels, with gradient."""
    rendered = np.asarray(rendered, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if rendered.shape != reference.shape:
        raise ValueError("edit_loss shape mismatch")
    diff = rendered - reference
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def edit(scene: GaussianScene, l3d, v_edit, cams, k_epochs: int,
         mode: str = "full", lr: LearningRates | None = None,
         settings: RenderSettings | None = None):
    """Optimize only the Gaussians in l3d against the reference video.

    mode "full" updates color, feature, opacity, scale and canonical
    position/rotation of the selected set; "color" restricts to color.
    Everything else (non-selected Gaussians, motion bases) is untouched,
    bit for bit. Returns (edited scene, per-epoch loss log).
    """
    if mode not in ("full", "color"):
        raise ValueError(f"unknown edit mode {mode!r}")
    scene = scene.copy()
    l3d = np.asarray(sorted(l3d), dtype=int)
    log = []
    if l3d.size == 0:
        warnings.warn("edit: empty localized set, nothing to do")
        return scene, log
    v_edit = np.asarray(v_edit, dtype=np.float64)
    if v_edit.shape[0] != len(cams):
        raise ValueError("reference video frame count != camera count")
    settings = settings or RenderSettings()
    lrs = lr or LearningRates()
    opt = Adam(1.0)
    sel = np.zeros(scene.n_total, dtype=bool)
    sel[l3d] = True
    sel_dyn = sel[scene.n_static:]

    for epoch in range(k_epochs):
        total = 0.0
        for t in range(v_edit.shape[0]):
            posed = pose_at(scene, t)
            out = render(scene, t, cams[t], channels="color", settings=settings, posed=posed)
            loss, d_img = edit_loss(out.color, v_edit[t])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite edit loss at epoch {epoch} frame {t}")
            total += loss
            g = render_backward(out, d_color=d_img)
            opt.step("color", scene.color, g.d_color, rows=sel, lr=lrs.color)
            if mode == "full":
                mg = motion_gradients(scene, posed, g.d_mu_t, g.d_q_t)
                opt.step("mu", scene.mu, mg.d_mu, rows=sel, lr=lrs.geometry)
                q_before = scene.q[sel]
                opt.step("q", scene.q, mg.d_q, rows=sel, lr=lrs.geometry)
                opt.step("s_log", scene.s_log, g.d_s_log, rows=sel, lr=lrs.geometry)
                opt.step("o_logit", scene.o_logit, g.d_o_logit, rows=sel, lr=lrs.opacity)
                # renormalize only rows the step actually moved, so a
                # zero-gradient edit is an exact fixed point
                q_rows = scene.q[sel]
                moved = np.any(q_rows != q_before, axis=1)
                if moved.any():
                    q_rows[moved] /= np.linalg.norm(q_rows[moved], axis=1, keepdims=True)
                    scene.q[sel] = q_rows
            scene.color[sel] = np.clip(scene.color[sel], 0.0, 1.0)
        log.append({"epoch": epoch, "edit_loss": total / v_edit.shape[0]})
    return scene, log


# -------------------------------------------------------------- evaluation

def decoded_index_accuracy(scene, decoder: Decoder, supervision: SupervisionStack,
                           settings: RenderSettings | None = None, min_weight: float = 1e-3):
    """Fraction of visible Gaussians whose decoded argmax matches the
    index-map target voted over the pixels they dominate.

    A Gaussian collects votes only at pixels where it is the top
    contributor (that is where it is actually seen; residual weight left
    under another object's silhouette would misattribute that object's
    label to the occluded Gaussian). Gaussians dominating no labeled pixel
    in any frame do not count as visible. Returns (accuracy, n_visible).
    """
    if supervision.index_maps is None:
        raise ValueError("index maps required")
    votes = np.zeros((scene.n_total, decoder.n_entries))
    for t in range(supervision.n_frames):
        out = render(scene, t, supervision.cams[t], channels="none", settings=settings)
        c = out.contributors
        pixel_max = np.zeros(out.alpha.shape)
        np.maximum.at(pixel_max, (c.rows, c.cols), c.weight)
        target = supervision.index_maps[t][c.rows, c.cols]
        ok = ((c.weight > min_weight) & (target != INVALID_INDEX)
              & (c.weight >= pixel_max[c.rows, c.cols]))
        np.add.at(votes, (c.gaussian[ok], target[ok]), c.weight[ok])
    visible = votes.sum(axis=1) > 0
    if not visible.any():
        return 0.0, 0
    expected = np.argmax(votes, axis=1)
    decoded = np.argmax(decode_gaussians(scene.feat, decoder), axis=1)
    acc = float(np.mean(decoded[visible] == expected[visible]))
    return acc, int(visible.sum())
