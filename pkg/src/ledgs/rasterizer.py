"""Differentiable CPU splatting of posed Gaussians.

Forward: EWA projection of each Gaussian to a screen-space ellipse
(perspective Jacobian, +blur px^2 added to the 2D covariance diagonal),
global front-to-back depth sort (camera z, ties by index), then per-tile
alpha compositing of color / feature / alpha / expected-depth channels
with shared blending weights. Per-pixel weights w_i = a_i * prod_{j<i}
(1 - a_j); splats with a_i < alpha_min are skipped (they neither composite
nor attenuate), and accumulation stops once transmittance falls below
transmittance_min; the splat that crosses the threshold still composites.

Backward: hand-derived adjoints of the full chain back to per-Gaussian
color, feature, opacity logit, posed center, posed quaternion and
log-scale. Threshold masks and the depth sort are treated as constants
(they are, almost everywhere).

Work is tiled; tiles may be evaluated by a thread pool (LEDGS_THREADS)
and per-Gaussian gradient partials are merged in fixed tile order, so
results are bit-identical for any thread count.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import quatmath as qm
from .scene import Camera, GaussianScene, sigmoid

_POOLS = {}


def _thread_count():
    return max(1, int(os.environ.get("LEDGS_THREADS", "1")))


def _pool(n):
    if n not in _POOLS:
        _POOLS[n] = ThreadPoolExecutor(max_workers=n)
    return _POOLS[n]


def _map_tiles(fn, jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    return list(_pool(threads).map(fn, jobs))


@dataclass
class RenderSettings:
    tile: int = 16
    blur: float = 0.3                 # screen-space dilation on the covariance diagonal
    alpha_clamp: float = 0.999
    alpha_min: float = 1.0 / 255.0
    transmittance_min: float = 1e-4
    z_near: float = 0.1
    sigma_cull: float = 3.0
    threads: int = field(default_factory=_thread_count)

    def smooth(self):
        """Copy with the step-discontinuity thresholds disabled; used by
        finite-difference checks."""
        return RenderSettings(self.tile, self.blur, self.alpha_clamp, 0.0, 0.0,
                              self.z_near, self.sigma_cull, self.threads)


@dataclass
class ScreenSplats:
    """Projected splats, one row per kept Gaussian (row order = input order)."""

    index: np.ndarray    # (M,) row into the projected input arrays
    mean2d: np.ndarray   # (M, 2)
    cov2d: np.ndarray    # (M, 3) upper triangle (a, b, c) after blur
    conic: np.ndarray    # (M, 3) inverse covariance (a, b, c)
    depth: np.ndarray    # (M,) camera z
    opacity: np.ndarray  # (M,) activated
    radius: np.ndarray   # (M,) cull radius in pixels
    p_cam: np.ndarray    # (M, 3) camera-space centers
    stats: dict


def project(posed, s_log, o_logit, cam: Camera, settings: RenderSettings | None = None) -> ScreenSplats:
    """EWA-project Gaussians; culls behind-camera, off-screen and degenerate
    splats (silently, counted in stats)."""
    settings = settings or RenderSettings()
    mu_t, q_t = posed.mu_t, posed.q_t
    n = mu_t.shape[0]
    p = mu_t @ cam.rotation.T + cam.translation
    z = p[:, 2]
    front = z > settings.z_near

    stats = {"n_input": n, "n_behind": int(np.sum(~front)), "n_offscreen": 0, "n_degenerate": 0}
    idx = np.nonzero(front)[0]
    p, z = p[idx], z[idx]
    x, y = p[:, 0], p[:, 1]
    fx, fy = cam.fx, cam.fy

    mean2d = np.stack([fx * x / z + cam.cx, fy * y / z + cam.cy], axis=1)

    rot = qm.quat_to_rot(qm.normalize(q_t[idx]))
    scale = np.exp(s_log[idx])
    m3 = rot * scale[:, None, :]
    sigma3 = m3 @ np.transpose(m3, (0, 2, 1))

    j = np.zeros((idx.size, 2, 3))
    j[:, 0, 0] = fx / z
    j[:, 0, 2] = -fx * x / z**2
    j[:, 1, 1] = fy / z
    j[:, 1, 2] = -fy * y / z**2
    m = j @ cam.rotation
    sigma2 = m @ sigma3 @ np.transpose(m, (0, 2, 1))
    a = sigma2[:, 0, 0] + settings.blur
    b = sigma2[:, 0, 1]
    c = sigma2[:, 1, 1] + settings.blur

    det = a * c - b * b
    good = det > 1e-12
    stats["n_degenerate"] = int(np.sum(~good))

    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 1e-12))
    radius = np.ceil(settings.sigma_cull * np.sqrt(np.maximum(lam_max, 0.0)))

    on = (
        (mean2d[:, 0] + radius >= 0) & (mean2d[:, 0] - radius <= cam.width - 1)
        & (mean2d[:, 1] + radius >= 0) & (mean2d[:, 1] - radius <= cam.height - 1)
    )
    stats["n_offscreen"] = int(np.sum(good & ~on))
    keep = good & on

    inv_det = np.where(keep, 1.0 / np.where(keep, det, 1.0), 0.0)
    conic = np.stack([c * inv_det, -b * inv_det, a * inv_det], axis=1)
    return ScreenSplats(
        index=idx[keep],
        mean2d=mean2d[keep],
        cov2d=np.stack([a, b, c], axis=1)[keep],
        conic=conic[keep],
        depth=z[keep],
        opacity=sigmoid(o_logit[idx][keep]),
        radius=radius[keep],
        p_cam=p[keep],
        stats=stats,
    )


def _tile_lists(splats, width, height, tile):
    """Per-tile lists of sorted-splat positions whose bbox meets the tile."""
    order = np.lexsort((splats.index, splats.depth))
    n_tx = (width + tile - 1) // tile
    n_ty = (height + tile - 1) // tile
    lists = [[] for _ in range(n_tx * n_ty)]
    mx, my = splats.mean2d[order, 0], splats.mean2d[order, 1]
    r = splats.radius[order]
    x0 = np.clip(np.floor(mx - r), 0, width - 1).astype(int)
    x1 = np.clip(np.floor(mx + r), 0, width - 1).astype(int)
    y0 = np.clip(np.floor(my - r), 0, height - 1).astype(int)
    y1 = np.clip(np.floor(my + r), 0, height - 1).astype(int)
    for srow in range(order.size):
        for ty in range(y0[srow] // tile, y1[srow] // tile + 1):
            for tx in range(x0[srow] // tile, x1[srow] // tile + 1):
                lists[ty * n_tx + tx].append(srow)
    rects = []
    for ty in range(n_ty):
        for tx in range(n_tx):
            rects.append((tx * tile, min((tx + 1) * tile, width), ty * tile, min((ty + 1) * tile, height)))
    return order, lists, rects


def _composite(gmat, opacity, settings):
    """Shared weight computation: alpha, transmittance-before, weights."""
    alpha = np.minimum(opacity[:, None] * gmat, settings.alpha_clamp)
    alpha = np.where(alpha >= settings.alpha_min, alpha, 0.0)
    t_bef = np.cumprod(1.0 - alpha, axis=0)
    t_bef = np.vstack([np.ones((1, alpha.shape[1])), t_bef[:-1]])
    live = t_bef >= settings.transmittance_min if settings.transmittance_min > 0 else np.ones_like(t_bef, dtype=bool)
    w = alpha * t_bef * live
    return alpha, t_bef, live, w


class Contributors:
    """Flat per-pixel contributor record: (gaussian, row, col, weight)."""

    def __init__(self, gaussian, rows, cols, weight, shape, n_gauss):
        self.gaussian = gaussian
        self.rows = rows
        self.cols = cols
        self.weight = weight
        self.shape = shape
        self.n_gauss = n_gauss

    def weight_sum_image(self):
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.weight)
        return out

    def gaussians_touching(self, pixel_mask=None, min_weight=0.0):
        """Bool (n_gauss,) marking Gaussians with a contribution above
        min_weight at any pixel (optionally restricted to pixel_mask)."""
        sel = self.weight > min_weight
        if pixel_mask is not None:
            sel &= pixel_mask[self.rows, self.cols]
        out = np.zeros(self.n_gauss, dtype=bool)
        out[self.gaussian[sel]] = True
        return out

    def pixels_touched(self, gauss_mask, min_weight=0.0):
        """Bool image marking pixels receiving any contribution above
        min_weight from Gaussians in gauss_mask."""
        sel = (self.weight > min_weight) & gauss_mask[self.gaussian]
        out = np.zeros(self.shape, dtype=bool)
        out[self.rows[sel], self.cols[sel]] = True
        return out

    def weight_split(self, pixel_mask):
        """Per-Gaussian summed contribution weight (inside, outside) the
        given pixel mask."""
        inside_sel = pixel_mask[self.rows, self.cols]
        inside = np.zeros(self.n_gauss)
        outside = np.zeros(self.n_gauss)
        np.add.at(inside, self.gaussian[inside_sel], self.weight[inside_sel])
        np.add.at(outside, self.gaussian[~inside_sel], self.weight[~inside_sel])
        return inside, outside


@dataclass
class RenderOutput:
    color: np.ndarray | None   # (H, W, 3)
    feature: np.ndarray | None  # (H, W, d_f)
    alpha: np.ndarray          # (H, W)
    depth: np.ndarray          # (H, W) expected camera-z
    stats: dict
    t: int
    cam: Camera
    _splats: ScreenSplats = None
    _order: np.ndarray = None
    _tiles: list = None        # (rect, rows, gmat) per non-empty tile
    _inputs: dict = None

    @property
    def contributors(self) -> Contributors:
        if getattr(self, "_contrib", None) is None:
            gs, rs, cs, ws = [], [], [], []
            orig = self._inputs["orig"]
            sorted_ids = orig[self._splats.index[self._order]]
            for rect, rows, gmat in self._tiles:
                x0, x1, y0, y1 = rect
                alpha, t_bef, live, w = _composite(gmat, self._splats.opacity[self._order][rows], self._inputs["settings"])
                px, py = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
                srow, pix = np.nonzero(w > 0)
                gs.append(sorted_ids[rows][srow])
                rs.append(py.ravel()[pix])
                cs.append(px.ravel()[pix])
                ws.append(w[srow, pix])
            cat = lambda parts, dt: np.concatenate(parts) if parts else np.zeros(0, dtype=dt)
            self._contrib = Contributors(
                cat(gs, int), cat(rs, int), cat(cs, int), cat(ws, float),
                self.alpha.shape, self._inputs["n_full"],
            )
        return self._contrib


def render(scene: GaussianScene, t: int, cam: Camera, channels: str = "both",
           subset=None, settings: RenderSettings | None = None,
           posed=None) -> RenderOutput:
    """Render the scene at frame t. `subset` restricts compositing to the
    given Gaussian indices (all others are excluded entirely); gradients and
    contributor records still address full-scene indices."""
    from .motion import PosedGaussians, pose_at

    settings = settings or RenderSettings()
    if channels not in ("color", "feature", "both", "none"):
        raise ValueError(f"unknown channels {channels!r}")
    if posed is None:
        posed = pose_at(scene, t)

    orig = np.arange(scene.n_total) if subset is None else np.asarray(sorted(subset), dtype=int)
    mu_t, q_t = posed.mu_t[orig], posed.q_t[orig]
    s_log, o_logit = scene.s_log[orig], scene.o_logit[orig]
    color = scene.color[orig] if channels in ("color", "both") else None
    feat = scene.feat[orig] if channels in ("feature", "both") else None

    splats = project(PosedGaussians(mu_t, q_t, t), s_log, o_logit, cam, settings)
    order, lists, rects = _tile_lists(splats, cam.width, cam.height, settings.tile)

    h, w = cam.height, cam.width
    out_color = np.zeros((h, w, 3)) if color is not None else None
    out_feat = np.zeros((h, w, feat.shape[1])) if feat is not None else None
    out_alpha = np.zeros((h, w))
    out_depth = np.zeros((h, w))

    mean_s = splats.mean2d[order]
    conic_s = splats.conic[order]
    op_s = splats.opacity[order]
    z_s = splats.depth[order]
    col_s = color[splats.index[order]] if color is not None else None
    feat_s = feat[splats.index[order]] if feat is not None else None

    jobs = [(i, rects[i], np.asarray(lists[i], dtype=int)) for i in range(len(rects)) if lists[i]]

    def run_tile(job):
        _, rect, rows = job
        x0, x1, y0, y1 = rect
        px, py = np.meshgrid(np.arange(x0, x1, dtype=float), np.arange(y0, y1, dtype=float))
        px, py = px.ravel(), py.ravel()
        dx = px[None, :] - mean_s[rows, 0][:, None]
        dy = py[None, :] - mean_s[rows, 1][:, None]
        ca, cb, cc = conic_s[rows, 0][:, None], conic_s[rows, 1][:, None], conic_s[rows, 2][:, None]
        sig = np.maximum(0.5 * (ca * dx * dx + cc * dy * dy) + cb * dx * dy, 0.0)
        gmat = np.exp(-sig)
        alpha, t_bef, live, wmat = _composite(gmat, op_s[rows], settings)
        shape = (y1 - y0, x1 - x0)
        res = {"rect": rect, "rows": rows, "gmat": gmat,
               "alpha": wmat.sum(axis=0).reshape(shape),
               "depth": (wmat * z_s[rows][:, None]).sum(axis=0).reshape(shape)}
        if col_s is not None:
            res["color"] = np.einsum("sp,sc->pc", wmat, col_s[rows]).reshape(shape + (3,))
        if feat_s is not None:
            res["feature"] = np.einsum("sp,sc->pc", wmat, feat_s[rows]).reshape(shape + (feat_s.shape[1],))
        return res

    tiles = []
    for res in _map_tiles(run_tile, jobs, settings.threads):
        x0, x1, y0, y1 = res["rect"]
        out_alpha[y0:y1, x0:x1] = res["alpha"]
        out_depth[y0:y1, x0:x1] = res["depth"]
        if out_color is not None:
            out_color[y0:y1, x0:x1] = res["color"]
        if out_feat is not None:
            out_feat[y0:y1, x0:x1] = res["feature"]
        tiles.append((res["rect"], res["rows"], res["gmat"]))

    stats = dict(splats.stats)
    stats["n_rendered"] = int(splats.index.size)
    return RenderOutput(
        color=out_color, feature=out_feat, alpha=out_alpha, depth=out_depth,
        stats=stats, t=t, cam=cam,
        _splats=splats, _order=order, _tiles=tiles,
        _inputs={"orig": orig, "n_full": scene.n_total, "mu_t": mu_t, "q_t": q_t,
                 "s_log": s_log, "o_logit": o_logit, "color": color, "feat": feat,
                 "cam": cam, "settings": settings},
    )


def render_subset(scene, t, cam, subset, channels="both", settings=None, posed=None):
    """Render only the given Gaussian index set (spec'd convenience wrapper)."""
    return render(scene, t, cam, channels=channels, subset=subset, settings=settings, posed=posed)


@dataclass
class RasterGrads:
    d_color: np.ndarray
    d_feature: np.ndarray
    d_o_logit: np.ndarray
    d_mu_t: np.ndarray
    d_q_t: np.ndarray
    d_s_log: np.ndarray
    d_mean2d: np.ndarray  # (G, 2) screen-space center gradient, pixel units


def render_backward(out: RenderOutput, d_color=None, d_feature=None,
                    d_alpha=None, d_depth=None) -> RasterGrads:
    """Backpropagate image-space gradients through compositing and
    projection. Returns full-scene-sized gradient arrays (zero rows for
    culled / excluded Gaussians)."""
    inp = out._inputs
    settings, cam = inp["settings"], inp["cam"]
    splats, order = out._splats, out._order
    m = order.size

    op_s = splats.opacity[order]
    z_s = splats.depth[order]
    col_s = inp["color"][splats.index[order]] if inp["color"] is not None and d_color is not None else None
    feat_s = inp["feat"][splats.index[order]] if inp["feat"] is not None and d_feature is not None else None

    acc = {
        "mean": np.zeros((m, 2)), "conic": np.zeros((m, 3)), "o_act": np.zeros(m),
        "z": np.zeros(m),
        "color": np.zeros((m, 3)) if col_s is not None else None,
        "feat": np.zeros((m, feat_s.shape[1])) if feat_s is not None else None,
    }

    def run_tile(tile):
        rect, rows, gmat = tile
        x0, x1, y0, y1 = rect
        np_pix = (y1 - y0) * (x1 - x0)
        alpha, t_bef, live, wmat = _composite(gmat, op_s[rows], settings)
        u = np.zeros((rows.size, np_pix))
        dc = d_color[y0:y1, x0:x1].reshape(np_pix, 3) if d_color is not None else None
        df = d_feature[y0:y1, x0:x1].reshape(np_pix, -1) if d_feature is not None else None
        da = d_alpha[y0:y1, x0:x1].reshape(np_pix) if d_alpha is not None else None
        dd = d_depth[y0:y1, x0:x1].reshape(np_pix) if d_depth is not None else None
        if dc is not None:
            u += col_s[rows] @ dc.T
        if df is not None:
            u += feat_s[rows] @ df.T
        if da is not None:
            u += da[None, :]
        if dd is not None:
            u += z_s[rows][:, None] * dd[None, :]

        v = wmat * u
        suffix = v[::-1].cumsum(axis=0)[::-1] - v  # sum over later splats
        active = alpha > 0
        d_al = (t_bef * u - suffix / (1.0 - alpha)) * (active & live)

        raw = op_s[rows][:, None] * gmat
        unclamped = raw < settings.alpha_clamp
        d_g = d_al * op_s[rows][:, None] * unclamped
        d_sig = -d_g * gmat

        px, py = np.meshgrid(np.arange(x0, x1, dtype=float), np.arange(y0, y1, dtype=float))
        px, py = px.ravel(), py.ravel()
        mean_rows = splats.mean2d[order][rows]
        dx = px[None, :] - mean_rows[:, 0][:, None]
        dy = py[None, :] - mean_rows[:, 1][:, None]
        conic_rows = splats.conic[order][rows]
        ad_x = conic_rows[:, 0][:, None] * dx + conic_rows[:, 1][:, None] * dy
        ad_y = conic_rows[:, 1][:, None] * dx + conic_rows[:, 2][:, None] * dy

        res = {"rows": rows}
        res["mean"] = np.stack([-(d_sig * ad_x).sum(1), -(d_sig * ad_y).sum(1)], axis=1)
        res["conic"] = np.stack([
            0.5 * (d_sig * dx * dx).sum(1),
            (d_sig * dx * dy).sum(1),
            0.5 * (d_sig * dy * dy).sum(1),
        ], axis=1)
        res["o_act"] = (d_al * gmat * unclamped).sum(1)
        res["z"] = wmat @ dd if dd is not None else np.zeros(rows.size)
        if dc is not None:
            res["color"] = wmat @ dc
        if df is not None:
            res["feat"] = wmat @ df
        return res

    for res in _map_tiles(run_tile, out._tiles, settings.threads):
        rows = res["rows"]
        for key in ("mean", "conic", "o_act", "z", "color", "feat"):
            if res.get(key) is not None and acc[key] is not None:
                acc[key][rows] += res[key]

    # ---- projection backward (vectorized over sorted splats) ----
    idx = splats.index[order]
    q_t, s_log = inp["q_t"][idx], inp["s_log"][idx]
    p = splats.p_cam[order]
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    fx, fy = cam.fx, cam.fy
    wrot = cam.rotation

    qn = qm.normalize(q_t)
    rot = qm.quat_to_rot(qn)
    scale = np.exp(s_log)
    m3 = rot * scale[:, None, :]
    sigma3 = m3 @ np.transpose(m3, (0, 2, 1))
    j = np.zeros((m, 2, 3))
    j[:, 0, 0] = fx / z
    j[:, 0, 2] = -fx * x / z**2
    j[:, 1, 1] = fy / z
    j[:, 1, 2] = -fy * y / z**2
    mmat = j @ wrot

    conic_mat = np.zeros((m, 2, 2))
    conic_mat[:, 0, 0] = splats.conic[order][:, 0]
    conic_mat[:, 0, 1] = conic_mat[:, 1, 0] = splats.conic[order][:, 1]
    conic_mat[:, 1, 1] = splats.conic[order][:, 2]

    g_a = np.zeros((m, 2, 2))
    g_a[:, 0, 0] = acc["conic"][:, 0]
    g_a[:, 0, 1] = g_a[:, 1, 0] = 0.5 * acc["conic"][:, 1]
    g_a[:, 1, 1] = acc["conic"][:, 2]
    d_cov_mat = -conic_mat @ g_a @ conic_mat

    g_s2 = np.zeros((m, 2, 2))
    g_s2[:, 0, 0] = d_cov_mat[:, 0, 0]
    g_s2[:, 0, 1] = g_s2[:, 1, 0] = 0.5 * (d_cov_mat[:, 0, 1] + d_cov_mat[:, 1, 0])
    g_s2[:, 1, 1] = d_cov_mat[:, 1, 1]

    d_m = 2.0 * g_s2 @ mmat @ sigma3
    d_sigma3 = np.transpose(mmat, (0, 2, 1)) @ g_s2 @ mmat
    d_m3 = 2.0 * d_sigma3 @ m3
    d_rot = d_m3 * scale[:, None, :]
    d_scale = np.einsum("mij,mij->mj", rot, d_m3)
    d_s_log_rows = d_scale * scale
    d_qn = qm.rot_backward(qn, d_rot)
    d_q_rows = qm.normalize_backward(q_t, d_qn)
    d_j = d_m @ wrot.T

    du, dv = acc["mean"][:, 0], acc["mean"][:, 1]
    z2, z3 = z * z, z**3
    dp = np.zeros((m, 3))
    dp[:, 0] = du * fx / z + d_j[:, 0, 2] * (-fx / z2)
    dp[:, 1] = dv * fy / z + d_j[:, 1, 2] * (-fy / z2)
    dp[:, 2] = (
        du * (-fx * x / z2) + dv * (-fy * y / z2)
        + d_j[:, 0, 0] * (-fx / z2) + d_j[:, 1, 1] * (-fy / z2)
        + d_j[:, 0, 2] * (2 * fx * x / z3) + d_j[:, 1, 2] * (2 * fy * y / z3)
        + acc["z"]
    )
    d_mu_rows = dp @ wrot

    o_act = op_s
    d_o_logit_rows = acc["o_act"] * o_act * (1.0 - o_act)

    # scatter into full-scene arrays
    n_full = inp["n_full"]
    full_ids = inp["orig"][idx]
    d_f_dim = inp["feat"].shape[1] if inp["feat"] is not None else 0
    grads = RasterGrads(
        d_color=np.zeros((n_full, 3)),
        d_feature=np.zeros((n_full, d_f_dim)) if d_f_dim else np.zeros((n_full, 0)),
        d_o_logit=np.zeros(n_full),
        d_mu_t=np.zeros((n_full, 3)),
        d_q_t=np.zeros((n_full, 4)),
        d_s_log=np.zeros((n_full, 3)),
        d_mean2d=np.zeros((n_full, 2)),
    )
    if acc["color"] is not None:
        grads.d_color[full_ids] = acc["color"]
    if acc["feat"] is not None:
        grads.d_feature[full_ids] = acc["feat"]
    grads.d_o_logit[full_ids] = d_o_logit_rows
    grads.d_mu_t[full_ids] = d_mu_rows
    grads.d_q_t[full_ids] = d_q_rows
    grads.d_s_log[full_ids] = d_s_log_rows
    grads.d_mean2d[full_ids] = acc["mean"]
    return grads


def project_points(points, cam: Camera):
    """Pinhole-project world points; returns (uv, z, cache) with uv in pixels."""
    p = points @ cam.rotation.T + cam.translation
    z = p[:, 2]
    uv = np.stack([cam.fx * p[:, 0] / z + cam.cx, cam.fy * p[:, 1] / z + cam.cy], axis=1)
    return uv, z, {"p": p, "cam": cam}


def project_points_backward(cache, d_uv):
    """Gradient of projected pixel positions w.r.t. the world points."""
    p, cam = cache["p"], cache["cam"]
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    dp = np.zeros_like(p)
    dp[:, 0] = d_uv[:, 0] * cam.fx / z
    dp[:, 1] = d_uv[:, 1] * cam.fy / z
    dp[:, 2] = -d_uv[:, 0] * cam.fx * x / z**2 - d_uv[:, 1] * cam.fy * y / z**2
    return dp @ cam.rotation
