"""Command-line surface.

Subcommands: gen-synthetic, quantize, train, localize, render, edit, eval.
Every command echoes its flags into <out>/run_manifest.json, writes its
artifacts under --out, and exits non-zero on any error. Report-style
commands write a CSV table plus a matplotlib figure next to the primary
outputs. LEDGS_THREADS overrides the rasterizer thread count.
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import formats, report
from .localization import FrameContext, localize_refined
from .metrics import PSNR_CAP_DB, feature_dir_sim, miou, psnr
from .quantizer import FeatureStack, learn_codebook, quant_loss
from .rasterizer import render
from .semantics import Decoder
from .synthetic import DatasetParams, build_bundle, write_dataset
from .training import TrainConfig, edit, load_supervision, train


class CliError(RuntimeError):
    pass


def _parse_size(text):
    w, h = text.lower().split("x")
    return int(w), int(h)


def _parse_range(text, upper):
    if ":" in text:
        lo, hi = text.split(":")
        return range(int(lo or 0), int(hi or upper))
    return range(int(text), int(text) + 1)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


_MANIFEST_LISTS = ("rgb", "dynamic_masks", "depths", "heldout_rgb", "queries")
_MANIFEST_SINGLES = ("cameras", "tracks", "features", "feature_validity", "reference_scene",
                     "initial_scene", "heldout_cameras", "gt_membership", "index_maps",
                     "codebook", "scene", "decoder")


def _rebased_manifest(manifest, out):
    """Copy a manifest document with every referenced path rewritten
    relative to the new output directory."""
    import os

    out = Path(out).resolve()
    root = manifest.root.resolve()

    def rebase(rel):
        return os.path.relpath(root / rel, out)

    doc = dict(manifest.doc)
    for key in _MANIFEST_LISTS:
        doc[key] = [rebase(p) for p in manifest.doc.get(key, [])]
    for key in _MANIFEST_SINGLES:
        if manifest.doc.get(key):
            doc[key] = rebase(manifest.doc[key])
    doc["edit_videos"] = {k: rebase(v) for k, v in manifest.get("edit_videos", {}).items()}
    return doc


def _echo(args, command, out):
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    formats.write_run_manifest(out, command, flags)


def cmd_gen_synthetic(args):
    out = _out_dir(args)
    width, height = _parse_size(args.size)
    params = DatasetParams(seed=args.seed, clusters=args.clusters,
                           per_cluster=args.gaussians_per_cluster, n_static=args.static,
                           frames=args.frames, bases=args.bases, d_f=args.df,
                           embed_dim=args.feature_dim, width=width, height=height,
                           noise_deg=args.noise_deg, heldout_views=args.heldout)
    bundle = build_bundle(params)
    manifest_path = write_dataset(bundle, out)
    _echo(args, "gen-synthetic", out)
    print(f"dataset written: {manifest_path}")
    return 0


def cmd_quantize(args):
    out = _out_dir(args)
    manifest = formats.load_manifest(args.manifest)
    features = formats.read_tensor(manifest.path("features"))[0].astype(np.float64)
    valid = formats.read_tensor(manifest.path("feature_validity"))[0].astype(bool)
    stack = FeatureStack(features, valid)
    book, idxs = learn_codebook(stack, args.n, epochs=args.epochs, lr=args.lr, seed=args.seed)
    final_loss = quant_loss(stack, book, idxs)
    formats.write_codebook(out / "codebook.lgb", book)
    formats.write_tensor(out / "index_maps.lgt", idxs.indices, axes=["t", "h", "w"])
    doc = _rebased_manifest(manifest, out)
    doc["codebook"] = "codebook.lgb"
    doc["index_maps"] = "index_maps.lgt"
    formats.write_manifest(out / "manifest.json", doc)
    stats = {k: v for k, v in idxs.stats.items() if k != "loss_history"}
    formats.write_jsonl(out / "quantize_log.jsonl",
                        [{"alternation": i, "loss": v} for i, v in enumerate(idxs.stats["loss_history"])])
    _echo(args, "quantize", out)
    print(f"final quantization loss: {final_loss:.6f}  (stats: {stats})")
    return 0


def cmd_train(args):
    out = _out_dir(args)
    manifest = formats.load_manifest(args.manifest)
    cfg = TrainConfig()
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = TrainConfig.from_dict(json.load(fh))
    if manifest.path("index_maps") is None or manifest.path("codebook") is None:
        raise CliError("manifest lacks index maps / codebook; run quantize first")
    supervision = load_supervision(manifest)
    book = formats.read_codebook(manifest.path("codebook"))
    scene_path = manifest.path("initial_scene")
    if scene_path is None:
        raise CliError("manifest lacks an initial scene")
    scene = formats.read_scene(scene_path)
    decoder = Decoder.create(scene.d_f, book.n_entries, seed=cfg.seed)
    result = train(scene, decoder, book, supervision, cfg)
    formats.write_scene(out / "scene.lgs", result.scene)
    formats.write_decoder(out / "decoder.lgd", result.decoder)
    with open(out / "train_config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, sort_keys=True, indent=1)
    formats.write_jsonl(out / "train_log.jsonl", result.log)
    report.loss_curves(out / "loss_curves.png", result.log)
    doc = _rebased_manifest(manifest, out)
    doc["scene"] = "scene.lgs"
    doc["decoder"] = "decoder.lgd"
    formats.write_manifest(out / "manifest.json", doc)
    _echo(args, "train", out)
    last = result.log[-1] if result.log else {}
    print(f"trained scene written; final losses: { {k: round(v, 5) for k, v in last.items()} }")
    return 0


def _frames_from_manifest(manifest):
    cams = formats.read_cameras(manifest.path("cameras"))
    idx_path = manifest.path("index_maps")
    if idx_path is None:
        raise CliError("manifest lacks index maps; run quantize first")
    index_maps = formats.read_tensor(idx_path)[0].astype(np.int32)
    return [FrameContext(t, cams[t], index_maps[t]) for t in range(len(cams))]


def cmd_localize(args):
    out = _out_dir(args)
    manifest = formats.load_manifest(args.manifest)
    scene = formats.read_scene(args.scene)
    decoder = formats.read_decoder(args.decoder or manifest.path("decoder"))
    book = formats.read_codebook(args.codebook or manifest.path("codebook"))
    query = formats.read_query(args.query)
    frames = _frames_from_manifest(manifest)
    result, refined = localize_refined(scene, decoder, book, query, tau=args.tau,
                                       n_epochs=args.n, m_epochs=args.m, frames=frames,
                                       alternations=args.alternations)
    if result.l3d.size == 0:
        warnings.warn("localization selected no Gaussians")
    formats.write_localization(out / "localization.json", result, n_epochs=args.n, m_epochs=args.m)
    formats.write_scene(out / "refined_scene.lgs", refined)
    if args.relevance_pngs:
        from .localization import relevance_map
        for fr in frames:
            rel = relevance_map(refined, decoder, book, query, fr.t, fr.cam)
            formats.save_png(out / f"relevance_{fr.t:03d}.png", (rel.values + 1.0) / 2.0)
            report.relevance_heatmap(out / f"relevance_fig_{fr.t:03d}.png", rel.values,
                                     title=f"{query.label} @ t={fr.t}")
    _echo(args, "localize", out)
    print(f"localized {result.l3d.size} / {scene.n_total} Gaussians for query {query.label!r}")
    return 0


def cmd_render(args):
    out = _out_dir(args)
    scene = formats.read_scene(args.scene)
    cams = formats.read_cameras(args.camera_path)
    t_range = _parse_range(args.t_range, min(len(cams), scene.n_frames))
    for t in t_range:
        cam = cams[min(t, len(cams) - 1)]
        res = render(scene, t, cam, channels=args.channels)
        if res.color is not None:
            formats.save_png(out / f"frame_{t:03d}.png", res.color)
        if res.feature is not None:
            formats.write_tensor(out / f"feature_{t:03d}.lgt", res.feature, axes=["h", "w", "c"])
        formats.write_tensor(out / f"alpha_{t:03d}.lgt", res.alpha, axes=["h", "w"])
        formats.write_tensor(out / f"depth_{t:03d}.lgt", res.depth, axes=["h", "w"])
    _echo(args, "render", out)
    print(f"rendered frames {t_range.start}..{t_range.stop - 1}")
    return 0


def cmd_edit(args):
    out = _out_dir(args)
    manifest = formats.load_manifest(args.manifest)
    scene = formats.read_scene(args.scene)
    loc = formats.read_localization(args.localization)
    v_edit = formats.load_video_dir(args.reference_video)
    cams = formats.read_cameras(manifest.path("cameras"))
    if v_edit.shape[0] != len(cams):
        raise CliError("reference video frame count does not match cameras")
    edited, log = edit(scene, np.array(loc["indices"], dtype=int), v_edit, cams,
                       k_epochs=args.k, mode=args.mode)
    formats.write_scene(out / "edited_scene.lgs", edited)
    formats.write_jsonl(out / "edit_log.jsonl", log)
    report.loss_curves(out / "edit_loss.png", log, keys=["edit_loss"])
    for t in range(v_edit.shape[0]):
        res = render(edited, t, cams[t], channels="color")
        formats.save_png(out / f"edited_{t:03d}.png", res.color)
    _echo(args, "edit", out)
    final = log[-1]["edit_loss"] if log else float("nan")
    print(f"edited {len(loc['indices'])} Gaussians over {args.k} epochs; final loss {final:.3e}")
    return 0


def _load_images(path):
    p = Path(path)
    if p.is_dir():
        return formats.load_video_dir(p)
    if p.suffix == ".png":
        return formats.load_png(p)
    return formats.read_tensor(p)[0].astype(np.float64)


def cmd_eval(args):
    out = _out_dir(args)
    rows, series_labels = [], []
    if args.mode == "psnr":
        a, b = _load_images(args.a), _load_images(args.b)
        mask = None
        if args.mask:
            mask = formats.read_tensor(args.mask)[0].astype(bool)
        value = psnr(a, b, mask=mask)
        capped = min(value, PSNR_CAP_DB)
        rows.append(["psnr_db", capped])
        series_labels = ["psnr_db"]
        report.write_csv(out / "report.csv", ["metric", "value"], rows)
        report.metric_bars(out / "report.png", series_labels, {"PSNR (dB)": [capped]})
        print(f"psnr: {capped:.4f} dB" + (" (identical inputs)" if value > PSNR_CAP_DB else ""))
    elif args.mode == "miou":
        membership = formats.read_membership(args.gt)
        header = ["localization", "label", "miou"]
        values, labels = [], []
        for pred_path in args.pred:
            doc = formats.read_localization(pred_path)
            label = doc["label"]
            if label not in membership:
                raise CliError(f"no ground-truth membership for query {label!r}")
            value = miou(np.array(doc["indices"], dtype=int), membership[label])
            rows.append([pred_path, label, value])
            values.append(value)
            labels.append(f"{Path(pred_path).parent.name}/{Path(pred_path).stem}")
            print(f"miou[{pred_path} :: {label}] = {value:.4f}")
        report.write_csv(out / "report.csv", header, rows)
        report.metric_bars(out / "report.png", labels, {"mIoU": values})
    elif args.mode == "dirsim":
        feat_a = formats.read_tensor(args.feat_a)[0].astype(np.float64)
        feat_b = formats.read_tensor(args.feat_b)[0].astype(np.float64)
        qa = formats.read_query(args.query_a)
        qb = formats.read_query(args.query_b)
        mask = formats.read_tensor(args.mask)[0].astype(bool)
        value = feature_dir_sim(feat_a, feat_b, qa.vector, qb.vector, mask)
        rows.append(["feature_dir_sim", value])
        report.write_csv(out / "report.csv", ["metric", "value"], rows)
        report.metric_bars(out / "report.png", ["feature_dir_sim"], {"directional similarity": [value]})
        print(f"feature directional similarity: {value:.4f}")
    _echo(args, "eval", out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="ledgs",
                                     description="Language-embedded dynamic Gaussian splatting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a deterministic synthetic dataset")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--clusters", type=int, default=2)
    p.add_argument("--gaussians-per-cluster", type=int, default=50)
    p.add_argument("--static", type=int, default=40, help="static backdrop Gaussians")
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--size", default="64x48", help="WxH in pixels")
    p.add_argument("--df", type=int, default=8, help="per-Gaussian feature dimension")
    p.add_argument("--bases", type=int, default=None, help="motion bases (default: one per cluster)")
    p.add_argument("--feature-dim", type=int, default=16, help="embedding stack dimension")
    p.add_argument("--noise-deg", type=float, default=5.0, help="angular feature noise (degrees)")
    p.add_argument("--heldout", type=int, default=2, help="held-out camera views")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("quantize", help="learn the codebook and index maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n", type=int, default=128, help="codebook entries")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("train", help="joint reconstruction + language training")
    p.add_argument("--manifest", required=True, help="quantized dataset manifest")
    p.add_argument("--config", default=None, help="JSON training config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("localize", help="point-level localization with refinement")
    p.add_argument("--scene", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--tau", type=float, default=0.95)
    p.add_argument("--n", type=int, default=50, help="recall refinement epochs")
    p.add_argument("--m", type=int, default=10, help="precision refinement epochs")
    p.add_argument("--alternations", type=int, default=1)
    p.add_argument("--decoder", default=None, help="override manifest decoder")
    p.add_argument("--codebook", default=None, help="override manifest codebook")
    p.add_argument("--relevance-pngs", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("render", help="render frames from a scene file")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera-path", required=True)
    p.add_argument("--t-range", default="0:", help="frame range lo:hi (default: all frames)")
    p.add_argument("--channels", choices=["color", "feature", "both"], default="color")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("edit", help="reference-video-guided localized edit")
    p.add_argument("--scene", required=True)
    p.add_argument("--localization", required=True)
    p.add_argument("--reference-video", required=True, help="directory of numbered PNG frames")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=500, help="edit epochs")
    p.add_argument("--mode", choices=["full", "color"], default="full")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("eval", help="metrics: psnr / miou / dirsim")
    p.add_argument("--mode", choices=["psnr", "miou", "dirsim"], required=True)
    p.add_argument("--a", help="psnr: image/video/tensor A")
    p.add_argument("--b", help="psnr: image/video/tensor B")
    p.add_argument("--mask", help="optional pixel mask tensor")
    p.add_argument("--pred", nargs="+", default=[], help="miou: localization JSON file(s)")
    p.add_argument("--gt", help="miou: ground-truth membership JSON")
    p.add_argument("--feat-a", help="dirsim: feature tensor before")
    p.add_argument("--feat-b", help="dirsim: feature tensor after")
    p.add_argument("--query-a", help="dirsim: query embedding before")
    p.add_argument("--query-b", help="dirsim: query embedding after")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: any failure is a non-zero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
