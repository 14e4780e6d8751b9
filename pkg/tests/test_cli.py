import json
import warnings

import numpy as np
import pytest

from ledgs import formats
from ledgs.cli import main
from ledgs.rasterizer import render
from ledgs.synthetic import make_localization_fixture


GEN_ARGS = ["gen-synthetic", "--seed", "5", "--clusters", "2",
            "--gaussians-per-cluster", "8", "--static", "8", "--frames", "3",
            "--size", "32x24", "--df", "8", "--feature-dim", "12"]


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset")
    assert main(GEN_ARGS + ["--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def quantized_dir(dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("quantized")
    code = main(["quantize", "--manifest", str(dataset_dir / "manifest.json"),
                 "--n", "3", "--epochs", "8", "--lr", "0.01", "--seed", "0",
                 "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(quantized_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    cfg = {"epochs": 2, "densify": None, "seed": 0}
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    code = main(["train", "--manifest", str(quantized_dir / "manifest.json"),
                 "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    return out


def write_fixture_dataset(fixture, out):
    """Save a localization fixture as a loadable manifest directory."""
    out.mkdir(parents=True, exist_ok=True)
    formats.write_scene(out / "scene.lgs", fixture.scene)
    formats.write_decoder(out / "decoder.lgd", fixture.decoder)
    formats.write_codebook(out / "codebook.lgb", fixture.codebook)
    formats.write_cameras(out / "cameras.json", fixture.cams)
    index_maps = np.stack([fr.index_map for fr in fixture.frames])
    formats.write_tensor(out / "index_maps.lgt", index_maps, axes=["t", "h", "w"])
    for k, query in enumerate(fixture.queries):
        formats.write_query(out / f"query_{k}.lgq", query)
    formats.write_membership(out / "membership.json", fixture.membership)
    formats.write_manifest(out / "manifest.json", {
        "frames": len(fixture.frames),
        "width": fixture.cams[0].width, "height": fixture.cams[0].height,
        "cameras": "cameras.json", "index_maps": "index_maps.lgt",
        "codebook": "codebook.lgb", "decoder": "decoder.lgd",
        "scene": "scene.lgs",
        "rgb": [], "dynamic_masks": [], "depths": [], "heldout_rgb": [],
        "queries": [f"query_{k}.lgq" for k in range(len(fixture.queries))],
        "gt_membership": "membership.json",
    })
    return out / "manifest.json"


@pytest.fixture(scope="module")
def fixture_dataset(tmp_path_factory):
    fixture = make_localization_fixture(seed=1, clusters=2, per_cluster=12,
                                        n_static=12, frames=2, width=48, height=36)
    out = tmp_path_factory.mktemp("locdata")
    manifest = write_fixture_dataset(fixture, out)
    return fixture, manifest


class TestGenSynthetic:
    def test_manifest_validates(self, dataset_dir):
        manifest = formats.load_manifest(dataset_dir / "manifest.json")
        assert manifest["frames"] == 3
        assert len(manifest.path_list("rgb")) == 3
        assert (dataset_dir / "run_manifest.json").exists()

    def test_same_seed_bit_identical(self, dataset_dir, tmp_path):
        again = tmp_path / "again"
        assert main(GEN_ARGS + ["--out", str(again)]) == 0
        for rel in ("reference_scene.lgs", "initial_scene.lgs", "features.lgt",
                    "membership.json", "frames/frame_001.png"):
            assert (dataset_dir / rel).read_bytes() == (again / rel).read_bytes(), rel

    def test_cluster_queries_partition_dynamics(self, dataset_dir):
        manifest = formats.load_manifest(dataset_dir / "manifest.json")
        membership = formats.read_membership(manifest.path("gt_membership"))
        scene = formats.read_scene(manifest.path("reference_scene"))
        assert len(membership) == 2
        combined = np.sort(np.concatenate(list(membership.values())))
        assert np.array_equal(combined, scene.dynamic_indices)
        # query files decode against the generator's own bookkeeping
        queries = [formats.read_query(p) for p in manifest.path_list("queries")]
        assert sorted(q.label for q in queries) == sorted(membership)

    def test_three_clusters_emit_three_partitioning_queries(self, tmp_path):
        out = tmp_path / "three"
        assert main(["gen-synthetic", "--seed", "3", "--clusters", "3",
                     "--gaussians-per-cluster", "6", "--static", "5", "--frames", "2",
                     "--size", "32x24", "--out", str(out)]) == 0
        manifest = formats.load_manifest(out / "manifest.json")
        queries = [formats.read_query(p) for p in manifest.path_list("queries")]
        assert len(queries) == 3
        membership = formats.read_membership(manifest.path("gt_membership"))
        scene = formats.read_scene(manifest.path("reference_scene"))
        sizes = sorted(len(v) for v in membership.values())
        assert sizes == [6, 6, 6]
        combined = np.sort(np.concatenate(list(membership.values())))
        assert np.array_equal(combined, scene.dynamic_indices)
        # brute-force cosine cross-check of the generator's bookkeeping:
        # query embeddings are mutually exclusive directions, so a Gaussian
        # can match at most one query's semantics
        for a in range(3):
            for b in range(a + 1, 3):
                assert abs(queries[a].vector @ queries[b].vector) < 1e-6


class TestQuantize:
    def test_outputs_exist_and_validate(self, quantized_dir):
        manifest = formats.load_manifest(quantized_dir / "manifest.json")
        book = formats.read_codebook(manifest.path("codebook"))
        idx, _ = formats.read_tensor(manifest.path("index_maps"))
        assert book.n_entries == 3
        assert idx.min() >= -1 and idx.max() < 3

    def test_missing_manifest_fails(self, tmp_path):
        code = main(["quantize", "--manifest", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "q")])
        assert code != 0


class TestTrain:
    def test_outputs(self, trained_dir):
        manifest = formats.load_manifest(trained_dir / "manifest.json")
        scene = formats.read_scene(manifest.path("scene"))
        dec = formats.read_decoder(manifest.path("decoder"))
        assert scene.n_total > 0 and dec.n_entries == 3
        assert (trained_dir / "loss_curves.png").exists()
        assert (trained_dir / "train_log.jsonl").exists()


class TestLocalize:
    @pytest.mark.filterwarnings("ignore:precision refinement")
    def test_selects_cluster(self, fixture_dataset, tmp_path):
        fixture, manifest = fixture_dataset
        out = tmp_path / "loc"
        code = main(["localize", "--scene", str(manifest.parent / "scene.lgs"),
                     "--query", str(manifest.parent / "query_0.lgq"),
                     "--manifest", str(manifest), "--tau", "0.95",
                     "--n", "2", "--m", "2", "--relevance-pngs",
                     "--out", str(out)])
        assert code == 0
        doc = formats.read_localization(out / "localization.json")
        assert doc["indices"] == fixture.membership["cluster-0"].tolist()
        assert (out / "relevance_000.png").exists()
        assert (out / "relevance_fig_000.png").exists()

    def test_tau_one_empty_result_exit_zero(self, fixture_dataset, tmp_path):
        _, manifest = fixture_dataset
        out = tmp_path / "loc_empty"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = main(["localize", "--scene", str(manifest.parent / "scene.lgs"),
                         "--query", str(manifest.parent / "query_0.lgq"),
                         "--manifest", str(manifest), "--tau", "1.0",
                         "--n", "0", "--m", "0", "--out", str(out)])
        assert code == 0
        doc = formats.read_localization(out / "localization.json")
        assert doc["size"] == 0


class TestRender:
    def test_writes_frames_and_tensors(self, fixture_dataset, tmp_path):
        _, manifest = fixture_dataset
        out = tmp_path / "renders"
        code = main(["render", "--scene", str(manifest.parent / "scene.lgs"),
                     "--camera-path", str(manifest.parent / "cameras.json"),
                     "--t-range", "0:2", "--channels", "both", "--out", str(out)])
        assert code == 0
        for t in range(2):
            assert (out / f"frame_{t:03d}.png").exists()
            assert (out / f"feature_{t:03d}.lgt").exists()
            assert (out / f"depth_{t:03d}.lgt").exists()


class TestEdit:
    def test_edit_runs_and_freezes_complement(self, fixture_dataset, tmp_path):
        fixture, manifest = fixture_dataset
        # reference video: recolor cluster 0 in the fixture scene
        edited_ref = fixture.scene.copy()
        edited_ref.color[fixture.membership["cluster-0"]] = [0.9, 0.05, 0.05]
        video_dir = tmp_path / "vedit"
        video_dir.mkdir()
        for t, fr in enumerate(fixture.frames):
            formats.save_png(video_dir / f"frame_{t:03d}.png",
                             render(edited_ref, t, fr.cam).color)
        loc_dir = tmp_path / "loc_for_edit"
        assert main(["localize", "--scene", str(manifest.parent / "scene.lgs"),
                     "--query", str(manifest.parent / "query_0.lgq"),
                     "--manifest", str(manifest), "--n", "0", "--m", "0",
                     "--out", str(loc_dir)]) == 0
        out = tmp_path / "edited"
        code = main(["edit", "--scene", str(manifest.parent / "scene.lgs"),
                     "--localization", str(loc_dir / "localization.json"),
                     "--reference-video", str(video_dir),
                     "--manifest", str(manifest), "--k", "3", "--out", str(out)])
        assert code == 0
        edited = formats.read_scene(out / "edited_scene.lgs")
        original = formats.read_scene(manifest.parent / "scene.lgs")
        frozen = np.setdiff1d(np.arange(original.n_total), fixture.membership["cluster-0"])
        assert np.array_equal(original.color[frozen], edited.color[frozen])
        assert not np.array_equal(original.color[fixture.membership["cluster-0"]],
                                  edited.color[fixture.membership["cluster-0"]])
        assert (out / "edited_000.png").exists()
        assert (out / "edit_loss.png").exists()


class TestEval:
    def test_psnr_identical_capped(self, fixture_dataset, tmp_path):
        _, manifest = fixture_dataset
        renders = tmp_path / "r"
        assert main(["render", "--scene", str(manifest.parent / "scene.lgs"),
                     "--camera-path", str(manifest.parent / "cameras.json"),
                     "--t-range", "0:2", "--out", str(renders)]) == 0
        out = tmp_path / "eval_psnr"
        code = main(["eval", "--mode", "psnr", "--a", str(renders), "--b", str(renders),
                     "--out", str(out)])
        assert code == 0
        rows = (out / "report.csv").read_text().strip().splitlines()
        assert rows[0] == "metric,value"
        assert float(rows[1].split(",")[1]) == 99.0
        assert (out / "report.png").exists()

    def test_miou_table_and_figure(self, fixture_dataset, tmp_path):
        fixture, manifest = fixture_dataset
        locs = []
        for k in range(2):
            d = tmp_path / f"loc{k}"
            assert main(["localize", "--scene", str(manifest.parent / "scene.lgs"),
                         "--query", str(manifest.parent / f"query_{k}.lgq"),
                         "--manifest", str(manifest), "--n", "0", "--m", "0",
                         "--out", str(d)]) == 0
            locs.append(str(d / "localization.json"))
        out = tmp_path / "eval_miou"
        code = main(["eval", "--mode", "miou", "--pred", *locs,
                     "--gt", str(manifest.parent / "membership.json"),
                     "--out", str(out)])
        assert code == 0
        lines = (out / "report.csv").read_text().strip().splitlines()
        assert len(lines) == 3
        for line in lines[1:]:
            assert float(line.split(",")[2]) == 1.0
        assert (out / "report.png").exists()

    def test_dirsim(self, fixture_dataset, tmp_path, rng):
        _, manifest = fixture_dataset
        c = 12
        feat_a = rng.random((6, 6, c))
        qa, qb = np.zeros(c), np.zeros(c)
        qa[0] = 1.0
        qb[1] = 1.0
        feat_b = feat_a + 0.3 * (qb - qa)
        formats.write_tensor(tmp_path / "fa.lgt", feat_a)
        formats.write_tensor(tmp_path / "fb.lgt", feat_b)
        formats.write_tensor(tmp_path / "mask.lgt", np.ones((6, 6), dtype=bool))
        from ledgs.localization import QueryEmbedding
        formats.write_query(tmp_path / "qa.lgq", QueryEmbedding(qa, "before"))
        formats.write_query(tmp_path / "qb.lgq", QueryEmbedding(qb, "after"))
        out = tmp_path / "eval_dirsim"
        code = main(["eval", "--mode", "dirsim",
                     "--feat-a", str(tmp_path / "fa.lgt"), "--feat-b", str(tmp_path / "fb.lgt"),
                     "--query-a", str(tmp_path / "qa.lgq"), "--query-b", str(tmp_path / "qb.lgq"),
                     "--mask", str(tmp_path / "mask.lgt"), "--out", str(out)])
        assert code == 0
        value = float((out / "report.csv").read_text().strip().splitlines()[1].split(",")[1])
        assert value > 0.999

    def test_unknown_query_label_fails(self, fixture_dataset, tmp_path):
        fixture, manifest = fixture_dataset
        bad = tmp_path / "bad_loc.json"
        bad.write_text(json.dumps({"schema_version": 1, "label": "nonexistent",
                                   "tau": 0.95, "size": 0, "indices": [], "log": []}))
        code = main(["eval", "--mode", "miou", "--pred", str(bad),
                     "--gt", str(manifest.parent / "membership.json"),
                     "--out", str(tmp_path / "o")])
        assert code != 0


class TestAblationTable:
    def test_eval_miou_reproduces_refinement_ordering(self, tmp_path):
        """Four localization variants evaluated through the CLI produce the
        expected ordering: full >= w/o R-Ref >= w/o Ref, full > w/o P-Ref."""
        fixture = make_localization_fixture(seed=0, plant_fn=0.10, plant_fp=0.10)
        manifest = write_fixture_dataset(fixture, tmp_path / "planted")
        preds = {}
        for name, (n, m) in {"full": (50, 10), "wo_rref": (0, 10),
                             "wo_pref": (50, 0), "wo_ref": (0, 0)}.items():
            d = tmp_path / name
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                assert main(["localize", "--scene", str(manifest.parent / "scene.lgs"),
                             "--query", str(manifest.parent / "query_0.lgq"),
                             "--manifest", str(manifest), "--n", str(n), "--m", str(m),
                             "--out", str(d)]) == 0
            preds[name] = str(d / "localization.json")
        out = tmp_path / "table"
        assert main(["eval", "--mode", "miou",
                     "--pred", preds["full"], preds["wo_rref"], preds["wo_pref"], preds["wo_ref"],
                     "--gt", str(manifest.parent / "membership.json"),
                     "--out", str(out)]) == 0
        rows = (out / "report.csv").read_text().strip().splitlines()[1:]
        values = [float(line.rsplit(",", 1)[1]) for line in rows]
        full, wo_rref, wo_pref, wo_ref = values
        assert full >= wo_rref >= wo_ref
        assert full > wo_pref
        assert (out / "report.png").exists()


class TestPipelineSmoke:
    def test_full_pipeline_exit_codes(self, trained_dir, dataset_dir, tmp_path):
        manifest = formats.load_manifest(trained_dir / "manifest.json")
        loc_dir = tmp_path / "loc"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert main(["localize", "--scene", str(manifest.path("scene")),
                         "--query", str(manifest.path_list("queries")[0]),
                         "--manifest", str(trained_dir / "manifest.json"),
                         "--n", "1", "--m", "1", "--out", str(loc_dir)]) == 0
        render_dir = tmp_path / "renders"
        assert main(["render", "--scene", str(manifest.path("scene")),
                     "--camera-path", str(manifest.path("cameras")),
                     "--t-range", "0:3", "--out", str(render_dir)]) == 0
        edit_videos = manifest.get("edit_videos", {})
        label, rel = next(iter(edit_videos.items()))
        edit_dir = tmp_path / "edit"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert main(["edit", "--scene", str(manifest.path("scene")),
                         "--localization", str(loc_dir / "localization.json"),
                         "--reference-video", str(manifest.root / rel),
                         "--manifest", str(trained_dir / "manifest.json"),
                         "--k", "1", "--out", str(edit_dir)]) == 0
        eval_dir = tmp_path / "eval"
        assert main(["eval", "--mode", "psnr", "--a", str(render_dir),
                     "--b", str(render_dir), "--out", str(eval_dir)]) == 0
