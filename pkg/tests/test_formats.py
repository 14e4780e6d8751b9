import struct

import numpy as np
import pytest

from ledgs import formats
from ledgs.localization import LocalizationResult, QueryEmbedding
from ledgs.quantizer import Codebook
from ledgs.scene import Camera
from ledgs.semantics import Decoder


class TestTensorFile:
    @pytest.mark.parametrize("array,expected_dtype", [
        (np.arange(24, dtype=np.float64).reshape(2, 3, 4) / 7.0, np.float32),
        (np.arange(10, dtype=np.int32), np.int32),
        ((np.arange(12) % 2 == 0).reshape(3, 4), np.uint8),
    ])
    def test_round_trip(self, tmp_path, array, expected_dtype):
        path = tmp_path / "t.lgt"
        formats.write_tensor(path, array, axes=["a"] * array.ndim)
        back, axes = formats.read_tensor(path)
        assert back.dtype == expected_dtype
        reference = array.astype(expected_dtype)
        assert np.array_equal(back, reference)
        assert axes == ["a"] * array.ndim

    def test_axis_labels_preserved(self, tmp_path):
        path = tmp_path / "t.lgt"
        formats.write_tensor(path, np.zeros((2, 3, 4, 5), dtype=np.float32),
                             axes=["t", "h", "w", "c"])
        _, axes = formats.read_tensor(path)
        assert axes == ["t", "h", "w", "c"]

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.lgt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(formats.FormatError, match="magic"):
            formats.read_tensor(path)

    def test_big_endian_flag_rejected(self, tmp_path):
        path = tmp_path / "be.lgt"
        payload = np.zeros(4, dtype="<f4")
        path.write_bytes(b"LGT1" + struct.pack("<BBBB", 0, 1, 1, 0)
                         + struct.pack("<I", 4) + struct.pack("<B", 0) + payload.tobytes())
        with pytest.raises(formats.FormatError, match="little-endian"):
            formats.read_tensor(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "short.lgt"
        formats.write_tensor(path, np.zeros(8, dtype=np.float32))
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(formats.FormatError, match="payload"):
            formats.read_tensor(path)

    def test_rank_limit(self, tmp_path):
        with pytest.raises(formats.FormatError):
            formats.write_tensor(tmp_path / "r.lgt", np.zeros((1,) * 6, dtype=np.float32))


class TestHeaderedBinaries:
    def test_codebook_round_trip(self, tmp_path, rng):
        book = Codebook(rng.normal(size=(6, 9)).astype("<f4").astype(np.float64))
        formats.write_codebook(tmp_path / "c.lgb", book)
        back = formats.read_codebook(tmp_path / "c.lgb")
        assert np.array_equal(book.entries, back.entries)

    def test_decoder_round_trip(self, tmp_path):
        dec = Decoder.create(8, 5, hidden=16, seed=1)
        formats.write_decoder(tmp_path / "d.lgd", dec)
        back = formats.read_decoder(tmp_path / "d.lgd")
        for key, arr in dec.params().items():
            assert np.array_equal(arr, back.params()[key]), key

    def test_query_normalized_on_load(self, tmp_path):
        formats.write_query(tmp_path / "q.lgq", QueryEmbedding([3.0, 4.0], "thing"))
        back = formats.read_query(tmp_path / "q.lgq")
        assert back.label == "thing"
        assert abs(np.linalg.norm(back.vector) - 1.0) < 1e-6

    def test_unknown_schema_rejected(self, tmp_path, rng):
        book = Codebook(rng.normal(size=(2, 3)))
        path = tmp_path / "c.lgb"
        formats.write_codebook(path, book)
        data = bytearray(path.read_bytes())
        # bump the schema field inside the JSON header
        idx = data.find(b'"schema": 1')
        data[idx:idx + len(b'"schema": 1')] = b'"schema": 9'
        path.write_bytes(bytes(data))
        with pytest.raises(formats.FormatError, match="schema"):
            formats.read_codebook(path)

    def test_wrong_magic_across_readers(self, tmp_path, rng):
        formats.write_codebook(tmp_path / "c.lgb", Codebook(rng.normal(size=(2, 3))))
        with pytest.raises(formats.FormatError, match="magic"):
            formats.read_decoder(tmp_path / "c.lgb")


class TestDocuments:
    def test_cameras_round_trip(self, tmp_path):
        k = np.array([[70.0, 0, 31.5], [0, 70.0, 23.5], [0, 0, 1]])
        w2c = np.eye(4)
        w2c[:3, 3] = [0.1, -0.2, 0.3]
        cams = [Camera(k, w2c, 64, 48), Camera(k, np.eye(4), 64, 48)]
        formats.write_cameras(tmp_path / "cams.json", cams)
        back = formats.read_cameras(tmp_path / "cams.json")
        assert len(back) == 2
        assert np.array_equal(back[0].k, k)
        assert np.array_equal(back[0].w2c, w2c)

    def test_membership_round_trip(self, tmp_path):
        membership = {"cluster-0": [3, 1, 2], "cluster-1": []}
        formats.write_membership(tmp_path / "m.json", membership)
        back = formats.read_membership(tmp_path / "m.json")
        assert np.array_equal(back["cluster-0"], [3, 1, 2])
        assert back["cluster-1"].size == 0

    def test_tracks_round_trip(self, tmp_path, rng):
        gaussian = np.array([4, 9])
        px = rng.random((3, 2, 2)) * 30
        visible = rng.random((3, 2)) > 0.5
        formats.write_tracks(tmp_path / "t.json", gaussian, px, visible)
        g2, px2, v2 = formats.read_tracks(tmp_path / "t.json")
        assert np.array_equal(gaussian, g2)
        assert np.allclose(px, px2)
        assert np.array_equal(visible, v2)

    def test_localization_round_trip(self, tmp_path):
        scores = np.array([0.2, 0.99, 0.97])
        result = LocalizationResult(scores, np.array([1, 2]), 0.95, "cluster-0",
                                    [("init", 2)])
        formats.write_localization(tmp_path / "loc.json", result, n_epochs=50, m_epochs=10)
        doc = formats.read_localization(tmp_path / "loc.json")
        assert doc["label"] == "cluster-0"
        assert doc["tau"] == 0.95
        assert doc["size"] == 2
        assert doc["indices"] == [1, 2]
        assert doc["n_epochs"] == 50 and doc["m_epochs"] == 10

    def test_manifest_missing_files_rejected(self, tmp_path):
        formats.write_manifest(tmp_path / "m.json", {
            "frames": 1, "width": 4, "height": 4,
            "rgb": ["frames/missing.png"],
        })
        with pytest.raises(formats.FormatError, match="missing"):
            formats.load_manifest(tmp_path / "m.json")

    def test_png_round_trip_quantization(self, tmp_path, rng):
        img = rng.random((6, 7, 3))
        formats.save_png(tmp_path / "i.png", img)
        back = formats.load_png(tmp_path / "i.png")
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-12

    def test_video_dir_ordering(self, tmp_path, rng):
        frames = rng.random((3, 4, 5, 3))
        for t in range(3):
            formats.save_png(tmp_path / f"frame_{t:03d}.png", frames[t])
        video = formats.load_video_dir(tmp_path)
        assert video.shape == (3, 4, 5, 3)
        for t in range(3):
            assert np.max(np.abs(video[t] - frames[t])) <= 0.5 / 255.0 + 1e-12
