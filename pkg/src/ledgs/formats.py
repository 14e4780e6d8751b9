"""File formats: binary tensors, scenes, codebooks, decoders, queries,
camera documents, dataset manifests and result documents.

Binary layouts (all little-endian, payloads float32/int32/uint8):

  tensor   magic "LGT1" | u8 dtype (0=f32,1=i32,2=u8) | u8 endianness (0)
           | u8 rank (1..5) | u8 reserved | u32 dims[rank]
           | per axis: u8 label length + ascii label | payload row-major
  scene    magic "LGS1" | u32 header length | JSON header | f32 payload:
           static records (mu3 q4 s_log3 o_logit1 color3 feat d_f),
           dynamic records (same + w_logits B), motion bases (T*B*7:
           quaternion wxyz then translation xyz)
  codebook magic "LGB1" | u32 header length | JSON | N*c f32
  decoder  magic "LGD1" | u32 header length | JSON | w1,b1,w2,b2 flat f32
  query    magic "LGQ1" | u32 header length | JSON | c f32

Cameras, manifests, tracks, memberships and localization results are JSON
text documents. Readers reject unknown magics and schema versions.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .localization import LocalizationResult, QueryEmbedding
from .quantizer import Codebook
from .scene import Camera, GaussianScene, MotionBases
from .semantics import Decoder

SCHEMA_VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<i4"), 2: np.dtype("u1")}
_DTYPE_CODES = {"float32": 0, "int32": 1, "uint8": 2}


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------- tensors

def write_tensor(path, array, axes=None):
    array = np.asarray(array)
    if array.dtype == np.float64:
        array = array.astype("<f4")
    elif array.dtype in (np.int64, np.int32):
        array = array.astype("<i4")
    elif array.dtype == bool:
        array = array.astype("u1")
    if array.dtype.name not in _DTYPE_CODES:
        raise FormatError(f"unsupported tensor dtype {array.dtype}")
    if not 1 <= array.ndim <= 5:
        raise FormatError("tensor rank must be in [1, 5]")
    axes = list(axes) if axes is not None else [""] * array.ndim
    if len(axes) != array.ndim:
        raise FormatError("one axis label per dimension required")
    with open(path, "wb") as fh:
        fh.write(b"LGT1")
        fh.write(struct.pack("<BBBB", _DTYPE_CODES[array.dtype.name], 0, array.ndim, 0))
        fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
        for label in axes:
            raw = label.encode("ascii")
            fh.write(struct.pack("<B", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(array).tobytes())


def read_tensor(path):
    """Returns (array, axis labels); array keeps the stored dtype."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != b"LGT1":
            raise FormatError(f"{path}: bad magic {magic!r}")
        dtype_code, endian, rank, _ = struct.unpack("<BBBB", fh.read(4))
        if endian != 0:
            raise FormatError(f"{path}: only little-endian payloads supported")
        if dtype_code not in _DTYPES:
            raise FormatError(f"{path}: unknown dtype code {dtype_code}")
        if not 1 <= rank <= 5:
            raise FormatError(f"{path}: rank {rank} outside [1, 5]")
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        axes = []
        for _ in range(rank):
            (n,) = struct.unpack("<B", fh.read(1))
            axes.append(fh.read(n).decode("ascii"))
        dtype = _DTYPES[dtype_code]
        count = int(np.prod(dims))
        payload = fh.read()
        if len(payload) != count * dtype.itemsize:
            raise FormatError(f"{path}: payload length {len(payload)} != expected {count * dtype.itemsize}")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy(), axes


# ------------------------------------------------------- headered binaries

def _write_headered(path, magic, header, payload_f32):
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(payload_f32.astype("<f4").tobytes())


def _read_headered(path, magic):
    with open(path, "rb") as fh:
        got = fh.read(4)
        if got != magic:
            raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode("utf-8"))
        if header.get("schema") != SCHEMA_VERSION:
            raise FormatError(f"{path}: unsupported schema version {header.get('schema')}")
        payload = np.frombuffer(fh.read(), dtype="<f4").astype(np.float64)
    return header, payload


def write_scene(path, scene: GaussianScene):
    d_f, b = scene.d_f, scene.n_bases
    header = {
        "schema": SCHEMA_VERSION,
        "num_static": scene.n_static,
        "num_dynamic": scene.n_dynamic,
        "num_bases": b,
        "feature_dim": d_f,
        "num_frames": scene.n_frames,
        "codebook_ref": scene.codebook_ref,
        "seed": scene.seed,
    }
    ns = scene.n_static
    static = np.concatenate(
        [scene.mu[:ns], scene.q[:ns], scene.s_log[:ns], scene.o_logit[:ns, None],
         scene.color[:ns], scene.feat[:ns]], axis=1)
    dynamic = np.concatenate(
        [scene.mu[ns:], scene.q[ns:], scene.s_log[ns:], scene.o_logit[ns:, None],
         scene.color[ns:], scene.feat[ns:], scene.w_logits], axis=1)
    bases = np.concatenate([scene.motion.quats, scene.motion.trans], axis=2)
    payload = np.concatenate([static.ravel(), dynamic.ravel(), bases.ravel()])
    _write_headered(path, b"LGS1", header, payload)


def read_scene(path) -> GaussianScene:
    header, payload = _read_headered(path, b"LGS1")
    ns, nd = header["num_static"], header["num_dynamic"]
    d_f, b, t = header["feature_dim"], header["num_bases"], header["num_frames"]
    rec_s = 14 + d_f
    rec_d = rec_s + b
    n_s_vals = ns * rec_s
    n_d_vals = nd * rec_d
    n_b_vals = t * b * 7
    if payload.size != n_s_vals + n_d_vals + n_b_vals:
        raise FormatError(f"{path}: payload size {payload.size} inconsistent with header")
    static = payload[:n_s_vals].reshape(ns, rec_s)
    dynamic = payload[n_s_vals:n_s_vals + n_d_vals].reshape(nd, rec_d)
    bases = payload[n_s_vals + n_d_vals:].reshape(t, b, 7)

    def split(block, with_w):
        cols = np.split(block, [3, 7, 10, 11, 14, 14 + d_f], axis=1)
        out = {"mu": cols[0], "q": cols[1], "s_log": cols[2], "o_logit": cols[3][:, 0],
               "color": cols[4], "feat": cols[5]}
        if with_w:
            out["w"] = cols[6]
        return out

    s, d = split(static, False), split(dynamic, True)
    return GaussianScene(
        mu=np.concatenate([s["mu"], d["mu"]]),
        q=np.concatenate([s["q"], d["q"]]),
        s_log=np.concatenate([s["s_log"], d["s_log"]]),
        o_logit=np.concatenate([s["o_logit"], d["o_logit"]]),
        color=np.concatenate([s["color"], d["color"]]),
        feat=np.concatenate([s["feat"], d["feat"]]),
        n_static=ns,
        w_logits=d["w"] if nd else np.zeros((0, b)),
        motion=MotionBases(bases[:, :, :4], bases[:, :, 4:]),
        codebook_ref=header["codebook_ref"],
        seed=header["seed"],
    )


def write_codebook(path, book: Codebook):
    header = {"schema": SCHEMA_VERSION, "n_entries": book.n_entries, "dim": book.dim}
    _write_headered(path, b"LGB1", header, book.entries.ravel())


def read_codebook(path) -> Codebook:
    header, payload = _read_headered(path, b"LGB1")
    n, c = header["n_entries"], header["dim"]
    if payload.size != n * c:
        raise FormatError(f"{path}: codebook payload size mismatch")
    return Codebook(payload.reshape(n, c))


def write_decoder(path, dec: Decoder):
    header = {"schema": SCHEMA_VERSION, "input_dim": dec.input_dim,
              "hidden_dim": dec.hidden_dim, "n_entries": dec.n_entries}
    payload = np.concatenate([dec.w1.ravel(), dec.b1, dec.w2.ravel(), dec.b2])
    _write_headered(path, b"LGD1", header, payload)


def read_decoder(path) -> Decoder:
    header, payload = _read_headered(path, b"LGD1")
    d, h, n = header["input_dim"], header["hidden_dim"], header["n_entries"]
    sizes = [d * h, h, h * n, n]
    if payload.size != sum(sizes):
        raise FormatError(f"{path}: decoder payload size mismatch")
    w1, b1, w2, b2 = np.split(payload, np.cumsum(sizes)[:-1])
    return Decoder(w1.reshape(d, h), b1, w2.reshape(h, n), b2)


def write_query(path, query: QueryEmbedding):
    header = {"schema": SCHEMA_VERSION, "label": query.label, "dim": int(query.vector.size)}
    _write_headered(path, b"LGQ1", header, query.vector)


def read_query(path) -> QueryEmbedding:
    header, payload = _read_headered(path, b"LGQ1")
    if payload.size != header["dim"]:
        raise FormatError(f"{path}: query payload size mismatch")
    return QueryEmbedding(payload, header["label"])


# ------------------------------------------------------------------ images

def save_png(path, image):
    """Float [0,1] (H,W) or (H,W,3) to 8-bit PNG."""
    arr = np.asarray(image, dtype=np.float64)
    u8 = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8).save(path)


def load_png(path):
    """8-bit PNG to float64 in [0,1]; RGB images return (H,W,3)."""
    img = np.asarray(Image.open(path))
    return img.astype(np.float64) / 255.0


def load_video_dir(path):
    """Directory of numbered PNG frames -> (T,H,W,3); lexicographic order."""
    files = sorted(Path(path).glob("*.png"))
    if not files:
        raise FormatError(f"{path}: no PNG frames")
    frames = [load_png(f) for f in files]
    return np.stack(frames)


# --------------------------------------------------------------- documents

def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _check_schema(payload, path):
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported schema version {payload.get('schema_version')}")


def write_cameras(path, cams):
    first = cams[0]
    _write_json(path, {
        "schema_version": SCHEMA_VERSION,
        "width": first.width, "height": first.height,
        "k": [float(v) for v in first.k.ravel()],
        "frames": [{"t": i, "w2c": [float(v) for v in c.w2c.ravel()]} for i, c in enumerate(cams)],
    })


def read_cameras(path):
    doc = _read_json(path)
    _check_schema(doc, path)
    k = np.array(doc["k"]).reshape(3, 3)
    return [Camera(k, np.array(fr["w2c"]).reshape(4, 4), doc["width"], doc["height"])
            for fr in doc["frames"]]


def write_localization(path, result: LocalizationResult, n_epochs=None, m_epochs=None):
    _write_json(path, {
        "schema_version": SCHEMA_VERSION,
        "label": result.label,
        "tau": result.tau,
        "n_epochs": n_epochs,
        "m_epochs": m_epochs,
        "size": int(result.l3d.size),
        "indices": [int(i) for i in result.l3d],
        "log": [list(entry) for entry in result.log],
    })


def read_localization(path):
    doc = _read_json(path)
    _check_schema(doc, path)
    return doc


def write_membership(path, membership):
    _write_json(path, {
        "schema_version": SCHEMA_VERSION,
        "queries": {label: [int(i) for i in idxs] for label, idxs in membership.items()},
    })


def read_membership(path):
    doc = _read_json(path)
    _check_schema(doc, path)
    return {label: np.array(idxs, dtype=int) for label, idxs in doc["queries"].items()}


def write_tracks(path, gaussian, px, visible):
    _write_json(path, {
        "schema_version": SCHEMA_VERSION,
        "gaussian": [int(g) for g in gaussian],
        "px": np.asarray(px, dtype=float).tolist(),       # (T, K, 2)
        "visible": np.asarray(visible, dtype=bool).astype(int).tolist(),
    })


def read_tracks(path):
    doc = _read_json(path)
    _check_schema(doc, path)
    return (np.array(doc["gaussian"], dtype=int),
            np.array(doc["px"], dtype=float),
            np.array(doc["visible"], dtype=bool))


# ---------------------------------------------------------------- manifest

@dataclass
class Manifest:
    root: Path
    doc: dict

    def path(self, key):
        value = self.doc.get(key)
        return None if value is None else self.root / value

    def path_list(self, key):
        return [self.root / v for v in self.doc.get(key, [])]

    def __getitem__(self, key):
        return self.doc[key]

    def get(self, key, default=None):
        return self.doc.get(key, default)


_MANIFEST_PATH_KEYS = ("cameras", "tracks", "features", "feature_validity", "index_maps",
                       "codebook", "reference_scene", "initial_scene", "scene", "decoder",
                       "heldout_cameras", "gt_membership")
_MANIFEST_LIST_KEYS = ("rgb", "dynamic_masks", "depths", "heldout_rgb", "queries")


def write_manifest(path, doc):
    doc = dict(doc)
    doc["schema_version"] = SCHEMA_VERSION
    _write_json(path, doc)


def load_manifest(path) -> Manifest:
    path = Path(path)
    doc = _read_json(path)
    _check_schema(doc, path)
    m = Manifest(path.parent, doc)
    missing = []
    for key in _MANIFEST_PATH_KEYS:
        p = m.path(key)
        if p is not None and not p.exists():
            missing.append(f"{key}: {p}")
    for key in _MANIFEST_LIST_KEYS:
        for p in m.path_list(key):
            if not p.exists():
                missing.append(f"{key}: {p}")
    for label, rel in m.get("edit_videos", {}).items():
        if not (m.root / rel).exists():
            missing.append(f"edit_videos[{label}]: {m.root / rel}")
    if missing:
        raise FormatError(f"{path}: missing referenced files:\n  " + "\n  ".join(missing))
    return m


def write_run_manifest(out_dir, command, args):
    """Echo every flag of a CLI invocation next to its outputs."""
    _write_json(Path(out_dir) / "run_manifest.json", {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(args.items())},
    })


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
