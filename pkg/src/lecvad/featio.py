"""Feature files, manifests and the synthetic dataset generator.

LECF layout (little-endian)::

    offset  size  field
    0       4     magic b"LECF"
    4       4     version (u32, = 1)
    8       4     T (u32)
    12      4     d (u32)
    16      4     reserved (u32, = 0)
    20      T*d*4 float32 payload, row-major

A text bank is stored in the same format with ``T = C + 1`` rows.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"LECF"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class FormatError(ValueError):
    """Raised for malformed feature files."""


class ManifestError(ValueError):
    """Raised when a manifest violates its schema or label invariants."""


@dataclass
class FeatureSequence:
    video_id: str
    data: np.ndarray
    fps: float = 30.0
    snippet_len: int = 16

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(f"features must be a non-empty T x d matrix, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"non-finite values in features of {self.video_id!r}")
        if self.fps <= 0 or self.snippet_len < 1:
            raise ValueError("fps must be positive and snippet_len >= 1")

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass
class TextBank:
    embeddings: np.ndarray

    def __post_init__(self):
        self.embeddings = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] < 2:
            raise ValueError("text bank needs C + 1 >= 2 rows")
        if not np.all(np.isfinite(self.embeddings)):
            raise ValueError("non-finite values in text bank")

    @property
    def C(self) -> int:
        return self.embeddings.shape[0] - 1

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]


@dataclass
class VideoAnnotation:
    y: int
    g: int
    instances: list[tuple[int, int, int]] = field(default_factory=list)
    frame_labels: np.ndarray | None = None

    def validate(self, C: int, T: int | None = None, video_id: str = "?"):
        if self.y not in (0, 1):
            raise ManifestError(f"{video_id}: y must be 0 or 1")
        if not 0 <= self.g <= C:
            raise ManifestError(f"{video_id}: category {self.g} outside 0..{C}")
        if (self.y == 0) != (self.g == 0):
            raise ManifestError(f"{video_id}: label inconsistency (y={self.y}, g={self.g})")
        for s, e, g in self.instances:
            if s > e:
                raise ManifestError(f"{video_id}: empty interval ({s}, {e})")
            if s < 1 or (T is not None and e > T):
                raise ManifestError(f"{video_id}: instance ({s}, {e}) out of range")
            if not 1 <= g <= C:
                raise ManifestError(f"{video_id}: instance category {g} outside 1..{C}")
        if self.frame_labels is not None and T is not None and len(self.frame_labels) != T:
            raise ManifestError(f"{video_id}: {len(self.frame_labels)} frame labels for T={T}")


@dataclass
class ManifestEntry:
    video_id: str
    path: Path
    annotation: VideoAnnotation
    fps: float = 30.0
    snippet_len: int = 16


@dataclass
class Manifest:
    split: str
    C: int
    d: int
    text_bank_path: Path
    entries: list[ManifestEntry]

    def __len__(self):
        return len(self.entries)

    def load_text_bank(self) -> TextBank:
        seq = read_features(self.text_bank_path)
        bank = TextBank(seq.data)
        if bank.C != self.C or bank.d != self.d:
            raise ManifestError(f"text bank is {bank.C + 1}x{bank.d}, manifest says C={self.C}, d={self.d}")
        return bank

    def load_features(self, entry: ManifestEntry) -> FeatureSequence:
        seq = read_features(entry.path, video_id=entry.video_id)
        if seq.d != self.d:
            raise ManifestError(f"{entry.video_id}: feature dim {seq.d} != {self.d}")
        seq.fps, seq.snippet_len = entry.fps, entry.snippet_len
        entry.annotation.validate(self.C, seq.T, entry.video_id)
        return seq

    def find(self, video_id: str) -> ManifestEntry:
        for entry in self.entries:
            if entry.video_id == video_id:
                return entry
        raise KeyError(video_id)


def encode_features(data: np.ndarray) -> bytes:
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(data)):
        raise ValueError("refusing to write non-finite values")
    T, d = data.shape
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, VERSION, T, d, 0) + payload


def decode_features(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, T, d, _ = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported LECF version {version}")
    need = T * d * 4
    if T < 1 or d < 1:
        raise FormatError(f"invalid shape {T}x{d}")
    if len(buf) - _HEADER.size < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(buf) - _HEADER.size}")
    return np.frombuffer(buf, dtype="<f4", count=T * d, offset=_HEADER.size).reshape(T, d).astype(np.float32)


def write_features(seq: FeatureSequence | np.ndarray, path) -> None:
    data = seq.data if isinstance(seq, FeatureSequence) else seq
    blob = encode_features(data)
    Path(path).write_bytes(blob)


def read_features(path, video_id: str | None = None) -> FeatureSequence:
    buf = Path(path).read_bytes()
    data = decode_features(buf)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite values in payload")
    return FeatureSequence(video_id or Path(path).stem, data)


def write_text_bank(bank: TextBank, path) -> None:
    write_features(bank.embeddings, path)


# --------------------------------------------------------------------------- manifests

_REQUIRED_VIDEO_KEYS = {"id", "path", "y", "g"}
_VIDEO_KEYS = _REQUIRED_VIDEO_KEYS | {"fps", "snippet_len", "instances", "frame_labels"}


def _parse_entry(raw, root: Path, split: str, C: int) -> ManifestEntry:
    if not isinstance(raw, dict):
        raise ManifestError("video entries must be objects")
    missing = _REQUIRED_VIDEO_KEYS - raw.keys()
    if missing:
        raise ManifestError(f"video entry missing keys {sorted(missing)}")
    extra = raw.keys() - _VIDEO_KEYS
    if extra:
        raise ManifestError(f"unknown video keys {sorted(extra)}")
    vid = str(raw["id"])
    instances = []
    for inst in raw.get("instances", []):
        if len(inst) != 3:
            raise ManifestError(f"{vid}: instances are [s, e, g] triples")
        instances.append(tuple(int(v) for v in inst))
    frame_labels = raw.get("frame_labels")
    if frame_labels is not None:
        frame_labels = np.asarray(frame_labels, dtype=np.int8)
        if not np.isin(frame_labels, (0, 1)).all():
            raise ManifestError(f"{vid}: frame labels must be 0/1")
    ann = VideoAnnotation(int(raw["y"]), int(raw["g"]), instances, frame_labels)
    ann.validate(C, None if frame_labels is None else len(frame_labels), vid)
    # frame_labels length pins T; instances must fit inside it
    if frame_labels is not None:
        T = len(frame_labels)
        for s, e, _ in instances:
            if e > T:
                raise ManifestError(f"{vid}: instance ({s}, {e}) out of range for T={T}")
    path = Path(raw["path"])
    if not path.is_absolute():
        path = root / path
    return ManifestEntry(vid, path, ann, float(raw.get("fps", 30.0)), int(raw.get("snippet_len", 16)))


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    return parse_manifest(raw, path.parent)


def parse_manifest(raw: dict, root: Path = Path(".")) -> Manifest:
    for key in ("split", "C", "d", "text_bank", "videos"):
        if key not in raw:
            raise ManifestError(f"manifest missing {key!r}")
    if raw["split"] not in ("train", "test"):
        raise ManifestError(f"split must be train or test, got {raw['split']!r}")
    C, d = int(raw["C"]), int(raw["d"])
    if C < 1 or d < 1:
        raise ManifestError("C and d must be positive")
    entries = [_parse_entry(v, root, raw["split"], C) for v in raw["videos"]]
    ids = [e.video_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ManifestError("duplicate video ids")
    tb = Path(raw["text_bank"])
    return Manifest(raw["split"], C, d, tb if tb.is_absolute() else root / tb, entries)


def manifest_to_json(man: Manifest, root: Path | None = None) -> dict:
    def rel(p: Path) -> str:
        if root is not None:
            try:
                return Path(os.path.relpath(p, root)).as_posix()
            except ValueError:
                pass
        return str(p)

    videos = []
    for e in man.entries:
        item = {"id": e.video_id, "path": rel(e.path), "y": e.annotation.y, "g": e.annotation.g,
                "fps": e.fps, "snippet_len": e.snippet_len}
        if e.annotation.instances or man.split == "test":
            item["instances"] = [list(i) for i in e.annotation.instances]
        if e.annotation.frame_labels is not None:
            item["frame_labels"] = [int(v) for v in e.annotation.frame_labels]
        videos.append(item)
    return {"split": man.split, "C": man.C, "d": man.d, "text_bank": rel(man.text_bank_path), "videos": videos}


def save_manifest(man: Manifest, path) -> None:
    path = Path(path)
    path.write_text(json.dumps(manifest_to_json(man, path.parent), indent=1) + "\n")


# --------------------------------------------------------------------------- synthetic data

@dataclass
class SynthConfig:
    C: int = 4
    d: int = 32
    n_train: int = 200
    n_test: int = 50
    noise: float = 0.25
    rho: float = 0.8
    text_noise: float = 0.01
    max_cosine: float = 0.3
    anomaly_frac: float = 0.5
    T_min: int = 64
    T_max: int = 256
    min_frac: float = 0.05
    max_frac: float = 0.15
    max_intervals: int = 3
    fps: float = 30.0
    snippet_len: int = 16


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def sample_prototypes(C: int, d: int, rng: np.random.Generator, max_cosine=0.3, tries=1000) -> np.ndarray:
    """C+1 random unit vectors with pairwise cosine similarity at most ``max_cosine``."""
    for _ in range(tries):
        u = _unit(rng.standard_normal((C + 1, d)))
        sim = u @ u.T
        np.fill_diagonal(sim, -1.0)
        if sim.max() <= max_cosine:
            return u
    raise RuntimeError(f"could not separate {C + 1} prototypes in d={d} after {tries} resamples")


def _place_intervals(T, n, cfg: SynthConfig, rng):
    lo = max(1, int(round(cfg.min_frac * T)))
    hi = max(lo, int(round(cfg.max_frac * T)))
    for _ in range(1000):
        spans = []
        for _ in range(n):
            length = int(rng.integers(lo, hi + 1))
            s = int(rng.integers(1, T - length + 2))
            spans.append((s, s + length - 1))
        spans.sort()
        # disjoint and separated by at least one normal snippet
        if all(b[0] > a[1] + 1 for a, b in zip(spans, spans[1:])):
            return spans
    raise RuntimeError("could not place disjoint intervals")


def _synth_video(cfg: SynthConfig, u, anomalous: bool, rng):
    T = int(rng.integers(cfg.T_min, cfg.T_max + 1))
    x = u[0] + cfg.noise * rng.standard_normal((T, cfg.d))
    labels = np.zeros(T, dtype=np.int8)
    instances = []
    g = 0
    if anomalous:
        g = int(rng.integers(1, cfg.C + 1))
        n = int(rng.integers(1, cfg.max_intervals + 1))
        mixed = (1.0 - cfg.rho) * u[0] + cfg.rho * u[g]
        center = mixed / np.linalg.norm(mixed)
        for s, e in _place_intervals(T, n, cfg, rng):
            x[s - 1:e] = center + cfg.noise * rng.standard_normal((e - s + 1, cfg.d))
            labels[s - 1:e] = 1
            instances.append((s, e, g))
    return x.astype(np.float32), g, instances, labels


def synth_dataset(cfg: SynthConfig, seed: int, out_dir):
    """Write a seeded synthetic train/test split under ``out_dir``.

    Returns ``(train_manifest, test_manifest, files)`` where ``files`` lists every
    written path. Output is a pure function of ``(cfg, seed)``.
    """
    if cfg.C < 2 or cfg.d < 8:
        raise ValueError("synthetic data needs C >= 2 and d >= 8")
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    u = sample_prototypes(cfg.C, cfg.d, rng, cfg.max_cosine)
    text = _unit(u + cfg.text_noise * rng.standard_normal(u.shape))

    out.mkdir(parents=True, exist_ok=True)
    files = []
    tb_path = out / "text_bank.lecf"
    write_features(text, tb_path)
    files.append(tb_path)

    manifests = []
    for split, n in (("train", cfg.n_train), ("test", cfg.n_test)):
        (out / split).mkdir(exist_ok=True)
        n_anom = int(round(cfg.anomaly_frac * n))
        flags = np.zeros(n, dtype=bool)
        flags[:n_anom] = True
        rng.shuffle(flags)
        entries = []
        for i, anomalous in enumerate(flags):
            vid = f"{split[:2]}{i:04d}"
            x, g, instances, labels = _synth_video(cfg, u, bool(anomalous), rng)
            path = out / split / f"{vid}.lecf"
            write_features(x, path)
            files.append(path)
            ann = VideoAnnotation(int(g > 0), g, instances, labels if split == "test" else None)
            if split == "train":
                ann.instances = []
            entries.append(ManifestEntry(vid, path, ann, cfg.fps, cfg.snippet_len))
        man = Manifest(split, cfg.C, cfg.d, tb_path, entries)
        mpath = out / f"{split}.json"
        save_manifest(man, mpath)
        files.append(mpath)
        manifests.append(man)
    return manifests[0], manifests[1], files


def synth_prototypes(cfg: SynthConfig, seed: int) -> np.ndarray:
    """The category prototypes ``synth_dataset`` draws for this seed (row 0 = normal)."""
    return sample_prototypes(cfg.C, cfg.d, np.random.default_rng(seed), cfg.max_cosine)
