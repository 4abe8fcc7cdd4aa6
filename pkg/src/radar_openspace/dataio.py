"""RSEG dataset containers, manifests, synthetic dataset builder, batches.

RSEG container layout (little-endian throughout):
  magic "RSEG", u16 version = 1
  per record: u32 frame_id, u16 sequence_id, u8 payload_count,
              then per payload: u8 kind, u8 dtype, u8 ndim, u32 dims[ndim],
              raw row-major bytes.
Kinds: 0 = rad, 1 = ra, 2 = doa, 3 = mask_polar, 4 = mask_cart.
Dtypes: 0 = float32, 1 = uint8.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pipeline, simulate
from .geometry import CartesianGrid, PolarGrid

MAGIC = b"RSEG"
VERSION = 1

KIND_RAD = 0
KIND_RA = 1
KIND_DOA = 2
KIND_MASK_POLAR = 3
KIND_MASK_CART = 4

KIND_NAMES = {
    KIND_RAD: "rad",
    KIND_RA: "ra",
    KIND_DOA: "doa",
    KIND_MASK_POLAR: "mask_polar",
    KIND_MASK_CART: "mask_cart",
}
KIND_IDS = {v: k for k, v in KIND_NAMES.items()}
MASK_KINDS = (KIND_MASK_POLAR, KIND_MASK_CART)

DTYPE_F32 = 0
DTYPE_U8 = 1
_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_U8: np.dtype("<u1")}
_DTYPE_IDS = {np.dtype(np.float32): DTYPE_F32, np.dtype(np.uint8): DTYPE_U8}


class ContainerError(ValueError):
    """Base class for RSEG container faults."""


class BadMagicError(ContainerError):
    pass


class VersionMismatchError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


@dataclass
class FrameRecord:
    frame_id: int
    sequence_id: int
    payloads: dict[int, np.ndarray]

    def validate(self) -> None:
        if not self.payloads:
            raise ValueError("record needs at least one payload")
        if not any(k in self.payloads for k in MASK_KINDS):
            raise ValueError("record needs at least one mask payload")
        for kind, arr in self.payloads.items():
            if kind not in KIND_NAMES:
                raise ValueError(f"unknown payload kind {kind}")
            if np.dtype(arr.dtype) not in _DTYPE_IDS:
                raise ValueError(f"unsupported payload dtype {arr.dtype}")


def write_container(records: list[FrameRecord], path: str | Path) -> None:
    chunks = [MAGIC, struct.pack("<H", VERSION)]
    for rec in records:
        rec.validate()
        chunks.append(
            struct.pack("<IHB", rec.frame_id, rec.sequence_id, len(rec.payloads))
        )
        for kind in sorted(rec.payloads):
            arr = np.ascontiguousarray(rec.payloads[kind])
            dtype_id = _DTYPE_IDS[np.dtype(arr.dtype)]
            chunks.append(struct.pack("<BBB", kind, dtype_id, arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            chunks.append(arr.astype(_DTYPES[dtype_id], copy=False).tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedPayloadError(
                f"container truncated at byte {self.pos} (needed {n} more)"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def done(self) -> bool:
        return self.pos >= len(self.buf)


def read_container(path: str | Path) -> list[FrameRecord]:
    buf = Path(path).read_bytes()
    rd = _Reader(buf)
    if len(buf) < 6:
        raise TruncatedPayloadError("container shorter than its header")
    if rd.take(4) != MAGIC:
        raise BadMagicError(f"bad magic in {path}")
    (version,) = struct.unpack("<H", rd.take(2))
    if version != VERSION:
        raise VersionMismatchError(f"unsupported container version {version}")
    records = []
    while not rd.done():
        frame_id, sequence_id, n_payloads = struct.unpack("<IHB", rd.take(7))
        payloads: dict[int, np.ndarray] = {}
        for _ in range(n_payloads):
            kind, dtype_id, ndim = struct.unpack("<BBB", rd.take(3))
            if dtype_id not in _DTYPES:
                raise ContainerError(f"unknown dtype id {dtype_id}")
            dims = struct.unpack(f"<{ndim}I", rd.take(4 * ndim))
            n_bytes = int(np.prod(dims, dtype=np.int64)) * _DTYPES[dtype_id].itemsize
            payloads[kind] = np.frombuffer(rd.take(n_bytes), dtype=_DTYPES[dtype_id]).reshape(dims).copy()
        records.append(FrameRecord(frame_id, sequence_id, payloads))
    return records


# ---------------------------------------------------------------------------
# manifest


@dataclass
class SequenceInfo:
    sequence_id: int
    n_frames: int
    split: str                # "train" | "eval"
    filename: str


@dataclass
class DatasetManifest:
    seed: int
    sequences: list[SequenceInfo]
    stats: dict[str, tuple[float, float]]   # modality -> (mean, std)
    root: Path = field(default_factory=Path)

    def split_sequences(self, split: str) -> list[SequenceInfo]:
        return [s for s in self.sequences if s.split == split]

    def render(self) -> str:
        lines = [f"version={VERSION}", f"seed={self.seed}", f"n_sequences={len(self.sequences)}"]
        for s in self.sequences:
            lines.append(f"seq.{s.sequence_id}.frames={s.n_frames}")
            lines.append(f"seq.{s.sequence_id}.split={s.split}")
            lines.append(f"seq.{s.sequence_id}.file={s.filename}")
        for name in sorted(self.stats):
            mean, std = self.stats[name]
            lines.append(f"stats.{name}.mean={mean!r}")
            lines.append(f"stats.{name}.std={std!r}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.render())

    @staticmethod
    def parse(text: str, root: Path | None = None) -> "DatasetManifest":
        kv: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key] = value
        n = int(kv["n_sequences"])
        seqs = [
            SequenceInfo(
                sequence_id=i,
                n_frames=int(kv[f"seq.{i}.frames"]),
                split=kv[f"seq.{i}.split"],
                filename=kv[f"seq.{i}.file"],
            )
            for i in range(n)
        ]
        stats: dict[str, tuple[float, float]] = {}
        for key, value in kv.items():
            if key.startswith("stats.") and key.endswith(".mean"):
                name = key[len("stats.") : -len(".mean")]
                stats[name] = (float(value), float(kv[f"stats.{name}.std"]))
        return DatasetManifest(
            seed=int(kv["seed"]), sequences=seqs, stats=stats, root=root or Path()
        )

    @staticmethod
    def load(path: str | Path) -> "DatasetManifest":
        path = Path(path)
        return DatasetManifest.parse(path.read_text(), root=path.parent)


MANIFEST_NAME = "manifest.txt"


# ---------------------------------------------------------------------------
# synthetic dataset


def build_synthetic_dataset(
    seed: int,
    out_dir: str | Path,
    n_sequences: int = 11,
    frames_per_seq: int = 32,
    cfg: simulate.RadarConfig | None = None,
    noise_std: float = 0.01,
    window: str = "hann",
) -> DatasetManifest:
    """Write one RSEG file per driving sequence plus a manifest.

    Each sequence is a drifting-sensor sweep over a fixed set of parked
    cars. The last two sequences form the eval split; everything is
    deterministic in `seed`.
    """
    if n_sequences < 3:
        raise ValueError("need at least 3 sequences for a train/eval split")
    cfg = cfg or simulate.default_config()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame_dt = 0.1  # seconds between frames in a sequence
    sequences = []
    train_sums: dict[str, list[np.ndarray]] = {"rad": [], "ra": [], "doa": []}
    rng = np.random.default_rng(seed)
    seq_seeds = rng.integers(0, 2**31 - 1, size=n_sequences)
    for sid in range(n_sequences):
        seq_rng = np.random.default_rng(seq_seeds[sid])
        n_cars = int(seq_rng.integers(2, 7))
        base = simulate.make_parking_scene(int(seq_seeds[sid]), n_cars, cfg)
        speed = seq_rng.uniform(0.3, 2.5)
        direction = seq_rng.uniform(0, 2 * np.pi)
        vel = (speed * np.cos(direction), speed * np.sin(direction))
        split = "train" if sid < n_sequences - 2 else "eval"
        records = []
        for f in range(frames_per_seq):
            offset = (-vel[0] * frame_dt * f, -vel[1] * frame_dt * f)
            scene = simulate.drift_scene(base, cfg, offset, sensor_velocity=vel)
            cube = simulate.synthesize_frame(
                scene, cfg, noise_std=noise_std,
                noise_seed=int(seq_seeds[sid]) * 1000 + f, frame_id=f,
            )
            rda = pipeline.sca_to_rda(cube, window=window)
            ra = pipeline.rda_to_ra(rda)
            doa = pipeline.ra_to_doa(ra)
            rad = pipeline.rad_input(rda)
            mask_c = simulate.ground_truth_mask(scene, cfg, "cartesian")
            mask_p = simulate.ground_truth_mask(scene, cfg, "polar")
            payloads = {
                KIND_RAD: rad,
                KIND_RA: ra.data,
                KIND_DOA: doa.data,
                KIND_MASK_POLAR: mask_p.grid,
                KIND_MASK_CART: mask_c.grid,
            }
            records.append(FrameRecord(frame_id=f, sequence_id=sid, payloads=payloads))
            if split == "train":
                train_sums["rad"].append(_moments(rad))
                train_sums["ra"].append(_moments(ra.data))
                train_sums["doa"].append(_moments(doa.data))
        filename = f"seq_{sid:03d}.rseg"
        write_container(records, out_dir / filename)
        sequences.append(SequenceInfo(sid, frames_per_seq, split, filename))
    stats = {}
    for name, moments in train_sums.items():
        m = np.sum(moments, axis=0)
        mean = m[1] / m[0]
        var = m[2] / m[0] - mean**2
        stats[name] = (float(mean), float(np.sqrt(max(var, 1e-12))))
    manifest = DatasetManifest(seed=seed, sequences=sequences, stats=stats, root=out_dir)
    manifest.save(out_dir / MANIFEST_NAME)
    return manifest


def _moments(arr: np.ndarray) -> np.ndarray:
    a = arr.astype(np.float64)
    return np.array([a.size, a.sum(), np.square(a).sum()])


# ---------------------------------------------------------------------------
# batch iteration

_MODALITY_KIND = {"rad": KIND_RAD, "ra": KIND_RA, "doa": KIND_DOA}
_LABEL_KIND = {"polar": KIND_MASK_POLAR, "cartesian": KIND_MASK_CART}


def load_split(
    manifest: DatasetManifest, split: str, modality: str, label_domain: str
) -> tuple[np.ndarray, np.ndarray]:
    """All frames of a split as (inputs NHWC normalized, masks NHW)."""
    kind_x = _MODALITY_KIND[modality]
    kind_y = _LABEL_KIND[label_domain]
    xs, ys = [], []
    for seq in manifest.split_sequences(split):
        for rec in read_container(manifest.root / seq.filename):
            if kind_x not in rec.payloads or kind_y not in rec.payloads:
                raise KeyError(
                    f"sequence {seq.sequence_id} lacks {modality}/{label_domain} payloads"
                )
            xs.append(rec.payloads[kind_x])
            ys.append(rec.payloads[kind_y])
    x = np.stack(xs)
    if x.ndim == 3:
        x = x[..., None]
    mean, std = manifest.stats[modality]
    x = pipeline.normalize(x, mean, std)
    return x, np.stack(ys)


def batch_iter(
    manifest: DatasetManifest,
    split: str,
    modality: str,
    label_domain: str,
    batch_size: int,
    shuffle_seed: int | None = None,
    data: tuple[np.ndarray, np.ndarray] | None = None,
):
    """Deterministic batches of (input NHWC, mask NHW); final batch may be
    partial. Pass preloaded `data` to avoid re-reading containers."""
    x, y = data if data is not None else load_split(manifest, split, modality, label_domain)
    order = np.arange(len(x))
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(order)
    for start in range(0, len(order), batch_size):
        sel = order[start : start + batch_size]
        yield x[sel], y[sel]
