"""Feature container format, dataset manifest, temporal alignment, label
normalization, and the synthetic corpus generator.

Feature file layout (bit-exact, little-endian):
    magic "PIDF" | version u32 = 1 | modality count u8 |
    per modality: name length u8, ASCII name, T u32, D u32, T*D float64
                  row-major (time-major)
Required modality names are exactly {rgb, flow, audio}, unique per file.

The manifest is JSON-lines (UTF-8, LF): a header object with the declared
dims, the train-split score min/max, and the alignment length, followed by
one object per sample (id, path, score, split).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .rng import RngState

MAGIC = b"PIDF"
VERSION = 1
MODALITIES = ("rgb", "flow", "audio")


@dataclass
class ModalityBundle:
    """The three raw input sequences, each (T_m, d_m) time-major."""

    rgb: np.ndarray
    flow: np.ndarray
    audio: np.ndarray

    def get(self, m: str) -> np.ndarray:
        return getattr(self, m)

    def dims(self) -> tuple[int, int, int]:
        return (self.rgb.shape[1], self.flow.shape[1], self.audio.shape[1])


def write_sample(path, bundle: ModalityBundle):
    """Serialize a bundle; round-trips bitwise through read_sample."""
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<B", len(MODALITIES))]
    for name in MODALITIES:
        arr = np.ascontiguousarray(bundle.get(name), dtype="<f8")
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError(f"write_sample: modality {name} must be a non-empty (T, D) array")
        ascii_name = name.encode("ascii")
        parts.append(struct.pack("<B", len(ascii_name)))
        parts.append(ascii_name)
        parts.append(struct.pack("<II", arr.shape[0], arr.shape[1]))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_sample(path) -> ModalityBundle:
    """Parse and validate a feature file; errors carry the byte offset."""
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise DataFormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}", offset=0)
    off = 4
    if len(blob) < off + 5:
        raise DataFormatError("truncated header", offset=off)
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != VERSION:
        raise DataFormatError(f"unsupported version {version}", offset=4)
    count = blob[off]
    off += 1
    found: dict[str, np.ndarray] = {}
    for _ in range(count):
        if len(blob) < off + 1:
            raise DataFormatError("truncated modality name length", offset=off)
        name_len = blob[off]
        off += 1
        if len(blob) < off + name_len + 8:
            raise DataFormatError("truncated modality header", offset=off)
        name = blob[off:off + name_len].decode("ascii", errors="replace")
        off += name_len
        t, d = struct.unpack_from("<II", blob, off)
        off += 8
        nbytes = t * d * 8
        if len(blob) < off + nbytes:
            raise DataFormatError(
                f"truncated payload for modality {name!r}: need {nbytes} bytes", offset=off)
        if name in found:
            raise DataFormatError(f"duplicate modality name {name!r}", offset=off - name_len - 8)
        found[name] = np.frombuffer(blob, dtype="<f8", count=t * d, offset=off) \
            .reshape(t, d).astype(np.float64)
        off += nbytes
    if off != len(blob):
        raise DataFormatError(f"{len(blob) - off} trailing bytes after payload", offset=off)
    missing = [m for m in MODALITIES if m not in found]
    if missing:
        raise DataFormatError(f"missing modality: {', '.join(missing)}")
    extra = sorted(set(found) - set(MODALITIES))
    if extra:
        raise DataFormatError(f"unexpected modality name(s): {', '.join(extra)}")
    return ModalityBundle(rgb=found["rgb"], flow=found["flow"], audio=found["audio"])


# ---------------------------------------------------------------------------
# alignment and labels

def _crop_or_pad(x: np.ndarray, length: int, start: int | None) -> np.ndarray:
    t = x.shape[0]
    if t == length:
        return x
    if t > length:
        s = (t - length) // 2 if start is None else start
        return x[s:s + length]
    out = np.zeros((length, x.shape[1]), dtype=np.float64)
    out[:t] = x
    return out


def align(bundle: ModalityBundle, length: int, mode: str,
          rng: RngState | None = None, sync_crop: bool = False) -> ModalityBundle:
    """Unify every modality to the target length: random crop in train mode,
    centered crop in eval mode, zero tail padding when too short.

    Train crops are drawn independently per modality from the sample's rng
    stream unless sync_crop is set, in which case one uniform draw positions
    all three proportionally.
    """
    if length < 1:
        raise ValueError(f"align: length must be >= 1, got {length}")
    aligned = {}
    shared = rng.uniform() if (mode == "train" and sync_crop) else None
    for m in MODALITIES:
        x = bundle.get(m)
        start = None
        if mode == "train" and x.shape[0] > length:
            span = x.shape[0] - length + 1
            if sync_crop:
                start = int(shared * span)
            else:
                start = rng.randint(0, span)
        aligned[m] = _crop_or_pad(x, length, start)
    return ModalityBundle(**aligned)


def normalize_labels(train_scores) -> tuple[float, float]:
    """Min-max bounds from the training split; y = (s - lo) / (hi - lo).
    Val/test labels may land outside [0, 1] and are reported unclipped."""
    scores = np.asarray(train_scores, dtype=np.float64)
    lo, hi = float(scores.min()), float(scores.max())
    if lo == hi:
        raise ValueError("normalize_labels: constant training scores")
    return lo, hi


def normalize(scores, lo: float, hi: float) -> np.ndarray:
    return (np.asarray(scores, dtype=np.float64) - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# manifest

@dataclass
class ManifestEntry:
    sample_id: str
    path: str
    score: float
    split: str


@dataclass
class Manifest:
    dims: tuple[int, int, int]
    score_min: float
    score_max: float
    align_length: int
    entries: list[ManifestEntry]
    root: Path

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path


def write_manifest(path, dims, score_min: float, score_max: float,
                   align_length: int, entries: list[ManifestEntry]):
    lines = [json.dumps({"dims": list(dims), "score_min": score_min,
                         "score_max": score_max, "align_length": align_length})]
    for e in entries:
        lines.append(json.dumps({"id": e.sample_id, "path": e.path,
                                 "score": e.score, "split": e.split}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path, check_files: bool = True) -> Manifest:
    p = Path(path)
    lines = p.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataFormatError("empty manifest")
    try:
        header = json.loads(lines[0])
        entries = [json.loads(ln) for ln in lines[1:] if ln.strip()]
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"manifest is not valid JSON-lines: {exc}") from exc
    for key in ("dims", "score_min", "score_max", "align_length"):
        if key not in header:
            raise DataFormatError(f"manifest header missing {key!r}")
    if not header["score_min"] < header["score_max"]:
        raise DataFormatError("manifest header: score_min must be < score_max")
    man = Manifest(dims=tuple(header["dims"]), score_min=float(header["score_min"]),
                   score_max=float(header["score_max"]),
                   align_length=int(header["align_length"]),
                   entries=[ManifestEntry(e["id"], e["path"], float(e["score"]), e["split"])
                            for e in entries],
                   root=p.parent)
    for e in man.entries:
        if e.split not in ("train", "val", "test"):
            raise DataFormatError(f"sample {e.sample_id}: unknown split {e.split!r}")
        if check_files:
            fp = man.resolve(e)
            if not fp.exists():
                raise DataFormatError(f"sample {e.sample_id}: missing file {fp}")
            if read_sample(fp).dims() != man.dims:
                raise DataFormatError(
                    f"sample {e.sample_id}: dims {read_sample(fp).dims()} != manifest {man.dims}")
    return man


class AlignedDataset:
    """A manifest split loaded into memory, re-alignable per epoch.

    ``materialize`` returns ({modality: (B, L, d)}, normalized targets); in
    train mode crops are redrawn from the supplied rng, in eval mode crops are
    centered and the result is deterministic.
    """

    def __init__(self, manifest: Manifest, split: str, sync_crop: bool = False):
        self.entries = manifest.split(split)
        self.bundles = [read_sample(manifest.resolve(e)) for e in self.entries]
        self.raw_scores = np.array([e.score for e in self.entries], dtype=np.float64)
        self.targets = normalize(self.raw_scores, manifest.score_min, manifest.score_max)
        self.length = manifest.align_length
        self.sync_crop = sync_crop

    def __len__(self):
        return len(self.entries)

    def materialize(self, mode: str, rng: RngState | None = None):
        stacks = {m: [] for m in MODALITIES}
        for i, bundle in enumerate(self.bundles):
            sample_rng = rng.derive(i) if rng is not None else None
            aligned = align(bundle, self.length, mode, sample_rng, self.sync_crop)
            for m in MODALITIES:
                stacks[m].append(aligned.get(m))
        batch = {m: np.stack(stacks[m]) for m in MODALITIES}
        return batch, self.targets


# ---------------------------------------------------------------------------
# synthetic corpus

def synth_sample(rng: RngState, dims: tuple[int, int, int],
                 len_range: tuple[int, int]):
    """One synthetic sample with planted cross-modal score structure.

    A latent quality s ~ U(0,1) drives: a slope-s ramp on rgb channel 0,
    floor(s*8)+1 evenly spaced unit spikes on flow channel 0, and a sine of
    frequency 1+4s cycles on audio channel 0. Every channel carries N(0, 0.1)
    noise so no single modality is clean; the raw score is 10s + N(0, 0.05).
    """
    s = rng.uniform()
    t_len = rng.randint(len_range[0], len_range[1] + 1)
    d_v, d_f, d_a = dims

    rgb = rng.normal((t_len, d_v)) * 0.1
    rgb[:, 0] += s * np.arange(t_len) / max(1, t_len - 1)

    flow = rng.normal((t_len, d_f)) * 0.1
    bursts = int(s * 8) + 1
    centers = ((np.arange(bursts) + 0.5) * t_len / bursts).astype(int)
    flow[np.clip(centers, 0, t_len - 1), 0] += 1.0

    audio = rng.normal((t_len, d_a)) * 0.1
    audio[:, 0] += np.sin(2.0 * np.pi * (1.0 + 4.0 * s) * np.arange(t_len) / t_len)

    score = 10.0 * s + 0.05 * rng.normal()
    return ModalityBundle(rgb, flow, audio), float(score), float(s)


TRAIN_FRACTION = 0.75  # leading samples train, the rest val


def gen_synth(out_dir, n: int, seed: int, dims: tuple[int, int, int] = (32, 32, 24),
              len_range: tuple[int, int] = (12, 24), align_length: int = 16):
    """Write n sample files plus a manifest; fully reproducible from the
    arguments. Returns (manifest path, latent qualities)."""
    if n < 4:
        raise ValueError(f"gen_synth: n must be >= 4, got {n}")
    if len_range[0] < 2 or len_range[1] < len_range[0]:
        raise ValueError(f"gen_synth: bad length range {len_range}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = RngState(seed)
    n_train = max(2, int(n * TRAIN_FRACTION))
    entries, latents = [], []
    for i in range(n):
        bundle, score, s = synth_sample(base.derive(i), dims, len_range)
        fname = f"sample{i:05d}.pidf"
        write_sample(out / fname, bundle)
        split = "train" if i < n_train else "val"
        entries.append(ManifestEntry(f"s{i:05d}", fname, score, split))
        latents.append(s)
    train_scores = [e.score for e in entries if e.split == "train"]
    lo, hi = normalize_labels(train_scores)
    manifest_path = out / "manifest.jsonl"
    write_manifest(manifest_path, dims, lo, hi, align_length, entries)
    return manifest_path, latents
