"""Binary dataset and checkpoint files, plus CSV and PGM exporters.

Dataset file (little-endian)::

    b"SVTF" | version u16 | N u32 | T u32 | H u32 | W u32 | flags u8
    | meta_len u32 | meta (UTF-8 "key=json" lines) | N*T*H*W float32

Checkpoint file (little-endian)::

    b"SVCK" | version u16 | kind_len u8 | kind | arch_len u32 | arch lines
    | n_entries u32 | entries | checksum u64

    entry := name_len u16 | name | rank u8 | extents u32 * rank | float64 data

The checksum is an 8-byte BLAKE2b digest of every preceding byte.
Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .models import Architecture, ModelParams, parameter_shapes
from .threat import Dataset, ObservationGrid

__all__ = [
    "PersistenceError",
    "FormatError",
    "VersionError",
    "TruncationError",
    "CountMismatchError",
    "ChecksumError",
    "MissingParameterError",
    "dataset_to_bytes",
    "dataset_from_bytes",
    "write_dataset",
    "read_dataset",
    "checkpoint_to_bytes",
    "checkpoint_from_bytes",
    "write_checkpoint",
    "read_checkpoint",
    "field_image_bytes",
    "export_field_image",
    "write_loss_history_csv",
    "write_coordinates_csv",
    "write_report_csv",
]

DATASET_MAGIC = b"SVTF"
CHECKPOINT_MAGIC = b"SVCK"
DATASET_VERSION = 1
CHECKPOINT_VERSION = 1
FLAG_SUPPORT = 0x01

_DS_HEADER = struct.Struct("<4sHIIIIB")
_U32 = struct.Struct("<I")


class PersistenceError(Exception):
    pass


class FormatError(PersistenceError):
    pass


class VersionError(PersistenceError):
    pass


class TruncationError(PersistenceError):
    pass


class CountMismatchError(PersistenceError):
    pass


class ChecksumError(PersistenceError):
    pass


class MissingParameterError(PersistenceError):
    pass


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_kv(d: dict) -> bytes:
    lines = []
    for key in sorted(d):
        if "=" in key or "\n" in key:
            raise ValueError(f"invalid metadata key {key!r}")
        lines.append(f"{key}={json.dumps(d[key], sort_keys=True, separators=(',', ':'))}")
    return "\n".join(lines).encode("utf-8")


def _decode_kv(raw: bytes) -> dict:
    out = {}
    text = raw.decode("utf-8")
    for line in text.split("\n") if text else []:
        key, _, value = line.partition("=")
        out[key] = json.loads(value)
    return out


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncationError(f"file truncated while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


# -- datasets ----------------------------------------------------------------

def dataset_to_bytes(ds: Dataset) -> bytes:
    N, T, _ = ds.values.shape
    side = ds.grid.side
    meta = dict(ds.metadata)
    meta["provenance"] = ds.provenance
    meta_raw = _encode_kv(meta)
    flags = FLAG_SUPPORT if ds.provenance == "support" else 0
    head = _DS_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, N, T, side, side, flags)
    payload = np.ascontiguousarray(ds.values, dtype="<f4").tobytes()
    return head + _U32.pack(len(meta_raw)) + meta_raw + payload


def dataset_from_bytes(buf: bytes) -> Dataset:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r}: expected {DATASET_MAGIC!r}")
    (version,) = r.unpack("<H", "version")
    if version != DATASET_VERSION:
        raise VersionError(f"unsupported dataset version {version}")
    N, T, H, W, flags = r.unpack("<IIIIB", "counts")
    if H != W:
        raise FormatError(f"grid must be square, header says {H}x{W}")
    (meta_len,) = r.unpack("<I", "metadata length")
    meta = _decode_kv(r.take(meta_len, "metadata"))
    expected = N * T * H * W * 4
    remaining = len(buf) - r.pos
    if remaining < expected:
        raise TruncationError(f"payload has {remaining} bytes, header requires {expected}")
    if remaining > expected:
        raise CountMismatchError(f"payload has {remaining} bytes, header counts imply {expected}")
    values = np.frombuffer(buf, dtype="<f4", count=N * T * H * W, offset=r.pos)
    values = values.astype(np.float64).reshape(N, T, H * W)
    provenance = meta.pop("provenance", "support" if flags & FLAG_SUPPORT else "real")
    if bool(flags & FLAG_SUPPORT) != (provenance == "support"):
        raise FormatError("support flag disagrees with recorded provenance")
    return Dataset(values, ObservationGrid(H), provenance, meta)


def write_dataset(ds: Dataset, path) -> None:
    _atomic_write(path, dataset_to_bytes(ds))


def read_dataset(path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())


# -- checkpoints -------------------------------------------------------------

def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def checkpoint_to_bytes(params: ModelParams) -> bytes:
    kind = params.kind.encode("ascii")
    arch = _encode_kv(params.arch.to_dict())
    parts = [CHECKPOINT_MAGIC, struct.pack("<HB", CHECKPOINT_VERSION, len(kind)), kind,
             _U32.pack(len(arch)), arch, _U32.pack(len(params.tensors))]
    for name, value in params.tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype="<f8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + _checksum(body)


def checkpoint_from_bytes(buf: bytes) -> ModelParams:
    if len(buf) < 4 or buf[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}: expected {CHECKPOINT_MAGIC!r}")
    if len(buf) < 14:
        raise TruncationError("checkpoint shorter than its fixed header")
    body, stored = buf[:-8], buf[-8:]
    r = _Reader(body)
    r.take(4, "magic")
    version, kind_len = r.unpack("<HB", "version")
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    if _checksum(body) != stored:
        raise ChecksumError("checkpoint checksum mismatch")
    kind = r.take(kind_len, "model kind").decode("ascii")
    (arch_len,) = r.unpack("<I", "descriptor length")
    arch = Architecture.from_dict(_decode_kv(r.take(arch_len, "descriptor")))
    if arch.kind != kind:
        raise FormatError(f"descriptor kind {arch.kind!r} disagrees with tag {kind!r}")
    (count,) = r.unpack("<I", "entry count")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "entry name length")
        name = r.take(name_len, "entry name").decode("utf-8")
        (rank,) = r.unpack("<B", "rank")
        shape = r.unpack(f"<{rank}I", "extents") if rank else ()
        n = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(r.take(8 * n, name), dtype="<f8").astype(np.float64)
        if name in tensors:
            raise FormatError(f"parameter {name!r} appears twice")
        tensors[name] = data.reshape(shape)
    if r.pos != len(body):
        raise CountMismatchError(f"{len(body) - r.pos} trailing bytes after {count} entries")
    expected = parameter_shapes(arch)
    missing = [k for k in expected if k not in tensors]
    if missing:
        raise MissingParameterError(f"checkpoint lacks parameters {missing}")
    extra = [k for k in tensors if k not in expected]
    if extra:
        raise FormatError(f"unexpected parameters {extra}")
    for k, shape in expected.items():
        if tensors[k].shape != shape:
            raise FormatError(f"{k} has shape {tensors[k].shape}, architecture needs {shape}")
    return ModelParams(arch, {k: tensors[k] for k in expected})


def write_checkpoint(params: ModelParams, path) -> None:
    _atomic_write(path, checkpoint_to_bytes(params))


def read_checkpoint(path) -> ModelParams:
    return checkpoint_from_bytes(Path(path).read_bytes())


# -- exporters ---------------------------------------------------------------

def field_image_bytes(observations: np.ndarray, t: int, side: int) -> bytes:
    """Binary PGM of frame ``t`` (1-based), scaled by the datum's min and max."""
    obs = np.asarray(observations, dtype=np.float64)
    T = obs.shape[0]
    if not 1 <= t <= T:
        raise ValueError(f"t={t} outside horizon 1..{T}")
    lo, hi = float(obs.min()), float(obs.max())
    frame = obs[t - 1].reshape(side, side)
    if hi - lo <= 0.0:
        pix = np.full((side, side), 128, dtype=np.uint8)
    else:
        pix = np.rint(255.0 * (frame - lo) / (hi - lo)).clip(0, 255).astype(np.uint8)
    return f"P5\n{side} {side}\n255\n".encode("ascii") + pix.tobytes()


def export_field_image(datum, t: int, path, side: int | None = None) -> None:
    obs = getattr(datum, "observations", datum)
    obs = np.asarray(obs)
    if side is None:
        side = int(round(np.sqrt(obs.shape[1])))
    _atomic_write(path, field_image_bytes(obs, t, side))


def write_loss_history_csv(history, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "reconstruction", "kl_primary", "kl_shared", "total"])
        for i, row in enumerate(history, start=1):
            w.writerow([i] + [repr(float(v)) for v in row.as_row()])


def write_coordinates_csv(coords_by_label: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "dataset"])
        for label, coords in coords_by_label.items():
            for c in np.asarray(coords):
                w.writerow([repr(float(v)) for v in c[:3]] + [label])


def write_report_csv(report, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    k = report.rows[0].table.shape[1]
    names = ("mean", "variance", "skewness", "kurtosis")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset"] + [f"{m}_S{j + 1}" for m in names for j in range(k)] + ["distance"])
        for row in report.rows:
            dist = report.distances.get(row.label)
            w.writerow([row.label] + [repr(float(v)) for v in row.cells()]
                       + ["" if dist is None else repr(float(dist))])
