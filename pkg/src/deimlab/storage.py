"""On-disk formats: snapshot matrices, model checkpoints and CSV tables.

Snapshot file layout (all integers little-endian)::

    b"DLAB"            magic
    u32                format version
    u32                number of field dimensions d
    d x u32            field extents
    u32                number of columns (snapshots)
    f64[...]           payload, column-major: one flattened field per column
    u64                metadata length in bytes
    bytes              UTF-8 JSON metadata (sorted keys)

The metadata carries ``times``, the resolved configuration, the seed and a
git-style content hash (SHA-1 of ``b"blob <len>\\0" + payload``) that is
verified on load.

Checkpoint layout::

    b"DLCK", u32 version, u64 header length, JSON header, f64 arrays

where the header lists ``(name, shape)`` for each array in storage order and
arrays are written row-major.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

SNAPSHOT_MAGIC = b"DLAB"
SNAPSHOT_VERSION = 1
CHECKPOINT_MAGIC = b"DLCK"
CHECKPOINT_VERSION = 1
CSV_SCHEMA_VERSION = 1


@dataclass
class SnapshotMatrix:
    """Column-ordered snapshots of a field.

    ``data`` has one flattened field (C order) per column; ``field_shape``
    records how to unflatten it.
    """

    data: np.ndarray
    times: np.ndarray
    field_shape: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise InputError(f"snapshot data must be 2-D, got {self.data.shape}")
        self.times = np.asarray(self.times, dtype=np.float64)
        if not self.field_shape:
            self.field_shape = (self.data.shape[0],)
        self.field_shape = tuple(int(s) for s in self.field_shape)
        if int(np.prod(self.field_shape)) != self.data.shape[0]:
            raise InputError(f"field shape {self.field_shape} does not match {self.data.shape[0]} rows")
        if self.times.shape != (self.data.shape[1],):
            raise InputError(f"{self.times.size} times for {self.data.shape[1]} columns")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]

    def field(self, k: int) -> np.ndarray:
        return self.data[:, k].reshape(self.field_shape)

    @classmethod
    def from_fields(cls, fields: Sequence[np.ndarray], times, meta=None) -> "SnapshotMatrix":
        fields = [np.asarray(f, dtype=np.float64) for f in fields]
        shape = fields[0].shape
        data = np.stack([f.reshape(-1) for f in fields], axis=1)
        return cls(data=data, times=np.asarray(times), field_shape=shape, meta=dict(meta or {}))


def content_hash(payload: bytes) -> str:
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(payload))
    h.update(payload)
    return h.hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_meta(meta: dict) -> bytes:
    return json.dumps(_jsonable(meta), sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_snapshots(path, snaps: SnapshotMatrix) -> str:
    """Write ``snaps``; returns the payload content hash."""
    payload = np.asfortranarray(snaps.data).astype("<f8").tobytes(order="F")
    digest = content_hash(payload)
    meta = dict(snaps.meta)
    meta["times"] = snaps.times
    meta["content_hash"] = digest
    mbytes = dumps_meta(meta)
    header = SNAPSHOT_MAGIC + struct.pack("<II", SNAPSHOT_VERSION, len(snaps.field_shape))
    header += struct.pack(f"<{len(snaps.field_shape)}I", *snaps.field_shape)
    header += struct.pack("<I", snaps.n_cols)
    Path(path).write_bytes(header + payload + struct.pack("<Q", len(mbytes)) + mbytes)
    return digest


def read_snapshots(path, verify: bool = True) -> SnapshotMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != SNAPSHOT_MAGIC:
        raise InputError(f"{path}: not a snapshot file (bad magic)")
    version, nd = struct.unpack_from("<II", raw, 4)
    if version != SNAPSHOT_VERSION:
        raise InputError(f"{path}: unsupported snapshot version {version}")
    off = 12
    shape = struct.unpack_from(f"<{nd}I", raw, off)
    off += 4 * nd
    (ncols,) = struct.unpack_from("<I", raw, off)
    off += 4
    nrows = int(np.prod(shape))
    nbytes = 8 * nrows * ncols
    payload = raw[off : off + nbytes]
    if len(payload) != nbytes:
        raise InputError(f"{path}: truncated payload")
    off += nbytes
    (mlen,) = struct.unpack_from("<Q", raw, off)
    meta = json.loads(raw[off + 8 : off + 8 + mlen].decode("utf-8"))
    if verify and meta.get("content_hash") != content_hash(payload):
        raise InputError(f"{path}: content hash mismatch")
    data = np.frombuffer(payload, dtype="<f8").reshape((nrows, ncols), order="F").astype(np.float64)
    times = np.asarray(meta.pop("times"), dtype=np.float64)
    return SnapshotMatrix(data=data, times=times, field_shape=tuple(shape), meta=meta)


def write_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> str:
    names = list(arrays)
    header = {
        "arrays": [[name, list(np.shape(arrays[name]))] for name in names],
        "meta": meta or {},
    }
    hbytes = dumps_meta(header)
    body = b"".join(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in names)
    blob = CHECKPOINT_MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, len(hbytes)) + hbytes + body
    Path(path).write_bytes(blob)
    return content_hash(body)


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise InputError(f"{path}: not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    off = 16 + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
        off += 8 * n
    if off != len(raw):
        raise InputError(f"{path}: checkpoint has {len(raw) - off} trailing bytes")
    return arrays, header["meta"]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comments: dict | None = None) -> None:
    """CSV with optional ``# key: value`` comment lines before the header.

    Floats are written with ``repr`` so values round-trip exactly.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version: {CSV_SCHEMA_VERSION}\n")
        for k, v in (comments or {}).items():
            fh.write(f"# {k}: {json.dumps(_jsonable(v), sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]], dict]:
    comments = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            comments[key] = val
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return rows[0], rows[1:], comments
