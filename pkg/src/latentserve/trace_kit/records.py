"""Trace and catalog containers plus their on-disk formats.

Three formats are supported:

* CSV trace, header ``ts_ms,object_id,model_id,model_version``.
* Binary trace: ``b"LBTR"``, a version byte, then packed little-endian
  ``{u64 ts_ms, u64 object_id, u32 model_id, u32 model_version}`` records.
* Catalog CSV, header ``object_id,image_bytes,latent_bytes``.

Lines starting with ``#`` in the CSV formats are comments and are skipped
on read.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

BINARY_MAGIC = b"LBTR"
BINARY_VERSION = 1
RECORD_DTYPE = np.dtype(
    [("ts_ms", "<u8"), ("object_id", "<u8"), ("model_id", "<u4"), ("model_version", "<u4")]
)
assert RECORD_DTYPE.itemsize == 24

TRACE_HEADER = ["ts_ms", "object_id", "model_id", "model_version"]
CATALOG_HEADER = ["object_id", "image_bytes", "latent_bytes"]


class TraceRecord(NamedTuple):
    ts_ms: int
    object_id: int
    model_id: int
    model_version: int


@dataclass(frozen=True)
class ObjectMeta:
    image_bytes: int
    latent_bytes: int

    def __post_init__(self):
        if not 0 < self.latent_bytes < self.image_bytes:
            raise ValueError(
                f"need 0 < latent_bytes < image_bytes, got {self.latent_bytes}, {self.image_bytes}"
            )


class Trace:
    """Columnar access trace.

    Columns are numpy arrays of equal length. Iteration yields
    :class:`TraceRecord` tuples with plain Python ints.
    """

    __slots__ = ("ts_ms", "object_id", "model_id", "model_version")

    def __init__(self, ts_ms, object_id, model_id=None, model_version=None):
        self.ts_ms = np.asarray(ts_ms, dtype=np.uint64)
        self.object_id = np.asarray(object_id, dtype=np.uint64)
        n = len(self.ts_ms)
        if len(self.object_id) != n:
            raise ValueError("column length mismatch")
        self.model_id = (
            np.zeros(n, dtype=np.uint32) if model_id is None else np.asarray(model_id, dtype=np.uint32)
        )
        self.model_version = (
            np.zeros(n, dtype=np.uint32)
            if model_version is None
            else np.asarray(model_version, dtype=np.uint32)
        )

    @classmethod
    def from_records(cls, records: Iterable[TraceRecord | tuple]) -> "Trace":
        rows = list(records)
        if not rows:
            return cls([], [])
        cols = list(zip(*rows))
        while len(cols) < 4:
            cols.append([0] * len(rows))
        return cls(*cols[:4])

    @classmethod
    def from_ids(cls, object_ids, step_ms: int = 1) -> "Trace":
        """Build a trace with evenly spaced timestamps; handy for tests."""
        ids = np.asarray(list(object_ids), dtype=np.uint64)
        return cls(np.arange(len(ids), dtype=np.uint64) * step_ms, ids)

    def __len__(self) -> int:
        return len(self.ts_ms)

    def __iter__(self) -> Iterator[TraceRecord]:
        for row in zip(
            self.ts_ms.tolist(),
            self.object_id.tolist(),
            self.model_id.tolist(),
            self.model_version.tolist(),
        ):
            yield TraceRecord(*row)

    def __getitem__(self, idx) -> "Trace":
        if isinstance(idx, (int, np.integer)):
            raise TypeError("index with a slice or mask; iterate for single records")
        return Trace(self.ts_ms[idx], self.object_id[idx], self.model_id[idx], self.model_version[idx])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in self.__slots__
        )

    def is_sorted(self) -> bool:
        return bool(np.all(self.ts_ms[1:] >= self.ts_ms[:-1])) if len(self) else True

    def distinct_objects(self) -> np.ndarray:
        return np.unique(self.object_id)

    def object_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(ids, counts)`` for every distinct object."""
        return np.unique(self.object_id, return_counts=True)

    def to_structured(self) -> np.ndarray:
        out = np.empty(len(self), dtype=RECORD_DTYPE)
        for c in self.__slots__:
            out[c] = getattr(self, c)
        return out


# -- trace IO ---------------------------------------------------------------


def _comment_lines(comment: str | None) -> str:
    if not comment:
        return ""
    return "".join(f"# {line}\n" for line in comment.splitlines())


def write_trace_csv(trace: Trace, path, comment: str | None = None) -> None:
    buf = io.StringIO()
    buf.write(_comment_lines(comment))
    buf.write(",".join(TRACE_HEADER) + "\n")
    for ts, oid, mid, ver in zip(
        trace.ts_ms.tolist(),
        trace.object_id.tolist(),
        trace.model_id.tolist(),
        trace.model_version.tolist(),
    ):
        buf.write(f"{ts},{oid},{mid},{ver}\n")
    Path(path).write_text(buf.getvalue())


def _data_lines(path) -> list[str]:
    with open(path, newline="") as fh:
        return [ln for ln in fh if ln.strip() and not ln.startswith("#")]


def read_trace_csv(path) -> Trace:
    lines = _data_lines(path)
    if not lines:
        raise ValueError(f"{path}: empty trace file")
    header = [h.strip() for h in lines[0].split(",")]
    if header != TRACE_HEADER:
        raise ValueError(f"{path}: expected header {','.join(TRACE_HEADER)}")
    if len(lines) == 1:
        return Trace([], [])
    data = np.loadtxt(lines[1:], delimiter=",", dtype=np.uint64, ndmin=2)
    return Trace(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def write_trace_binary(trace: Trace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(bytes([BINARY_VERSION]))
        fh.write(trace.to_structured().tobytes())


def read_trace_binary(path) -> Trace:
    raw = Path(path).read_bytes()
    if raw[:4] != BINARY_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 5 or raw[4] != BINARY_VERSION:
        raise ValueError(f"{path}: unsupported binary trace version")
    body = raw[5:]
    if len(body) % RECORD_DTYPE.itemsize:
        raise ValueError(f"{path}: truncated record")
    arr = np.frombuffer(body, dtype=RECORD_DTYPE)
    return Trace(arr["ts_ms"], arr["object_id"], arr["model_id"], arr["model_version"])


def read_trace(path) -> Trace:
    """Read a trace, sniffing binary vs CSV from the first bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return read_trace_binary(path)
    return read_trace_csv(path)


def write_trace(trace: Trace, path, comment: str | None = None) -> None:
    if str(path).endswith(".bin"):
        write_trace_binary(trace, path)
    else:
        write_trace_csv(trace, path, comment)


# -- catalog IO -------------------------------------------------------------


def write_catalog(catalog: dict[int, ObjectMeta], path, comment: str | None = None) -> None:
    buf = io.StringIO()
    buf.write(_comment_lines(comment))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CATALOG_HEADER)
    for oid in sorted(catalog):
        m = catalog[oid]
        w.writerow([oid, m.image_bytes, m.latent_bytes])
    Path(path).write_text(buf.getvalue())


def read_catalog(path) -> dict[int, ObjectMeta]:
    lines = _data_lines(path)
    rows = list(csv.reader(lines))
    if not rows or [h.strip() for h in rows[0]] != CATALOG_HEADER:
        raise ValueError(f"{path}: expected header {','.join(CATALOG_HEADER)}")
    return {int(r[0]): ObjectMeta(int(r[1]), int(r[2])) for r in rows[1:]}


def uniform_catalog(object_ids, image_bytes: int, latent_bytes: int) -> dict[int, ObjectMeta]:
    meta = ObjectMeta(image_bytes, latent_bytes)
    return {int(o): meta for o in np.unique(np.asarray(list(object_ids), dtype=np.uint64))}
