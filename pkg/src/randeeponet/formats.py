"""Binary containers for datasets (``NODS``) and parameter checkpoints (``NOPT``).

Both are little-endian throughout.

Dataset, version 1::

    b"NODS"  u16 version
    u16 len, utf-8 example id
    u32 n_samples, u32 n_in, u32 n_out
    input grid:  u16 coord_dim, u16 rank, rank x u32 axis extents, f64[n_in * coord_dim]
    output grid: u16 coord_dim, u16 rank, rank x u32 axis extents, f64[n_out * coord_dim]
    f64[n_samples * n_in]   inputs, row-major
    f64[n_samples * n_out]  outputs, row-major
    u32 len, utf-8 metadata: "key=value\\n" lines sorted by key

Checkpoint, version 1::

    b"NOPT"  u16 version
    u32 n_blocks, then per block: u16 len, utf-8 name, u16 rank, rank x u32 extents
    u64 n_values, f64[n_values]  flat parameter vector
    u32 len, utf-8 metadata (as above)
"""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .data import OperatorDataset
from .nn import ParamStore

DATASET_MAGIC = b"NODS"
CHECKPOINT_MAGIC = b"NOPT"
VERSION = 1


class FormatError(ValueError):
    pass


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def text(self, width: str = "<H") -> str:
        (n,) = self.unpack(width)
        return self.take(n).decode("utf-8")

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def _text(out: io.BytesIO, s: str, width: str = "<H") -> None:
    b = s.encode("utf-8")
    out.write(struct.pack(width, len(b)))
    out.write(b)


def _floats(out: io.BytesIO, arr: np.ndarray) -> None:
    out.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _metadata_blob(meta: dict[str, str]) -> str:
    lines = []
    for key in sorted(meta):
        value = str(meta[key])
        if "\n" in key or "=" in key or "\n" in value:
            raise FormatError(f"metadata entry {key!r} cannot contain newlines or '=' in the key")
        lines.append(f"{key}={value}\n")
    return "".join(lines)


def _parse_metadata(blob: str) -> dict[str, str]:
    meta = {}
    for line in blob.splitlines():
        key, _, value = line.partition("=")
        meta[key] = value
    return meta


def dataset_bytes(ds: OperatorDataset) -> bytes:
    out = io.BytesIO()
    out.write(DATASET_MAGIC)
    out.write(struct.pack("<H", VERSION))
    _text(out, ds.example)
    out.write(struct.pack("<III", ds.n_samples, ds.n_in, ds.n_out))
    for grid, shape in ((ds.input_grid, ds.input_shape), (ds.output_grid, ds.output_shape)):
        out.write(struct.pack("<HH", grid.shape[1], len(shape)))
        out.write(struct.pack(f"<{len(shape)}I", *shape))
        _floats(out, grid)
    _floats(out, ds.inputs)
    _floats(out, ds.outputs)
    _text(out, _metadata_blob(ds.metadata), "<I")
    return out.getvalue()


def dataset_from_bytes(buf: bytes) -> OperatorDataset:
    r = _Reader(buf)
    if r.take(4) != DATASET_MAGIC:
        raise FormatError("not a NODS dataset file")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise FormatError(f"unsupported dataset format version {version}")
    example = r.text()
    n, n_in, n_out = r.unpack("<III")
    grids = []
    for count in (n_in, n_out):
        dim, rank = r.unpack("<HH")
        shape = r.unpack(f"<{rank}I")
        grids.append((r.floats(count * dim).reshape(count, dim), shape))
    inputs = r.floats(n * n_in).reshape(n, n_in)
    outputs = r.floats(n * n_out).reshape(n, n_out)
    meta = _parse_metadata(r.text("<I"))
    if r.pos != len(buf):
        raise FormatError("trailing bytes after metadata block")
    (ig, ishape), (og, oshape) = grids
    return OperatorDataset(example, ig, og, inputs, outputs, ishape, oshape, meta)


def write_dataset(path, ds: OperatorDataset) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def read_dataset(path) -> OperatorDataset:
    return dataset_from_bytes(Path(path).read_bytes())


def checkpoint_bytes(params: ParamStore, metadata: dict[str, str] | None = None) -> bytes:
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(struct.pack("<H", VERSION))
    out.write(struct.pack("<I", len(params.layout)))
    for name, shape in params.layout:
        _text(out, name)
        out.write(struct.pack("<H", len(shape)))
        out.write(struct.pack(f"<{len(shape)}I", *shape))
    out.write(struct.pack("<Q", params.size))
    _floats(out, params.flat)
    _text(out, _metadata_blob(metadata or {}), "<I")
    return out.getvalue()


def checkpoint_from_bytes(buf: bytes) -> tuple[ParamStore, dict[str, str]]:
    r = _Reader(buf)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError("not a NOPT checkpoint file")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint format version {version}")
    (nblocks,) = r.unpack("<I")
    layout = []
    for _ in range(nblocks):
        name = r.text()
        (rank,) = r.unpack("<H")
        layout.append((name, r.unpack(f"<{rank}I")))
    (count,) = r.unpack("<Q")
    flat = r.floats(count)
    meta = _parse_metadata(r.text("<I"))
    return ParamStore(layout, flat), meta


def write_checkpoint(path, params: ParamStore, metadata: dict[str, str] | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, metadata))


def read_checkpoint(path, expected_layout=None) -> tuple[ParamStore, dict[str, str]]:
    params, meta = checkpoint_from_bytes(Path(path).read_bytes())
    if expected_layout is not None and params.layout != tuple((n, tuple(s)) for n, s in expected_layout):
        raise FormatError("checkpoint block layout does not match the model")
    return params, meta
