"""Binary model artifact: header, vocabulary tables, then parameter blocks.

Layout (little-endian throughout)::

    b"CSEER"  u32 version  u8 kind  u8 threshold  u32 n m k d d_side
    letter categories, majors: u32 count, then u32-length-prefixed UTF-8
    courses: u32 count, then department, prefix, suffix strings and u32 number
    parameter blocks in declared order as f64, row-major
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .domain import Course, Vocabulary
from .encode import ModelKind, Threshold
from .net import Dims, Model, block_shapes

MAGIC = b"CSEER"
VERSION = 1
MAX_DIM = 1 << 24
_THRESHOLDS = (Threshold.A, Threshold.B)


class ArtifactError(ValueError):
    pass


class BadMagicError(ArtifactError):
    pass


class VersionMismatchError(ArtifactError):
    pass


class TruncatedArtifactError(ArtifactError):
    pass


class DimOverflowError(ArtifactError):
    pass


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def dumps(model: Model, vocab: Vocabulary) -> bytes:
    dims = model.dims
    if (vocab.n, vocab.m, vocab.k) != (dims.n, dims.m, dims.k):
        raise ValueError("vocabulary does not match model dimensions")
    parts = [MAGIC, struct.pack("<IBB5I", VERSION, int(model.kind), _THRESHOLDS.index(model.threshold),
                                dims.n, dims.m, dims.k, dims.d, dims.d_side)]
    for table in (vocab.letter_categories, vocab.majors):
        parts.append(struct.pack("<I", len(table)))
        parts.extend(_pack_str(s) for s in table)
    parts.append(struct.pack("<I", len(vocab.courses)))
    for c in vocab.courses:
        parts += [_pack_str(c.department), _pack_str(c.prefix), _pack_str(c.suffix), struct.pack("<I", c.number)]
    shapes = block_shapes(model.kind, dims)
    for name in model.block_names:
        block = np.asarray(model.params[name])
        if block.shape != shapes[name]:
            raise ValueError(f"block {name} has shape {block.shape}, expected {shapes[name]}")
        parts.append(np.ascontiguousarray(block, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise TruncatedArtifactError(f"artifact truncated at byte {len(self.data)} (needed {self.pos + size})")
        out = self.data[self.pos:self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def count(self) -> int:
        (k,) = self.unpack("<I")
        if k > MAX_DIM:
            raise DimOverflowError(f"table size {k} exceeds {MAX_DIM}")
        return k

    def string(self) -> str:
        return self.take(self.count()).decode("utf-8")


def loads(data: bytes) -> tuple[Model, Vocabulary]:
    r = _Reader(bytes(data))
    if len(data) < len(MAGIC):
        raise TruncatedArtifactError("artifact shorter than its magic")
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatchError(f"artifact format version {version}, this build reads {VERSION}")
    kind, thr, n, m, k, d, d_side = r.unpack("<BB5I")
    if any(v > MAX_DIM for v in (n, m, k, d, d_side)):
        raise DimOverflowError(f"dimensions {(n, m, k, d, d_side)} exceed {MAX_DIM}")
    try:
        kind = ModelKind(kind)
        threshold = _THRESHOLDS[thr]
        dims = Dims(n, m, k, d, d_side)
    except (ValueError, IndexError) as exc:
        raise ArtifactError(f"corrupt header: {exc}") from None
    letters = tuple(r.string() for _ in range(r.count()))
    majors = tuple(r.string() for _ in range(r.count()))
    courses = []
    for _ in range(r.count()):
        dept, prefix, suffix = r.string(), r.string(), r.string()
        (number,) = r.unpack("<I")
        courses.append(Course(dept, number, suffix, prefix, dept))
    vocab = Vocabulary(tuple(courses), majors, letters)
    if (vocab.n, vocab.m, vocab.k) != (n, m, k):
        raise ArtifactError("vocabulary tables disagree with header dimensions")
    shapes = block_shapes(kind, dims)
    needed = sum(int(np.prod(s)) for s in shapes.values()) * 8
    if needed > len(r.data) - r.pos:
        raise TruncatedArtifactError(f"parameter blocks need {needed} bytes, {len(r.data) - r.pos} left")
    params = {}
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        params[name] = np.frombuffer(r.take(size * 8), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(r.data):
        raise ArtifactError(f"{len(r.data) - r.pos} trailing bytes after parameter blocks")
    return Model(kind, dims, threshold, params), vocab


def atomic_write(path, data) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = os.fspath(path)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model: Model, vocab: Vocabulary, path) -> None:
    atomic_write(path, dumps(model, vocab))


def load_model(path) -> tuple[Model, Vocabulary]:
    with open(path, "rb") as fh:
        return loads(fh.read())
