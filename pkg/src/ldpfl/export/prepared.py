"""The "LDPFLD" prepared-client format.

Layout (little endian)::

    6 bytes   magic b"LDPFLD"
    u32 * 6   r, l, pad, rows, holdout, classes
    per row   ceil((r + pad) * l / 8) bytes of packed bits, then one label byte

``pad`` counts the zero-valued l-bit groups appended after the r real values.
The last ``holdout`` rows are the client's held-out test split; the rows
before them are its training rows.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ldpfl.base.errors import FormatError, ShapeError
from ldpfl.data import Dataset

MAGIC = b"LDPFLD"
HEADER = struct.Struct("<6I")


@dataclass(frozen=True, eq=False)
class PreparedData:
    bits: np.ndarray
    labels: np.ndarray
    r: int
    l: int  # noqa: E741
    pad: int
    classes: int
    holdout: int = 0

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        labels = np.asarray(self.labels, dtype=np.int64)
        if bits.ndim != 2 or bits.shape[1] != self.width or labels.shape != (bits.shape[0],):
            raise ShapeError(
                f"bits {bits.shape} / labels {labels.shape} do not match width {self.width}"
            )
        if self.classes > 256 or (labels.size and labels.max() >= self.classes):
            raise ShapeError(f"labels must fit one byte and lie below {self.classes}")
        if not 0 <= self.holdout <= labels.shape[0]:
            raise ShapeError(f"holdout {self.holdout} must lie in [0, {labels.shape[0]}]")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return (self.r + self.pad) * self.l

    def __len__(self):
        return self.labels.shape[0]

    def to_dataset(self) -> Dataset:
        return Dataset(self.bits.astype(np.float64), self.labels, self.classes)

    def split(self) -> tuple[Dataset, Dataset]:
        """(train, held-out test) datasets."""
        ds = self.to_dataset()
        cut = len(self) - self.holdout
        return ds.subset(np.arange(cut)), ds.subset(np.arange(cut, len(self)))


def write_prepared(data: PreparedData, path: str | Path) -> Path:
    path = Path(path)
    packed = np.packbits(data.bits, axis=1)
    rows = np.concatenate([packed, data.labels.astype(np.uint8)[:, None]], axis=1)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(HEADER.pack(data.r, data.l, data.pad, len(data), data.holdout, data.classes))
        f.write(rows.tobytes())
    return path


def read_prepared(path: str | Path) -> PreparedData:
    payload = Path(path).read_bytes()
    if payload[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {payload[:len(MAGIC)]!r}, expected {MAGIC!r}", 0)
    offset = len(MAGIC)
    if len(payload) < offset + HEADER.size:
        raise FormatError(f"{path}: truncated header", offset)
    r, l, pad, rows, holdout, classes = HEADER.unpack_from(payload, offset)  # noqa: E741
    offset += HEADER.size

    width = (r + pad) * l
    row_bytes = (width + 7) // 8 + 1
    body = payload[offset:]
    if len(body) != rows * row_bytes:
        raise FormatError(
            f"{path}: header declares {rows} rows of {row_bytes} bytes, found {len(body)} bytes",
            offset,
        )
    table = np.frombuffer(body, dtype=np.uint8).reshape(rows, row_bytes)
    bits = np.unpackbits(table[:, :-1], axis=1, count=width)
    try:
        return PreparedData(bits, table[:, -1].astype(np.int64), r, l, pad, classes, holdout)
    except ShapeError as e:
        raise FormatError(f"{path}: {e}", len(MAGIC)) from e
