"""The "LDPFL1" model format.

Layout (little endian)::

    6 bytes   magic b"LDPFL1"
    u32       layer count L (input layer included)
    u32 * L   layer sizes
    u8 * L-1  activation codes (index into ACTIVATIONS)
    f64 ...   weights (out x in, row major) then bias, layer by layer

The same bytes are what clients and the server exchange in a simulation.
"""

import struct
from pathlib import Path

import numpy as np

from ldpfl.base.errors import ConfigurationError, FormatError
from ldpfl.neuralnet import ACTIVATIONS, LayerLayout, ModelParams

MAGIC = b"LDPFL1"


def encode_params(params: ModelParams) -> bytes:
    layout = params.layout
    header = MAGIC + struct.pack(f"<I{len(layout.sizes)}I", len(layout.sizes), *layout.sizes)
    header += bytes(ACTIVATIONS.index(kind) for kind in layout.activations)
    body = b"".join(a.astype("<f8").tobytes() for a in params.arrays())
    return header + body


def decode_params(payload: bytes) -> ModelParams:
    if payload[: len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {payload[:len(MAGIC)]!r}, expected {MAGIC!r}", 0)
    offset = len(MAGIC)
    try:
        (count,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        sizes = struct.unpack_from(f"<{count}I", payload, offset)
        offset += 4 * count
        codes = payload[offset : offset + count - 1]
        if len(codes) != count - 1 or any(code >= len(ACTIVATIONS) for code in codes):
            raise FormatError("bad activation codes", offset)
        offset += count - 1
        layout = LayerLayout(sizes, tuple(ACTIVATIONS[code] for code in codes))
    except struct.error as e:
        raise FormatError(f"truncated header: {e}", offset) from e
    except ConfigurationError as e:
        raise FormatError(f"bad layout: {e}", offset) from e

    arrays = []
    for fan_in, fan_out in zip(layout.sizes[:-1], layout.sizes[1:]):
        for shape in ((fan_out, fan_in), (fan_out,)):
            size = int(np.prod(shape))
            chunk = payload[offset : offset + 8 * size]
            if len(chunk) != 8 * size:
                raise FormatError("truncated parameter block", offset)
            arrays.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64))
            offset += 8 * size
    if offset != len(payload):
        raise FormatError(f"{len(payload) - offset} trailing bytes", offset)
    return ModelParams.from_arrays(layout, arrays)


def write_checkpoint(params: ModelParams, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(encode_params(params))
    return path


def read_checkpoint(path: str | Path) -> ModelParams:
    return decode_params(Path(path).read_bytes())
