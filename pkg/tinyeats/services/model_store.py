"""TEGM model containers and firmware export.

Container layout (little-endian throughout)::

    magic     4s   b"TEGM"
    version   u16  1
    kind      u8   0 = float, 1 = quant
    dims      5*u16 (input, hidden1, hidden2, fc, classes) = (65, 16, 16, 8, 2)
    norm      2*f64 feature-map floor and ceiling
    tensors   8 blocks in TENSOR_NAMES order
        float: rows u16, cols u16, rows*cols f64
        quant: rows u16, cols u16, scale f64, mult i32, shift u8, rows*cols i8
    crc32     u32  IEEE CRC of every preceding byte
"""
import logging
import re
import struct
import zlib
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from tinyeats.config import settings
from tinyeats.core.errors import (
    BadMagicError,
    BudgetExceededError,
    CrcMismatchError,
    DataError,
    DimensionMismatchError,
    ModelFormatError,
    QuantizationError,
    TruncatedFileError,
    UnsupportedVersionError,
    UsageError,
)
from tinyeats.schemas.reports import FootprintReport
from tinyeats.services.dsp_frontend import N_BINS, N_FRAMES
from tinyeats.services.grunet import (
    FC_SIZE,
    HIDDEN_SIZE,
    INPUT_SIZE,
    N_CLASSES,
    TENSOR_NAMES,
    FloatModel,
)
from tinyeats.services.quantizer import QuantModel, QuantTensor

logger = logging.getLogger(__name__)

MAGIC = b"TEGM"
VERSION = 1
KIND_FLOAT = 0
KIND_QUANT = 1
ARCHITECTURE = (INPUT_SIZE, HIDDEN_SIZE, HIDDEN_SIZE, FC_SIZE, N_CLASSES)
BYTES_PER_LINE = 12

_HEADER = struct.Struct("<4sHB5H2d")
_SHAPE = struct.Struct("<HH")
_QUANT_PARAMS = struct.Struct("<diB")
_CRC = struct.Struct("<I")
_SYMBOL = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

Model = Union[FloatModel, QuantModel]


def expected_shapes(dims: Tuple[int, int, int, int, int]) -> List[Tuple[int, int]]:
    n_in, h1, h2, n_fc, n_cls = dims
    return [(h1, n_in + h1)] * 3 + [(h2, h1 + h2)] * 3 + [(n_fc, h2), (n_cls, n_fc)]


def quant_container_size(qm: QuantModel) -> int:
    blocks = sum(_SHAPE.size + _QUANT_PARAMS.size + t.values.size for t in qm.tensors.values())
    return _HEADER.size + blocks + _CRC.size


def serialize_model(m: Model) -> bytes:
    """Encode a model as a TEGM container."""
    if isinstance(m, QuantModel):
        kind = KIND_QUANT
        floats = m.dequantize()
    elif isinstance(m, FloatModel):
        kind = KIND_FLOAT
        floats = m
    else:
        raise TypeError(f"cannot serialize {type(m).__name__}")
    floats.check_architecture()

    parts = [_HEADER.pack(MAGIC, VERSION, kind, *ARCHITECTURE, *m.norm)]
    if kind == KIND_QUANT:
        for name in TENSOR_NAMES:
            t = m[name]
            parts.append(_SHAPE.pack(*t.shape))
            parts.append(_QUANT_PARAMS.pack(t.scale, t.mult, t.shift))
            parts.append(t.values.astype("<i1").tobytes(order="C"))
    else:
        for name, t in m.tensors().items():
            parts.append(_SHAPE.pack(*t.shape))
            parts.append(np.asarray(t, dtype="<f8").tobytes(order="C"))
    body = b"".join(parts)
    blob = body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)
    if kind == KIND_QUANT and len(blob) > settings.QUANT_BUDGET_BYTES:
        raise BudgetExceededError(
            f"quantized container is {len(blob)} bytes, budget is {settings.QUANT_BUDGET_BYTES}"
        )
    return blob


def parse_model(blob: bytes) -> Model:
    """Decode and validate a TEGM container."""
    if len(blob) < _HEADER.size + _CRC.size:
        raise TruncatedFileError(f"container is {len(blob)} bytes, shorter than its header")
    magic, version, kind, *rest = _HEADER.unpack_from(blob, 0)
    dims, norm = tuple(rest[:5]), (rest[5], rest[6])
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"container version {version} is not supported")
    if kind not in (KIND_FLOAT, KIND_QUANT):
        raise ModelFormatError(f"unknown model kind {kind}")
    if dims != ARCHITECTURE:
        raise DimensionMismatchError(f"container dimensions {dims} differ from {ARCHITECTURE}")

    end = len(blob) - _CRC.size
    offset = _HEADER.size
    blocks = []
    for name, shape in zip(TENSOR_NAMES, expected_shapes(dims)):
        if offset + _SHAPE.size > end:
            raise TruncatedFileError(f"container ends inside the header of {name}")
        rows_cols = _SHAPE.unpack_from(blob, offset)
        offset += _SHAPE.size
        if rows_cols != shape:
            raise DimensionMismatchError(f"{name} has shape {rows_cols}, expected {shape}")
        count = shape[0] * shape[1]
        if kind == KIND_QUANT:
            if offset + _QUANT_PARAMS.size + count > end:
                raise TruncatedFileError(f"container ends inside {name}")
            params = _QUANT_PARAMS.unpack_from(blob, offset)
            offset += _QUANT_PARAMS.size
            values = np.frombuffer(blob, dtype="<i1", count=count, offset=offset).reshape(shape)
            offset += count
            blocks.append((name, params, values))
        else:
            if offset + 8 * count > end:
                raise TruncatedFileError(f"container ends inside {name}")
            values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
            offset += 8 * count
            blocks.append((name, None, values))
    if offset != end:
        raise ModelFormatError(f"{end - offset} unexpected bytes after the last tensor")

    (stored,) = _CRC.unpack_from(blob, end)
    computed = zlib.crc32(blob[:end]) & 0xFFFFFFFF
    if stored != computed:
        raise CrcMismatchError(f"CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")

    if kind == KIND_FLOAT:
        return FloatModel.from_tensors({name: values for name, _, values in blocks}, norm)
    try:
        tensors = {
            name: QuantTensor(values=values, scale=scale, mult=mult, shift=shift)
            for name, (scale, mult, shift), values in blocks
        }
        return QuantModel(tensors=tensors, norm=norm)
    except QuantizationError as e:
        raise ModelFormatError(f"invalid quantized tensor: {e}") from e


def save_model(m: Model, path: Union[str, Path]) -> int:
    """Write a container to ``path``; returns the byte count."""
    blob = serialize_model(m)
    Path(path).write_bytes(blob)
    logger.info(f"Saved {type(m).__name__} to {path} ({len(blob)} bytes)")
    return len(blob)


def load_model(path: Union[str, Path]) -> Model:
    blob = Path(path).read_bytes()
    try:
        return parse_model(blob)
    except ModelFormatError as e:
        raise type(e)(f"{path}: {e}") from e


def load_quant_model(path: Union[str, Path]) -> QuantModel:
    model = load_model(path)
    if not isinstance(model, QuantModel):
        raise DataError(f"{path} holds a float model; quantize it first")
    return model


def export_firmware_array(qm: QuantModel, symbol: str) -> str:
    """Render the quantized container as a C byte array plus a length constant."""
    if not _SYMBOL.match(symbol or ""):
        raise UsageError(f"invalid C identifier for the exported array: {symbol!r}")
    blob = serialize_model(qm)
    lines = [
        f"/* Tiny Eats GRU quantized model: TEGM v{VERSION} container, {len(blob)} bytes. */",
        "#include <stdint.h>",
        "",
        f"const uint32_t {symbol}_len = {len(blob)};",
        f"const uint8_t {symbol}[{len(blob)}] = {{",
    ]
    for start in range(0, len(blob), BYTES_PER_LINE):
        chunk = blob[start:start + BYTES_PER_LINE]
        lines.append("    " + ", ".join(str(b) for b in chunk) + ",")
    lines.append("};")
    return "\n".join(lines) + "\n"


def footprint(qm: QuantModel) -> FootprintReport:
    """Memory use of the quantized model against the target device."""
    container = quant_container_size(qm)
    n_in, h1, h2, n_fc, n_cls = ARCHITECTURE
    # Q15 input window, both layer states, the [x, h] scratch vector,
    # the r/z/candidate vectors, the FC activations and two int32 scores.
    activation = 2 * (N_FRAMES * N_BINS + h1 + h2 + (n_in + h1) + 3 * max(h1, h2) + n_fc) + 4 * n_cls
    return FootprintReport(
        container_bytes=container,
        weight_bytes=qm.weight_count(),
        budget_bytes=settings.QUANT_BUDGET_BYTES,
        budget_fraction=container / settings.QUANT_BUDGET_BYTES,
        flash_fraction=container / settings.FLASH_BYTES,
        activation_bytes=activation,
        ram_fraction=activation / settings.RAM_BYTES,
    )
