"""Binary checkpoints: named float64 tensors plus the model configuration.

Layout (little-endian): magic ``GRLE``, version u16, a length-prefixed JSON
chunk (model config, node count, history length), tensor count u32, then per
tensor a u16-length-prefixed UTF-8 name, rank u32, the shape as u32s, and
the row-major float64 payload.  Loading rebuilds the parameter skeleton from
the stored config and fills it by name, so shape or name drift is caught.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .dyngraph import DataFormatError
from .model import ModelConfig, ParameterSet

_MAGIC = b"GRLE"
_VERSION = 1


def save_checkpoint(params: ParameterSet, path: str) -> None:
    meta = {
        "model": params.config.to_dict(),
        "node_count": params.node_count,
        "history_len": params.history_len,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(params.tensors)))
        for name, tensor in params.named():
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> ParameterSet:
    with open(path, "rb") as fh:
        blob = fh.read()

    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise DataFormatError("checkpoint truncated")
        piece = blob[offset:offset + n]
        offset += n
        return piece

    if take(4) != _MAGIC:
        raise DataFormatError(f"not a checkpoint (bad magic {blob[:4]!r})")
    (version,) = struct.unpack("<H", take(2))
    if version != _VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", take(4))
    try:
        meta = json.loads(take(meta_len).decode("utf-8"))
        config = ModelConfig.from_dict(meta["model"])
        node_count = int(meta["node_count"])
        history_len = int(meta["history_len"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataFormatError(f"checkpoint metadata unreadable: {exc}") from None

    params = ParameterSet.build(config, node_count, history_len, seed=0)

    (tensor_count,) = struct.unpack("<I", take(4))
    if tensor_count != len(params.tensors):
        raise DataFormatError(
            f"checkpoint stores {tensor_count} tensors, config implies {len(params.tensors)}")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(tensor_count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        if rank > 8:
            raise DataFormatError(f"tensor {name!r} claims implausible rank {rank}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = take(8 * count)
        arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if offset != len(blob):
        raise DataFormatError("checkpoint has trailing bytes")

    try:
        params.load_arrays(arrays)
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"checkpoint tensors do not fit the stored config: {exc}") from None
    missing = set(dict(params.named())) - set(arrays)
    if missing:
        raise DataFormatError(f"checkpoint is missing tensors: {sorted(missing)}")
    return params
