"""Model container.

Layout: magic "SEFM", version u16, header length u32, UTF-8 JSON header
(descriptor, parameter table, training config, provenance), then every
parameter as little-endian float32 in header order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .model import ArchitectureDescriptor, CnnModel

MAGIC = b"SEFM"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


def encode_model(model: CnnModel) -> bytes:
    names = sorted(model.params)
    table = [{"name": k, "shape": list(model.params[k].shape)} for k in names]
    header = {
        "descriptor": model.descriptor.to_dict(),
        "group": model.group,
        "domain": model.domain,
        "params": table,
        "meta": model.meta,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(model.params[k], dtype="<f4").tobytes() for k in names)
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + body


def decode_model(data: bytes) -> CnnModel:
    if len(data) < _PREFIX.size:
        raise DataError("truncated model file")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise DataError("not a model file (bad magic/version)")
    try:
        header = json.loads(data[_PREFIX.size:_PREFIX.size + hlen])
    except ValueError as e:
        raise DataError(f"corrupt model header: {e}") from None
    offset = _PREFIX.size + hlen
    params = {}
    for entry in header["params"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        end = offset + 4 * n
        if end > len(data):
            raise DataError("truncated model parameters")
        params[entry["name"]] = np.frombuffer(data[offset:end], dtype="<f4").reshape(entry["shape"]).astype(np.float32)
        offset = end
    if offset != len(data):
        raise DataError("trailing bytes after model parameters")
    return CnnModel(ArchitectureDescriptor.from_dict(header["descriptor"]), params,
                    header["group"], header["domain"], header["meta"])


def save_model(model: CnnModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_model(model))
    return path


def load_model(path) -> CnnModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model not found: {path}")
    return decode_model(path.read_bytes())


def model_hash(model: CnnModel) -> str:
    return hashlib.sha256(encode_model(model)).hexdigest()
