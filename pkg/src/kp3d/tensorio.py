"""Binary tensor files for rendered target maps and predictions.

Layout (all integers little-endian uint32, payload little-endian float32):

    bytes 0..3    magic b"KPTM"
    bytes 4..7    version (currently 1)
    bytes 8..11   kind: 0 = heatmap, 1 = center_field, 2 = depth
    bytes 12..23  C, H, W
    bytes 24..    payload, C-major row-major; center fields store a
                  trailing (dx, dy) axis, so C*H*W*2 values

One file per frame per kind. The format is byte-exact so regenerated
datasets can be compared with a plain file diff.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"KPTM"
VERSION = 1

KIND_HEATMAP = 0
KIND_CENTER_FIELD = 1
KIND_DEPTH = 2

_KIND_NAMES = {KIND_HEATMAP: "heatmap", KIND_CENTER_FIELD: "center", KIND_DEPTH: "depth"}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}

_HEADER = struct.Struct("<4sIIIII")


def kind_name(code: int) -> str:
    return _KIND_NAMES[code]


def kind_code(name: str) -> int:
    try:
        return _KIND_CODES[name]
    except KeyError:
        raise ValueError(f"unknown map kind {name!r}") from None


def write_map(path, array: np.ndarray, kind: int) -> None:
    array = np.asarray(array)
    if kind in (KIND_HEATMAP, KIND_DEPTH):
        if array.ndim != 3:
            raise ValueError(f"{kind_name(kind)} map must be (C, H, W), got {array.shape}")
    elif kind == KIND_CENTER_FIELD:
        if array.ndim != 4 or array.shape[3] != 2:
            raise ValueError(f"center field must be (C, H, W, 2), got {array.shape}")
    else:
        raise ValueError(f"unknown kind code {kind}")
    c, h, w = array.shape[:3]
    payload = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, kind, c, h, w))
        f.write(payload.tobytes())


def read_map(path) -> tuple[np.ndarray, int]:
    """Read a tensor file; returns (float64 array, kind code)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, kind, c, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if kind not in _KIND_NAMES:
        raise ValueError(f"{path}: unknown map kind {kind}")
    shape = (c, h, w, 2) if kind == KIND_CENTER_FIELD else (c, h, w)
    count = int(np.prod(shape))
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if data.size != count:
        raise ValueError(f"{path}: expected {count} values, found {data.size}")
    return data.reshape(shape).astype(np.float64), kind
