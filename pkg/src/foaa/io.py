"""FOAT tensor files and the parameter-directory manifest.

FOAT layout: magic ``FOAT`` (0x46 0x4F 0x41 0x54), version byte 0x01, dtype
byte (0x02 = float64), one byte ndim, then ndim little-endian u64 dims,
then the payload row-major little-endian. Readers reject anything else.
"""
from __future__ import annotations

import re
import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import FormatError
from .tensor import Parameter

MAGIC = b"FOAT"
VERSION = 0x01
DTYPE_FLOAT64 = 0x02

PARAM_MANIFEST = "params_manifest.txt"


def write_foat(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.atleast_1d(np.asarray(array, dtype=np.float64)))
    if arr.ndim > 255:
        raise FormatError(f"too many dimensions for FOAT: {arr.ndim}")
    header = MAGIC + bytes([VERSION, DTYPE_FLOAT64, arr.ndim])
    header += b"".join(struct.pack("<Q", d) for d in arr.shape)
    payload = arr.astype("<f8", copy=False).tobytes()
    Path(path).write_bytes(header + payload)


def read_foat(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 7:
        raise FormatError(f"{path}: truncated FOAT header")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    if raw[4] != VERSION:
        raise FormatError(f"{path}: unsupported FOAT version {raw[4]}")
    if raw[5] != DTYPE_FLOAT64:
        raise FormatError(f"{path}: unsupported dtype byte {raw[5]:#x}")
    ndim = raw[6]
    offset = 7 + 8 * ndim
    if len(raw) < offset:
        raise FormatError(f"{path}: truncated dimension list")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 7)
    count = 1
    for d in dims:
        count *= d
    if len(raw) != offset + 8 * count:
        raise FormatError(f"{path}: payload size mismatch for dims {dims}")
    flat = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    return flat.astype(np.float64).reshape(dims)


def _safe_filename(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name) or "param"


def save_params(directory: str | Path, params: Iterable[Parameter]) -> Path:
    """Write one FOAT file per parameter plus a text manifest.

    Manifest lines are tab-separated: name, relative file path, shape as
    ``d0xd1x...``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    seen: set[str] = set()
    for i, p in enumerate(params):
        name = p.name or f"param{i}"
        if name in seen:
            raise FormatError(f"duplicate parameter name {name!r}")
        seen.add(name)
        fname = f"{_safe_filename(name)}.foat"
        write_foat(directory / fname, p.value.data)
        shape = "x".join(str(d) for d in np.atleast_1d(p.value.data).shape)
        lines.append(f"{name}\t{fname}\t{shape}")
    manifest = directory / PARAM_MANIFEST
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def load_params(directory: str | Path) -> dict[str, np.ndarray]:
    """Read a parameter directory back into name -> array."""
    directory = Path(directory)
    manifest = directory / PARAM_MANIFEST
    if not manifest.exists():
        raise FormatError(f"no {PARAM_MANIFEST} in {directory}")
    out: dict[str, np.ndarray] = {}
    for line in manifest.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            name, fname, shape_txt = line.split("\t")
        except ValueError as exc:
            raise FormatError(f"malformed manifest line {line!r}") from exc
        arr = read_foat(directory / fname)
        expected = tuple(int(d) for d in shape_txt.split("x"))
        if arr.shape != expected:
            raise FormatError(f"{fname}: shape {arr.shape} does not match manifest {expected}")
        out[name] = arr
    return out


def assign_params(params: Iterable[Parameter], values: Mapping[str, np.ndarray]) -> None:
    """Copy loaded arrays into matching parameters by name."""
    for p in params:
        if p.name not in values:
            raise FormatError(f"missing value for parameter {p.name!r}")
        arr = values[p.name]
        if arr.shape != p.value.data.shape:
            raise FormatError(
                f"parameter {p.name!r}: stored shape {arr.shape} != expected {p.value.data.shape}"
            )
        p.value.data = np.array(arr, dtype=np.float64)
