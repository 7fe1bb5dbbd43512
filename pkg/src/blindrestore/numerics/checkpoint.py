"""Binary checkpoint container and loss traces.

Layout (all integers little-endian)::

    8 bytes   magic  b"BRCKPT\\r\\n"
    u32       format version
    u32 + n   config block, UTF-8 ``key = value`` lines
    u32       tensor count
    per tensor: u16 name length, name (UTF-8), u8 ndim, ndim x u32 dims,
                prod(dims) x f32 data
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"BRCKPT\r\n"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_config(config: dict[str, object]) -> str:
    lines = []
    for k in sorted(config):
        v = str(config[k])
        if "\n" in v or "=" in k:
            raise CheckpointError(f"config entry {k!r} cannot be stored")
        lines.append(f"{k} = {v}\n")
    return "".join(lines)


def decode_config(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, _, v = line.partition(" = ")
            out[k] = v
    return out


def save_checkpoint(path, config: dict[str, object], tensors: dict[str, np.ndarray]) -> None:
    """Write atomically: a crash mid-write never leaves a truncated file at ``path``."""
    cfg = encode_config(config).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    _atomic_write(Path(path), b"".join(parts))


def load_checkpoint(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = 8

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    def take_bytes(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        pos += n
        return data[pos - n:pos]

    version, cfg_len = take("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    config = decode_config(take_bytes(cfg_len).decode())
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = take_bytes(nlen).decode()
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(take_bytes(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
    if pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return config, tensors


def write_loss_csv(path, losses, start: int = 0) -> None:
    """Rewrite the full trace atomically; ``losses[i]`` belongs to iteration ``start + i``."""
    body = "iteration,loss\n" + "".join(f"{start + i},{v!r}\n" for i, v in enumerate(losses))
    _atomic_write(Path(path), body.encode())


def read_loss_csv(path) -> list[float]:
    lines = Path(path).read_text().splitlines()[1:]
    return [float(line.split(",")[1]) for line in lines if line]


def append_loss(path, iteration: int, loss: float) -> None:
    with open(path, "a") as fh:
        fh.write(f"{iteration},{loss!r}\n")
