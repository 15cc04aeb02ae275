"""Versioned binary checkpoint for Q-network parameters.

Layout (all integers little-endian)::

    magic     8 bytes  b"AVTQNET\\0"
    version   u32
    cfg_len   u32, then cfg_len bytes of UTF-8 JSON (config echo, rng state)
    n_tensors u32
    per tensor: name_len u16, name, ndim u8, ndim x u32 dims, float32 data
    crc32     u32 over every preceding byte
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"AVTQNET\0"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict, config: dict, rng_state: dict | None = None) -> None:
    """Write ``params`` (stored as float32) with a JSON config block.

    The file is written to a temporary sibling and renamed, so a crash never
    leaves a half-written checkpoint at ``path``.
    """
    block = {"config": config, "rng_state": rng_state}
    cfg = json.dumps(block, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(cfg)), cfg, struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    body = b"".join(parts)
    data = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Return ``(params, config, rng_state)``; raises :class:`CheckpointError` on any defect."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 12 or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a Q-network checkpoint")
    (version,) = struct.unpack_from("<I", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"{path}: checksum mismatch (corrupted or truncated)")
    try:
        off = len(MAGIC) + 4
        (cfg_len,) = struct.unpack_from("<I", body, off)
        off += 4
        block = json.loads(body[off : off + cfg_len].decode("utf-8"))
        off += cfg_len
        (n,) = struct.unpack_from("<I", body, off)
        off += 4
        params = {}
        for _ in range(n):
            (nlen,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off : off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", body, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", body, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            nbytes = 4 * count
            if off + nbytes > len(body):
                raise CheckpointError(f"{path}: tensor {name!r} runs past end of file")
            params[name] = np.frombuffer(body, dtype="<f4", count=count, offset=off).reshape(shape).astype(np.float32)
            off += nbytes
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from exc
    if off != len(body):
        raise CheckpointError(f"{path}: {len(body) - off} unexpected trailing bytes")
    return params, block["config"], block.get("rng_state")
