"""Binary checkpoint serialization.

Layout (all integers little-endian):
    magic "DTSST" (5 bytes)
    format version        u16
    iteration             u64
    parameter count       u32
    per parameter:
        name length u16, UTF-8 name,
        rank u32, dims u32 each,
        raw little-endian float32 data
    optimizer-state block count u32, blocks in the same layout
    checksum: first 8 bytes of SHA-256 over all preceding bytes

save -> load -> save is byte-identical, and loading reproduces every array
bit-exactly. Writes go to a temp file and are renamed into place, so a crash
cannot leave a half-written checkpoint behind the final name.
"""

from __future__ import annotations

import hashlib
import os
import struct

import numpy as np

MAGIC = b"DTSST"
VERSION = 1
_CHECKSUM_BYTES = 8


class CheckpointError(Exception):
    """Base class for checkpoint problems."""


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


def _pack_blocks(arrays: dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            parts.append(struct.pack("<I", dim))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointTruncatedError(
                f"checkpoint truncated: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]


def _unpack_blocks(r: _Reader) -> dict[str, np.ndarray]:
    count = r.u32()
    arrays = {}
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape)
        arrays[name] = data.copy()
    return arrays


def save_checkpoint(path, params, optimizer_state, iteration):
    """Write parameters (a ParamStore or name->array dict) and optimizer state."""
    if hasattr(params, "state_dict"):
        params = params.state_dict()
    body = (
        MAGIC
        + struct.pack("<H", VERSION)
        + struct.pack("<Q", int(iteration))
        + _pack_blocks(params)
        + _pack_blocks(optimizer_state or {})
    )
    checksum = hashlib.sha256(body).digest()[:_CHECKSUM_BYTES]
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(body + checksum)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Read a checkpoint; returns (iteration, params dict, optimizer dict).

    The structure is parsed first, so missing bytes raise
    CheckpointTruncatedError and a wrong version raises
    CheckpointVersionError; in-place corruption that leaves the layout
    readable is caught by the trailing checksum (CheckpointChecksumError).
    """
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < len(MAGIC) + 2 + 8 + _CHECKSUM_BYTES:
        raise CheckpointTruncatedError(f"checkpoint too small ({len(buf)} bytes)")
    body, checksum = buf[:-_CHECKSUM_BYTES], buf[-_CHECKSUM_BYTES:]
    r = _Reader(body)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic bytes; not a checkpoint file")
    version = r.u16()
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    iteration = r.u64()
    params = _unpack_blocks(r)
    opt_state = _unpack_blocks(r)
    if r.pos != len(body):
        raise CheckpointTruncatedError(
            f"{len(body) - r.pos} trailing bytes after optimizer state"
        )
    if hashlib.sha256(body).digest()[:_CHECKSUM_BYTES] != checksum:
        raise CheckpointChecksumError("checkpoint checksum mismatch")
    return iteration, params, opt_state


def latest_checkpoint(directory):
    """Path of the highest-iteration checkpoint_*.bin in ``directory``, or None."""
    if not os.path.isdir(directory):
        return None
    best, best_iter = None, -1
    for name in os.listdir(directory):
        if name.startswith("checkpoint_") and name.endswith(".bin"):
            try:
                it = int(name[len("checkpoint_") : -len(".bin")])
            except ValueError:
                continue
            if it > best_iter:
                best, best_iter = os.path.join(directory, name), it
    return best
