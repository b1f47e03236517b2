"""Binary checkpoints of an initialization vector.

Layout (little-endian, 64-byte header followed by the payload)::

    offset  size  field
    0       8     magic  b"LEAPCKPT"
    8       4     u32    format version (1)
    12      4     u32    reserved, zero
    16      8     u64    dimension n
    24      8     u64    meta step at which the snapshot was taken
    32      32    bytes  SHA-256 of the canonical experiment config
    64      8n    f64    parameter vector
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MAGIC = b"LEAPCKPT"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQ32s")
HEADER_SIZE = _HEADER.size


@dataclass
class Checkpoint:
    theta: np.ndarray
    meta_step: int
    config_hash: bytes = b"\0" * 32

    @property
    def dim(self) -> int:
        return int(self.theta.size)


def config_hash(config) -> bytes:
    """SHA-256 over the JSON dump of ``config`` with sorted keys."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).digest()


def save_checkpoint(path, theta, meta_step: int, cfg_hash: bytes = b"\0" * 32) -> None:
    theta = np.ascontiguousarray(theta, dtype="<f8").reshape(-1)
    if len(cfg_hash) != 32:
        raise ValueError("config hash must be 32 bytes")
    header = _HEADER.pack(MAGIC, VERSION, 0, theta.size, int(meta_step), cfg_hash)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(theta.tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise ConfigError(f"{path}: truncated checkpoint header")
    magic, version, _, n, step, h = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    if len(raw) != HEADER_SIZE + 8 * n:
        raise ConfigError(f"{path}: payload size does not match dimension {n}")
    theta = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE, count=n).astype(np.float64)
    return Checkpoint(theta=theta, meta_step=int(step), config_hash=h)
