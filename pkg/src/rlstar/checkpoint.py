"""Binary checkpoint files for actor-critic parameters and optimizer state.

Layout, all little-endian::

    8 bytes   magic b"RLSTAR01"
    u32       number of actor layer sizes, then that many u32 sizes
    u32       number of critic layer sizes, then that many u32 sizes
    u32       action dimension (must equal the last actor size)
    u32       1 if optimizer state follows the parameters, else 0
    f64 * P   parameters in PolicyParams.flat order
    -- only when the optimizer flag is 1 --
    u64       Adam step counter
    f64 * 3   beta1, beta2, eps
    f64 * P   first moments
    f64 * P   second moments
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointFormatError, ShapeMismatch
from .nn import AdamState, PolicyParams, mlp_size

MAGIC = b"RLSTAR01"
_MAX_LAYERS = 64
_MAX_WIDTH = 1 << 20


def to_bytes(policy: PolicyParams, adam: AdamState | None = None) -> bytes:
    parts = [MAGIC]
    for sizes in (policy.actor_sizes, policy.critic_sizes):
        parts.append(struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes))
    parts.append(struct.pack("<II", policy.act_dim, 0 if adam is None else 1))
    parts.append(policy.flat.astype("<f8").tobytes())
    if adam is not None:
        if adam.m.shape != policy.flat.shape or adam.v.shape != policy.flat.shape:
            raise ShapeMismatch("optimizer moments do not match the parameter vector")
        parts.append(struct.pack("<Q3d", adam.step, adam.beta1, adam.beta2, adam.eps))
        parts.append(adam.m.astype("<f8").tobytes())
        parts.append(adam.v.astype("<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(
                f"truncated checkpoint: needed {n} bytes for {what} at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)


def _read_sizes(reader: _Reader, which: str) -> tuple:
    (count,) = reader.unpack("<I", f"{which} layer count")
    if not 2 <= count <= _MAX_LAYERS:
        raise CheckpointFormatError(f"implausible {which} layer count {count}")
    sizes = reader.unpack(f"<{count}I", f"{which} layer sizes")
    if min(sizes) < 1 or max(sizes) > _MAX_WIDTH:
        raise CheckpointFormatError(f"implausible {which} layer sizes {sizes}")
    return sizes


def from_bytes(data: bytes) -> tuple[PolicyParams, AdamState | None]:
    reader = _Reader(data)
    magic = reader.take(len(MAGIC), "magic")
    if magic != MAGIC:
        if magic[:6] == MAGIC[:6]:
            raise CheckpointFormatError(
                f"unsupported checkpoint version {magic.decode('ascii', 'replace')!r}; "
                f"this build reads {MAGIC.decode()}"
            )
        raise CheckpointFormatError(f"not a checkpoint file (magic {magic!r})")
    actor_sizes = _read_sizes(reader, "actor")
    critic_sizes = _read_sizes(reader, "critic")
    act_dim, has_adam = reader.unpack("<II", "action dim / optimizer flag")
    if act_dim != actor_sizes[-1]:
        raise CheckpointFormatError(f"header action dim {act_dim} != actor output size {actor_sizes[-1]}")
    if critic_sizes[-1] != 1 or critic_sizes[0] != actor_sizes[0]:
        raise CheckpointFormatError(f"inconsistent critic sizes {critic_sizes} for actor {actor_sizes}")
    if has_adam not in (0, 1):
        raise CheckpointFormatError(f"bad optimizer flag {has_adam}")
    size = mlp_size(actor_sizes) + act_dim + mlp_size(critic_sizes)
    policy = PolicyParams(actor_sizes, critic_sizes, reader.floats(size, "parameters"))
    adam = None
    if has_adam:
        step, beta1, beta2, eps = reader.unpack("<Q3d", "optimizer header")
        m = reader.floats(size, "first moments")
        v = reader.floats(size, "second moments")
        adam = AdamState(m, v, step, beta1, beta2, eps)
    if reader.pos != len(data):
        raise CheckpointFormatError(f"{len(data) - reader.pos} unexpected trailing bytes")
    return policy, adam


def save_checkpoint(policy: PolicyParams, adam: AdamState | None, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(policy, adam))
    os.replace(tmp, path)
    return path


def load_checkpoint(path, expect_actor=None, expect_critic=None) -> tuple[PolicyParams, AdamState | None]:
    """Read a checkpoint; optionally insist on particular layer sizes."""
    policy, adam = from_bytes(Path(path).read_bytes())
    for want, got, which in ((expect_actor, policy.actor_sizes, "actor"), (expect_critic, policy.critic_sizes, "critic")):
        if want is not None and tuple(want) != got:
            raise ShapeMismatch(f"checkpoint {which} layers {got} do not match configured {tuple(want)}")
    return policy, adam
