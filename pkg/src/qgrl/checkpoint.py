"""Binary checkpoint format for trained policies.

Layout: the magic ``QGRL``, one version byte, a little-endian u32 length
prefix followed by a JSON metadata block (layer sizes, regularizer,
episode count, config hash), then every parameter array as little-endian
64-bit floats in declared order: policy weights/biases layer by layer, the
log-std vector, then the value network the same way.  Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .nets import Mlp
from .ppo import PolicyParams

MAGIC = b"QGRL"
VERSION = 1


class CheckpointError(ValueError):
    """Raised for malformed, truncated or incompatible checkpoint data."""


def save_checkpoint(params: PolicyParams, meta: dict | None = None) -> bytes:
    """Serialize parameters plus caller metadata."""
    header = dict(meta or {})
    header["policy_sizes"] = list(params.policy.sizes)
    header["value_sizes"] = list(params.value.sizes)
    header["log_std_len"] = int(params.log_std.shape[0])
    meta_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    chunks = [MAGIC, bytes([VERSION]), struct.pack("<I", len(meta_bytes)), meta_bytes]
    for array in params.parameter_list():
        chunks.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(chunks)


def _take(data: bytes, offset: int, count: int, what: str) -> tuple[bytes, int]:
    if offset + count > len(data):
        raise CheckpointError(
            f"truncated checkpoint: needed {count} bytes for {what}, "
            f"have {len(data) - offset}"
        )
    return data[offset:offset + count], offset + count


def load_checkpoint(data: bytes) -> tuple[PolicyParams, dict]:
    """Reconstruct parameters and metadata from checkpoint bytes.

    Raises:
        CheckpointError: bad magic or version, truncated data, or a length
            inconsistent with the declared layer sizes.
    """
    magic, offset = _take(data, 0, 4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version_b, offset = _take(data, offset, 1, "version")
    if version_b[0] != VERSION:
        raise CheckpointError(f"unsupported version {version_b[0]}, expected {VERSION}")
    len_b, offset = _take(data, offset, 4, "metadata length")
    (meta_len,) = struct.unpack("<I", len_b)
    meta_bytes, offset = _take(data, offset, meta_len, "metadata block")
    try:
        meta = json.loads(meta_bytes.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt metadata block: {exc}") from exc
    for key in ("policy_sizes", "value_sizes", "log_std_len"):
        if key not in meta:
            raise CheckpointError(f"metadata is missing {key!r}")

    def read_array(shape: tuple[int, ...], what: str) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape)) * 8
        raw, offset = _take(data, offset, count, what)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    def read_mlp(sizes: list[int], name: str) -> Mlp:
        weights, biases = [], []
        for k in range(len(sizes) - 1):
            weights.append(read_array((sizes[k], sizes[k + 1]), f"{name} W{k}"))
            biases.append(read_array((sizes[k + 1],), f"{name} b{k}"))
        return Mlp(weights, biases)

    policy = read_mlp(meta["policy_sizes"], "policy")
    log_std = read_array((meta["log_std_len"],), "log_std")
    value = read_mlp(meta["value_sizes"], "value")
    if offset != len(data):
        raise CheckpointError(
            f"trailing bytes: {len(data) - offset} beyond the declared arrays"
        )
    return PolicyParams(policy, value, log_std), meta


def require_observation_dim(params: PolicyParams, obs_dim: int) -> None:
    """Check checkpoint/environment compatibility.

    Raises:
        CheckpointError: naming both the checkpoint's input size and the
            expected one.
    """
    found = params.policy.sizes[0]
    if found != obs_dim:
        raise CheckpointError(
            f"checkpoint expects observations of size {found}, "
            f"environment produces size {obs_dim}"
        )
