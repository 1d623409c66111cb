"""Minimal FTR1 writer.

The decoding toolkit consumes feature files in the FTR1 layout; this module
implements the byte-level contract independently so that cross-component
compatibility is a real interface test, not shared code:

    magic "FTR1" | u32 version=1 | u32 n_channels | u64 n_frames |
    f64 sample_rate_hz | u32 dtype (0 = f32) | u32 metadata length |
    UTF-8 JSON object (string values only) | frame-major f32 payload

Everything is little-endian and writes are deterministic.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FTR1"
_HEADER = struct.Struct("<IIQdII")


def write_feature_file(
    data: np.ndarray, sample_rate_hz: float, meta: dict[str, str], path: str | Path
) -> None:
    """Write a (n_channels, n_frames) float array as an FTR1 file."""
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"feature data must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("feature data contains non-finite values")
    if not all(isinstance(k, str) and isinstance(v, str) for k, v in meta.items()):
        raise ValueError("metadata must map strings to strings")
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
    n_channels, n_frames = arr.shape
    header = MAGIC + _HEADER.pack(1, n_channels, n_frames, float(sample_rate_hz), 0, len(meta_bytes))
    payload = np.ascontiguousarray(arr.T, dtype="<f4").tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(meta_bytes)
        fh.write(payload)
    os.replace(tmp, path)
