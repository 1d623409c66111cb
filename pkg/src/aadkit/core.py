"""Core data model: signal matrices, the FTR1 file format, and experiment manifests.

A :class:`SignalMatrix` is the universal container for multichannel series at a
fixed sample rate -- neural recordings (electrodes x time) and stimulus feature
sequences (feature channels x time) alike.  On disk they are stored in the
FTR1 format, a little-endian binary layout:

    bytes 0-3   ASCII magic "FTR1"
    u32         format version (1)
    u32         n_channels
    u64         n_frames
    f64         sample_rate_hz
    u32         dtype code (0 = IEEE-754 binary32)
    u32         metadata byte length M
    M bytes     UTF-8 JSON object with string values only
    payload     n_frames * n_channels f32 values, frame-major

Writing is deterministic (sorted, compact metadata JSON), so identical
matrices produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    FormatError,
    LagGridError,
    ValidationError,
)

MAGIC = b"FTR1"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 0

_HEADER = struct.Struct("<IIQdII")  # version, n_channels, n_frames, rate, dtype, meta length
_HEADER_SIZE = len(MAGIC) + _HEADER.size


@dataclass(frozen=True)
class SignalMatrix:
    """Uniformly sampled multichannel time series.

    ``data`` has shape ``(n_channels, n_frames)``.  Float32 and float64 are
    both accepted in memory; the file format always stores float32.  Instances
    are immutable (the array is a read-only view) and safe to share across
    threads.
    """

    data: np.ndarray
    sample_rate_hz: float
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValidationError(f"signal data must be 2-D (channels x frames), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"signal must have at least one channel and one frame, got shape {arr.shape}")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        view = arr.view()
        view.flags.writeable = False
        object.__setattr__(self, "data", view)
        rate = float(self.sample_rate_hz)
        if not math.isfinite(rate) or rate <= 0:
            raise ValidationError(f"sample_rate_hz must be a positive finite number, got {self.sample_rate_hz}")
        object.__setattr__(self, "sample_rate_hz", rate)
        if not all(isinstance(k, str) and isinstance(v, str) for k, v in self.meta.items()):
            raise ValidationError("metadata must map strings to strings")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.sample_rate_hz

    def with_meta(self, **entries: str) -> "SignalMatrix":
        merged = dict(self.meta)
        merged.update(entries)
        return SignalMatrix(self.data, self.sample_rate_hz, merged)


def _encode_meta(meta: dict[str, str]) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def write_matrix_file(m: SignalMatrix, path: str | Path) -> None:
    """Write ``m`` at ``path`` in FTR1 format (atomically, via temp + rename).

    Rejects non-finite values before any file is created.
    """
    path = Path(path)
    if not np.isfinite(m.data).all():
        raise ValidationError(f"refusing to write non-finite values to {path}")
    meta_bytes = _encode_meta(m.meta)
    payload = np.ascontiguousarray(m.data.T, dtype=np.float32).tobytes()
    header = MAGIC + _HEADER.pack(
        FORMAT_VERSION, m.n_channels, m.n_frames, m.sample_rate_hz, DTYPE_FLOAT32, len(meta_bytes)
    )
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(meta_bytes)
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise FormatError(f"failed to write {path}: {exc}") from exc


def _parse_header(buf: bytes, path: Path) -> tuple[int, int, float, dict[str, str], int]:
    """Return (n_channels, n_frames, rate, meta, payload offset) for an FTR1 buffer."""
    if len(buf) < _HEADER_SIZE:
        raise FormatError(f"{path}: file too short for an FTR1 header ({len(buf)} bytes)")
    if buf[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}, expected {MAGIC.decode()!r}")
    version, n_channels, n_frames, rate, dtype_code, meta_len = _HEADER.unpack_from(buf, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if dtype_code != DTYPE_FLOAT32:
        raise FormatError(f"{path}: unsupported dtype code {dtype_code}")
    if n_channels < 1 or n_frames < 1:
        raise FormatError(f"{path}: channel/frame counts must be positive, got {n_channels}x{n_frames}")
    if not math.isfinite(rate) or rate <= 0:
        raise FormatError(f"{path}: sample rate must be positive and finite, got {rate}")
    meta_end = _HEADER_SIZE + meta_len
    if meta_end > len(buf):
        raise FormatError(f"{path}: metadata length {meta_len} exceeds file size")
    try:
        meta = json.loads(buf[_HEADER_SIZE:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: metadata is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(meta, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
    ):
        raise FormatError(f"{path}: metadata must be a JSON object with string values")
    return n_channels, n_frames, rate, meta, meta_end


def read_matrix_file(path: str | Path) -> SignalMatrix:
    """Read an FTR1 file back into a :class:`SignalMatrix` (float32 data)."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    n_channels, n_frames, rate, meta, offset = _parse_header(buf, path)
    expected = 4 * n_channels * n_frames
    actual = len(buf) - offset
    if actual != expected:
        raise FormatError(
            f"{path}: payload length mismatch, header implies {expected} bytes but file holds {actual}"
        )
    flat = np.frombuffer(buf, dtype="<f4", count=n_channels * n_frames, offset=offset)
    data = flat.reshape(n_frames, n_channels).T
    if not np.isfinite(data).all():
        raise ValidationError(f"{path}: payload contains non-finite values")
    return SignalMatrix(data, rate, meta)


def read_matrix_header(path: str | Path) -> tuple[int, int, float]:
    """Read only (n_channels, n_frames, sample_rate_hz) from an FTR1 file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER_SIZE)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(head) < _HEADER_SIZE or head[:4] != MAGIC:
        raise FormatError(f"{path}: not an FTR1 file")
    version, n_channels, n_frames, rate, dtype_code, _ = _HEADER.unpack_from(head, 4)
    if version != FORMAT_VERSION or dtype_code != DTYPE_FLOAT32:
        raise FormatError(f"{path}: unsupported version/dtype ({version}/{dtype_code})")
    return n_channels, n_frames, rate


class Talker(Enum):
    TALKER1 = 1
    TALKER2 = 2

    @property
    def other(self) -> "Talker":
        return Talker.TALKER2 if self is Talker.TALKER1 else Talker.TALKER1


@dataclass(frozen=True)
class LagWindow:
    """A window of integer-sample time lags, specified in milliseconds."""

    lag_min_ms: float
    lag_max_ms: float
    rate_hz: float

    def __post_init__(self) -> None:
        if self.lag_min_ms > self.lag_max_ms:
            raise ValidationError(f"lag_min_ms {self.lag_min_ms} exceeds lag_max_ms {self.lag_max_ms}")
        if self.rate_hz <= 0:
            raise ValidationError("lag window rate must be positive")

    def _shift(self, lag_ms: float) -> int:
        s = lag_ms * self.rate_hz / 1000.0
        if abs(s - round(s)) > 1e-9:
            raise LagGridError(
                f"lag {lag_ms} ms is not an integer number of samples at {self.rate_hz} Hz"
            )
        return int(round(s))

    def sample_shifts(self) -> np.ndarray:
        """Ascending integer sample shifts covering [lag_min, lag_max]."""
        lo = self._shift(self.lag_min_ms)
        hi = self._shift(self.lag_max_ms)
        return np.arange(lo, hi + 1)

    @property
    def n_lags(self) -> int:
        return int(round((self.lag_max_ms - self.lag_min_ms) / 1000.0 * self.rate_hz)) + 1

    def lags_ms(self) -> np.ndarray:
        return self.sample_shifts() * 1000.0 / self.rate_hz


@dataclass(frozen=True)
class TrialRecord:
    """One experimental trial: a neural recording plus per-talker feature files."""

    trial_id: str
    neural: Path
    talker1_features: dict[str, Path]
    talker2_features: dict[str, Path]
    attended: Talker

    def __post_init__(self) -> None:
        if set(self.talker1_features) != set(self.talker2_features):
            raise ValidationError(
                f"trial '{self.trial_id}': talker1 and talker2 feature names differ"
            )

    def feature_names(self) -> list[str]:
        return sorted(self.talker1_features)

    def features_of(self, talker: Talker) -> dict[str, Path]:
        return self.talker1_features if talker is Talker.TALKER1 else self.talker2_features

    def load_neural(self) -> SignalMatrix:
        return read_matrix_file(self.neural)

    def load_feature(self, name: str, talker: Talker) -> SignalMatrix:
        paths = self.features_of(talker)
        if name not in paths:
            from .errors import MissingFeatureError

            raise MissingFeatureError(f"trial '{self.trial_id}': feature '{name}' not present")
        return read_matrix_file(paths[name])


@dataclass(frozen=True)
class ExperimentDataset:
    """All trials of one subject, with a constant electrode count."""

    subject_id: str
    trials: tuple[TrialRecord, ...]
    n_electrodes: int

    def feature_names(self) -> list[str]:
        return self.trials[0].feature_names() if self.trials else []

    def trial_ids(self) -> list[str]:
        return [t.trial_id for t in self.trials]


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


def load_manifest(path: str | Path) -> ExperimentDataset:
    """Load and validate an experiment manifest.

    The manifest is a JSON object ``{subject_id, trials: [...]}`` where each
    trial holds ``trial_id``, ``neural``, ``attended`` (1 or 2) and per-talker
    feature-name -> path maps.  Paths are relative to the manifest file.
    Validation reads every referenced file's header and checks per-trial frame
    alignment plus a constant electrode count; any failure raises before a
    dataset is returned.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest {path} is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), f"manifest {path}: top level must be an object")
    _require("subject_id" in doc and "trials" in doc, f"manifest {path}: needs subject_id and trials")
    _require(isinstance(doc["trials"], list) and doc["trials"], f"manifest {path}: trials must be a non-empty list")

    base = path.parent
    trials: list[TrialRecord] = []
    seen: set[str] = set()
    n_electrodes: int | None = None
    for entry in doc["trials"]:
        _require(isinstance(entry, dict), f"manifest {path}: each trial must be an object")
        for key in ("trial_id", "neural", "attended", "talker1", "talker2"):
            _require(key in entry, f"manifest {path}: trial entry missing '{key}'")
        tid = str(entry["trial_id"])
        _require(tid not in seen, f"manifest {path}: duplicate trial_id '{tid}'")
        seen.add(tid)
        _require(entry["attended"] in (1, 2), f"trial '{tid}': attended must be 1 or 2")

        def resolve(role: str, rel: str) -> Path:
            p = base / rel
            if not p.is_file():
                raise ValidationError(f"trial '{tid}': missing {role} file: {p}")
            return p

        neural_path = resolve("neural", str(entry["neural"]))
        feats = {}
        for talker_key in ("talker1", "talker2"):
            _require(isinstance(entry[talker_key], dict), f"trial '{tid}': {talker_key} must be a map")
            feats[talker_key] = {
                str(name): resolve(f"{talker_key} feature '{name}'", str(rel))
                for name, rel in entry[talker_key].items()
            }
        _require(
            set(feats["talker1"]) == set(feats["talker2"]),
            f"trial '{tid}': talker1 and talker2 feature names differ",
        )

        e, n_frames, rate = read_matrix_header(neural_path)
        if n_electrodes is None:
            n_electrodes = e
        elif e != n_electrodes:
            raise ValidationError(
                f"trial '{tid}': electrode count {e} differs from earlier trials ({n_electrodes})"
            )
        for talker_key, fmap in feats.items():
            for name, p in fmap.items():
                _, f_frames, f_rate = read_matrix_header(p)
                if f_frames != n_frames:
                    raise AlignmentError(
                        f"trial '{tid}': {talker_key} feature '{name}' has {f_frames} frames, "
                        f"neural has {n_frames}"
                    )
                if f_rate != rate:
                    raise AlignmentError(
                        f"trial '{tid}': {talker_key} feature '{name}' rate {f_rate} Hz "
                        f"differs from neural rate {rate} Hz"
                    )
        trials.append(
            TrialRecord(
                trial_id=tid,
                neural=neural_path,
                talker1_features=feats["talker1"],
                talker2_features=feats["talker2"],
                attended=Talker(entry["attended"]),
            )
        )
    return ExperimentDataset(subject_id=str(doc["subject_id"]), trials=tuple(trials), n_electrodes=int(n_electrodes))


def write_manifest(
    subject_id: str,
    entries: list[dict],
    path: str | Path,
) -> None:
    """Write a manifest JSON file; ``entries`` use manifest-relative paths."""
    path = Path(path)
    doc = {"subject_id": subject_id, "trials": entries}
    text = json.dumps(doc, indent=2, sort_keys=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text + "\n", encoding="utf-8")
    os.replace(tmp, path)
