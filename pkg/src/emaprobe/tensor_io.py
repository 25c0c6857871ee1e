"""APT1 binary interchange format for rate-stamped time-series matrices.

Layout: bytes 0-3 are the magic ``APT1``, bytes 4-7 an unsigned 32-bit
little-endian header length H, bytes 8..8+H a UTF-8 JSON header with the
frozen key set {dtype, shape, rate_hz, channels}, followed by T*C
little-endian values in row-major order. Both f32 and f64 payloads are
accepted; in-memory data is always float64.
"""

from __future__ import annotations

import io
import json
import math
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import DataIOError, FormatError, PairingError

MAGIC = b"APT1"
HEADER_KEYS = frozenset({"dtype", "shape", "rate_hz", "channels"})
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


@dataclass
class TimeSeries:
    """A T x C matrix of frames with a sampling rate and named channels.

    ``dtype_tag`` records the on-disk precision ("f32" or "f64"); the
    in-memory ``data`` array is float64 regardless.
    """

    data: np.ndarray
    rate_hz: float
    channels: list[str] = field(default_factory=list)
    dtype_tag: str = "f64"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.channels = list(self.channels)
        self.validate()

    def validate(self):
        if self.data.ndim != 2:
            raise FormatError(f"expected a 2-D matrix, got ndim={self.data.ndim}")
        t, c = self.data.shape
        if t < 1 or c < 1:
            raise FormatError(f"empty time series: shape {self.data.shape}")
        if len(self.channels) != c:
            raise FormatError(
                f"{len(self.channels)} channel names for {c} data columns"
            )
        if len(set(self.channels)) != len(self.channels):
            raise FormatError("duplicate channel names")
        if not (math.isfinite(self.rate_hz) and self.rate_hz > 0):
            raise FormatError(f"rate must be a positive finite value, got {self.rate_hz}")
        if self.dtype_tag not in _DTYPES:
            raise FormatError(f"unknown dtype tag {self.dtype_tag!r}")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.rate_hz

    def copy(self) -> "TimeSeries":
        return replace(self, data=self.data.copy(), channels=list(self.channels))


@dataclass
class AlignmentReport:
    """Outcome of pairing a feature stream with its EMA target."""

    rate_hz: float
    n_features: int
    n_ema: int
    frame_gap: int
    common_length: int


def write_tensor(series: TimeSeries, sink: BinaryIO) -> int:
    """Serialize ``series`` to ``sink``; returns the number of bytes written.

    Two writes of the same series produce identical byte streams.
    """
    series.validate()
    header = json.dumps(
        {
            "dtype": series.dtype_tag,
            "shape": [series.n_frames, series.n_channels],
            "rate_hz": series.rate_hz,
            "channels": series.channels,
        },
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    ).encode("utf-8")
    payload = np.ascontiguousarray(series.data.astype(_DTYPES[series.dtype_tag])).tobytes()
    sink.write(MAGIC)
    sink.write(struct.pack("<I", len(header)))
    sink.write(header)
    sink.write(payload)
    return 8 + len(header) + len(payload)


def read_tensor(source: BinaryIO | bytes) -> TimeSeries:
    """Parse an APT1 byte stream into a TimeSeries (data promoted to float64)."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    blob = source.read()
    if blob[:4] != MAGIC:
        raise FormatError("not an APT1 file (bad magic)")
    if len(blob) < 8:
        raise FormatError("truncated tensor: missing header length")
    (header_len,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + header_len:
        raise FormatError("truncated tensor: header shorter than declared")
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad header encoding: {exc}") from exc
    if not isinstance(header, dict) or set(header) != HEADER_KEYS:
        raise FormatError(f"header keys must be exactly {sorted(HEADER_KEYS)}")

    dtype_tag = header["dtype"]
    if dtype_tag not in _DTYPES:
        raise FormatError(f"unsupported dtype {dtype_tag!r}")
    shape = header["shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 2
        or not all(isinstance(v, int) and v >= 1 for v in shape)
    ):
        raise FormatError(f"bad shape {shape!r}")
    rate = header["rate_hz"]
    if not isinstance(rate, (int, float)) or not math.isfinite(rate) or rate <= 0:
        raise FormatError(f"non-finite or non-positive rate {rate!r}")
    channels = header["channels"]
    if not isinstance(channels, list) or not all(isinstance(c, str) for c in channels):
        raise FormatError("channels must be a list of strings")

    t, c = shape
    dtype = _DTYPES[dtype_tag]
    expected = t * c * dtype.itemsize
    payload = blob[8 + header_len :]
    if len(payload) != expected:
        raise FormatError(
            f"truncated tensor: expected {expected} payload bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(t, c).astype(np.float64)
    return TimeSeries(data=data, rate_hz=float(rate), channels=channels, dtype_tag=dtype_tag)


def save_tensor(series: TimeSeries, path: str | Path) -> int:
    """Write an APT1 file atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            n = write_tensor(series, fh)
        os.replace(tmp, path)
    except OSError as exc:
        raise DataIOError(f"cannot write tensor {path}: {exc}") from exc
    return n


def load_tensor(path: str | Path) -> TimeSeries:
    try:
        with open(path, "rb") as fh:
            return read_tensor(fh)
    except OSError as exc:
        raise DataIOError(f"cannot read tensor {path}: {exc}") from exc


def validate_pairing(
    features: TimeSeries, ema: TimeSeries, frame_tolerance: int = 3
) -> AlignmentReport:
    """Check that two streams share a rate and differ by at most a few frames.

    Returns the common truncation length; raises PairingError on a rate
    mismatch or a frame-count gap beyond ``frame_tolerance``.
    """
    if not math.isclose(features.rate_hz, ema.rate_hz, rel_tol=1e-9):
        raise PairingError(
            f"rate mismatch: features {features.rate_hz} Hz vs ema {ema.rate_hz} Hz"
        )
    gap = abs(features.n_frames - ema.n_frames)
    if gap > frame_tolerance:
        raise PairingError(
            f"frame gap {gap} exceeds tolerance {frame_tolerance} "
            f"({features.n_frames} vs {ema.n_frames} frames)"
        )
    return AlignmentReport(
        rate_hz=features.rate_hz,
        n_features=features.n_frames,
        n_ema=ema.n_frames,
        frame_gap=gap,
        common_length=min(features.n_frames, ema.n_frames),
    )
