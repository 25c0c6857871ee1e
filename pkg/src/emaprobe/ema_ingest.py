"""Ingestion of native EMA recordings.

Parses Edinburgh Speech Tools Track binaries (the format MNGU0 and
MOCHA-TIMIT ship their articulograph trajectories in), projects corpus
channel layouts onto the canonical 12-channel layout, and repairs short
sensor dropouts by linear interpolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import DataIOError, FormatError, MappingError
from .tensor_io import TimeSeries

# Six midsagittal articulators, X then Y: lower incisor, upper lip,
# lower lip, tongue tip, tongue blade, tongue dorsum.
CANONICAL_CHANNELS = (
    "li_x", "li_y",
    "ul_x", "ul_y",
    "ll_x", "ll_y",
    "tt_x", "tt_y",
    "tb_x", "tb_y",
    "td_x", "td_y",
)

IGNORED = "ignored"

DEFAULT_MAX_GAP_FRAMES = 10  # 200 ms at 50 Hz


@dataclass
class ChannelMapping:
    """Source-channel to canonical-channel table for one corpus layout.

    Every canonical name must have exactly one source. Source channels may
    be mapped to "ignored" to document a deliberate exclusion; sources not
    listed at all are ignored too.
    """

    corpus: str
    entries: dict[str, str]

    def __post_init__(self):
        targets = [t for t in self.entries.values() if t != IGNORED]
        unknown = set(targets) - set(CANONICAL_CHANNELS)
        if unknown:
            raise MappingError(f"unknown canonical targets: {sorted(unknown)}")
        counts = {name: targets.count(name) for name in CANONICAL_CHANNELS}
        missing = [name for name, n in counts.items() if n == 0]
        if missing:
            raise MappingError(f"mapping lacks a source for: {missing}")
        doubled = [name for name, n in counts.items() if n > 1]
        if doubled:
            raise MappingError(f"multiple sources mapped to: {doubled}")

    def source_for(self, canonical: str) -> str:
        for src, dst in self.entries.items():
            if dst == canonical:
                return src
        raise MappingError(f"no source for {canonical}")

    @classmethod
    def from_file(cls, path: str | Path) -> "ChannelMapping":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataIOError(f"cannot read channel mapping {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise MappingError(f"bad channel mapping file {path}: {exc}") from exc
        return cls(corpus=raw.get("corpus", "custom"), entries=dict(raw["map"]))


def default_mapping(corpus: str) -> ChannelMapping:
    """Load the shipped mapping for a known corpus layout (mngu0 or mocha)."""
    name = corpus.lower()
    try:
        text = resources.files("emaprobe.defaults").joinpath(f"{name}.json").read_text("utf-8")
    except FileNotFoundError:
        raise MappingError(f"no default channel mapping for corpus {corpus!r}")
    raw = json.loads(text)
    return ChannelMapping(corpus=name, entries=dict(raw["map"]))


@dataclass
class DropoutReport:
    """Non-finite gap spans per channel, and whether repair succeeded."""

    spans: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    repaired: bool = False
    rejected: bool = False
    reason: str | None = None


# ---------------------------------------------------------------------------
# EST Track parsing

_TRUE_WORDS = {"true", "t", "1", "yes"}
_FALSE_WORDS = {"false", "f", "0", "no", "nil"}


def _parse_bool(value: str, key: str) -> bool:
    word = value.strip().lower()
    if word in _TRUE_WORDS:
        return True
    if word in _FALSE_WORDS:
        return False
    raise FormatError(f"cannot interpret {key} value {value!r}")


def _snap_rate(rate: float) -> float:
    # Times are stored as float32, so a derived rate lands within ~1e-5 of
    # the true value; snap to integer Hz when that close.
    nearest = round(rate)
    if nearest >= 1 and abs(rate - nearest) <= 1e-4 * rate:
        return float(nearest)
    return rate


def parse_est_track(source: BinaryIO | bytes) -> TimeSeries:
    """Decode an EST Track binary file into a TimeSeries.

    The ASCII header is read up to the EST_Header_End line; the binary
    payload is one float32 record per frame: time, an optional
    validity flag (BreaksPresent), then one value per channel. Frames
    flagged invalid come out as NaN rows.
    """
    if isinstance(source, (bytes, bytearray)):
        blob = bytes(source)
    else:
        blob = source.read()

    terminator = b"EST_Header_End"
    idx = blob.find(terminator)
    if idx < 0:
        raise FormatError("missing EST_Header_End line")
    newline = blob.find(b"\n", idx)
    if newline < 0:
        raise FormatError("EST_Header_End line not terminated")
    header_text = blob[:newline].decode("ascii", errors="replace")
    payload = blob[newline + 1 :]

    lines = [ln.strip() for ln in header_text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["EST_File", "Track"]:
        raise FormatError("missing EST_File Track signature")

    fields: dict[str, str] = {}
    for line in lines[1:]:
        if line.startswith("EST_Header_End"):
            break
        parts = line.split(None, 1)
        key = parts[0]
        fields[key] = parts[1].strip() if len(parts) > 1 else ""

    for key in ("DataType", "NumFrames", "NumChannels"):
        if key not in fields:
            raise FormatError(f"missing required header key {key}")
    if fields["DataType"].lower() != "binary":
        raise FormatError(f"unsupported DataType {fields['DataType']!r}")
    try:
        n_frames = int(fields["NumFrames"])
        n_channels = int(fields["NumChannels"])
    except ValueError as exc:
        raise FormatError(f"non-numeric NumFrames/NumChannels: {exc}") from exc
    if n_frames < 1 or n_channels < 1:
        raise FormatError(f"bad dimensions: {n_frames} frames x {n_channels} channels")

    byte_order = fields.get("ByteOrder")
    if byte_order is None:
        raise FormatError("binary track lacks a ByteOrder key")
    if byte_order == "01":
        dtype = np.dtype(">f4")
    elif byte_order == "10":
        dtype = np.dtype("<f4")
    else:
        raise FormatError(f"unknown ByteOrder {byte_order!r}")

    breaks = _parse_bool(fields.get("BreaksPresent", "false"), "BreaksPresent")
    if "EqualSpace" in fields:
        _parse_bool(fields["EqualSpace"], "EqualSpace")  # validated, not needed

    channels = []
    for i in range(n_channels):
        channels.append(fields.get(f"Channel_{i}", f"ch_{i}"))
    if len(set(channels)) != len(channels):
        raise FormatError("duplicate channel names in header")

    width = n_channels + 1 + (1 if breaks else 0)
    expected = n_frames * width * 4
    if len(payload) != expected:
        raise FormatError(
            f"payload size mismatch: expected {expected} bytes "
            f"({n_frames} frames x {width} columns), got {len(payload)}"
        )
    raw = np.frombuffer(payload, dtype=dtype).reshape(n_frames, width).astype(np.float64)

    times = raw[:, 0]
    data = raw[:, 2:] if breaks else raw[:, 1:]
    data = data.copy()
    if breaks:
        invalid = raw[:, 1] == 0.0
        data[invalid, :] = np.nan

    if "FrameShift" in fields:
        try:
            shift = float(fields["FrameShift"])
        except ValueError as exc:
            raise FormatError(f"bad FrameShift: {exc}") from exc
        if not (math.isfinite(shift) and shift > 0):
            raise FormatError(f"bad FrameShift {shift}")
        rate = 1.0 / shift
    elif n_frames >= 2:
        diffs = np.diff(times)
        med = float(np.median(diffs))
        if not (math.isfinite(med) and med > 0):
            raise FormatError("cannot derive frame rate from time column")
        rate = _snap_rate(1.0 / med)
    else:
        raise FormatError("single-frame track without a FrameShift key")

    return TimeSeries(data=data, rate_hz=rate, channels=channels, dtype_tag="f32")


def select_canonical_channels(raw: TimeSeries, mapping: ChannelMapping) -> TimeSeries:
    """Project a raw recording onto the 12 canonical channels, in order."""
    index = {name: i for i, name in enumerate(raw.channels)}
    cols = []
    for canonical in CANONICAL_CHANNELS:
        src = mapping.source_for(canonical)
        if src not in index:
            raise MappingError(
                f"source channel {src!r} (for {canonical}) absent from recording; "
                f"available: {raw.channels}"
            )
        cols.append(index[src])
    return TimeSeries(
        data=raw.data[:, cols].copy(),
        rate_hz=raw.rate_hz,
        channels=list(CANONICAL_CHANNELS),
        dtype_tag=raw.dtype_tag,
    )


def _gap_spans(finite: np.ndarray) -> list[tuple[int, int]]:
    spans = []
    start = None
    for i, ok in enumerate(finite):
        if not ok and start is None:
            start = i
        elif ok and start is not None:
            spans.append((start, i - start))
            start = None
    if start is not None:
        spans.append((start, len(finite) - start))
    return spans


def clean_dropouts(
    series: TimeSeries, max_gap_frames: int = DEFAULT_MAX_GAP_FRAMES
) -> tuple[TimeSeries, DropoutReport]:
    """Interpolate short non-finite gaps; reject the utterance on long ones.

    Gaps of at most ``max_gap_frames`` are filled linearly from flanking
    finite samples (edge gaps take the nearest finite value). Any longer
    gap, or a fully non-finite channel, marks the report ``rejected`` and
    leaves the data untouched. Finite samples are never modified.
    """
    report = DropoutReport()
    out = series.data.copy()
    t = series.n_frames
    for c, name in enumerate(series.channels):
        col = series.data[:, c]
        finite = np.isfinite(col)
        spans = _gap_spans(finite)
        if not spans:
            continue
        report.spans[name] = spans
        if not finite.any():
            report.rejected = True
            report.reason = f"channel {name} entirely non-finite"
            return series, report
        too_long = [s for s in spans if s[1] > max_gap_frames]
        if too_long:
            start, length = too_long[0]
            report.rejected = True
            report.reason = (
                f"channel {name} gap of {length} frames at {start} "
                f"exceeds max_gap_frames={max_gap_frames}"
            )
            return series, report
        idx = np.arange(t, dtype=np.float64)
        filled = np.interp(idx, idx[finite], col[finite])
        out[~finite, c] = filled[~finite]
        report.repaired = True
    cleaned = TimeSeries(
        data=out, rate_hz=series.rate_hz, channels=list(series.channels),
        dtype_tag=series.dtype_tag,
    )
    return cleaned, report
