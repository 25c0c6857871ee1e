"""Rate conversion, per-channel normalization, splits, and design assembly.

Everything a probe fit needs between raw tensors and stacked matrices:
bringing streams to a common 50 Hz rate, z-scoring channels, carving
train/test splits and duration budgets, and stacking paired utterances
into design matrices with per-utterance frame spans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import DataIOError, FitError, ValidationError
from .manifest import TEST, TRAIN, DatasetManifest, Utterance
from .tensor_io import TimeSeries, load_tensor, validate_pairing

TRAIN_ONLY, ALL_DATA = "train-only", "all-data"

# Anti-aliasing kernel for integer-factor decimation: windowed sinc,
# low-pass at 0.45x the target rate, 8 zero-crossings per side, Hamming
# window, unit DC gain. Declared constants; do not tune per call.
AA_CUTOFF_FRACTION = 0.45
AA_ZERO_CROSSINGS = 8


def _decimation_kernel(rate_in: float, target_hz: float) -> np.ndarray:
    cutoff = AA_CUTOFF_FRACTION * target_hz          # Hz
    fc = cutoff / rate_in                            # cycles per input sample
    half_width = int(round(AA_ZERO_CROSSINGS / (2.0 * fc)))
    n = np.arange(-half_width, half_width + 1, dtype=np.float64)
    kernel = 2.0 * fc * np.sinc(2.0 * fc * n)
    kernel *= np.hamming(kernel.size)
    return kernel / kernel.sum()


def resample(series: TimeSeries, target_hz: float) -> TimeSeries:
    """Convert a series to ``target_hz``; output length rounds T*target/rate.

    Integer-factor downsampling goes through the anti-aliased decimation
    kernel; any other ratio (including upsampling) is linear interpolation
    on the frame-time axis. Channel names are preserved.
    """
    if not (math.isfinite(target_hz) and target_hz > 0):
        raise ValidationError(f"target rate must be positive, got {target_hz}")
    if math.isclose(series.rate_hz, target_hz, rel_tol=1e-9):
        return replace(series, data=series.data.copy(), rate_hz=float(target_hz))

    t_in = series.n_frames
    n_out = max(1, int(round(t_in * target_hz / series.rate_hz)))
    ratio = series.rate_hz / target_hz
    factor = round(ratio)
    if factor >= 2 and math.isclose(ratio, factor, rel_tol=1e-6):
        kernel = _decimation_kernel(series.rate_hz, target_hz)
        filtered = ndimage.convolve1d(series.data, kernel, axis=0, mode="nearest")
        # ceil(T/factor) kept samples always covers n_out = round(T/factor)
        out = filtered[:: int(factor)][:n_out]
    else:
        times_in = np.arange(t_in, dtype=np.float64) / series.rate_hz
        times_out = np.arange(n_out, dtype=np.float64) / target_hz
        out = np.empty((n_out, series.n_channels), dtype=np.float64)
        for c in range(series.n_channels):
            out[:, c] = np.interp(times_out, times_in, series.data[:, c])
    return TimeSeries(
        data=out, rate_hz=float(target_hz), channels=list(series.channels),
        dtype_tag=series.dtype_tag,
    )


@dataclass
class Normalizer:
    """Per-channel mean and standard deviation (population normalization)."""

    mean: np.ndarray
    std: np.ndarray
    channels: list[str]
    fit_scope: str = TRAIN_ONLY

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)

    def _check(self, series: TimeSeries):
        if list(series.channels) != list(self.channels):
            raise ValidationError(
                f"channel layout mismatch: normalizer has {self.channels}, "
                f"series has {series.channels}"
            )

    def apply(self, series: TimeSeries) -> TimeSeries:
        self._check(series)
        return replace(series, data=(series.data - self.mean) / self.std)

    def invert(self, series: TimeSeries) -> TimeSeries:
        self._check(series)
        return replace(series, data=series.data * self.std + self.mean)


def fit_normalizer(train: list[TimeSeries], scope: str = TRAIN_ONLY) -> Normalizer:
    """Pool all frames of the given series and z-score per channel.

    A constant channel (max equals min over the pooled frames) cannot be
    normalized and raises FitError naming the channel.
    """
    if not train:
        raise ValidationError("need at least one series to fit a normalizer")
    channels = list(train[0].channels)
    for s in train[1:]:
        if list(s.channels) != channels:
            raise ValidationError("all series must share one channel layout")
    pooled = np.concatenate([s.data for s in train], axis=0)
    if not np.isfinite(pooled).all():
        raise FitError("non-finite values in normalizer fit data")
    constant = pooled.max(axis=0) == pooled.min(axis=0)
    if constant.any():
        bad = [channels[i] for i in np.flatnonzero(constant)]
        raise FitError(f"constant channel(s) cannot be normalized: {bad}")
    return Normalizer(
        mean=pooled.mean(axis=0), std=pooled.std(axis=0),
        channels=channels, fit_scope=scope,
    )


def apply_normalizer(normalizer: Normalizer, series: TimeSeries) -> TimeSeries:
    return normalizer.apply(series)


def align_pair(
    features: TimeSeries, ema: TimeSeries, frame_tolerance: int = 3
) -> tuple[TimeSeries, TimeSeries]:
    """Truncate both streams to their common length, counted from frame 0."""
    report = validate_pairing(features, ema, frame_tolerance)
    n = report.common_length
    return (
        replace(features, data=features.data[:n].copy()),
        replace(ema, data=ema.data[:n].copy()),
    )


def make_splits(
    manifest: DatasetManifest, policy: str = "tail", seed: int = 0
) -> DatasetManifest:
    """Assign train/test split labels to every non-rejected utterance.

    Policy "tail" holds out the last N utterances in corpus order per
    subject (N from the corpus convention or the subject's test_size);
    policy "seeded" samples N held-out utterances uniformly with ``seed``.
    """
    if policy not in ("tail", "seeded"):
        raise ValidationError(f"unknown split policy {policy!r}")
    for subj in manifest.subjects:
        active = subj.active()
        n_test = subj.required_test_size()
        if len(active) <= n_test:
            raise ValidationError(
                f"subject {subj.id}: {len(active)} usable utterances cannot "
                f"hold out {n_test} for test"
            )
        if policy == "tail":
            test_ids = {u.id for u in active[-n_test:]}
        else:
            rng = np.random.default_rng(seed)
            picks = rng.choice(len(active), size=n_test, replace=False)
            test_ids = {active[i].id for i in picks}
        for u in subj.utterances:
            if u.rejected:
                u.split = None
            else:
                u.split = TEST if u.id in test_ids else TRAIN
    return manifest


def subset_by_duration(
    train_utterances: list[Utterance], budget_seconds: float, seed: int
) -> list[Utterance]:
    """Pick whole utterances in seeded-shuffle order until the budget is met.

    The returned subset's total duration is at least ``budget_seconds`` and
    dropping its last utterance would fall below the budget. Deterministic
    for a fixed (list, seed).
    """
    if not (math.isfinite(budget_seconds) and budget_seconds > 0):
        raise ValidationError(f"budget must be positive, got {budget_seconds}")
    total = sum(u.duration_s for u in train_utterances)
    if total < budget_seconds:
        raise ValidationError(
            f"insufficient training audio: {total:.1f}s available, "
            f"budget {budget_seconds:.1f}s"
        )
    order = np.random.default_rng(seed).permutation(len(train_utterances))
    picked: list[Utterance] = []
    acc = 0.0
    for i in order:
        picked.append(train_utterances[int(i)])
        acc += train_utterances[int(i)].duration_s
        if acc >= budget_seconds:
            break
    return picked


@dataclass
class DesignMatrices:
    """Stacked feature/target matrices with per-utterance frame spans."""

    x: np.ndarray            # N x D
    y: np.ndarray            # N x 12
    spans: list[tuple[str, int, int]] = field(default_factory=list)
    subject: str = ""

    @property
    def n_frames(self) -> int:
        return self.x.shape[0]


@dataclass
class UtterancePair:
    """One utterance's aligned feature/EMA streams, tagged with its subject."""

    subject: str
    utterance: Utterance
    features: TimeSeries
    ema: TimeSeries


def load_utterance_pair(
    utt: Utterance,
    subject: str,
    representation: str,
    layer: int,
    manifest: DatasetManifest,
    frame_tolerance: int = 3,
) -> UtterancePair:
    """Load an utterance's feature and EMA tensors, aligned to common length."""
    feat_rel = utt.feature_path(representation, layer)
    if feat_rel is None:
        raise DataIOError(
            f"utterance {utt.id}: no tensor for representation "
            f"{representation!r} layer {layer}"
        )
    if utt.ema is None:
        raise DataIOError(f"utterance {utt.id}: no EMA tensor recorded")
    features = load_tensor(manifest.resolve(feat_rel))
    ema = load_tensor(manifest.resolve(utt.ema))
    features, ema = align_pair(features, ema, frame_tolerance)
    return UtterancePair(subject=subject, utterance=utt, features=features, ema=ema)


def assemble_design(
    pairs: list[UtterancePair],
    ema_normalizer: Normalizer | None = None,
    feature_normalizer: Normalizer | None = None,
) -> DesignMatrices:
    """Stack aligned utterance pairs into design matrices, recording spans."""
    if not pairs:
        raise ValidationError("cannot assemble a design from zero utterances")
    subjects = {p.subject for p in pairs}
    if len(subjects) > 1:
        raise ValidationError(f"mixed subjects in one design: {sorted(subjects)}")
    xs, ys, spans = [], [], []
    offset = 0
    for pair in pairs:
        utt, features, ema = pair.utterance, pair.features, pair.ema
        if features.n_frames != ema.n_frames:
            raise ValidationError(f"utterance {utt.id}: unaligned pair")
        if feature_normalizer is not None:
            features = feature_normalizer.apply(features)
        if ema_normalizer is not None:
            ema = ema_normalizer.apply(ema)
        if not np.isfinite(features.data).all() or not np.isfinite(ema.data).all():
            raise ValidationError(f"utterance {utt.id}: non-finite values in design")
        xs.append(features.data)
        ys.append(ema.data)
        spans.append((utt.id, offset, offset + features.n_frames))
        offset += features.n_frames
    x = np.concatenate(xs, axis=0)
    y = np.concatenate(ys, axis=0)
    return DesignMatrices(x=x, y=y, spans=spans, subject=pairs[0].subject)
