"""Synthetic feature/EMA worlds with analytically known probe performance.

The verification oracle for the whole pipeline: features are smooth
band-limited random processes, targets are an exact affine map of the
features plus i.i.d. gaussian noise scaled to a requested per-channel
signal-to-noise power ratio. A linear probe on such a world has expected
held-out correlation sqrt(snr / (1 + snr)), which the engine must hit.

Worlds are written in the same APT1 + manifest formats as real corpora,
so the full pipeline runs on them unmodified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ema_ingest import CANONICAL_CHANNELS
from .errors import ValidationError
from .manifest import TEST, TRAIN, DatasetManifest, Subject, Utterance
from .tensor_io import TimeSeries, save_tensor

REPRESENTATION = "synth"

# Driver process: per feature dimension, a sum of random-phase sinusoids
# below the articulatory band limit, normalized to unit variance.
DRIVER_COMPONENTS = 16
DRIVER_MIN_HZ = 0.3
DRIVER_MAX_HZ = 8.0

# Subject coupling modes: identical data, independent draws of the same
# true map, a fresh map per subject, or maps on disjoint feature blocks.
SUBJECT_MODES = ("clone", "iid", "distinct", "orthogonal")

_MAP_TAG, _UTT_TAG, _NOISE_TAG = 101, 202, 303


@dataclass
class SyntheticWorld:
    """Everything needed to reason about a generated world analytically."""

    root: Path
    manifest_path: Path
    manifest: DatasetManifest
    dim: int
    rate_hz: float
    snr: float | None
    seed: int
    layers: list[int]
    feature_noise_layers: list[float]
    weights: dict[str, np.ndarray] = field(default_factory=dict)
    intercepts: dict[str, np.ndarray] = field(default_factory=dict)
    noise_std: dict[str, np.ndarray] = field(default_factory=dict)
    representation: str = REPRESENTATION


def expected_r(snr: float) -> float:
    """Closed-form held-out correlation for an exact probe under i.i.d. noise."""
    if isinstance(snr, float) and math.isinf(snr):
        return 1.0
    if snr < 0:
        raise ValidationError(f"snr must be non-negative, got {snr}")
    return math.sqrt(snr / (1.0 + snr))


def _driver_block(rng: np.random.Generator, n_frames: int, dim: int, rate_hz: float) -> np.ndarray:
    """Smooth unit-variance random process, one column per feature dim."""
    t = np.arange(n_frames, dtype=np.float64) / rate_hz
    freqs = rng.uniform(DRIVER_MIN_HZ, DRIVER_MAX_HZ, size=(dim, DRIVER_COMPONENTS))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(dim, DRIVER_COMPONENTS))
    amps = rng.uniform(0.5, 1.5, size=(dim, DRIVER_COMPONENTS))
    # var of sum of independent-phase sinusoids is sum(a^2)/2
    amps /= np.sqrt((amps**2).sum(axis=1, keepdims=True) / 2.0)
    args = 2.0 * np.pi * t[:, None, None] * freqs[None, :, :] + phases[None, :, :]
    return (np.sin(args) * amps[None, :, :]).sum(axis=2)


def _subject_rng(seed: int, subj_idx: int, tag: int, extra: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, subj_idx, tag, extra]))


def gen_world(
    out_dir: str | Path,
    dim: int,
    n_utts: int,
    utt_seconds: float,
    rate_hz: float = 50.0,
    snr: float | None = None,
    seed: int = 0,
    n_test_utts: int | None = None,
    feature_noise_layers: tuple[float, ...] = (0.0,),
    subjects: tuple[str, ...] = ("S1",),
    subject_mode: str = "iid",
) -> SyntheticWorld:
    """Generate a synthetic world and write its tensors and manifest.

    ``snr`` is the per-channel signal-to-noise power ratio (None or inf
    for noiseless targets). ``feature_noise_layers`` emits one feature
    "layer" per entry, each the clean features plus gaussian noise at that
    fraction of the per-dimension feature std; targets always derive from
    the clean features. Fixed seeds give byte-identical files.
    """
    if dim < 1 or n_utts < 1 or utt_seconds <= 0 or rate_hz <= 0:
        raise ValidationError("world dimensions must be positive")
    if snr is not None and not math.isinf(snr):
        if snr < 0:
            raise ValidationError(f"snr must be non-negative, got {snr}")
        if snr == 0:
            raise ValidationError("snr=0 would need unbounded noise; use a small positive snr")
    if subject_mode not in SUBJECT_MODES:
        raise ValidationError(f"unknown subject mode {subject_mode!r}")
    if subject_mode == "orthogonal" and dim < 2 * len(subjects):
        raise ValidationError("orthogonal mode needs at least 2 dims per subject")

    out_dir = Path(out_dir)
    n_test = n_test_utts if n_test_utts is not None else max(1, n_utts // 5)
    if n_test >= n_utts:
        raise ValidationError(f"{n_test} test utterances leave no training data")
    n_frames = max(2, int(round(utt_seconds * rate_hz)))
    layers = list(range(len(feature_noise_layers)))
    noiseless = snr is None or math.isinf(snr)

    world = SyntheticWorld(
        root=out_dir,
        manifest_path=out_dir / "manifest.json",
        manifest=DatasetManifest(),
        dim=dim,
        rate_hz=float(rate_hz),
        snr=None if noiseless else float(snr),
        seed=seed,
        layers=layers,
        feature_noise_layers=list(feature_noise_layers),
    )

    feat_channels = [f"d{i:04d}" for i in range(dim)]
    block = dim // len(subjects) if subject_mode == "orthogonal" else dim

    for subj_idx, subject_id in enumerate(subjects):
        data_idx = 0 if subject_mode == "clone" else subj_idx
        map_idx = subj_idx if subject_mode in ("distinct", "orthogonal") else 0

        map_rng = _subject_rng(seed, map_idx, _MAP_TAG)
        weights = map_rng.standard_normal((len(CANONICAL_CHANNELS), dim)) / math.sqrt(dim)
        intercept = map_rng.standard_normal(len(CANONICAL_CHANNELS))
        if subject_mode == "orthogonal":
            mask = np.zeros(dim)
            mask[subj_idx * block : (subj_idx + 1) * block] = 1.0
            weights = weights * mask * math.sqrt(dim / block)

        clean = [
            _driver_block(_subject_rng(seed, data_idx, _UTT_TAG, u), n_frames, dim, rate_hz)
            for u in range(n_utts)
        ]
        pooled = np.concatenate(clean, axis=0)
        signal_std = (pooled @ weights.T).std(axis=0)
        feat_std = pooled.std(axis=0)
        noise_std = (
            np.zeros(len(CANONICAL_CHANNELS))
            if noiseless
            else signal_std / math.sqrt(snr)
        )
        world.weights[subject_id] = weights
        world.intercepts[subject_id] = intercept
        world.noise_std[subject_id] = noise_std

        utterances = []
        for u in range(n_utts):
            noise_rng = _subject_rng(seed, data_idx, _NOISE_TAG, u)
            ema_data = clean[u] @ weights.T + intercept
            if not noiseless:
                ema_data = ema_data + noise_rng.standard_normal(ema_data.shape) * noise_std
            utt_id = f"utt{u:04d}"
            ema_rel = f"ema/{subject_id}/{utt_id}.apt"
            save_tensor(
                TimeSeries(ema_data, rate_hz, list(CANONICAL_CHANNELS), "f64"),
                out_dir / ema_rel,
            )
            features = {}
            for layer, level in zip(layers, feature_noise_layers):
                feat = clean[u]
                if level > 0:
                    feat = feat + noise_rng.standard_normal(feat.shape) * (level * feat_std)
                rel = f"feat/{subject_id}/L{layer:02d}/{utt_id}.apt"
                save_tensor(TimeSeries(feat, rate_hz, feat_channels, "f32"), out_dir / rel)
                features[layer] = rel
            utterances.append(
                Utterance(
                    id=utt_id,
                    duration_s=n_frames / rate_hz,
                    ema=ema_rel,
                    features={REPRESENTATION: features},
                    split=TEST if u >= n_utts - n_test else TRAIN,
                )
            )
        world.manifest.subjects.append(
            Subject(id=subject_id, corpus="synth", utterances=utterances, test_size=n_test)
        )

    world.manifest.save(world.manifest_path)
    return world
