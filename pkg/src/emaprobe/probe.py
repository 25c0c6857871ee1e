"""Linear probes: minimum-norm OLS fit and Pearson scoring on held-out data.

The probe is an affine map from D-dimensional feature frames to the 12
EMA channels, solved as one least-squares system [X, 1] B = Y through the
SVD with a relative singular-value cutoff. All math runs in float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataIOError, FitError, UndefinedCorrelationError, ValidationError
from .tensor_io import TimeSeries, load_tensor, save_tensor

# Singular values below RTOL_SINGULAR * sigma_max are treated as zero.
RTOL_SINGULAR = 1e-10

POOLED, PER_UTTERANCE_MEAN = "pooled", "per-utterance-mean"


@dataclass
class LinearProbe:
    """Fitted weight matrix and intercept, with fit metadata."""

    weights: np.ndarray          # C_out x D
    intercept: np.ndarray        # C_out
    n_train: int = 0
    train_seconds: float = 0.0
    rtol: float = RTOL_SINGULAR

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.intercept = np.asarray(self.intercept, dtype=np.float64)
        if self.weights.ndim != 2 or self.intercept.shape != (self.weights.shape[0],):
            raise FitError("weight/intercept shapes disagree")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.intercept).all()):
            raise FitError("non-finite probe parameters")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class ChannelScores:
    """Per-channel Pearson r on a held-out set, with validity flags.

    Channels whose test target or prediction is constant cannot be scored;
    they carry NaN in ``r`` and False in ``valid``.
    """

    r: np.ndarray
    valid: np.ndarray
    n_test: int
    channels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.r.shape != self.valid.shape:
            raise ValidationError("score/validity shapes disagree")
        good = self.r[self.valid]
        if good.size and (np.abs(good) > 1.0 + 1e-12).any():
            raise ValidationError("correlation outside [-1, 1]")

    def mean_r(self) -> float:
        """Unweighted mean over valid channels."""
        if not self.valid.any():
            raise ValidationError("no valid channels to average")
        return float(math.fsum(self.r[self.valid]) / int(self.valid.sum()))


def fit_ols(
    x: np.ndarray,
    y: np.ndarray,
    rtol: float = RTOL_SINGULAR,
    train_seconds: float = 0.0,
) -> LinearProbe:
    """Minimum-norm least-squares fit of [X, 1] B = Y.

    Deterministic SVD solve; singular values below rtol * sigma_max are
    zeroed, which also covers rank-deficient designs (N < D or collinear
    features) with the minimum-norm solution.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise FitError("design matrices must be 2-D")
    if x.shape[0] != y.shape[0]:
        raise FitError(f"row mismatch: X has {x.shape[0]}, Y has {y.shape[0]}")
    if x.shape[0] < 2:
        raise FitError("need at least 2 training frames")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise FitError("non-finite values in training data")
    a = np.hstack([x, np.ones((x.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(a, y, rcond=rtol)
    return LinearProbe(
        weights=coef[:-1].T,
        intercept=coef[-1],
        n_train=x.shape[0],
        train_seconds=train_seconds,
        rtol=rtol,
    )


def predict(probe: LinearProbe, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != probe.dim:
        raise ValidationError(
            f"feature dimension mismatch: probe expects {probe.dim}, "
            f"got {x.shape[1] if x.ndim == 2 else x.shape}"
        )
    return x @ probe.weights.T + probe.intercept


def pearson_r(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation coefficient of two equal-length vectors.

    Uses length-N (population) normalization, which cancels in the ratio.
    A constant vector has no defined correlation and raises.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValidationError("need at least 2 samples for a correlation")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValidationError("non-finite values in correlation input")
    if a.max() == a.min() or b.max() == b.min():
        raise UndefinedCorrelationError("correlation against a constant vector")
    da = a - a.mean()
    db = b - b.mean()
    r = float(da @ db) / math.sqrt(float(da @ da) * float(db @ db))
    return max(-1.0, min(1.0, r))


def _is_constant(v: np.ndarray) -> bool:
    return bool(v.max() == v.min())


def score_probe(
    probe: LinearProbe,
    x_test: np.ndarray,
    y_test: np.ndarray,
    mode: str = POOLED,
    spans: list[tuple[str, int, int]] | None = None,
    channels: list[str] | None = None,
    strict: bool = False,
) -> ChannelScores:
    """Score a probe per channel on held-out data.

    mode "pooled" correlates over all test frames at once; mode
    "per-utterance-mean" correlates within each span and averages the
    spans unweighted (``spans`` required). Constant target or prediction
    channels are flagged invalid and excluded from averages; with
    ``strict`` they raise instead.
    """
    x_test = np.asarray(x_test, dtype=np.float64)
    y_test = np.asarray(y_test, dtype=np.float64)
    if x_test.shape[0] == 0:
        raise ValidationError("empty test set")
    if x_test.shape[0] != y_test.shape[0]:
        raise ValidationError("test matrices are not aligned")
    if mode not in (POOLED, PER_UTTERANCE_MEAN):
        raise ValidationError(f"unknown scoring mode {mode!r}")
    if mode == PER_UTTERANCE_MEAN and not spans:
        raise ValidationError("per-utterance scoring requires frame spans")

    y_hat = predict(probe, x_test)
    n_channels = y_test.shape[1]
    r = np.full(n_channels, np.nan)
    valid = np.zeros(n_channels, dtype=bool)
    for c in range(n_channels):
        name = channels[c] if channels else f"channel {c}"
        if mode == POOLED:
            if _is_constant(y_test[:, c]) or _is_constant(y_hat[:, c]):
                if strict:
                    raise UndefinedCorrelationError(f"{name} is constant on the test set")
                continue
            r[c] = pearson_r(y_test[:, c], y_hat[:, c])
            valid[c] = True
        else:
            per_utt = []
            for _, start, stop in spans:
                yt, yp = y_test[start:stop, c], y_hat[start:stop, c]
                if yt.size < 2 or _is_constant(yt) or _is_constant(yp):
                    if strict:
                        raise UndefinedCorrelationError(
                            f"{name} is constant within a test utterance"
                        )
                    continue
                per_utt.append(pearson_r(yt, yp))
            if per_utt:
                r[c] = math.fsum(per_utt) / len(per_utt)
                valid[c] = True
    return ChannelScores(
        r=r, valid=valid, n_test=int(x_test.shape[0]),
        channels=list(channels) if channels else [f"ch{i}" for i in range(n_channels)],
    )


def save_probe(probe: LinearProbe, path: str | Path) -> None:
    """Persist a probe: weights as an APT1 tensor plus a JSON sidecar."""
    path = Path(path)
    weights = TimeSeries(
        data=probe.weights,
        rate_hz=1.0,  # placeholder; weight rows are not time frames
        channels=[f"d{i:04d}" for i in range(probe.dim)],
        dtype_tag="f64",
    )
    save_tensor(weights, path)
    sidecar = {
        "intercept": probe.intercept.tolist(),
        "dim": probe.dim,
        "rtol": probe.rtol,
        "n_train": probe.n_train,
        "train_seconds": probe.train_seconds,
    }
    meta_path = path.with_suffix(path.suffix + ".json")
    try:
        meta_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", "utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot write probe metadata {meta_path}: {exc}") from exc


def load_probe(path: str | Path) -> LinearProbe:
    path = Path(path)
    weights = load_tensor(path)
    meta_path = path.with_suffix(path.suffix + ".json")
    try:
        meta = json.loads(meta_path.read_text("utf-8"))
    except OSError as exc:
        raise DataIOError(f"cannot read probe metadata {meta_path}: {exc}") from exc
    return LinearProbe(
        weights=weights.data,
        intercept=np.asarray(meta["intercept"], dtype=np.float64),
        n_train=int(meta.get("n_train", 0)),
        train_seconds=float(meta.get("train_seconds", 0.0)),
        rtol=float(meta.get("rtol", RTOL_SINGULAR)),
    )
