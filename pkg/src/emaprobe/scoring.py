"""Aggregation of channel correlations into benchmark-level scores.

The headline number is the mean Pearson r over the 12 EMA channels and
all subjects, unweighted at both levels. Layer profiles, best-layer
selection, strict local peaks, and Spearman rank agreement against an
external leaderboard live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import UndefinedCorrelationError, ValidationError
from .probe import ChannelScores, pearson_r


@dataclass
class ArticulatoryScore:
    """Mean correlation by subject, by channel, and overall."""

    overall: float
    per_subject: dict[str, float]
    per_channel: dict[str, float]
    n_invalid_channels: int = 0


@dataclass
class LayerProfile:
    """Scores indexed by layer, layer 0 being the waveform-encoder output."""

    scores: list[float]
    name: str = ""
    per_subject: dict[str, list[float]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.scores)


def articulatory_score(per_subject_scores: dict[str, ChannelScores]) -> ArticulatoryScore:
    """Average channel correlations per subject, then subjects unweighted.

    Invalid channels are excluded from every mean and counted; a subject
    with no valid channel at all is an error.
    """
    if not per_subject_scores:
        raise ValidationError("no subjects to score")
    per_subject: dict[str, float] = {}
    channel_values: dict[str, list[float]] = {}
    n_invalid = 0
    for subject, scores in per_subject_scores.items():
        if not scores.valid.any():
            raise ValidationError(f"subject {subject} has zero valid channels")
        n_invalid += int((~scores.valid).sum())
        per_subject[subject] = scores.mean_r()
        for c, name in enumerate(scores.channels):
            if scores.valid[c]:
                channel_values.setdefault(name, []).append(float(scores.r[c]))
    overall = math.fsum(per_subject.values()) / len(per_subject)
    per_channel = {
        name: math.fsum(vals) / len(vals) for name, vals in channel_values.items()
    }
    return ArticulatoryScore(
        overall=overall,
        per_subject=per_subject,
        per_channel=per_channel,
        n_invalid_channels=n_invalid,
    )


def spearman_rank(scores_a: dict[str, float], scores_b: dict[str, float]) -> float:
    """Spearman rank correlation of two score maps over identical keys.

    Ties receive their average rank; the result is the Pearson correlation
    of the two rank vectors.
    """
    if set(scores_a) != set(scores_b):
        raise ValidationError(
            f"key mismatch: {sorted(set(scores_a) ^ set(scores_b))}"
        )
    keys = sorted(scores_a)
    if len(keys) < 2:
        raise ValidationError("need at least 2 entries to rank")
    ranks_a = stats.rankdata([scores_a[k] for k in keys], method="average")
    ranks_b = stats.rankdata([scores_b[k] for k in keys], method="average")
    try:
        return pearson_r(ranks_a, ranks_b)
    except UndefinedCorrelationError:
        raise UndefinedCorrelationError("all values tied; ranking is undefined")


def best_layer(profile: LayerProfile) -> tuple[int, float]:
    """Layer index with the highest score; ties break toward the lower index."""
    if not profile.scores:
        raise ValidationError("empty layer profile")
    idx = int(np.argmax(profile.scores))
    return idx, float(profile.scores[idx])


def find_score_peaks(profile: LayerProfile) -> list[int]:
    """Strictly local maxima of a layer profile.

    Interior layers must beat both neighbors; the endpoints count as peaks
    when they beat their single neighbor. Requires at least 3 layers.
    """
    s = profile.scores
    if len(s) < 3:
        raise ValidationError(f"profile of length {len(s)} has no peak structure")
    peaks = []
    if s[0] > s[1]:
        peaks.append(0)
    peaks.extend(
        i for i in range(1, len(s) - 1) if s[i] > s[i - 1] and s[i] > s[i + 1]
    )
    if s[-1] > s[-2]:
        peaks.append(len(s) - 1)
    return peaks
