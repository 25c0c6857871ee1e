"""Corpus-level EMA ingestion: EST Track trees to APT1 tensors + manifest.

Two directory layouts are understood:
  mngu0: a flat directory of .ema files, one speaker (named S1)
  mocha: one subdirectory per speaker, .ema files inside (named S2, S3, ...)

Each track is parsed, mapped to the canonical 12 channels, dropout-cleaned,
resampled to the target rate, and written as an APT1 tensor; rejected
utterances stay in the manifest with their reason, excluded from splits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .ema_ingest import (
    DEFAULT_MAX_GAP_FRAMES,
    ChannelMapping,
    clean_dropouts,
    default_mapping,
    parse_est_track,
    select_canonical_channels,
)
from .errors import DataIOError, EngineError, ValidationError
from .manifest import CORPUS_TEST_SIZES, DatasetManifest, Subject, Utterance
from .preprocess import make_splits, resample
from .tensor_io import save_tensor

TARGET_RATE_HZ = 50.0
EST_SUFFIXES = (".ema", ".est", ".track")


@dataclass
class IngestReport:
    """What happened during a corpus ingest."""

    manifest_path: Path
    n_utterances: int
    n_rejected: int
    rejected: list[tuple[str, str, str]] = field(default_factory=list)  # subject, utt, reason
    subjects: list[str] = field(default_factory=list)


def _discover(root: Path, corpus: str) -> list[tuple[str, list[Path]]]:
    """Map the directory layout to (subject id, EST files) groups."""
    def est_files(d: Path) -> list[Path]:
        return sorted(p for p in d.iterdir() if p.is_file() and p.suffix in EST_SUFFIXES)

    if corpus == "mngu0":
        files = est_files(root)
        if not files:
            raise DataIOError(f"no EST track files under {root}")
        return [("S1", files)]
    if corpus == "mocha":
        groups = []
        speaker_dirs = sorted(d for d in root.iterdir() if d.is_dir())
        for i, d in enumerate(speaker_dirs):
            files = est_files(d)
            if files:
                groups.append((f"S{i + 2}", files))
        if not groups:
            raise DataIOError(f"no speaker directories with EST track files under {root}")
        return groups
    raise ValidationError(f"unknown corpus layout {corpus!r}")


def ingest_corpus(
    root: str | Path,
    corpus: str,
    out_dir: str | Path,
    mapping_path: str | Path | None = None,
    target_hz: float = TARGET_RATE_HZ,
    max_gap_frames: int = DEFAULT_MAX_GAP_FRAMES,
    split_policy: str = "tail",
    split_seed: int = 0,
) -> IngestReport:
    """Ingest a corpus tree and write tensors plus a split manifest."""
    root = Path(root)
    out_dir = Path(out_dir)
    if not root.is_dir():
        raise DataIOError(f"corpus root is not a directory: {root}")
    mapping = (
        ChannelMapping.from_file(mapping_path) if mapping_path else default_mapping(corpus)
    )
    manifest = DatasetManifest()
    rejected: list[tuple[str, str, str]] = []
    n_utts = 0

    for subject_id, files in _discover(root, corpus):
        utterances = []
        for path in files:
            utt_id = path.stem
            n_utts += 1
            try:
                raw_bytes = path.read_bytes()
            except OSError as exc:
                raise DataIOError(f"cannot read {path}: {exc}") from exc
            try:
                raw = parse_est_track(raw_bytes)
                series = select_canonical_channels(raw, mapping)
                series, report = clean_dropouts(series, max_gap_frames)
                if report.rejected:
                    raise ValidationError(report.reason or "sensor dropout too long")
                series = resample(series, target_hz)
            except EngineError as exc:
                rejected.append((subject_id, utt_id, str(exc)))
                utterances.append(
                    Utterance(id=utt_id, duration_s=0.0, rejected=True, reject_reason=str(exc))
                )
                continue
            rel = f"ema/{subject_id}/{utt_id}.apt"
            save_tensor(series, out_dir / rel)
            utterances.append(Utterance(id=utt_id, duration_s=series.duration_s, ema=rel))
        manifest.subjects.append(
            Subject(
                id=subject_id,
                corpus=corpus,
                utterances=utterances,
                test_size=CORPUS_TEST_SIZES.get(corpus),
            )
        )

    make_splits(manifest, split_policy, split_seed)
    manifest_path = manifest.save(out_dir / "manifest.json")
    return IngestReport(
        manifest_path=manifest_path,
        n_utterances=n_utts,
        n_rejected=len(rejected),
        rejected=rejected,
        subjects=[s.id for s in manifest.subjects],
    )
