"""Experiment grid bookkeeping: cell identity, results, and a JSONL store.

A "cell" is one probe fit: (subject, representation, layer, training
budget, seed). Stores are append-only JSONL with a provenance first line,
so an interrupted sweep resumes by skipping cells already on disk, and a
finished sweep is byte-identical regardless of worker count because rows
are appended in submission order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .errors import DataIOError, ValidationError
from .preprocess import TRAIN_ONLY
from .probe import POOLED, RTOL_SINGULAR

PROVENANCE = "provenance"
CELL = "cell"


@dataclass(frozen=True)
class CellKey:
    """Identity of one probe fit within a grid."""

    subject: str
    representation: str
    layer: int
    budget_seconds: float | None
    seed: int

    def subset_seed(self) -> int:
        """Seed for the training-subset draw of this cell.

        Depends only on (seed, subject, budget) so that every layer of a
        sweep trains on the same utterance subset.
        """
        tag = f"{self.seed}|{self.subject}|{self.budget_seconds}"
        digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")


@dataclass
class CellResult:
    """Per-channel correlations and bookkeeping for one fitted cell."""

    key: CellKey
    channels: list[str]
    r: list[float | None]
    valid: list[bool]
    n_train_frames: int
    n_test_frames: int
    train_seconds: float
    mean_r: float

    def to_record(self) -> dict:
        rec = {"record": CELL, **asdict(self.key)}
        rec.update(
            channels=self.channels,
            r=[None if v is None else float(v) for v in self.r],
            valid=self.valid,
            n_train_frames=self.n_train_frames,
            n_test_frames=self.n_test_frames,
            train_seconds=self.train_seconds,
            mean_r=self.mean_r,
        )
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "CellResult":
        key = CellKey(
            subject=rec["subject"],
            representation=rec["representation"],
            layer=rec["layer"],
            budget_seconds=rec["budget_seconds"],
            seed=rec["seed"],
        )
        return cls(
            key=key,
            channels=rec["channels"],
            r=rec["r"],
            valid=rec["valid"],
            n_train_frames=rec["n_train_frames"],
            n_test_frames=rec["n_test_frames"],
            train_seconds=rec["train_seconds"],
            mean_r=rec["mean_r"],
        )


@dataclass
class ExperimentConfig:
    """Everything that determines grid results, hashed for provenance."""

    manifest_path: str
    representation: str
    layers: list[int] = field(default_factory=lambda: [0])
    subjects: list[str] | None = None
    budgets: list[float | None] = field(default_factory=lambda: [None])
    seeds: list[int] = field(default_factory=lambda: [0])
    scheme: str = "per-speaker"
    scoring: str = POOLED
    norm_scope: str = TRAIN_ONLY
    normalize_features: bool = False
    rtol: float = RTOL_SINGULAR
    split_policy: str = "tail"
    split_seed: int = 0
    frame_tolerance: int = 3
    strict: bool = False

    def validate(self) -> None:
        budgets = [b for b in self.budgets if b is not None]
        if any(b <= 0 for b in budgets):
            raise ValidationError(f"budgets must be strictly positive: {budgets}")
        if budgets != sorted(budgets):
            raise ValidationError(f"budgets must be sorted ascending: {budgets}")
        if budgets and not self.seeds:
            raise ValidationError("budgeted runs need at least one seed")
        if len(set(self.layers)) != len(self.layers):
            raise ValidationError(f"duplicate layers: {self.layers}")

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _encode_line(record: dict) -> str:
    # NaN is not valid JSON; anything non-finite must already be None.
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


class GridStore:
    """Append-only JSONL result store with provenance and resume support."""

    def __init__(self, path: Path, provenance: dict, results: list[CellResult]):
        self.path = path
        self.provenance = provenance
        self._results = results
        self._keys = {res.key for res in results}

    @classmethod
    def open(
        cls,
        path: str | Path,
        config: ExperimentConfig,
        manifest_sha256: str,
    ) -> "GridStore":
        """Create the store, or reopen it if its provenance matches.

        Reopening with a different configuration or manifest raises; a
        stale store never silently absorbs results from a new setup.
        """
        path = Path(path)
        provenance = {
            "record": PROVENANCE,
            "config_hash": config.config_hash(),
            "engine_version": __version__,
            "manifest_sha256": manifest_sha256,
        }
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(_encode_line(provenance) + "\n")
            return cls(path, provenance, [])

        existing = cls.load(path)
        for key in ("config_hash", "manifest_sha256"):
            if existing.provenance.get(key) != provenance[key]:
                raise ValidationError(
                    f"store {path} was built with a different {key.replace('_', ' ')}; "
                    "use a fresh store path or matching configuration"
                )
        return existing

    @classmethod
    def load(cls, path: str | Path) -> "GridStore":
        path = Path(path)
        if not path.exists():
            raise DataIOError(f"grid store not found: {path}")
        results = []
        provenance = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataIOError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                kind = rec.get("record")
                if lineno == 1:
                    if kind != PROVENANCE:
                        raise DataIOError(f"{path}: first line must be a provenance record")
                    provenance = rec
                elif kind == CELL:
                    results.append(CellResult.from_record(rec))
                else:
                    raise DataIOError(f"{path}:{lineno}: unknown record type {kind!r}")
        if provenance is None:
            raise DataIOError(f"{path}: empty store")
        return cls(path, provenance, results)

    def __len__(self) -> int:
        return len(self._results)

    def __contains__(self, key: CellKey) -> bool:
        return key in self._keys

    def results(self) -> list[CellResult]:
        return list(self._results)

    def get(self, key: CellKey) -> CellResult | None:
        for res in self._results:
            if res.key == key:
                return res
        return None

    def append(self, result: CellResult) -> None:
        if result.key in self._keys:
            raise ValidationError(f"duplicate cell {result.key}")
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(_encode_line(result.to_record()) + "\n")
        self._results.append(result)
        self._keys.add(result.key)
