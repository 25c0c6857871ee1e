"""Dataset manifest: subjects, utterances, durations, file paths, splits.

The manifest is a JSON file shared by the CLI, the service, and the
feature extractor. All paths inside it are POSIX-relative to the manifest
file's directory, so a dataset directory can be moved wholesale.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataIOError, ValidationError

MANIFEST_VERSION = 1

# Held-out utterance counts under the published split convention.
CORPUS_TEST_SIZES = {"mngu0": 100, "mocha": 50}

TRAIN, TEST = "train", "test"


@dataclass
class Utterance:
    id: str
    duration_s: float
    ema: str | None = None
    audio: str | None = None
    # representation id -> layer index -> tensor path
    features: dict[str, dict[int, str]] = field(default_factory=dict)
    split: str | None = None
    rejected: bool = False
    reject_reason: str | None = None

    def feature_path(self, representation: str, layer: int) -> str | None:
        return self.features.get(representation, {}).get(layer)

    def to_json(self) -> dict:
        feats = {
            rep: [{"layer": layer, "path": path} for layer, path in sorted(layers.items())]
            for rep, layers in sorted(self.features.items())
        }
        return {
            "id": self.id,
            "duration_s": self.duration_s,
            "ema": self.ema,
            "audio": self.audio,
            "features": feats,
            "split": self.split,
            "rejected": self.rejected,
            "reject_reason": self.reject_reason,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "Utterance":
        feats = {
            rep: {int(entry["layer"]): entry["path"] for entry in entries}
            for rep, entries in raw.get("features", {}).items()
        }
        return cls(
            id=raw["id"],
            duration_s=float(raw["duration_s"]),
            ema=raw.get("ema"),
            audio=raw.get("audio"),
            features=feats,
            split=raw.get("split"),
            rejected=bool(raw.get("rejected", False)),
            reject_reason=raw.get("reject_reason"),
        )


@dataclass
class Subject:
    id: str
    corpus: str
    utterances: list[Utterance] = field(default_factory=list)
    test_size: int | None = None

    def active(self) -> list[Utterance]:
        """Utterances that survived ingestion (dropout rejection excluded)."""
        return [u for u in self.utterances if not u.rejected]

    def split_utterances(self, split: str) -> list[Utterance]:
        return [u for u in self.active() if u.split == split]

    def required_test_size(self) -> int:
        if self.test_size is not None:
            return self.test_size
        try:
            return CORPUS_TEST_SIZES[self.corpus]
        except KeyError:
            raise ValidationError(
                f"subject {self.id}: corpus {self.corpus!r} has no default test size; "
                "set test_size explicitly"
            )

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "corpus": self.corpus,
            "test_size": self.test_size,
            "utterances": [u.to_json() for u in self.utterances],
        }

    @classmethod
    def from_json(cls, raw: dict) -> "Subject":
        return cls(
            id=raw["id"],
            corpus=raw["corpus"],
            test_size=raw.get("test_size"),
            utterances=[Utterance.from_json(u) for u in raw.get("utterances", [])],
        )


@dataclass
class DatasetManifest:
    subjects: list[Subject] = field(default_factory=list)
    root: Path | None = None  # directory paths are relative to

    def subject(self, subject_id: str) -> Subject:
        for s in self.subjects:
            if s.id == subject_id:
                return s
        raise ValidationError(f"unknown subject {subject_id!r}")

    def subject_ids(self) -> list[str]:
        return [s.id for s in self.subjects]

    def resolve(self, relpath: str) -> Path:
        base = self.root if self.root is not None else Path(".")
        return base / relpath

    def merge(self, other: "DatasetManifest") -> None:
        """Append the other manifest's subjects (ids must not collide)."""
        clash = set(self.subject_ids()) & set(other.subject_ids())
        if clash:
            raise ValidationError(f"subject ids already present: {sorted(clash)}")
        self.subjects.extend(other.subjects)

    def validate(self) -> None:
        for subj in self.subjects:
            ids = [u.id for u in subj.utterances]
            if len(set(ids)) != len(ids):
                raise ValidationError(f"subject {subj.id}: duplicate utterance ids")
            for u in subj.active():
                if u.split not in (TRAIN, TEST, None):
                    raise ValidationError(
                        f"subject {subj.id} utterance {u.id}: bad split {u.split!r}"
                    )

    def to_json(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "subjects": [s.to_json() for s in self.subjects],
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        self.validate()
        path.parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_text(text, encoding="utf-8")
            tmp.replace(path)
        except OSError as exc:
            raise DataIOError(f"cannot write manifest {path}: {exc}") from exc
        self.root = path.parent
        return path

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataIOError(f"cannot read manifest {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed manifest {path}: {exc}") from exc
        if raw.get("version") != MANIFEST_VERSION:
            raise ValidationError(f"unsupported manifest version {raw.get('version')!r}")
        manifest = cls(
            subjects=[Subject.from_json(s) for s in raw.get("subjects", [])],
            root=path.parent,
        )
        manifest.validate()
        return manifest


def manifest_sha256(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise DataIOError(f"cannot hash manifest {path}: {exc}") from exc
