"""Request and response bodies for the probing service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    error: str
    category: str  # "validation" or "io"


class HealthResponse(BaseModel):
    status: str
    version: str


class EngineParams(BaseModel):
    """Options shared by every probing endpoint."""

    manifest: str
    representation: str
    scoring: str = "pooled"
    norm_scope: str = "train-only"
    normalize_features: bool = False
    split_policy: str = "tail"
    split_seed: int = 0
    frame_tolerance: int = 3
    strict: bool = False
    jobs: int = Field(default=1, ge=1)


class CellModel(BaseModel):
    subject: str
    representation: str
    layer: int
    budget_seconds: float | None
    seed: int
    channels: list[str]
    r: list[float | None]
    valid: list[bool]
    n_train_frames: int
    n_test_frames: int
    train_seconds: float
    mean_r: float


class FailureModel(BaseModel):
    subject: str
    layer: int
    budget_seconds: float | None
    seed: int
    error: str
    category: str


class ProbeRequest(EngineParams):
    subject: str
    layer: int = 0
    budget_seconds: float | None = None
    seed: int = 0
    store: str | None = None


class ProbeResponse(BaseModel):
    cell: CellModel
    store: str | None = None


class SweepRequest(EngineParams):
    subjects: list[str] | None = None
    layers: list[int]
    seed: int = 0
    store: str | None = None


class SweepResponse(BaseModel):
    layers: list[int]
    profiles: dict[str, list[float]]
    combined: list[float]
    peaks: list[int]
    best_layer: int
    best_score: float
    store: str | None = None


class AblateRequest(EngineParams):
    subjects: list[str] | None = None
    layer: int = 0
    budgets: list[float]
    seeds: list[int] = Field(default_factory=lambda: [0])
    store: str | None = None


class AblateResponse(BaseModel):
    subjects: list[str]
    budgets: list[float]
    seeds: list[int]
    # subject -> budget label ("20s", "5m", "full") -> mean score over seeds
    scores: dict[str, dict[str, float]]
    average: dict[str, float]
    failures: list[FailureModel]
    store: str | None = None


class SubjectScoreModel(BaseModel):
    mean_r: float
    r: list[float | None]
    valid: list[bool]
    n_test: int


class SharedRequest(EngineParams):
    subjects: list[str] | None = None
    layer: int = 0


class SharedResponse(BaseModel):
    channels: list[str]
    per_subject: dict[str, SubjectScoreModel]
    pooled: SubjectScoreModel
    overall: float


class LosoRequest(EngineParams):
    subjects: list[str] | None = None
    layer: int = 0


class LosoResponse(BaseModel):
    channels: list[str]
    per_subject: dict[str, SubjectScoreModel]
    mean: float


class SynthRequest(BaseModel):
    out_dir: str
    dim: int = 32
    n_utts: int = 20
    utt_seconds: float = 10.0
    rate_hz: float = 50.0
    snr: float | None = None
    seed: int = 0
    n_test_utts: int | None = None
    feature_noise_layers: list[float] = Field(default_factory=lambda: [0.0])
    subjects: list[str] = Field(default_factory=lambda: ["S1"])
    subject_mode: str = "iid"


class SynthResponse(BaseModel):
    manifest: str
    subjects: list[str]
    layers: list[int]
    n_utts: int
    expected_r: float | None = None


class IngestRequest(BaseModel):
    root: str
    corpus: str
    out_dir: str
    mapping: str | None = None
    target_hz: float = 50.0
    max_gap_frames: int = 10
    split_policy: str = "tail"
    split_seed: int = 0


class IngestResponse(BaseModel):
    manifest: str
    subjects: list[str]
    n_utterances: int
    n_rejected: int
    rejected: list[list[str]]


class ReportRequest(BaseModel):
    store: str
    kind: str  # "table", "layers"
    out: str
    format: str = "csv"
    representation: str | None = None
    layer: int | None = None


class ReportResponse(BaseModel):
    out: str
    kind: str
