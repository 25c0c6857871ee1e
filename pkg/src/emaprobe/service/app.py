"""FastAPI application wrapping the probing engine.

Engine errors surface as JSON bodies with a category field ("validation"
or "io") so thin clients can map them to exit codes without parsing
messages.
"""

from __future__ import annotations

import math
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import __version__
from ..corpus import ingest_corpus
from ..errors import DataIOError, EngineError, ValidationError
from ..experiments import (
    Runner,
    ablation_from_results,
    combined_profile,
    profiles_from_results,
)
from ..grid import CellKey, CellResult, ExperimentConfig, GridStore
from ..manifest import DatasetManifest, manifest_sha256
from ..probe import ChannelScores
from ..report import emit_layer_series, emit_score_table, format_budget
from ..scoring import best_layer, find_score_peaks
from ..synth import expected_r, gen_world
from . import schemas


def _category(exc: EngineError) -> str:
    return "io" if isinstance(exc, DataIOError) else "validation"


def _config(params: schemas.EngineParams, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig(
        manifest_path=params.manifest,
        representation=params.representation,
        scoring=params.scoring,
        norm_scope=params.norm_scope,
        normalize_features=params.normalize_features,
        split_policy=params.split_policy,
        split_seed=params.split_seed,
        frame_tolerance=params.frame_tolerance,
        strict=params.strict,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def _runner(params: schemas.EngineParams, config: ExperimentConfig) -> Runner:
    manifest = DatasetManifest.load(params.manifest)
    return Runner(manifest, config)


def _open_store(path: str | None, config: ExperimentConfig) -> GridStore | None:
    if path is None:
        return None
    return GridStore.open(path, config, manifest_sha256(config.manifest_path))


def _cell_model(res: CellResult) -> schemas.CellModel:
    return schemas.CellModel(
        subject=res.key.subject,
        representation=res.key.representation,
        layer=res.key.layer,
        budget_seconds=res.key.budget_seconds,
        seed=res.key.seed,
        channels=res.channels,
        r=res.r,
        valid=res.valid,
        n_train_frames=res.n_train_frames,
        n_test_frames=res.n_test_frames,
        train_seconds=res.train_seconds,
        mean_r=res.mean_r,
    )


def _subject_score(scores: ChannelScores) -> schemas.SubjectScoreModel:
    return schemas.SubjectScoreModel(
        mean_r=scores.mean_r(),
        r=[float(v) if ok else None for v, ok in zip(scores.r, scores.valid)],
        valid=[bool(b) for b in scores.valid],
        n_test=scores.n_test,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="articulatory probing engine", version=__version__)

    @app.exception_handler(EngineError)
    async def engine_error(request: Request, exc: EngineError):
        return JSONResponse(
            status_code=400,
            content=schemas.ErrorBody(error=str(exc), category=_category(exc)).model_dump(),
        )

    @app.exception_handler(RequestValidationError)
    async def request_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content=schemas.ErrorBody(error=str(exc), category="validation").model_dump(),
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    async def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        world = gen_world(
            out_dir=req.out_dir,
            dim=req.dim,
            n_utts=req.n_utts,
            utt_seconds=req.utt_seconds,
            rate_hz=req.rate_hz,
            snr=req.snr,
            seed=req.seed,
            n_test_utts=req.n_test_utts,
            feature_noise_layers=tuple(req.feature_noise_layers),
            subjects=tuple(req.subjects),
            subject_mode=req.subject_mode,
        )
        return schemas.SynthResponse(
            manifest=str(world.manifest_path),
            subjects=[s.id for s in world.manifest.subjects],
            layers=world.layers,
            n_utts=req.n_utts,
            expected_r=None if world.snr is None else expected_r(world.snr),
        )

    @app.post("/ingest", response_model=schemas.IngestResponse)
    def ingest(req: schemas.IngestRequest):
        report = ingest_corpus(
            root=req.root,
            corpus=req.corpus,
            out_dir=req.out_dir,
            mapping_path=req.mapping,
            target_hz=req.target_hz,
            max_gap_frames=req.max_gap_frames,
            split_policy=req.split_policy,
            split_seed=req.split_seed,
        )
        return schemas.IngestResponse(
            manifest=str(report.manifest_path),
            subjects=report.subjects,
            n_utterances=report.n_utterances,
            n_rejected=report.n_rejected,
            rejected=[list(item) for item in report.rejected],
        )

    @app.post("/probe", response_model=schemas.ProbeResponse)
    def probe(req: schemas.ProbeRequest):
        config = _config(
            req,
            layers=[req.layer],
            budgets=[req.budget_seconds],
            seeds=[req.seed],
        )
        runner = _runner(req, config)
        store = _open_store(req.store, config)
        key = CellKey(req.subject, req.representation, req.layer, req.budget_seconds, req.seed)
        if store is not None and key in store:
            return schemas.ProbeResponse(cell=_cell_model(store.get(key)), store=req.store)
        result = runner.run_probe_cell(key)
        if store is not None:
            store.append(result)
        return schemas.ProbeResponse(cell=_cell_model(result), store=req.store)

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        config = _config(req, layers=list(req.layers), seeds=[req.seed])
        runner = _runner(req, config)
        store = _open_store(req.store, config)
        profiles = runner.run_layer_sweep(req.subjects, req.layers, store, req.jobs)
        combined = combined_profile(profiles, name=req.representation)
        peaks = find_score_peaks(combined) if len(combined) >= 3 else []
        best_idx, best_score = best_layer(combined)
        return schemas.SweepResponse(
            layers=list(req.layers),
            profiles={s: p.scores for s, p in profiles.items()},
            combined=combined.scores,
            peaks=peaks,
            best_layer=best_idx,
            best_score=best_score,
            store=req.store,
        )

    @app.post("/ablate", response_model=schemas.AblateResponse)
    def ablate(req: schemas.AblateRequest):
        config = _config(
            req,
            layers=[req.layer],
            budgets=sorted(req.budgets),
            seeds=list(req.seeds),
        )
        runner = _runner(req, config)
        store = _open_store(req.store, config)
        result = runner.run_trainsize_ablation(
            req.subjects, req.layer, sorted(req.budgets), req.seeds, store, req.jobs
        )
        scores = {
            s: {format_budget(b): v for b, v in row.items()}
            for s, row in result.scores.items()
        }
        labels = [format_budget(b) for b in result.budgets] + [format_budget(None)]
        average = {}
        for label in labels:
            vals = [scores[s][label] for s in result.subjects if label in scores[s]]
            if len(vals) == len(result.subjects):
                average[label] = math.fsum(vals) / len(vals)
        failures = [
            schemas.FailureModel(
                subject=f.key.subject,
                layer=f.key.layer,
                budget_seconds=f.key.budget_seconds,
                seed=f.key.seed,
                error=f.error,
                category=f.category,
            )
            for f in result.failures
        ]
        return schemas.AblateResponse(
            subjects=result.subjects,
            budgets=result.budgets,
            seeds=result.seeds,
            scores=scores,
            average=average,
            failures=failures,
            store=req.store,
        )

    @app.post("/shared", response_model=schemas.SharedResponse)
    def shared(req: schemas.SharedRequest):
        config = _config(req, layers=[req.layer], scheme="shared")
        runner = _runner(req, config)
        result = runner.run_shared_model(req.subjects, req.layer)
        per_subject = {s: _subject_score(sc) for s, sc in result.per_subject.items()}
        overall = math.fsum(m.mean_r for m in per_subject.values()) / len(per_subject)
        return schemas.SharedResponse(
            channels=result.pooled.channels,
            per_subject=per_subject,
            pooled=_subject_score(result.pooled),
            overall=overall,
        )

    @app.post("/loso", response_model=schemas.LosoResponse)
    def loso(req: schemas.LosoRequest):
        config = _config(req, layers=[req.layer], scheme="loso")
        runner = _runner(req, config)
        result = runner.run_loso(req.subjects, req.layer)
        first = next(iter(result.per_subject.values()))
        return schemas.LosoResponse(
            channels=first.channels,
            per_subject={s: _subject_score(sc) for s, sc in result.per_subject.items()},
            mean=result.mean,
        )

    @app.post("/report", response_model=schemas.ReportResponse)
    def report(req: schemas.ReportRequest):
        store = GridStore.load(req.store)
        results = store.results()
        out = Path(req.out)
        if req.kind == "table":
            slice_ = ablation_from_results(results, req.representation, req.layer)
            emit_score_table(slice_, out, req.format)
        elif req.kind == "layers":
            profiles = profiles_from_results(results, req.representation)
            emit_layer_series(profiles, out)
        else:
            raise ValidationError(f"unknown report kind {req.kind!r}")
        return schemas.ReportResponse(out=str(out), kind=req.kind)

    return app
