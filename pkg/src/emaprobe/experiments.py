"""Experiment orchestration over the probe pipeline.

One "cell" fits and scores a single probe. Everything else here wires
cells into the standard studies: layer sweeps, training-budget ablations,
a shared model pooled across subjects, and leave-one-subject-out folds.

Cells are independent; a bounded thread pool may run them in any order,
and results land in the store in submission order so reruns with any
worker count produce byte-identical stores.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataIOError, EngineError, ValidationError
from .grid import CellKey, CellResult, ExperimentConfig, GridStore
from .manifest import TEST, TRAIN, DatasetManifest, Subject
from .preprocess import (
    ALL_DATA,
    DesignMatrices,
    Normalizer,
    UtterancePair,
    assemble_design,
    fit_normalizer,
    load_utterance_pair,
    make_splits,
    subset_by_duration,
)
from .probe import ChannelScores, LinearProbe, fit_ols, score_probe
from .scoring import ArticulatoryScore, LayerProfile, articulatory_score
from .tensor_io import load_tensor


@dataclass
class CellFailure:
    """A cell that could not run; other cells are unaffected."""

    key: CellKey
    error: str
    category: str  # "validation" or "io"


@dataclass
class AblationResult:
    """Training-budget grid slice with per-seed means already taken."""

    subjects: list[str]
    budgets: list[float]
    seeds: list[int]
    scores: dict[str, dict[float | None, float]]  # subject -> budget -> mean over seeds
    results: list[CellResult] = field(default_factory=list)
    failures: list[CellFailure] = field(default_factory=list)


@dataclass
class SharedModelResult:
    """One probe fit on pooled training data, scored per subject and pooled."""

    per_subject: dict[str, ChannelScores]
    pooled: ChannelScores
    probe: LinearProbe


@dataclass
class LosoResult:
    """Per-held-out-subject scores for leave-one-subject-out folds."""

    per_subject: dict[str, ChannelScores]
    mean: float


def cell_scores(result: CellResult) -> ChannelScores:
    """Rehydrate stored per-channel scores for aggregation."""
    r = np.array([np.nan if v is None else v for v in result.r], dtype=np.float64)
    return ChannelScores(
        r=r,
        valid=np.asarray(result.valid, dtype=bool),
        n_test=result.n_test_frames,
        channels=list(result.channels),
    )


def aggregate_cells(results: list[CellResult]) -> ArticulatoryScore:
    """Articulatory score over one cell per subject."""
    by_subject: dict[str, ChannelScores] = {}
    for res in results:
        if res.key.subject in by_subject:
            raise ValidationError(f"two cells for subject {res.key.subject}")
        by_subject[res.key.subject] = cell_scores(res)
    return articulatory_score(by_subject)


def combined_profile(profiles: dict[str, LayerProfile], name: str = "") -> LayerProfile:
    """Unweighted subject mean per layer, keeping the per-subject detail."""
    if not profiles:
        raise ValidationError("no profiles to combine")
    lengths = {len(p) for p in profiles.values()}
    if len(lengths) != 1:
        raise ValidationError(f"profiles have unequal layer counts: {sorted(lengths)}")
    n_layers = lengths.pop()
    scores = [
        math.fsum(p.scores[i] for p in profiles.values()) / len(profiles)
        for i in range(n_layers)
    ]
    return LayerProfile(
        scores=scores,
        name=name,
        per_subject={s: list(p.scores) for s, p in profiles.items()},
    )


def per_articulator_table(results: list[CellResult]) -> dict[str, list[float | None]]:
    """Pivot one subject's layer sweep into channel-major score series.

    A pure reshape: series values are exactly the stored per-channel
    correlations, None where a channel was invalid in that cell.
    """
    if not results:
        raise ValidationError("empty grid slice")
    subjects = {res.key.subject for res in results}
    if len(subjects) > 1:
        raise ValidationError(
            f"per-articulator pivot needs a single subject, got {sorted(subjects)}"
        )
    by_layer: dict[int, CellResult] = {}
    for res in results:
        if res.key.layer in by_layer:
            raise ValidationError(f"duplicate cell for layer {res.key.layer}")
        by_layer[res.key.layer] = res
    layers = sorted(by_layer)
    channels = by_layer[layers[0]].channels
    for layer in layers:
        if by_layer[layer].channels != channels:
            raise ValidationError(f"layer {layer} has a different channel set")
    return {
        name: [by_layer[layer].r[c] for layer in layers]
        for c, name in enumerate(channels)
    }


def _filter_results(
    results: list[CellResult], representation: str | None, layer: int | None
) -> list[CellResult]:
    out = [
        res
        for res in results
        if (representation is None or res.key.representation == representation)
        and (layer is None or res.key.layer == layer)
    ]
    if not out:
        raise ValidationError("no grid cells match the requested slice")
    return out


def ablation_from_results(
    results: list[CellResult],
    representation: str | None = None,
    layer: int | None = None,
) -> AblationResult:
    """Rebuild a budget-ablation slice from stored cells (mean over seeds)."""
    results = _filter_results(results, representation, layer)
    layers = {res.key.layer for res in results}
    if len(layers) > 1:
        raise ValidationError(f"slice spans several layers {sorted(layers)}; pick one")
    cells: dict[tuple[str, float | None], list[float]] = {}
    seeds = set()
    for res in results:
        cells.setdefault((res.key.subject, res.key.budget_seconds), []).append(res.mean_r)
        seeds.add(res.key.seed)
    subjects = sorted({s for s, _ in cells})
    budgets = sorted({b for _, b in cells if b is not None})
    scores: dict[str, dict[float | None, float]] = {}
    for s in subjects:
        row = {}
        for b in budgets + [None]:
            vals = cells.get((s, b))
            if vals:
                row[b] = math.fsum(vals) / len(vals)
        scores[s] = row
    return AblationResult(
        subjects=subjects,
        budgets=budgets,
        seeds=sorted(seeds),
        scores=scores,
        results=results,
    )


def profiles_from_results(
    results: list[CellResult], representation: str | None = None
) -> dict[str, LayerProfile]:
    """Rebuild per-subject layer profiles from stored full-budget cells."""
    results = [
        res
        for res in _filter_results(results, representation, None)
        if res.key.budget_seconds is None
    ]
    if not results:
        raise ValidationError("no full-budget cells in the slice")
    per: dict[str, dict[int, list[float]]] = {}
    for res in results:
        per.setdefault(res.key.subject, {}).setdefault(res.key.layer, []).append(res.mean_r)
    layers = sorted({layer for by_layer in per.values() for layer in by_layer})
    profiles = {}
    for subject in sorted(per):
        gaps = [layer for layer in layers if layer not in per[subject]]
        if gaps:
            raise ValidationError(f"subject {subject} is missing layers {gaps}")
        profiles[subject] = LayerProfile(
            scores=[
                math.fsum(per[subject][layer]) / len(per[subject][layer]) for layer in layers
            ],
            name=subject,
        )
    return profiles


class Runner:
    """Executes experiment cells against one manifest and configuration."""

    def __init__(self, manifest: DatasetManifest, config: ExperimentConfig):
        config.validate()
        self.manifest = manifest
        self.config = config
        self._meta_cache: dict[str, tuple[float, list[str]]] = {}
        make_splits(manifest, config.split_policy, config.split_seed)

    def _subject_meta(self, subject: Subject) -> tuple[float, list[str]]:
        """EMA rate and channel names, read once from the first utterance."""
        if subject.id not in self._meta_cache:
            first = subject.active()[0]
            series = load_tensor(self.manifest.resolve(first.ema))
            self._meta_cache[subject.id] = (series.rate_hz, list(series.channels))
        return self._meta_cache[subject.id]

    def _pairs(self, subject: Subject, utterances, layer: int) -> list[UtterancePair]:
        return [
            load_utterance_pair(
                utt,
                subject.id,
                self.config.representation,
                layer,
                self.manifest,
                self.config.frame_tolerance,
            )
            for utt in utterances
        ]

    def _normalizers(
        self, train_pairs: list[UtterancePair], test_pairs: list[UtterancePair]
    ) -> tuple[Normalizer, Normalizer | None]:
        scoped = train_pairs + test_pairs if self.config.norm_scope == ALL_DATA else train_pairs
        ema_norm = fit_normalizer([p.ema for p in scoped], self.config.norm_scope)
        feat_norm = None
        if self.config.normalize_features:
            feat_norm = fit_normalizer([p.features for p in scoped], self.config.norm_scope)
        return ema_norm, feat_norm

    def _subject_designs(
        self, subject_id: str, layer: int, budget: float | None, subset_seed: int
    ) -> tuple[DesignMatrices, DesignMatrices]:
        subject = self.manifest.subject(subject_id)
        train_utts = subject.split_utterances(TRAIN)
        test_utts = subject.split_utterances(TEST)
        if not train_utts or not test_utts:
            raise ValidationError(f"subject {subject_id} has no split assignments")
        if budget is not None:
            train_utts = subset_by_duration(train_utts, budget, subset_seed)
        train_pairs = self._pairs(subject, train_utts, layer)
        test_pairs = self._pairs(subject, test_utts, layer)
        ema_norm, feat_norm = self._normalizers(train_pairs, test_pairs)
        train = assemble_design(train_pairs, ema_norm, feat_norm)
        test = assemble_design(test_pairs, ema_norm, feat_norm)
        return train, test

    def _train_seconds(self, design: DesignMatrices, rate_hz: float) -> float:
        return design.n_frames / rate_hz

    def run_probe_cell(self, key: CellKey) -> CellResult:
        """Fit one probe and score it on the subject's fixed test split."""
        subject = self.manifest.subject(key.subject)
        train, test = self._subject_designs(
            key.subject, key.layer, key.budget_seconds, key.subset_seed()
        )
        rate, channels = self._subject_meta(subject)
        train_seconds = self._train_seconds(train, rate)
        probe = fit_ols(train.x, train.y, self.config.rtol, train_seconds)
        scores = score_probe(
            probe,
            test.x,
            test.y,
            mode=self.config.scoring,
            spans=test.spans,
            channels=channels,
            strict=self.config.strict,
        )
        return CellResult(
            key=key,
            channels=scores.channels,
            r=[float(v) if ok else None for v, ok in zip(scores.r, scores.valid)],
            valid=[bool(b) for b in scores.valid],
            n_train_frames=train.n_frames,
            n_test_frames=scores.n_test,
            train_seconds=train_seconds,
            mean_r=scores.mean_r(),
        )

    def run_grid(
        self,
        cells: list[CellKey],
        store: GridStore | None = None,
        jobs: int = 1,
    ) -> tuple[list[CellResult], list[CellFailure]]:
        """Run cells not already in the store; append in submission order.

        A failing cell becomes a CellFailure and never blocks the rest.
        """
        resolved: dict[CellKey, CellResult] = {}
        if store is not None:
            for key in cells:
                if key in store:
                    resolved[key] = store.get(key)
        pending = [k for k in cells if k not in resolved]
        failures: list[CellFailure] = []

        def work(key: CellKey) -> CellResult | CellFailure:
            try:
                return self.run_probe_cell(key)
            except EngineError as exc:
                category = "io" if isinstance(exc, DataIOError) else "validation"
                return CellFailure(key=key, error=str(exc), category=category)

        def consume(outcome: CellResult | CellFailure) -> None:
            if isinstance(outcome, CellFailure):
                failures.append(outcome)
                return
            if store is not None:
                store.append(outcome)
            resolved[outcome.key] = outcome

        if jobs <= 1:
            for key in pending:
                consume(work(key))
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                # map() yields in submission order, so store rows are
                # appended deterministically no matter which worker
                # finishes first.
                for outcome in pool.map(work, pending):
                    consume(outcome)
        results = [resolved[k] for k in cells if k in resolved]
        return results, failures

    def _grid_or_raise(
        self, cells: list[CellKey], store: GridStore | None, jobs: int, what: str
    ) -> list[CellResult]:
        results, failures = self.run_grid(cells, store, jobs)
        if failures:
            detail = "; ".join(f"{f.key.subject}/L{f.key.layer}: {f.error}" for f in failures)
            raise ValidationError(f"{what} failed for {len(failures)} cell(s): {detail}")
        return results

    def run_layer_sweep(
        self,
        subjects: list[str] | None = None,
        layers: list[int] | None = None,
        store: GridStore | None = None,
        jobs: int = 1,
    ) -> dict[str, LayerProfile]:
        """One cell per (subject, layer) on the full train split."""
        subjects = subjects or self.manifest.subject_ids()
        layers = layers if layers is not None else self.config.layers
        self._check_layer_coverage(subjects, layers)
        seed = self.config.seeds[0]
        cells = [
            CellKey(s, self.config.representation, layer, None, seed)
            for s in subjects
            for layer in layers
        ]
        results = self._grid_or_raise(cells, store, jobs, "layer sweep")
        by_key = {res.key: res for res in results}
        profiles = {}
        for s in subjects:
            scores = [
                by_key[CellKey(s, self.config.representation, layer, None, seed)].mean_r
                for layer in layers
            ]
            profiles[s] = LayerProfile(scores=scores, name=f"{self.config.representation}:{s}")
        return profiles

    def _check_layer_coverage(self, subjects: list[str], layers: list[int]) -> None:
        gaps = []
        for s in subjects:
            subject = self.manifest.subject(s)
            for layer in layers:
                missing = [
                    u.id
                    for u in subject.active()
                    if u.feature_path(self.config.representation, layer) is None
                ]
                if missing:
                    gaps.append(f"{s}/L{layer}: {len(missing)} utterances (e.g. {missing[0]})")
        if gaps:
            raise ValidationError(
                f"missing {self.config.representation} tensors: " + "; ".join(gaps)
            )

    def run_trainsize_ablation(
        self,
        subjects: list[str] | None = None,
        layer: int | None = None,
        budgets: list[float] | None = None,
        seeds: list[int] | None = None,
        store: GridStore | None = None,
        jobs: int = 1,
    ) -> AblationResult:
        """Budget x seed grid per subject, plus a full-data reference cell.

        Per-budget scores are means over seeds. A budget too large for a
        subject fails that cell alone; the rest of the grid still runs.
        """
        subjects = subjects or self.manifest.subject_ids()
        layer = layer if layer is not None else self.config.layers[0]
        budgets = budgets if budgets is not None else [b for b in self.config.budgets if b]
        seeds = seeds or self.config.seeds
        if not budgets:
            raise ValidationError("ablation needs at least one budget")
        if any(b <= 0 for b in budgets) or budgets != sorted(budgets):
            raise ValidationError(f"budgets must be positive and ascending: {budgets}")
        cells = [
            CellKey(s, self.config.representation, layer, float(b), seed)
            for s in subjects
            for b in budgets
            for seed in seeds
        ]
        cells += [CellKey(s, self.config.representation, layer, None, seeds[0]) for s in subjects]
        results, failures = self.run_grid(cells, store, jobs)
        by_key = {res.key: res for res in results}
        scores: dict[str, dict[float | None, float]] = {}
        for s in subjects:
            row: dict[float | None, float] = {}
            for b in budgets:
                vals = [
                    by_key[k].mean_r
                    for seed in seeds
                    if (k := CellKey(s, self.config.representation, layer, float(b), seed))
                    in by_key
                ]
                if vals:
                    row[float(b)] = math.fsum(vals) / len(vals)
            full_key = CellKey(s, self.config.representation, layer, None, seeds[0])
            if full_key in by_key:
                row[None] = by_key[full_key].mean_r
            scores[s] = row
        return AblationResult(
            subjects=list(subjects),
            budgets=[float(b) for b in budgets],
            seeds=list(seeds),
            scores=scores,
            results=results,
            failures=failures,
        )

    def run_shared_model(
        self,
        subjects: list[str] | None = None,
        layer: int | None = None,
    ) -> SharedModelResult:
        """Fit one probe on all subjects' train frames pooled together.

        Normalizers stay per subject (sensor placement differs), so pooling
        happens in each subject's own normalized coordinates.
        """
        subjects = subjects or self.manifest.subject_ids()
        layer = layer if layer is not None else self.config.layers[0]
        trains, tests = {}, {}
        for s in subjects:
            trains[s], tests[s] = self._subject_designs(s, layer, None, 0)
        dims = {s: d.x.shape[1] for s, d in trains.items()}
        if len(set(dims.values())) > 1:
            raise ValidationError(f"feature dimension differs across subjects: {dims}")
        x = np.concatenate([trains[s].x for s in subjects], axis=0)
        y = np.concatenate([trains[s].y for s in subjects], axis=0)
        rate, channels = self._subject_meta(self.manifest.subject(subjects[0]))
        probe = fit_ols(x, y, self.config.rtol, x.shape[0] / rate)
        per_subject = {
            s: score_probe(
                probe,
                tests[s].x,
                tests[s].y,
                mode=self.config.scoring,
                spans=tests[s].spans,
                channels=channels,
                strict=self.config.strict,
            )
            for s in subjects
        }
        pooled_x = np.concatenate([tests[s].x for s in subjects], axis=0)
        pooled_y = np.concatenate([tests[s].y for s in subjects], axis=0)
        pooled_spans = []
        offset = 0
        for s in subjects:
            for utt_id, start, stop in tests[s].spans:
                pooled_spans.append((f"{s}/{utt_id}", start + offset, stop + offset))
            offset += tests[s].n_frames
        pooled = score_probe(
            probe,
            pooled_x,
            pooled_y,
            mode=self.config.scoring,
            spans=pooled_spans,
            channels=channels,
            strict=self.config.strict,
        )
        return SharedModelResult(per_subject=per_subject, pooled=pooled, probe=probe)

    def run_loso(
        self,
        subjects: list[str] | None = None,
        layer: int | None = None,
    ) -> LosoResult:
        """Leave-one-subject-out: fit on the others, score the held-out one."""
        subjects = subjects or self.manifest.subject_ids()
        layer = layer if layer is not None else self.config.layers[0]
        if len(subjects) < 2:
            raise ValidationError("leave-one-subject-out needs at least 2 subjects")
        trains, tests = {}, {}
        for s in subjects:
            trains[s], tests[s] = self._subject_designs(s, layer, None, 0)
        dims = {s: d.x.shape[1] for s, d in trains.items()}
        if len(set(dims.values())) > 1:
            raise ValidationError(f"feature dimension differs across subjects: {dims}")
        rate, channels = self._subject_meta(self.manifest.subject(subjects[0]))
        per_subject = {}
        for held_out in subjects:
            rest = [s for s in subjects if s != held_out]
            x = np.concatenate([trains[s].x for s in rest], axis=0)
            y = np.concatenate([trains[s].y for s in rest], axis=0)
            probe = fit_ols(x, y, self.config.rtol, x.shape[0] / rate)
            per_subject[held_out] = score_probe(
                probe,
                tests[held_out].x,
                tests[held_out].y,
                mode=self.config.scoring,
                spans=tests[held_out].spans,
                channels=channels,
                strict=self.config.strict,
            )
        mean = math.fsum(sc.mean_r() for sc in per_subject.values()) / len(per_subject)
        return LosoResult(per_subject=per_subject, mean=mean)
