"""Result store: provenance, resume safety, canonical hashing."""

import json

import numpy as np
import pytest

from emaprobe.errors import DataIOError, ValidationError
from emaprobe.grid import CellKey, CellResult, ExperimentConfig, GridStore


def config(**over):
    base = dict(manifest_path="world/manifest.json", representation="synth",
                layers=[0, 1], seeds=[0, 1])
    base.update(over)
    return ExperimentConfig(**base)


def key(**over):
    base = dict(subject="S1", representation="synth", layer=0,
                budget_seconds=None, seed=0)
    base.update(over)
    return CellKey(**base)


def result(k=None, **over):
    k = k or key()
    base = dict(
        key=k,
        channels=["a", "b"],
        r=[0.5, None],
        valid=[True, False],
        n_train_frames=100,
        n_test_frames=40,
        train_seconds=2.0,
        mean_r=0.5,
    )
    base.update(over)
    return CellResult(**base)


class TestConfig:
    def test_hash_stable_across_field_order(self):
        a = ExperimentConfig(manifest_path="m.json", representation="synth",
                             layers=[0], seeds=[0])
        b = ExperimentConfig(representation="synth", manifest_path="m.json",
                             seeds=[0], layers=[0])
        assert a.config_hash() == b.config_hash()

    def test_hash_sensitive_to_values(self):
        assert config().config_hash() != config(seeds=[0, 2]).config_hash()

    def test_canonical_json_is_sorted_and_stable(self):
        text = config().canonical_json()
        parsed = json.loads(text)
        assert list(parsed) == sorted(parsed)
        assert config().canonical_json() == text

    def test_validate_rejects_bad_budgets(self):
        with pytest.raises(ValidationError):
            config(budgets=[-5.0]).validate()
        with pytest.raises(ValidationError):
            config(budgets=[300.0, 60.0]).validate()

    def test_validate_rejects_duplicate_layers(self):
        with pytest.raises(ValidationError):
            config(layers=[0, 0]).validate()

    def test_validate_accepts_defaults(self):
        config().validate()


class TestCellKey:
    def test_subset_seed_shared_across_layers(self):
        a = key(layer=0, budget_seconds=300.0).subset_seed()
        b = key(layer=9, budget_seconds=300.0).subset_seed()
        assert a == b

    def test_subset_seed_varies_with_budget_seed_subject(self):
        base = key(budget_seconds=300.0).subset_seed()
        assert key(budget_seconds=600.0).subset_seed() != base
        assert key(budget_seconds=300.0, seed=1).subset_seed() != base
        assert key(budget_seconds=300.0, subject="S2").subset_seed() != base

    def test_key_is_hashable_and_frozen(self):
        k = key()
        assert k in {k}
        with pytest.raises(AttributeError):
            k.layer = 3


class TestCellResult:
    def test_record_roundtrip(self):
        r = result()
        back = CellResult.from_record(r.to_record())
        assert back == r

    def test_none_preserved_in_record(self):
        rec = result().to_record()
        assert rec["r"][1] is None
        assert CellResult.from_record(rec).r[1] is None


class TestGridStore:
    def test_create_append_reload(self, tmp_path):
        path = tmp_path / "grid.jsonl"
        store = GridStore.open(path, config(), manifest_sha256="abc")
        store.append(result())
        store.append(result(key(layer=1)))
        again = GridStore.load(path)
        assert len(again) == 2
        assert again.get(key(layer=1)) == result(key(layer=1))
        assert key() in again
        assert key(seed=99) not in again

    def test_provenance_first_line(self, tmp_path):
        path = tmp_path / "grid.jsonl"
        GridStore.open(path, config(), manifest_sha256="abc")
        first = json.loads(path.read_text().splitlines()[0])
        assert first["record"] == "provenance"
        assert first["config_hash"] == config().config_hash()
        assert first["manifest_sha256"] == "abc"

    def test_reopen_skips_existing(self, tmp_path):
        path = tmp_path / "grid.jsonl"
        store = GridStore.open(path, config(), manifest_sha256="abc")
        store.append(result())
        reopened = GridStore.open(path, config(), manifest_sha256="abc")
        assert len(reopened) == 1
        assert key() in reopened

    def test_reopen_with_other_config_rejected(self, tmp_path):
        path = tmp_path / "grid.jsonl"
        GridStore.open(path, config(), manifest_sha256="abc")
        with pytest.raises(ValidationError, match="config"):
            GridStore.open(path, config(seeds=[5]), manifest_sha256="abc")

    def test_reopen_with_other_manifest_rejected(self, tmp_path):
        path = tmp_path / "grid.jsonl"
        GridStore.open(path, config(), manifest_sha256="abc")
        with pytest.raises(ValidationError, match="manifest"):
            GridStore.open(path, config(), manifest_sha256="def")

    def test_duplicate_append_rejected(self, tmp_path):
        store = GridStore.open(tmp_path / "g.jsonl", config(), manifest_sha256="x")
        store.append(result())
        with pytest.raises(ValidationError, match="duplicate"):
            store.append(result())

    def test_append_is_durable_per_line(self, tmp_path):
        path = tmp_path / "g.jsonl"
        store = GridStore.open(path, config(), manifest_sha256="x")
        store.append(result())
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[1])["record"] == "cell"

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            GridStore.load(tmp_path / "absent.jsonl")

    def test_load_corrupt_provenance(self, tmp_path):
        path = tmp_path / "g.jsonl"
        path.write_text('{"record": "cell"}\n')
        with pytest.raises(DataIOError, match="provenance"):
            GridStore.load(path)

    def test_nan_never_written(self, tmp_path):
        store = GridStore.open(tmp_path / "g.jsonl", config(), manifest_sha256="x")
        bad = result()
        bad.r = [float("nan"), None]
        with pytest.raises(ValueError):
            store.append(bad)

    def test_byte_identical_for_same_results(self, tmp_path):
        results = [result(key(layer=l, seed=s)) for l in (0, 1) for s in (0, 1)]
        for name in ("a.jsonl", "b.jsonl"):
            store = GridStore.open(tmp_path / name, config(), manifest_sha256="x")
            for r in results:
                store.append(r)
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
