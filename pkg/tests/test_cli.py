"""CLI: argument parsing, exit codes, end-to-end subcommand flows."""

import argparse
import json

import pytest

from emaprobe.cli import (
    main,
    parse_budget,
    parse_budget_list,
    parse_layers,
    parse_snr,
)
from emaprobe.synth import gen_world


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliworld")
    return gen_world(root, dim=6, n_utts=8, utt_seconds=4.0, snr=3.0, seed=0,
                     feature_noise_layers=(1.0, 0.1, 0.5),
                     subjects=("S1", "S2"), subject_mode="iid")


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    body = json.loads(captured.out) if captured.out.strip() else None
    return code, body, captured.err


def probe_args(world, *extra):
    return ("probe", "--manifest", str(world.manifest_path),
            "--representation", "synth", "--subject", "S1", *extra)


class TestParsers:
    def test_budget_grammar(self):
        assert parse_budget("20s") == 20.0
        assert parse_budget("5m") == 300.0
        assert parse_budget("300") == 300.0
        assert parse_budget("1.5m") == 90.0
        assert parse_budget_list("20s,30s,1m") == [20.0, 30.0, 60.0]

    def test_budget_rejects_garbage(self):
        for bad in ("abc", "-20s", "0", "5h"):
            with pytest.raises(argparse.ArgumentTypeError):
                parse_budget(bad)

    def test_layer_grammar(self):
        assert parse_layers("0-12") == list(range(13))
        assert parse_layers("0,4,8") == [0, 4, 8]
        assert parse_layers("0-2,9") == [0, 1, 2, 9]
        with pytest.raises(argparse.ArgumentTypeError):
            parse_layers("x-y")

    def test_snr_grammar(self):
        assert parse_snr("3.0") == 3.0
        assert parse_snr("inf") is None
        assert parse_snr("noiseless") is None
        with pytest.raises(argparse.ArgumentTypeError):
            parse_snr("loud")


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 1

    def test_unknown_subcommand(self, capsys):
        assert main(["transmogrify"]) == 1

    def test_bad_flag_value(self, capsys, world):
        assert main(list(probe_args(world, "--budget", "nope"))) == 1

    def test_missing_required_flag(self, capsys):
        assert main(["probe", "--subject", "S1"]) == 1

    def test_validation_error_is_1(self, capsys, world):
        code, _, err = run(capsys, *probe_args(world)[:-1], "S99")
        assert code == 1
        assert "error (validation)" in err

    def test_io_error_is_2(self, capsys, tmp_path):
        code, _, err = run(capsys, "probe", "--manifest", str(tmp_path / "no.json"),
                           "--representation", "synth", "--subject", "S1")
        assert code == 2
        assert "error (io)" in err

    def test_success_is_0(self, capsys, world):
        code, body, _ = run(capsys, *probe_args(world))
        assert code == 0
        assert body["cell"]["subject"] == "S1"


class TestFlows:
    def test_synth_flow(self, capsys, tmp_path):
        code, body, _ = run(capsys, "synth", "--out-dir", str(tmp_path / "w"),
                            "--dim", "4", "--n-utts", "5", "--utt-seconds", "2",
                            "--snr", "3")
        assert code == 0
        assert body["expected_r"] == pytest.approx(0.8660254, abs=1e-6)
        code, body, _ = run(capsys, "probe", "--manifest", body["manifest"],
                            "--representation", "synth", "--subject", "S1")
        assert code == 0
        assert 0.5 < body["cell"]["mean_r"] < 1.0

    def test_probe_budget_suffix(self, capsys, world):
        code, body, _ = run(capsys, *probe_args(world, "--layer", "1",
                                                "--budget", "10s"))
        assert code == 0
        assert body["cell"]["budget_seconds"] == 10.0
        # 4 s utterances: the subset stops once the total reaches 10 s,
        # so three whole utterances (12 s) get used.
        assert body["cell"]["train_seconds"] == pytest.approx(12.0)

    def test_sweep_and_report(self, capsys, world, tmp_path):
        store = str(tmp_path / "sweep.jsonl")
        code, body, _ = run(capsys, "sweep", "--manifest", str(world.manifest_path),
                            "--representation", "synth", "--layers", "0-2",
                            "--store", store)
        assert code == 0
        assert body["best_layer"] == 1
        out = tmp_path / "layers.json"
        code, body, _ = run(capsys, "report", "--store", store, "--kind", "layers",
                            "--out", str(out))
        assert code == 0
        assert json.loads(out.read_text())["kind"] == "layer-series"

    def test_ablate_flow(self, capsys, world):
        code, body, _ = run(capsys, "ablate", "--manifest", str(world.manifest_path),
                            "--representation", "synth", "--layer", "1",
                            "--subjects", "S1", "--budgets", "10s,20s",
                            "--seeds", "0,1")
        assert code == 0
        assert set(body["scores"]["S1"]) == {"10s", "20s", "full"}

    def test_loso_flow(self, capsys, world):
        code, body, _ = run(capsys, "loso", "--manifest", str(world.manifest_path),
                            "--representation", "synth", "--layer", "1")
        assert code == 0
        assert set(body["per_subject"]) == {"S1", "S2"}


class TestConfigFile:
    def test_config_overrides_flags(self, capsys, world, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"layer": 1, "budget": 10.0}))
        code, body, _ = run(capsys, *probe_args(world, "--layer", "0",
                                                "--config", str(cfg)))
        assert code == 0
        assert body["cell"]["layer"] == 1
        assert body["cell"]["budget_seconds"] == 10.0

    def test_unknown_config_key(self, capsys, world, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"warp_factor": 9}))
        code, _, err = run(capsys, *probe_args(world, "--config", str(cfg)))
        assert code == 1
        assert "warp_factor" in err

    def test_config_must_be_object(self, capsys, world, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1, 2]")
        assert main(list(probe_args(world, "--config", str(cfg)))) == 1

    def test_missing_config_is_io(self, capsys, world, tmp_path):
        code, _, err = run(capsys, *probe_args(world, "--config",
                                               str(tmp_path / "absent.json")))
        assert code == 2


class TestDataRoot:
    def test_relative_manifest_resolved_against_env(self, capsys, world, monkeypatch):
        monkeypatch.setenv("EMAPROBE_DATA_ROOT", str(world.root.parent))
        code, body, _ = run(capsys, "probe", "--manifest",
                            f"{world.root.name}/manifest.json",
                            "--representation", "synth", "--subject", "S1")
        assert code == 0
        assert body["cell"]["subject"] == "S1"

    def test_absolute_path_wins(self, capsys, world, monkeypatch):
        monkeypatch.setenv("EMAPROBE_DATA_ROOT", "/nonexistent")
        assert main(list(probe_args(world))) == 0
        capsys.readouterr()
