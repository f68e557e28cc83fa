import json

import pytest
from click.testing import CliRunner

from pairlat.cli import EXIT_CONFIG, EXIT_PHASE, cli
from pairlat.datasets.io import load_dataset
from pairlat.errors import ConfigError
from pairlat.experiment import compose_config, config_fingerprint


@pytest.fixture
def runner():
    return CliRunner()


def test_unknown_override_is_a_config_error(runner, tmp_path):
    result = runner.invoke(cli, ["gen", "--out", str(tmp_path), "--set", "nope=1"])
    assert result.exit_code == EXIT_CONFIG


def test_unknown_preset_is_a_config_error(runner, tmp_path):
    result = runner.invoke(cli, ["audit", "--out", str(tmp_path), "--preset", "bogus"])
    assert result.exit_code == EXIT_CONFIG


def test_failing_phase_exits_with_phase_status(runner, tmp_path):
    result = runner.invoke(cli, ["gen", "--out", str(tmp_path), "--set", "data.n_per_edge=-1"])
    assert result.exit_code == EXIT_PHASE


def test_report_on_empty_directory(runner, tmp_path):
    result = runner.invoke(cli, ["report", "--out", str(tmp_path), "--print-config"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "config_tree.log").is_file()

    report = json.loads((tmp_path / "report.json").read_text())
    assert "eval" in report["gaps"]
    record = json.loads((tmp_path / "run_record.json").read_text())
    assert "report" in record["phases"]


def test_fingerprint_follows_overrides():
    base = config_fingerprint(compose_config())
    assert config_fingerprint(compose_config()) == base
    assert config_fingerprint(compose_config(overrides=["stage1.lam=0.3"])) != base
    assert config_fingerprint(compose_config(seed=1)) != base


def test_presets_select_worlds():
    assert compose_config("fig2-dropedge").world.name == "fig2-dropedge"
    assert compose_config("chain5").world.name == "chain5"
    with pytest.raises(ConfigError):
        compose_config("fig3")


def test_command_line_beats_config_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("data:\n  n_per_edge: 300\nstage1:\n  epochs: 2\n")

    cfg = compose_config(overrides=["data.n_per_edge=200"], config_path=path)
    assert cfg.data.n_per_edge == 200
    assert cfg.stage1.epochs == 2

    path.write_text("stage1:\n  warmup: 5\n")
    with pytest.raises(ConfigError):
        compose_config(config_path=path)
    with pytest.raises(ConfigError):
        compose_config(config_path=tmp_path / "missing.yaml")


def _generate(runner, out):
    result = runner.invoke(cli, ["gen", "--out", str(out), "--set", "data.n_per_edge=200"])
    assert result.exit_code == 0, result.output
    return {p.relative_to(out): p.read_bytes() for p in sorted((out / "data").rglob("*.bin"))}


def test_gen_is_bit_reproducible(runner, tmp_path):
    first = _generate(runner, tmp_path / "a")
    second = _generate(runner, tmp_path / "b")

    assert len(first) == 9
    assert first == second

    artifact = json.loads((tmp_path / "a" / "gen.json").read_text())
    assert artifact["rows_per_edge"] == 200
    assert sorted(artifact["datasets"]) == ["1-2", "1-3", "2-3"]


def test_gen_regenerates_when_row_count_changes(runner, tmp_path):
    _generate(runner, tmp_path)
    result = runner.invoke(cli, ["gen", "--out", str(tmp_path), "--set", "data.n_per_edge=300"])
    assert result.exit_code == 0, result.output

    artifact = json.loads((tmp_path / "gen.json").read_text())
    assert artifact["rows_per_edge"] == 300
    for path in artifact["datasets"].values():
        assert len(load_dataset(path)) == 300


def test_audit_command(runner, tmp_path):
    settings = ["--set", "audit.n_points=2", "--set", "audit.n_probe=8"]
    result = runner.invoke(cli, ["audit", "--out", str(tmp_path), *settings])
    assert result.exit_code == 0, result.output

    record = json.loads((tmp_path / "run_record.json").read_text())
    assert record["verdicts"]["collective_rank"] == {
        "1": "identifiable",
        "2": "identifiable",
        "3": "identifiable",
    }
    assert record["verdicts"]["edge_coverage"] is True


SMALL = [
    "data.n_per_edge=200",
    "stage1.epochs=1",
    "stage1.batch_size=32",
    "stage2.epochs=1",
    "stage2.batch_size=32",
    "backbone.n_samples=200",
    "backbone.epochs=1",
]


@pytest.mark.slow
def test_pipeline_end_to_end(runner, tmp_path):
    overrides = [arg for o in SMALL for arg in ("--set", o)]
    for command in ("gen", "train-stage1", "train-stage2", "eval", "report"):
        result = runner.invoke(cli, [command, "--out", str(tmp_path), *overrides])
        assert result.exit_code == 0, (command, result.output)

    stage2 = json.loads((tmp_path / "train-stage2.json").read_text())
    assert stage2["backbone_unchanged"]

    evaluation = json.loads((tmp_path / "eval.json").read_text())
    assert evaluation["models"] == "stage2"
    assert sorted(evaluation["modalities"]) == ["1", "2", "3"]

    report = json.loads((tmp_path / "report.json").read_text())
    assert report["gaps"] == ["audit", "ablate", "sweep"]
