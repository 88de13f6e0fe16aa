import json
import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from trajsel.cli import build_parser, main
from trajsel.config import ConfigError, ScenarioConfig, data_root
from trajsel.trajectory_store import PerformanceTable, TrajectoryStore


def test_default_config_roundtrip():
    cfg = ScenarioConfig()
    assert ScenarioConfig.from_text(cfg.to_text()) == cfg
    assert cfg.a2_budgets(5) == [100, 350, 850] and cfg.a1_budget(10) == 300


@given(st.lists(st.integers(2, 40), min_size=1, max_size=3, unique=True),
       st.lists(st.integers(1, 500), min_size=1, max_size=4, unique=True),
       st.integers(0, 2**40), st.sampled_from(["full", "reduced"]))
def test_config_roundtrip_property(dims, budgets, seed, grid):
    cfg = ScenarioConfig(dimensions=tuple(dims), a2_budgets_per_dim=tuple(budgets), seed_base=seed, grid=grid)
    assert ScenarioConfig.from_text(cfg.to_text()) == cfg


def test_invalid_config_field_diagnostics():
    text = ScenarioConfig().to_text().replace("n_runs = 5", "n_runs = 0").replace(
        '"ELA", "TS", "ELA+TS"', '"XYZ"') + "bogus = 1\n"
    with pytest.raises(ConfigError) as e:
        ScenarioConfig.from_text(text)
    assert [k for k, _ in e.value.problems] == ["bogus"]
    with pytest.raises(ConfigError) as e:
        ScenarioConfig.from_text(text.replace("bogus = 1\n", ""))
    assert {k for k, _ in e.value.problems} == {"n_runs", "modes"}
    with pytest.raises(ConfigError) as e:
        ScenarioConfig.from_text(text.replace("schema_version = 1", "schema_version = 2"))
    assert "schema_version" in {k for k, _ in e.value.problems}


def test_env_overrides_root(monkeypatch):
    cfg = ScenarioConfig(output_dir="x")
    monkeypatch.delenv("TRAJSEL_DATA_DIR", raising=False)
    assert data_root(cfg) == "x"
    monkeypatch.setenv("TRAJSEL_DATA_DIR", "/tmp/y")
    assert data_root(cfg) == "/tmp/y"


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit) as e:
        main(["collect", "--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--config", "--jobs", "--quiet"):
        assert flag in out
    cmds = build_parser()._subparsers._group_actions[0].choices
    assert {"collect", "features", "train", "evaluate", "transfer", "similarity", "select"} <= set(cmds)


def test_unknown_flag_is_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["collect", "--config", "c", "--frobnicate"])
    assert e.value.code == 2
    assert "unrecognized arguments" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "c.cfg"
    path.write_text("schema_version = 1\nn_runs = -1\n")
    assert main(["collect", "--config", str(path), "--quiet"]) == 2
    assert "n_runs" in capsys.readouterr().err


def test_missing_upstream_artifact(tmp_path, monkeypatch, capsys):
    path = tmp_path / "c.cfg"
    path.write_text(ScenarioConfig(label="empty").to_text())
    monkeypatch.setenv("TRAJSEL_DATA_DIR", str(tmp_path / "out"))
    assert main(["train", "--config", str(path), "--quiet"]) == 3
    assert "trajsel collect" in capsys.readouterr().err


TINY = ScenarioConfig(label="tiny", functions=(1, 21), n_instances=2, n_runs=3, modes=("ELA",),
                      grid="reduced", repeats=1, suites=("train", "transfer"),
                      transfer_functions=("ackley",), transfer_instances=2)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "tiny.cfg"
    cfg_path.write_text(TINY.to_text())
    os.environ["TRAJSEL_DATA_DIR"] = str(root / "out")
    try:
        codes = {c: main([c, "--config", str(cfg_path), "--quiet"])
                 for c in ("collect", "features", "train", "evaluate", "transfer", "similarity")}
    finally:
        del os.environ["TRAJSEL_DATA_DIR"]
    return root, cfg_path, codes


def test_cli_pipeline_exit_codes(tiny_run):
    _, _, codes = tiny_run
    assert set(codes.values()) == {0}


def test_collect_sealed_and_resumable(tiny_run, monkeypatch):
    root, cfg_path, _ = tiny_run
    store = TrajectoryStore(str(root / "out" / "data" / "tiny-5d"), "train")
    assert store.sealed and len(store.keys()) == 12
    before = (root / "out/data/tiny-5d/train/performance.csv").read_bytes()
    monkeypatch.setenv("TRAJSEL_DATA_DIR", str(root / "out"))
    assert main(["collect", "--config", str(cfg_path), "--quiet"]) == 0
    assert len(TrajectoryStore(str(root / "out" / "data" / "tiny-5d"), "train").keys()) == 12
    assert (root / "out/data/tiny-5d/train/performance.csv").read_bytes() == before
    table = PerformanceTable.read(str(root / "out/data/tiny-5d/train/performance.csv"))
    assert table.values.shape == (12, 3, 6)


def test_features_columns_and_rerun(tiny_run, monkeypatch):
    root, cfg_path, _ = tiny_run
    path = root / "out/data/tiny-5d/train/features_ela.csv"
    header = path.read_text().splitlines()[0].split(",")
    assert len(header) == 6 + 38 + 1
    assert len(path.read_text().splitlines()) == 13
    before = path.read_bytes()
    monkeypatch.setenv("TRAJSEL_DATA_DIR", str(root / "out"))
    assert main(["features", "--config", str(cfg_path), "--quiet"]) == 0
    assert path.read_bytes() == before


def test_stale_catalog_rejected(tiny_run, tmp_path, monkeypatch, capsys):
    import shutil

    root, cfg_path, _ = tiny_run
    out = tmp_path / "out"
    shutil.copytree(root / "out" / "data", out / "data")
    side = out / "data/tiny-5d/train/features_ela.csv.json"
    meta = json.loads(side.read_text())
    meta["catalog_version"] = "ela-catalog-0"
    side.write_text(json.dumps(meta))
    monkeypatch.setenv("TRAJSEL_DATA_DIR", str(out))
    assert main(["train", "--config", str(cfg_path), "--quiet"]) == 3
    assert "rerun `trajsel features`" in capsys.readouterr().err


def test_reports_written(tiny_run):
    root, _, _ = tiny_run
    rep = root / "out/reports/tiny"
    names = {p.name for p in rep.iterdir()}
    assert {"report_5d_100.json", "report_5d_350.json", "report_5d_850.json",
            "fig3.csv", "fig4.csv", "fig5.csv"} <= names
    d = json.loads((rep / "report_5d_100.json").read_text())
    assert d["schemes"]["LEAVE_RUN_OUT"]["mean_ratio"]["VBS_RUN"] == 1.0
    assert (rep / "similarity_5d" / "fig6.csv").exists()


def test_select_command(tiny_run, capsys):
    root, _, _ = tiny_run
    trj = root / "out/data/tiny-5d/train/21/1/2.trj"
    model = root / "out/models/tiny-5d.model"
    assert main(["select", str(trj), "--model", str(model), "--budget", "350", "--mode", "ELA"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["chosen"] in {"CMA_NONELITIST", "CMA_ELITIST", "DE", "PSO", "QUASI_NEWTON", "MLSL"}
    assert len(out["predictions"]) == 6
