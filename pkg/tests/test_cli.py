import os

import numpy as np
import pandas as pd
import pytest
import yaml

from benchmark.study import StudyResult, fit_orders, run_manufactured, write_report
from conftest import quiet_block
from core.config import load_config
from main import CONFIG_DIR, main
from utils.report_utils import convert_markdown_to_html, render_template
from utils.utils import ensure_dirs, parse_number_list


def _write_yaml(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_presets_validate(capsys):
    names = ("manufactured.yaml", "ablate2d_p0_1.yaml", "ablate2d_p0_01.yaml")
    presets = [os.path.join(CONFIG_DIR, n) for n in names]
    assert main(["validate-config", *presets]) == 0
    out = capsys.readouterr().out
    assert out.count(": OK") == 3
    assert "(ablation, h=0.048, dt=0.0005)" in out


def test_invalid_config_is_reported(tmp_path, capsys):
    bad = _write_yaml(tmp_path / "bad.yaml", quiet_block(tmp_path, time={"dt": -1.0}))
    good = _write_yaml(tmp_path / "good.yaml", quiet_block(tmp_path))
    assert main(["validate-config", good, bad]) == 1
    out = capsys.readouterr().out
    assert f"{bad}: INVALID" in out
    assert "time.dt" in out
    assert f"{good}: OK" in out


def test_ablate_runs_and_restarts(tmp_path, capsys):
    config = _write_yaml(tmp_path / "block.yaml", quiet_block(tmp_path))
    assert main(["ablate2d", "--config", config]) == 0
    out = capsys.readouterr().out
    assert "after 3 steps" in out
    run_dir = tmp_path / "block"
    assert (run_dir / "cavity.csv").exists()
    profile = pd.read_csv(run_dir / "profile.csv")
    np.testing.assert_allclose(profile["y_surface"], 0.55, atol=1e-8)

    restart_dir = tmp_path / "again"
    code = main(["ablate2d", "--config", config, "--output-dir", str(restart_dir),
                 "--restart", str(run_dir / "state_000002.json")])
    assert code == 0
    assert "after 3 steps" in capsys.readouterr().out
    assert (restart_dir / "block" / "state_000003.json").exists()
    assert not (restart_dir / "block" / "state_000002.json").exists()


def test_ablate_compares_two_runs(tmp_path, capsys):
    first = _write_yaml(tmp_path / "a.yaml", quiet_block(tmp_path, name="block_a"))
    second = _write_yaml(tmp_path / "b.yaml", quiet_block(tmp_path, name="block_b"))
    assert main(["ablate2d", "--config", first, "--compare", second]) == 0
    out = capsys.readouterr().out
    assert "block_a: finished" in out and "block_b: finished" in out
    assert (tmp_path / "block_a" / "cavity.csv").exists()
    assert (tmp_path / "block_b" / "cavity.csv").exists()
    table = pd.read_csv(tmp_path / "comparison.csv")
    assert table.shape[0] == 1
    row = table.iloc[0]
    assert (row["run_a"], row["run_b"]) == ("block_a", "block_b")
    assert row["depth_a"] == row["depth_b"]
    assert row["depth_mismatch"] == 0.0


def test_compare_rejects_restart_and_shared_names(tmp_path, capsys):
    first = _write_yaml(tmp_path / "a.yaml", quiet_block(tmp_path))
    twin = _write_yaml(tmp_path / "b.yaml", quiet_block(tmp_path))
    assert main(["ablate2d", "--config", first, "--compare", twin]) == 2
    assert "share the name 'block'" in capsys.readouterr().err
    code = main(["ablate2d", "--config", first, "--compare", twin, "--restart", str(tmp_path / "s.json")])
    assert code == 2
    assert "--restart" in capsys.readouterr().err
    assert not (tmp_path / "comparison.csv").exists()


def test_flags_override_the_file(tmp_path, capsys):
    config = _write_yaml(tmp_path / "block.yaml", quiet_block(tmp_path))
    assert main(["ablate2d", "--config", config, "--dt", "1/50", "--tf", "0.04", "--every", "5"]) == 0
    assert "after 2 steps" in capsys.readouterr().out
    assert main(["ablate2d", "--config", config, "--dt", "0.01,0.02"]) == 2
    assert "expected one value" in capsys.readouterr().err


def test_study_needs_three_levels(tmp_path, capsys):
    code = main(["bench-manufactured", "--h", "0.5", "--dt", "0.1", "--output-dir", str(tmp_path)])
    assert code == 2
    assert "three" in capsys.readouterr().err


def test_number_lists():
    assert parse_number_list("1/20, 1/40,0.0125") == [0.05, 0.025, 0.0125]
    assert parse_number_list("1e-4") == [1e-4]
    with pytest.raises(ValueError):
        parse_number_list("1/0")
    with pytest.raises(ValueError):
        parse_number_list("a,b")


def test_ensure_dirs(tmp_path):
    paths = ensure_dirs(str(tmp_path / "root"), "vtk", "csv")
    assert paths["out_root"] == str(tmp_path / "root")
    assert os.path.isdir(paths["vtk"]) and os.path.isdir(paths["csv"])


def test_report_is_rendered(tmp_path):
    h = [0.1, 0.05, 0.025]
    table = pd.DataFrame({"h": h, "dt": [1e-3] * 3, "status": ["ok"] * 3, "temperature_l2": [x ** 2 for x in h]})
    result = StudyResult(table=table, orders=fit_orders(table))
    md_path, html_path = write_report(result, str(tmp_path), plots=[], html=True)
    text = open(md_path, encoding="utf-8").read()
    assert "| h | dt | status | temperature_l2 |" in text
    assert "2.000" in text
    html = open(html_path, encoding="utf-8").read()
    assert "<table>" in html and "Convergence report" in html


def test_templates_and_embedded_images(tmp_path):
    (tmp_path / "t.md.j2").write_text("# {{ title }}\n", encoding="utf-8")
    assert render_template("t.md.j2", {"title": "Runs"}, templates_dir=str(tmp_path)).strip() == "# Runs"
    empty = StudyResult(table=pd.DataFrame({"h": [0.1], "dt": [1e-3], "status": ["ok"]}), orders=pd.DataFrame())
    md = write_report(empty, str(tmp_path), plots=[])[0]
    assert "Not enough refinement levels" in open(md, encoding="utf-8").read()

    (tmp_path / "plot.png").write_bytes(b"\x89PNG\r\n\x1a\n")
    (tmp_path / "page.md").write_text("![p](plot.png)\n", encoding="utf-8")
    out = convert_markdown_to_html(str(tmp_path / "page.md"), str(tmp_path / "page.html"))
    assert "data:image/png;base64," in open(out, encoding="utf-8").read()


@pytest.mark.slow
def test_short_manufactured_run():
    base = load_config(os.path.join(CONFIG_DIR, "manufactured.yaml"))
    row, series = run_manufactured(base, 0.1, 1e-3, tf=3e-3)
    assert row["status"] == "ok"
    assert row["steps"] == 3
    assert row["temperature_l2"] < 0.1
    assert row["max_radius_error"] < 0.1
    assert series.shape[0] == 3


@pytest.mark.slow
def test_pulse_period_presets_compare(tmp_path):
    p0_1 = os.path.join(CONFIG_DIR, "ablate2d_p0_1.yaml")
    p0_01 = os.path.join(CONFIG_DIR, "ablate2d_p0_01.yaml")
    code = main(["ablate2d", "--config", p0_1, "--compare", p0_01, "--output-dir", str(tmp_path),
                 "--every", "100000"])
    assert code == 0
    row = pd.read_csv(tmp_path / "comparison.csv").iloc[0]
    assert (row["run_a"], row["run_b"]) == ("ablate2d_p0_1", "ablate2d_p0_01")
    assert row["depth_a"] > 0.0 and row["depth_b"] > 0.0
    assert row["depth_mismatch"] <= 0.1
    assert row["roughness_ratio"] >= 2.0
