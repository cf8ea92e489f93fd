import json
import subprocess
import sys

import numpy as np
import pytest

from gadc.cli import main, preset_names
from gadc.diffusion import DiffusionConfig
from gadc.experiments import ExperimentConfig
from gadc.io import read_matrix, write_csv_matrix, write_matrix

import oracles


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_diffuse_plain_beta(tmp_path, capsys):
    x = np.random.default_rng(0).random((5, 3))
    write_matrix(tmp_path / "x.bin", x)
    (tmp_path / "e.tsv").write_text("0\t1\n1\t2\n3\t4\n")
    code, out, _ = run_cli(capsys, "diffuse", "--edges", str(tmp_path / "e.tsv"), "--features", str(tmp_path / "x.bin"),
                           "--option", "plain", "--lambda", "32", "--K", "16", "--out", str(tmp_path / "o"))
    assert code == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert abs(report["report"]["beta"] - (1 - (32 / 33) ** 17)) < 1e-12
    f = read_matrix(tmp_path / "o" / "features.bin")
    t = oracles.normalized(oracles.dense_adj(5, [(0, 1), (1, 2), (3, 4)]), "symmetric")
    assert np.allclose(f, oracles.series_S(t, 32.0, 16) @ x, rtol=1e-12)
    assert json.loads(out)["n"] == 5


def test_diffuse_gallery_complete_graph_tau(capsys):
    code, out, _ = run_cli(capsys, "diffuse", "--gallery", "complete4", "--kind", "row")
    assert code == 0
    expected = oracles.tau(oracles.series_S(np.full((4, 4), 0.25), 32.0, 16))
    assert json.loads(out)["tau"] == pytest.approx(expected, rel=1e-12)


def test_diffuse_option2_capacity_exit_code(tmp_path, capsys):
    write_csv_matrix(tmp_path / "x.csv", np.ones((50_001, 1)))
    (tmp_path / "e.tsv").write_text("")
    code, _, err = run_cli(capsys, "diffuse", "--edges", str(tmp_path / "e.tsv"), "--features", str(tmp_path / "x.csv"),
                           "--option", "2", "--epsilon", "1")
    assert code == 3 and "option III" in err


def test_numeric_exit_code(capsys):
    code, _, err = run_cli(capsys, "diffuse", "--gallery", "star4", "--option", "2", "--epsilon", "1e200", "--K", "8")
    assert code == 4 and "k=" in err


def test_input_error_exit_codes(tmp_path, capsys):
    (tmp_path / "e.tsv").write_text("0\t9\n")
    write_matrix(tmp_path / "x.bin", np.ones((3, 1)))
    code, _, err = run_cli(capsys, "diffuse", "--edges", str(tmp_path / "e.tsv"), "--features", str(tmp_path / "x.bin"))
    assert code == 2 and "line 1" in err
    assert run_cli(capsys, "diffuse", "--edges", str(tmp_path / "nope.tsv"), "--features", str(tmp_path / "x.bin"))[0] == 2
    assert run_cli(capsys, "denoise-bench", "--preset", "missing")[0] == 2
    assert run_cli(capsys, "denoise-bench", "--preset", "sbm_attack")[0] == 2
    assert run_cli(capsys, "diffuse", "--gallery", "star4", "--lambda", "-1")[0] == 2


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["diffuse", "--option", "9"])
    assert exc.value.code == 2


def test_presets_parse_and_cover_tables():
    names = preset_names()
    assert len([n for n in names if n.startswith("attack_")]) == 9
    assert len([n for n in names if n.startswith("flip_")]) == 9
    assert len([n for n in names if n.startswith("denoise_coauthor")]) == 4
    assert len([n for n in names if n.startswith("denoise_products")]) == 2
    assert {"denoise_cora", "denoise_citeseer", "denoise_pubmed", "sbm_denoise", "sbm_attack", "sbm_heterophily"} <= set(names)
    from importlib import resources
    for name in names:
        cfg = ExperimentConfig.from_dict(json.loads((resources.files("gadc.presets") / f"{name}.json").read_text()))
        cfg.diffusion_config()
        cfg.head_config()


def test_cora_denoise_preset_values():
    from importlib import resources
    raw = json.loads((resources.files("gadc.presets") / "denoise_cora.json").read_text())
    assert raw["head"] == {"kind": "linear", "lr": 0.2, "epochs": 100, "weight_decay": 1e-5}
    assert raw["diffusion"]["lam"] == 32.0 and raw["diffusion"]["K"] == 16 and raw["runs"] == 100


def test_bench_outputs_and_determinism(tmp_path, capsys):
    args = ["denoise-bench", "--preset", "sbm_denoise", "--runs", "2", "--seed", "3"]
    assert run_cli(capsys, *args, "--out", str(tmp_path / "a"))[0] == 0
    assert run_cli(capsys, *args, "--out", str(tmp_path / "b"), "--workers", "2")[0] == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["determinism_sha256"] == b["determinism_sha256"]
    assert a["config"]["seed"] == 3 and a["config"]["runs"] == 2
    assert (tmp_path / "a" / "summary.csv").read_text().startswith("cell,runs,mean,std")


def test_heterophily_sweep_reports_best_cell(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "heterophily-sweep", "--preset", "sbm_heterophily", "--runs", "1",
                           "--out", str(tmp_path))
    report = json.loads((tmp_path / "report.json").read_text())
    assert code == 0 and len(report["cells"]) == 5
    assert f"best cell: {report['summary']['best_cell']}" in out


def test_overrides_reach_the_config(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"scenario": "attack", "data": {"sbm": {"n": 100, "d": 4}},
                                "head": {"epochs": 5}, "perturbation": {"rate": 0.1}}))
    code, _, _ = run_cli(capsys, "attack-bench", "--config", str(path), "--lambda", "2", "--K", "3", "--kind", "row",
                         "--drop-low-order", "--out", str(tmp_path / "o"))
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    cell = report["cells"][0]["config"]["cell"]
    assert code == 0 and cell["lam"] == 2.0 and cell["K"] == 3 and cell["kind"] == "row_stochastic"
    assert cell["drop_low_order"] is True


def test_verify_exit_code_matches_results(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "verify", "--level", "fast", "--out", str(tmp_path))
    report = json.loads((tmp_path / "verify.json").read_text())
    assert code == (1 if report["failed"] else 0)
    assert out.count("[PASS]") + out.count("[FAIL]") == len(report["checks"])
    passed = {c["name"]: c["passed"] for c in report["checks"]}
    for name in ("row_sum_lemma", "tau_isolated_graph", "tau_gallery_ordering", "gradient_check_linear",
                 "gradient_check_mlp2", "truncation_tail", "noise_bound_max_entry", "noise_contraction"):
        assert passed[name], name


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gadc.cli", "presets"], capture_output=True, text=True)
    assert res.returncode == 0 and "sbm_denoise" in res.stdout
