"""End-to-end runs of the command line."""

import csv
import json
import math

import pytest

from app.__main__ import EXIT_INVALID, EXIT_OK, main, parse_args
from app.utils.reporting import MANIFEST


@pytest.fixture(autouse=True)
def in_tmp_path(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def test_subcommands_share_the_common_flags():
    args = parse_args(["simulate", "-f", "x.json", "--n", "4", "--n", "9", "--seed", "3"])
    assert args.command == "simulate"
    assert args.n_list == [4, 9]
    assert args.seed == 3
    assert not args.allow_unstable
    with pytest.raises(SystemExit):
        parse_args(["palm-report"])


def test_limit_of_the_single_region_model(tmp_path, experiment_document, write_experiment):
    path = write_experiment(dict(experiment_document, limit={"u_max": 8.0, "points": 9}))
    assert main(["limit", "-f", path, "-o", str(tmp_path / "out")]) == EXIT_OK
    rows = read_csv(tmp_path / "out" / "limit_density.csv")
    assert [float(row["u"]) for row in rows] == [float(u) for u in range(9)]
    assert float(rows[0]["h"]) == pytest.approx(1.0)
    assert float(rows[1]["h"]) == pytest.approx(math.exp(-1.0))
    document = read_json(tmp_path / "out" / "limit_density.json")
    assert document["C"] == pytest.approx(0.5)
    assert document["label"] == "theorem"
    manifest = read_json(tmp_path / "out" / MANIFEST)
    assert manifest["command"] == "limit"
    assert manifest["files"] == ["limit_density.csv", "limit_density.json"]
    assert manifest["config"]["seed"] == 7


def test_clocks_table(tmp_path, experiment_document, write_experiment):
    path = write_experiment(dict(experiment_document, clocks={"theta": [0.0, 0.5]}, n_list=[25, 100]))
    assert main(["clocks", "-f", path, "-o", str(tmp_path / "out")]) == EXIT_OK
    rows = read_csv(tmp_path / "out" / "clocks.csv")
    assert len(rows) == 4
    assert float(rows[0]["theta"]) == 0.0
    assert float(rows[0]["eta"]) == 0.0
    document = read_json(tmp_path / "out" / "clocks.json")
    assert set(document["safe_radius"]) == {"25", "100"}
    assert document["safe_radius"]["25"]["holds"]
    assert "0.5" in document["expansion_slopes"]


def test_simulate_then_rebuild_the_palm_report(tmp_path, experiment_document, write_experiment):
    out = tmp_path / "run"
    assert main(["simulate", "-f", write_experiment(experiment_document), "-o", str(out)]) == EXIT_OK
    for name in ["law_n25.csv", "law_n25.json", "palm_n25.csv", MANIFEST]:
        assert (out / name).exists()
    law = read_json(out / "law_n25.json")
    assert law["law"]["events"] == 20000
    assert law["boundary"]["limit_rhs"] == pytest.approx(1.0)
    palm_rows = read_csv(out / "palm_n25.csv")
    assert [float(row["x"]) for row in palm_rows] == [0.5, 1.0]

    assert main(["palm-report", "--from", str(out), "--probe", "0.5"]) == EXIT_OK
    rebuilt = read_csv(out / "palm-report" / "palm_n25.csv")
    assert len(rebuilt) == 1
    assert float(rebuilt[0]["H_hat"]) == pytest.approx(float(palm_rows[0]["H_hat"]))
    assert read_json(out / MANIFEST)["command"] == "simulate"


def test_same_seed_same_files(tmp_path, experiment_document, write_experiment):
    path = write_experiment(experiment_document)
    for name in ["a", "b"]:
        assert main(["simulate", "-f", path, "-o", str(tmp_path / name)]) == EXIT_OK
    first = (tmp_path / "a" / "law_n25.csv").read_text(encoding="utf-8")
    assert first == (tmp_path / "b" / "law_n25.csv").read_text(encoding="utf-8")


def test_unstable_model_is_rejected(tmp_path, experiment_document, write_experiment, capsys):
    model = {"levels": [], "regions": [{"lambda": 1.0, "mu": 1.0, "lambda_star": 1.0}]}
    path = write_experiment(dict(experiment_document, model=model))
    assert main(["simulate", "-f", path, "-o", str(tmp_path / "out")]) == EXIT_INVALID
    assert not (tmp_path / "out" / MANIFEST).exists()
    assert "gamma_inf = " in capsys.readouterr().out


def test_diffusion_help_explains_the_reflection_default(capsys):
    with pytest.raises(SystemExit):
        parse_args(["diffusion", "--help"])
    out = capsys.readouterr().out
    assert "mirror" in out
    assert "projection" in out
    assert "sqrt(step)" in out


def test_invalid_configuration(tmp_path, experiment_document, write_experiment):
    assert main(["limit"]) == EXIT_INVALID
    assert main(["limit", "-f", str(tmp_path / "absent.json")]) == EXIT_INVALID
    path = write_experiment(dict(experiment_document, events=10))
    assert main(["simulate", "-f", path]) == EXIT_INVALID
    assert main(["simulate", "-f", write_experiment(experiment_document), "--events", "10"]) == EXIT_INVALID


def test_compare_with_the_oracle(tmp_path, experiment_document, write_experiment):
    path = write_experiment(dict(experiment_document, n_list=[25, 100, 400]))
    assert main(["compare", "-f", path, "-o", str(tmp_path / "out")]) == EXIT_OK
    document = read_json(tmp_path / "out" / "convergence.json")
    assert document["source"] == "oracle"
    assert document["monotone_ks"] is True
    assert document["monotone_boundary"] is True
    assert [row["n"] for row in document["rows"]] == [25, 100, 400]


def test_fluid_run(tmp_path, experiment_document, write_experiment):
    path = write_experiment(dict(experiment_document, fluid={"y": 2000, "t_grid": [0.0, 1.0, 2.0]}))
    assert main(["fluid", "-f", path, "-o", str(tmp_path / "out")]) == EXIT_OK
    rows = read_csv(tmp_path / "out" / "fluid_n25.csv")
    assert float(rows[0]["L_bar"]) == 1.0
    assert float(rows[0]["reference"]) == 1.0
    assert read_json(tmp_path / "out" / "fluid.json")["runs"][0]["sup_error"] < 0.3


def test_diffusion_run(tmp_path, experiment_document, write_experiment):
    diffusion = {"step": 0.01, "steps": 3000, "burn_in": 100, "paths": 4}
    path = write_experiment(dict(experiment_document, diffusion=diffusion))
    assert main(["diffusion", "-f", path, "-o", str(tmp_path / "out")]) == EXIT_OK
    document = read_json(tmp_path / "out" / "diffusion.json")
    assert document["samples"] == 4 * 2900
    assert 0.0 <= document["ks"] <= 1.0
    assert document["reflection"] == "mirror"
