import csv
import json
import re
import subprocess
import sys

import numpy as np
import pytest

from fairfrontier import cli, dataio
from fairfrontier.frontier import pareto_filter, taf_eval

LINE = re.compile(r'^level=(\w+) code=(\d) msg="[^"]*"$')


def run(*argv):
    return cli.main([str(a) for a in argv])


def synth(tmp_path, *sets, name="s"):
    args = ["synth", "--out", tmp_path / name]
    for s in sets:
        args += ["--set", s]
    assert run(*args) == 0
    return tmp_path / name / "predictions.csv"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_is_reproducible_and_parses(tmp_path):
    a = synth(tmp_path, "n=400", "k=5", "seed=3", name="a")
    b = synth(tmp_path, "n=400", "k=5", "seed=3", name="b")
    assert a.read_bytes() == b.read_bytes()
    header = a.read_text().splitlines()[0].split(",")
    assert sum(h.startswith("model:") for h in header) == 5
    pm = dataio.parse_prediction_matrix(a)
    assert [len(pm.splits[s].row_ids) for s in dataio.SPLITS] == [200, 100, 100]


def test_frontier_single_fair_model(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("id,fairness,accuracy\nonly,1.0,0.62\n")
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# weights to report\nweights = uniform, step:0.8, power:2:0.5, point_mass_zero\n")
    assert run("frontier", m, "--config", cfg, "--out", tmp_path / "o") == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert len(report["weights"]) == 4
    for w in report["weights"]:
        assert w["fauc"] == pytest.approx(0.62, abs=1e-15)
    assert (tmp_path / "o" / "taf.svg").exists()


def test_frontier_missing_fair_model(tmp_path, capsys):
    m = tmp_path / "m.csv"
    m.write_text("id,fairness,accuracy\na,0.9,0.8\n")
    code = run("frontier", m, "--out", tmp_path / "o", "--set", "append_constant_model=false")
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert LINE.match(err)
    assert "append_constant_model" in err
    assert run("frontier", m, "--out", tmp_path / "o2") == 0
    pts = read_csv(tmp_path / "o2" / "taf_points.csv")
    assert [p["id"] for p in pts] == ["a", "constant"]


def test_frontier_rerun_is_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    m = tmp_path / "m.csv"
    m.write_text("id,fairness,accuracy\n" + "".join(
        f"h{i},{float(f)!r},{float(a)!r}\n" for i, (f, a) in enumerate(rng.random((40, 2)))) + "c,1.0,0.3\n")
    for out in ("o1", "o2"):
        assert run("frontier", m, "--out", tmp_path / out, "--oracle") == 0
    for name in ("report.json", "taf_points.csv", "taf.svg"):
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()
    assert run("frontier", m, "--out", tmp_path / "o3", "--timestamp") == 0
    assert "timestamp" in json.loads((tmp_path / "o3" / "report.json").read_text())


def test_oracle_disagreement_exits_1(tmp_path, monkeypatch, capsys):
    m = tmp_path / "m.csv"
    m.write_text("id,fairness,accuracy\na,1.0,0.5\nb,0.6,0.9\n")
    monkeypatch.setattr(cli.frontier, "fauc", lambda curve, w: 0.0)
    assert run("frontier", m, "--out", tmp_path / "o", "--oracle") == 1
    assert "oracle disagreement" in capsys.readouterr().err


def test_internal_error_exits_1(tmp_path, monkeypatch, capsys):
    def boom(args, cfg):
        raise RuntimeError("kaput")

    monkeypatch.setitem(cli.COMMANDS, "frontier", boom)
    assert run("frontier", "x.csv", "--out", tmp_path) == 1
    err = capsys.readouterr().err.strip()
    assert LINE.match(err) and "code=1" in err


@pytest.mark.parametrize("override, fragment", [
    ("bogus=1", "unknown config key 'bogus'"),
    ("task=ranking", "'task'"),
    ("weights=cubic", "'weights'"),
    ("noequals", "expected key=value"),
    ("append_constant_model=maybe", "'append_constant_model'"),
])
def test_bad_config_exits_2(tmp_path, capsys, override, fragment):
    assert run("synth", "--out", tmp_path, "--set", override) == 2
    err = capsys.readouterr().err
    assert fragment in err and "code=2" in err


def test_config_file_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("seed = 1\njust words\n")
    assert run("synth", "--out", tmp_path, "--config", cfg) == 2
    assert "config line 2" in capsys.readouterr().err


def test_stack_single_ols_record(tmp_path):
    data = synth(tmp_path, "n=400", "k=3")
    out = tmp_path / "st"
    assert run("path", data, "--out", out, "--set", "lambda_grid=0", "--set", "alpha=0") == 0
    rows = read_csv(out / "weights.csv")
    assert len(rows) == 1 and rows[0]["lambda"] == "0.0" and rows[0]["alpha"] == "0.0"
    assert set(rows[0]) >= {"m0", "m1", "m2", "constant", "bias:group", "converged"}
    fs = [r for r in read_csv(out / "model_metrics.csv") if r["id"].startswith("fs:")]
    assert len(fs) == 1
    assert run("stack", data, "--out", tmp_path / "st2", "--set", "alpha=0") == 0
    assert read_csv(tmp_path / "st2" / "weights.csv")[0]["m0"] == rows[0]["m0"]


def test_path_expands_frontier(tmp_path):
    data = synth(tmp_path, "n=2000", "k=6", "seed=1")
    out = tmp_path / "p"
    code = run("path", data, "--out", out, "--oracle", "--set", "alpha=1",
               "--set", "fairness_axis=score", "--set", "lambda_count=200")
    assert code == 0
    recs = dataio.parse_model_metrics(out / "model_metrics.csv")
    base = [r for r in recs if not r.id.startswith("fs:")]
    grid = np.linspace(0, 1, 101)
    assert np.all(taf_eval(pareto_filter(recs), grid) >= taf_eval(pareto_filter(base), grid) - 1e-6)
    report = json.loads((out / "report.json").read_text())
    assert len(report["settings"]["base_only"]) == len(report["weights"])
    assert len(read_csv(out / "weights.csv")) == 200


def test_path_cross_validates_alpha(tmp_path):
    data = synth(tmp_path, "n=600", "k=4")
    out = tmp_path / "p"
    assert run("path", data, "--out", out, "--set", "lambda_count=5", "--set", "alpha_count=3",
               "--set", "cv_folds=3", "--set", "workers=2") == 0
    alpha = json.loads((out / "report.json").read_text())["settings"]["alpha"]
    assert alpha in np.logspace(2, 7, 3).tolist()


def test_logistic_path(tmp_path):
    data = synth(tmp_path, "n=600", "k=4")
    assert run("path", data, "--out", tmp_path / "p", "--set", "loss=logistic",
               "--set", "alpha=1", "--set", "lambda_count=5") == 0
    assert all(r["converged"] == "1" for r in read_csv(tmp_path / "p" / "weights.csv"))


def test_regression_rejects_eo(tmp_path, capsys):
    data = synth(tmp_path, "n=200", "task=regression")
    code = run("path", data, "--out", tmp_path / "p", "--set", "task=regression",
               "--set", "fairness_metric=eo")
    assert code == 2
    assert "undefined for regression" in capsys.readouterr().err


def test_regression_path(tmp_path):
    data = synth(tmp_path, "n=600", "task=regression")
    assert run("path", data, "--out", tmp_path / "p", "--set", "task=regression",
               "--set", "alpha=1", "--set", "lambda_count=5") == 0


def test_unknown_contrast_attribute(tmp_path, capsys):
    data = synth(tmp_path, "n=200")
    assert run("path", data, "--out", tmp_path / "p", "--set", "contrast_attributes=race") == 2
    assert "'race'" in capsys.readouterr().err


def mirrored_matrix(path, n_pairs=300, seed=0):
    """Every row has a twin in the other group with the same label and scores: zero bias."""
    rng = np.random.default_rng(seed)
    split = np.array(dataio.assign_splits(n_pairs, seed))
    y = rng.integers(0, 2, n_pairs)
    H = 0.5 + 0.3 * (y[:, None] - 0.5) + 0.3 * rng.normal(size=(n_pairs, 3))
    dataio.write_prediction_matrix(
        path, [f"r{i}" for i in range(2 * n_pairs)], np.r_[y, y],
        {"group": np.r_[np.ones(n_pairs), np.zeros(n_pairs)]}, np.vstack([H, H]),
        ["m0", "m1", "m2"], np.r_[split, split].tolist(),
    )
    return path


def test_audit_zero_bias_and_determinism(tmp_path):
    data = mirrored_matrix(tmp_path / "mirror.csv")
    for out in ("a1", "a2"):
        assert run("audit", data, "--out", tmp_path / out, "--set", "alpha=1") == 0
    assert (tmp_path / "a1" / "audit.csv").read_bytes() == (tmp_path / "a2" / "audit.csv").read_bytes()
    summary = json.loads((tmp_path / "a1" / "audit.json").read_text())
    assert summary["contrasts"][0]["inversions"] == 0
    rows = read_csv(tmp_path / "a1" / "audit.csv")
    assert len(rows) == 20 and set(rows[0]) == {"attribute", "lambda", "score_bias", "decision_bias"}


def test_plot_two_curves(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("id,fairness,accuracy\nx,1,0.5\ny,0.5,0.8\n")
    b.write_text("id,fairness,accuracy\nx,1,0.4\n")
    assert run("plot", a, b, "--out", tmp_path / "o") == 0
    svg = (tmp_path / "o" / "taf.svg").read_text()
    assert svg.count("<line ") == 4
    assert "a TAF" in svg and "b TAFI" in svg


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "fairfrontier", "synth", "--out", str(tmp_path),
                          "--set", "n=50"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "fairfrontier", "frontier", "missing.csv",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2
    assert LINE.match(res.stderr.strip())
