import csv
import io
import math

import numpy as np
import pytest

from z2scatter.cli import RunConfig, build_config, load_config, main, make_parser
from z2scatter.scatter import read_smatrix

SMALL = ["--n-x", "5", "--n-y", "10"]


def _table(text):
    lines = text.splitlines()
    assert lines[0].startswith("# z2scatter ") and lines[0].endswith("csv v1")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_defaults():
    cfg = RunConfig()
    assert cfg.leaf_max <= 1 / 16
    assert cfg.lengths == (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
    assert (cfg.n_x, cfg.n_y, cfg.E) == (6, 40, 1.8)


def test_branches(capsys):
    assert main(["branches", "--n-samples", "5", "--xi-max", "2"]) == 0
    rows = _table(capsys.readouterr().out)
    lin = [r for r in rows if r["branch"] == "h:0:lin"]
    assert [float(r["E"]) for r in lin] == pytest.approx([2, 1, 0, -1, -2])
    hb = {float(r["xi"]): float(r["E"]) for r in rows if r["branch"] == "hbar:0:lin"}
    assert all(hb[x] == pytest.approx(x) for x in hb)
    up = [r for r in rows if r["branch"] == "h:1:+"]
    assert all(float(r["E"]) == pytest.approx(math.sqrt(float(r["xi"]) ** 2 + 2)) for r in up)


def test_branches_p2_gaps(capsys):
    main(["branches", "--p", "2", "--n-samples", "3", "--xi-max", "6"])
    rows = _table(capsys.readouterr().out)
    gaps = sorted({round(float(r["E"]) ** 2, 9) for r in rows if r["branch"].endswith(":+") and float(r["xi"]) == 0})
    assert gaps[:3] == pytest.approx([4 * n * (n - 1) for n in (2, 3, 4)])
    assert {r["branch"] for r in rows} >= {"h:0:lin", "h:1:lin"}


def test_verify_pass_and_fail(capsys):
    args = ["verify", *SMALL, "--length", "0.25", "--leaf-max", "0.125"]
    assert main(args) == 0
    rows = _table(capsys.readouterr().out)
    assert {r["status"] for r in rows} == {"pass"}
    assert main(args + ["--tol-unitarity", "1e-30"]) == 1
    rows = _table(capsys.readouterr().out)
    assert [r["status"] for r in rows if r["check"] == "unitarity"] == ["FAIL"]


def test_verify_skips_skew_without_ftr(capsys):
    assert main(["verify", "--n-x", "7", "--n-y", "10", "--perturbation", "V_NTR", "--length", "0.25", "--leaf-max", "0.125"]) == 0
    rows = {r["check"]: r["status"] for r in _table(capsys.readouterr().out)}
    assert rows["skew_reflection"] == "skipped" and rows["unitarity"] == "pass"


def test_verify_zero(capsys):
    assert main(["verify", *SMALL, "--perturbation", "zero", "--leaf-max", "0.5"]) == 0
    rows = {r["check"]: r["status"] for r in _table(capsys.readouterr().out)}
    assert rows["free_identity"] == "pass"


def test_converge_rejects_coarse_reference():
    with pytest.raises(SystemExit):
        main(["converge", "--values", "4", "8", "--ref-n-x", "8"])


def test_converge_n_x(capsys):
    main(["converge", "--length", "0.5", "--values", "3", "5", "7", "--ref-n-x", "12", "--ref-n-y", "10"])
    err = [float(r["error"]) for r in _table(capsys.readouterr().out)]
    assert err[0] > err[1] > err[2]


def test_scatter_to_file(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("Z2SCATTER_OUTDIR", str(tmp_path))
    assert main(["scatter", *SMALL, "--length", "0.25", "--out", "s.txt"]) == 0
    E, npl, nmi, S, _ = read_smatrix((tmp_path / "s.txt").read_text())
    assert (E, npl, nmi) == (1.8, 3, 3)
    assert np.linalg.norm(S.conj().T @ S - np.eye(6)) < 1e-10
    assert "sigma2pi" in capsys.readouterr().out


def _sweep(capsys, extra=()):
    main(["sweep", *SMALL, "--lengths", "0.25", "0.5", "--leaf-max", "0.125", *extra])
    return _table(capsys.readouterr().out)


def test_sweep_deterministic(capsys):
    a, b = _sweep(capsys), _sweep(capsys)
    assert [r["l"] for r in a] == ["0.25", "0.5"]
    for ra, rb in zip(a, b):
        ra.pop("runtime"), rb.pop("runtime")
        assert ra == rb
    assert all(float(r["trT_plus"]) >= 1 - 1e-6 for r in a)
    assert all(r["flag"] == "" for r in a)


def test_sweep_seeded_random_ftr(capsys):
    a = _sweep(capsys, ["--perturbation", "random_ftr", "--seed", "3"])
    b = _sweep(capsys, ["--perturbation", "random_ftr", "--seed", "4"])
    assert a[0]["trT_plus"] != b[0]["trT_plus"]


def test_index(capsys):
    for M, expect in ((1, -1), (2, 1), (3, -1)):
        main(["index", "--M", str(M), "--N", str(M)])
        rows = {r["branch"]: r["flow"] for r in _table(capsys.readouterr().out)}
        assert int(rows["index2"]) == expect
    main(["index", "--M", "1", "--N", "0", "--p", "2", "--E-minus", "2.9", "--E-plus", "3.1"])
    rows = {r["branch"]: r["flow"] for r in _table(capsys.readouterr().out)}
    assert int(rows["sigma"]) == -2 and "index2" not in rows


def test_config_file_and_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[model]\nM = 2\nN = 2\n[perturbation]\nname = V1\n[discretization]\nn_y = 60\n[sweep]\nlengths = 1, 2\n")
    assert load_config(str(ini)) == {"M": 2, "N": 2, "perturbation": "V1", "n_y": 60, "lengths": (1.0, 2.0)}
    args = make_parser().parse_args(["scatter", "--config", str(ini), "--n-y", "12"])
    cfg = build_config(args)
    assert (cfg.M, cfg.perturbation, cfg.n_y, cfg.lengths) == (2, "V1", 12, (1.0, 2.0))


def test_config_unknown_key(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[model]\nK = 3\n")
    with pytest.raises(SystemExit):
        load_config(str(ini))


def test_mismatched_perturbation():
    with pytest.raises(SystemExit):
        main(["scatter", "--M", "2", "--N", "2", "--perturbation", "V_TR"])
