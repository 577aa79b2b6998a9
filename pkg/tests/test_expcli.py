import csv
import json
import os
import re

import pytest

from wwlab.errors import ConfigError
from wwlab.expcli import data, emit_report, experiments, parse_config, run
from wwlab.expcli.cli import main
from wwlab.expcli.report import load_result, slope_label
from wwlab.expcli.result import ExperimentResult, PlotSpec
from wwlab.fitting import power_fit

DN_SMALL = """
[experiment]
scenario = dn
seed = 3

[grid]
n = 64

[dn]
flat_n = 64
flat_kmax = 21
pairs = 3
pair_n = 32
sweep = 8, 16
amplitudes = 0.01, 0.02
band = 3

[thresholds]
flat_error_max = 1e-6
symmetry_max = 1e-8
"""

FLOW_SMALL = """
[experiment]
scenario = flowmap
seed = 1

[grid]
n = 32

[physics]
n_z = 16

[analysis]
s = 2.5
eps = 2^-2, 2^-3

[family]
kind = amplitude
perturb_mode = 4
members = 2

[integration]
periods = 0.1
stride = 2

[thresholds]
require_monotone = 1
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_defaults_and_types():
    cfg = parse_config(DN_SMALL)
    assert cfg.scenario == "dn" and cfg.seed == 3
    assert cfg.dn.sweep == (8, 16) and isinstance(cfg.dn.sweep[0], int)
    assert cfg.dn.amplitudes == (0.01, 0.02)
    assert cfg.analysis.eps == tuple(2.0 ** -k for k in range(3, 7))
    assert cfg.thresholds == {"flat_error_max": 1e-6, "symmetry_max": 1e-8}
    assert cfg.rho0 == pytest.approx(0.4)


def test_dispersion_modes_parse_as_ints():
    cfg = parse_config("[experiment]\nscenario = simulate\n[simulate]\ndispersion_modes = 1, 2, 3\n")
    assert cfg.simulate.dispersion_modes == (1, 2, 3)


@pytest.mark.parametrize("text", [
    "[experiment]\nscenario = nope\n",
    "[experiment]\nscenario = dn\n[grid]\nn = 100\n",
    "[experiment]\nscenario = dn\n[analysis]\ns = 1.2\n",
    "[experiment]\nscenario = flowmap\n[analysis]\ns = 1.9\n",
    "[experiment]\nscenario = dn\n[analysis]\neps = 0.1, 0.2\n",
    "[experiment]\nscenario = dn\n[analysis]\neps = 0.5, 1.5\n",
    "[experiment]\nscenario = dn\n[grid]\nbogus = 1\n",
    "[experiment]\nscenario = dn\n[weird]\nx = 1\n",
    "[experiment]\nscenario = dn\n[grid]\nn = sixty\n",
    "[experiment]\nscenario = flowmap\n[family]\nkind = files\n",
    "not an ini file",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_hash_depends_on_content():
    a = parse_config(DN_SMALL)
    b = parse_config(DN_SMALL.replace("seed = 3", "seed = 4"))
    assert a.config_hash() != b.config_hash()
    assert a.config_hash() == parse_config(DN_SMALL).config_hash()


def test_empty_result_report(tmp_path):
    res = ExperimentResult("simulate", {})
    code = emit_report(res, tmp_path)
    assert code == 0
    with open(tmp_path / "tables" / "checks.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows == [["check", "value", "op", "threshold", "threshold_key", "passed"]]
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert summ["note"] == "no checks declared" and summ["passed"] is True


def test_threshold_never_defaulted():
    res = ExperimentResult("dn", {"a_max": 1.0})
    assert res.check("a", 0.5, "<=", "a_max") is True
    assert res.check("b", 0.5, "<=", "b_max") is None
    assert "b" in res.skipped and "b" not in res.checks
    assert res.checks["a"]["threshold"] == 1.0
    res.check("c", 2.0, "<=", "a_max")
    assert res.passed is False


def test_slope_annotation_matches_json(tmp_path):
    res = ExperimentResult("mollifier", {})
    eps = [2.0 ** -k for k in range(3, 9)]
    y = [e ** 0.5432 * (1 + 0.01 * i) for i, e in enumerate(eps)]
    res.add_fit("rate", power_fit(eps, y))
    t = res.table("rates", ["eps", "norm"])
    for e, v in zip(eps, y):
        t.add(eps=e, norm=v)
    res.plots.append(PlotSpec("rates", "rates", "eps", "norm", fits={"": "rate"}))
    emit_report(res, tmp_path)
    summ = json.loads((tmp_path / "summary.json").read_text())
    svg = (tmp_path / "plots" / "rates.svg").read_text()
    shown = re.findall(r"slope = (-?\d+\.\d{3})", svg)
    assert shown and float(shown[0]) == round(summ["fits"]["rate"]["slope"], 3)
    assert slope_label(summ["fits"]["rate"]) == f"slope = {shown[0]}"


def test_nan_becomes_null(tmp_path):
    res = ExperimentResult("dn", {})
    res.findings["bad"] = float("nan")
    emit_report(res, tmp_path)
    assert json.loads((tmp_path / "summary.json").read_text())["findings"]["bad"] is None


def test_dn_determinism_and_report_roundtrip(tmp_path):
    cfg = parse_config(DN_SMALL)
    paths = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        code = emit_report(run(cfg, workdir=str(out)), out)
        assert code == 0
        paths.append(out)
    first = (paths[0] / "summary.json").read_bytes()
    assert first == (paths[1] / "summary.json").read_bytes()
    assert (paths[0] / "timings.json").exists()
    res = load_result(paths[0])
    assert res.passed
    assert set(res.tables) == {"amplitude_sweep", "dn_pairs", "remainder_k_decay", "remainder_sweep"}
    again = tmp_path / "again"
    assert emit_report(res, again) == 0
    assert json.loads((again / "summary.json").read_text())["checks"] == json.loads(first)["checks"]


def test_cli_exit_codes(tmp_path, capsys):
    good = write(tmp_path, "dn.ini", DN_SMALL)
    assert main(["dn", good, "--out", str(tmp_path / "o1")]) == 0
    out = capsys.readouterr().out
    assert "PASS  flat_exactness" in out and "PASS  dn_symmetry" in out
    failing = write(tmp_path, "dn_fail.ini", DN_SMALL.replace("symmetry_max = 1e-8",
                                                              "symmetry_max = -1"))
    assert main(["dn", failing, "--out", str(tmp_path / "o2")]) == 1
    assert main(["mollifier", good, "--out", str(tmp_path / "o3")]) == 2
    bad = write(tmp_path, "bad.ini", "[experiment]\nscenario = dn\n[grid]\nn = 7\n")
    assert main(["dn", bad]) == 2
    assert main(["dn", str(tmp_path / "missing.ini")]) == 2
    assert main(["report", str(tmp_path / "o1")]) == 0
    assert main(["report", str(tmp_path / "nowhere")]) == 2


def test_cli_runtime_failure(tmp_path):
    cfg = write(tmp_path, "flow.ini", FLOW_SMALL.replace("[family]\n", "[family]\nbase_amplitude = 0.9\n"))
    assert main(["flowmap", cfg, "--out", str(tmp_path / "o")]) == 3


def test_flowmap_small_and_restart(tmp_path, caplog):
    cfg = parse_config(FLOW_SMALL)
    out = str(tmp_path / "flow")
    res = run(cfg, workdir=out)
    assert isinstance(res.findings["monotone_decrease"], bool)
    assert res.checks["D_n_monotone"]["value"] is res.findings["monotone_decrease"]
    manifests = [os.path.join(out, "trajectories", d, "manifest.json")
                 for d in ("base", "amplitude_1", "amplitude_2")]
    assert all(os.path.exists(m) for m in manifests)
    emit_report(res, out)
    first = open(os.path.join(out, "summary.json"), "rb").read()
    caplog.set_level("INFO", logger="wwlab.expcli")
    res2 = run(cfg, workdir=out)
    assert "reusing completed trajectory" in caplog.text
    emit_report(res2, out)
    assert open(os.path.join(out, "summary.json"), "rb").read() == first


def test_identical_family_gives_zero_distance(monkeypatch):
    cfg = parse_config(FLOW_SMALL)
    orig = data.family_member
    monkeypatch.setattr(experiments, "family_member",
                        lambda cfg_, grid, n, kind=None: orig(cfg_, grid, 0))
    res = run(cfg)
    assert all(r["D_n"] == 0.0 for r in res.tables["distance"].rows)
