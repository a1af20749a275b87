import json
from fractions import Fraction as F
from pathlib import Path

import pytest

from finmart.ensemble import EmpiricalVerdict, probability_verdict
from finmart.harness.cli import run
from finmart.harness.config import ConfigError, parse_config
from finmart.harness.drivers import THEOREMS, run_theorem
from finmart.harness.report import build_report, dumps, verdict_passes, write_report

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def bound(capsys, *argv):
    code = run(["bound", *argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out else None)


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.mark.parametrize("argv,key,expected", [
    (["N_K", "1", "1", "1"], "N_K", 2048),
    (["rs-Z", "1", "2", "1", "1/2", "1/2"], "Z", 301989888),
    (["zeta", "c=1", "r=7"], "zeta", 4096),
    (["phi", "1", "1/2", "1", "0", "0"], "phi", 7),
    (["theta", "1/2", "0", "2"], "theta", 7),
    (["gamma-ball", "2", "1", "0"], "gamma", 9),
    (["mart-fluct", "1", "1/2", "1/2", "4"], "bound", 131072),
])
def test_bound_outputs(capsys, argv, key, expected):
    code, report = bound(capsys, *argv)
    assert code == 0 and report["schema_version"] == 1
    assert int(report["bounds"][key]) == expected


def test_bound_rationals_are_exact(capsys):
    _, report = bound(capsys, "ville", "1", "2", "1/10")
    assert report["bounds"]["bound"] == "11/20"
    _, report = bound(capsys, "dcrs", "1", "1/4", "3/4", "0", "1/10")
    assert report["bounds"]["bound"] == "21/10"
    _, report = bound(capsys, "km-closedness", "0")
    assert (report["bounds"]["alpha1"], report["bounds"]["alpha2"]) == (11, 11)


@pytest.mark.parametrize("argv", [["no-such-bound"], ["N_K", "1", "1"], ["N_K", "1", "x", "1"],
                                  ["N_K", "1", "0", "1"], ["zeta", "q=3", "1"]])
def test_bound_errors_exit_2(capsys, argv):
    assert run(["bound", *argv]) == 2
    assert "error" in capsys.readouterr().err


def test_config_parsing():
    cfg = parse_config("[experiment]\nkind = verify\ntheorem = ville\n[ensemble]\nM = 5\nN = 7\n"
                       "master_seed = 3\n[params]\neps = 1/10  # comment\nalpha = 0.25\n")
    assert (cfg.M, cfg.N, cfg.master_seed) == (5, 7, 3)
    assert cfg.rational("eps") == F(1, 10) and cfg.rational("alpha") == F(1, 4)
    assert cfg.integer("k", 4) == 4
    with pytest.raises(ConfigError):
        cfg.rational("missing")


@pytest.mark.parametrize("text", [
    "",
    "[experiment]\nkind = dance\n",
    "[experiment]\nkind = verify\n[ensemble]\nM = 0\n",
    "[experiment]\nkind = verify\n[ensemble]\nM = many\n",
    "[experiment]\nkind = verify\n[ensemble]\nmaster_seed = -1\n",
    "[experiment]\nkind = delta\n[budget]\nsteps = 0\n",
    "not an ini file",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_bad_rational_value():
    cfg = parse_config("[experiment]\nkind = verify\n[params]\neps = one tenth\n")
    with pytest.raises(ConfigError):
        cfg.rational("eps")


def test_unknown_theorem():
    cfg = parse_config("[experiment]\nkind = verify\n")
    with pytest.raises(ConfigError):
        run_theorem("riemann", cfg)


def test_theorem_ids_are_listed_in_help(capsys):
    with pytest.raises(SystemExit):
        run(["verify", "--help"])
    out = capsys.readouterr().out
    for theorem in ("dcrs-ineq", "ville", "mart-fluct", "rs-fluct", "km-fejer", "km-liminf",
                    "metastability"):
        assert theorem in THEOREMS and theorem in out


def test_report_verdict_rules():
    ok = probability_verdict("a", 0, 10, F(1, 2))
    bad = probability_verdict("b", 9, 10, F(1, 2))
    na = EmpiricalVerdict("c", 1.0, 1.0, 1.0, 0.0, True, "point", 1, "not-applicable", {})
    assert build_report("verify", {}, 1, verdicts=[ok, na])["pass"]
    assert not build_report("verify", {}, 1, verdicts=[ok, bad])["pass"]
    assert not build_report("verify", {}, 1, verdicts=[ok.with_premise("failed")])["pass"]
    assert verdict_passes(na.to_dict())


def test_reports_are_deterministic_and_atomic(tmp_path):
    report = build_report("bound", {"x": F(1, 3)}, 7, bounds={"huge": 2**100, "q": F(2, 3)})
    text = dumps(report)
    assert text == dumps(json.loads(text)) and "wall" not in text
    target = tmp_path / "out" / "r.json"
    write_report(report, target)
    assert target.read_text() == text
    assert [p.name for p in target.parent.iterdir()] == ["r.json"]


VERIFY_SMALL = """
[experiment]
kind = verify
theorem = {theorem}

[ensemble]
M = {M}
N = {N}
master_seed = 11

[process]
{process}

[params]
{params}
"""


def verify(tmp_path, capsys, theorem, process="name = multiplicative", params="", M=2000, N=40):
    path = write(tmp_path, VERIFY_SMALL.format(theorem=theorem, process=process, params=params,
                                               M=M, N=N))
    report_path = tmp_path / f"{theorem}.json"
    code = run(["--report", str(report_path), "verify", theorem, "--config", str(path)])
    capsys.readouterr()
    return code, json.loads(report_path.read_text())


@pytest.mark.parametrize("theorem,process,params", [
    ("doob-decomp", "name = polya", ""),
    ("dcrs-ineq", "name = multiplicative", "alpha = 1/4\nbeta = 3/4\neps = 1/10"),
    ("stopped", "name = bounded_walk", ""),
    ("integral", "name = multiplicative", ""),
    ("ville", "name = polya", "eps = 1/10"),
    ("learnable-mct", "name = multiplicative", ""),
    ("mart-fluct", "name = polya", ""),
    ("rs-fluct", "name = rs_canonical", ""),
])
def test_verify_drivers_pass(tmp_path, capsys, theorem, process, params):
    code, report = verify(tmp_path, capsys, theorem, process, params)
    failing = [v["label"] for v in report["verdicts"] if not verdict_passes(v)]
    assert code == 0 and report["pass"], failing
    assert all("premise" in v for v in report["verdicts"])


def test_failed_premise_blocks_a_pass(tmp_path, capsys):
    code, report = verify(tmp_path, capsys, "stopped", "name = drift\nincrement = 1")
    assert code == 1 and not report["pass"]
    assert any(v["premise"] == "failed" and not v["pass"] for v in report["verdicts"])


def test_verify_theorem_mismatch_exits_2(tmp_path, capsys):
    path = write(tmp_path, VERIFY_SMALL.format(theorem="ville", process="name = polya",
                                               params="", M=10, N=5))
    assert run(["verify", "dcrs-ineq", "--config", str(path)]) == 2


def test_verify_reports_reproduce(tmp_path, capsys):
    _, first = verify(tmp_path, capsys, "ville", "name = polya", "eps = 1/10", M=500)
    _, second = verify(tmp_path, capsys, "ville", "name = polya", "eps = 1/10", M=500)
    assert dumps(first) == dumps(second)


def test_simulate_writes_trajectory(tmp_path, capsys):
    traj = tmp_path / "traj.csv"
    path = write(tmp_path, f"[experiment]\nkind = simulate\n[ensemble]\nM = 50\nN = 5\n"
                           f"[process]\nname = polya\n[output]\ntrajectory = {traj}\npaths = 2\n")
    assert run(["simulate", "--config", str(path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["summary"]["mean"][0] == 0.5
    assert traj.read_text().splitlines()[0] == "path,n,value"
    assert len(traj.read_text().splitlines()) == 1 + 2 * 6


def test_delta_finite_and_budget_exit_codes(tmp_path, capsys):
    report_path = tmp_path / "delta.json"
    assert run(["--report", str(report_path), "delta", "--config",
                str(CONFIGS / "delta_finite.ini")]) == 0
    report = json.loads(report_path.read_text())
    assert report["pass"] and report["delta"]["delta"] is not None
    assert run(["--report", str(report_path), "delta", "--config",
                str(CONFIGS / "delta_euclidean.ini")]) == 2
    report = json.loads(report_path.read_text())
    assert report["delta"]["delta"] is None
    assert report["delta"]["budget_exceeded"]["intermediate"]
    assert run(["--budget", "nonsense", "delta", "--config",
                str(CONFIGS / "delta_finite.ini")]) == 2


def test_km_command_writes_csvs(tmp_path, capsys):
    path = write(tmp_path, "[experiment]\nkind = km\n[ensemble]\nM = 500\nN = 40\n"
                           "[km]\nfamily = projections\nx0 = 1, 1\nc = 3/2\n")
    code = run(["km", "--config", str(path), "--csv-dir", str(tmp_path / "csv")])
    report = json.loads(capsys.readouterr().out)
    assert code == 0 and report["pass"]
    for name in ("distance_decay.csv", "fejer_per_m.csv", "trajectory.csv"):
        assert (tmp_path / "csv" / name).exists()
    assert report["bounds"]["zeta(r=7)"] == 64 * 9 // 4 * 64 and report["bounds"]["b0"] == "10"


def test_timing_goes_to_stderr(capsys):
    assert run(["--timing", "bound", "N_K", "1", "1", "1"]) == 0
    captured = capsys.readouterr()
    assert "elapsed" in captured.err and "elapsed" not in captured.out
