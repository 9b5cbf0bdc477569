import csv
import json
import math

import pytest

from pwchaos import cli
from pwchaos.melnikov import C1


def _run(tmp_path, *argv):
    return cli.main([*argv, "--outdir", str(tmp_path), "--quiet"])


def test_analyze(tmp_path, config_dir):
    assert _run(tmp_path, "analyze", str(config_dir / "ex1.cfg")) == 0
    out = json.loads((tmp_path / "analyze.json").read_text())
    k = out["constants"]
    assert (k["K0"], k["nu0"], k["sigmaLo"], k["sigmaHi"]) == (3.0, 1.0, 0.5, 0.5)
    assert out["report"]["lambdaUPlus"] == pytest.approx(1.0)
    assert out["ogap"] == 43 and out["hypothesesHold"]
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["subcommand"] == "analyze" and man["outputs"] == ["analyze.json"]
    assert len(man["configHash"]) == 64 and man["parameters"]["eps"] == 1e-3


def test_melnikov_csv_matches_closed_form(tmp_path, config_dir):
    assert _run(tmp_path, "melnikov", str(config_dir / "ex1.cfg"), "--from", "0", "--to", "1",
                "--step", "0.01") == 0
    rows = list(csv.DictReader((tmp_path / "melnikov.csv").open()))
    assert list(rows[0]) == ["tau", "M", "Mprime", "err"]
    assert len(rows) == 101
    err = max(abs(float(r["M"]) - C1 * math.sin(2 * math.pi * float(r["tau"]))) for r in rows)
    assert err < 1e-6
    # 17 significant digits round-trip exactly
    assert all(float(r["M"]) == float(format(float(r["M"]), ".17g")) for r in rows)


def test_outputs_are_deterministic(tmp_path, config_dir):
    a, b = tmp_path / "a", tmp_path / "b"
    for d, seed in ((a, "1"), (b, "7")):
        assert cli.main(["melnikov", "ex1", "--from", "0", "--to", "0.5", "--step", "0.1",
                         "--deriv", "--mode", "FullTrace", "--seed", seed, "--outdir", str(d),
                         "--quiet"]) == 0
    assert (a / "melnikov.csv").read_bytes() == (b / "melnikov.csv").read_bytes()


def test_integrate(tmp_path, ex1):
    x0 = ",".join(repr(v) for v in ex1[1](-3.0))
    assert _run(tmp_path, "integrate", "ex1", "--x0", x0, "--t0", "-3", "--t1", "3") == 0
    rows = list(csv.DictReader((tmp_path / "integrate.csv").open()))
    assert list(rows[0]) == ["t", "x", "y", "region", "eventFlag"]
    assert rows[0]["region"] == "Minus" and rows[-1]["region"] == "Plus"
    assert sum(int(r["eventFlag"]) for r in rows) == 1


def test_loopmap(tmp_path):
    assert _run(tmp_path, "loopmap", "unperturbed", "--samples", "3") == 0
    rows = list(csv.DictReader((tmp_path / "loopmap.csv").open()))
    assert list(rows[0])[:7] == ["d", "tHalf", "t1", "d1", "boundLo", "boundHi", "pass"]
    assert [float(r["d"]) for r in rows] == pytest.approx([1e-4, 1e-6, 1e-8])
    assert all(r["pass"] == "1" for r in rows)


def test_sequence(tmp_path):
    assert _run(tmp_path, "sequence", "ex1", "--spacing", "43", "--count", "1",
                "--profile-step", "0.1") == 0
    out = json.loads((tmp_path / "sequence.json").read_text())
    assert out["T"] == {"-1": -43.0, "0": 0.0, "1": 43.0}
    assert out["ogapActual"] == 43.0
    assert {"brackets", "B", "lambda1"} <= set(out)


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("PWCHAOS_THREADS", "3")
    args = cli.build_parser().parse_args(["melnikov", "ex1", "--from", "0", "--to", "1",
                                          "--step", "0.5"])
    assert cli._threads(args) == 3
    args.threads = 2
    assert cli._threads(args) == 2


def test_computation_error_exit_code(tmp_path, config_dir, capsys):
    code = _run(tmp_path, "shadow", str(config_dir / "f2_violator_scenario3.cfg"),
                "--symbols", "111")
    assert code == 1
    diag = json.loads(capsys.readouterr().err)
    assert diag["error"] == "HypothesisFailure" and diag["verdicts"]["F2"] is False


def test_usage_errors_exit_2(tmp_path):
    for argv in (["bogus"], ["melnikov", "no-such-config", "--from", "0", "--to", "1",
                             "--step", "0.1"], ["analyze"], ["integrate", "ex1", "--x0", "1",
                                                            "--t1", "1"]):
        with pytest.raises(SystemExit) as info:
            cli.main([*argv, "--outdir", str(tmp_path)])
        assert info.value.code == 2


def test_builtin_with_parameters():
    s, hom, text = cli.load_config("exgen:r=3")
    assert s.r == 3.0 and "[homoclinic]" in text


def test_csv_number_format():
    assert cli._num(0.1) == "0.10000000000000001"
    assert cli._num(True) == "1" and cli._num(float("nan")) == "nan"
