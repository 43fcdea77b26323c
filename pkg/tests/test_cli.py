import json
import subprocess
import sys
import time
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adjoint_mather import ConfigError
from adjoint_mather.artifacts import format_value, parse_value, read_csv, write_csv
from adjoint_mather.checks import evaluate, row_checks, sort_rows
from adjoint_mather.cli import main, recheck
from adjoint_mather.config import load_config, parse_config
from adjoint_mather.scenarios import SCENARIOS, Expectations, build_model, list_scenarios, resolve_P


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_catalog_has_the_eight_builtins(capsys):
    names = [s["name"] for s in list_scenarios()]
    assert names == ["free", "pendulum", "quasiconvex-square", "radial", "onedim-nonconvex",
                     "conserved-sum", "nonuniqueness", "counterexample"]
    assert main(["scenarios", "--json"]) == 0
    listed = json.loads(capsys.readouterr().out)
    assert listed == json.loads(json.dumps(list_scenarios()))
    assert all(s["topic"] for s in listed)


def test_every_scenario_builds():
    for s in SCENARIOS.values():
        model = build_model(s.model)
        assert resolve_P(model, s.P)


def test_config_defaults_from_scenario(tmp_path):
    cfg = load_config(write(tmp_path, 'scenario = "pendulum"\n'))
    assert cfg.epsilons == (0.4, 0.2, 0.1, 0.05, 0.025) and cfg.resolution == (1024,)
    assert parse_config(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "text,msg",
    [
        ('scenario = "free"\nepsilons = [0.0]\n', "epsilon must be positive"),
        ('scenario = "free"\nepsilons = [-0.1]\n', "epsilon must be positive"),
        ('scenario = "free"\nepsilons = []\n', "nonempty"),
        ('scenario = "free"\ncolour = 1\n', "unknown config keys"),
        ('scenario = "nope"\n', "available"),
        ('scenario = "free"\n[solver]\nspeed = 2\n', "unknown solver keys"),
        ('scenario = "free"\n[sde]\nsteps = -1\n', "positive integer"),
        ('scenario = "free"\nresolution = [4]\n', "at least 8"),
        ('scenario = "custom"\n', "model"),
        ('scenario = "custom"\nepsilons=[0.1]\nresolution=[32]\nP=[0.0]\n[model]\nkind = "mechanical"\nmass = 2\n',
         "unknown keys"),
        ('scenario = "free"\nP = "branch"\n', "counterexample"),
        ("scenario = \n", "cannot parse"),
    ],
)
def test_config_rejections(tmp_path, text, msg):
    with pytest.raises(ConfigError, match=msg):
        cfg = load_config(write(tmp_path, text))
        resolve_P(build_model(cfg.model), cfg.P)


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["run", str(write(tmp_path, 'scenario = "free"\nepsilons = [0.0]\n'))]) == 4
    assert "epsilon must be positive" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == 4


def test_free_run_end_to_end(tmp_path):
    cfg = write(tmp_path, f'scenario = "free"\noutput = "{tmp_path / "out"}"\n')
    t0 = time.perf_counter()
    assert main(["run", str(cfg)]) == 0
    assert time.perf_counter() - t0 < 5.0
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["exit_code"] == 0 and not man["failures"]
    for name in man["files"].values():
        assert (tmp_path / "out" / name).exists()
    rows = read_csv(tmp_path / "out" / "rows.csv")
    assert [r["P1"] for r in rows] == [0.0, 0.5, 1.0]
    assert all(abs(r["hbar"] - r["P1"] ** 2 / 2) < 1e-8 for r in rows)
    assert recheck(tmp_path / "out" / "manifest.json")[0] == 0


def test_check_detects_tampering(tmp_path):
    out = tmp_path / "out"
    main(["run", str(write(tmp_path, f'scenario = "free"\noutput = "{out}"\n'))])
    man = json.loads((out / "manifest.json").read_text())
    first = next(iter(man["checks"]["rows"]))
    man["checks"]["rows"][first]["free_hbar"] = False
    (out / "manifest.json").write_text(json.dumps(man))
    code, problems = recheck(out / "manifest.json")
    assert code == 2 and any("disagree" in p for p in problems)
    (out / "rows.csv").unlink()
    assert recheck(out / "manifest.json")[0] == 2


def test_sweep_is_byte_identical_and_order_independent(tmp_path, monkeypatch):
    text = 'scenario = "pendulum"\nepsilons = [0.1, 0.4, 0.2]\nP = [2.0, 0.0]\nresolution = [256]\nseed = 7\n'
    cfg = write(tmp_path, text)
    monkeypatch.setenv("ADJOINT_MATHER_WORKERS", "3")
    assert main(["sweep", str(cfg), "-o", str(tmp_path / "a")]) in (0, 2)
    assert main(["run", str(cfg), "-o", str(tmp_path / "b")]) in (0, 2)
    for f in ("rows.csv", "modes.csv", "weak_kam.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rows = read_csv(tmp_path / "a" / "rows.csv")
    assert [(r["eps"], r["P1"]) for r in rows] == [(0.4, 0.0), (0.4, 2.0), (0.2, 0.0), (0.2, 2.0), (0.1, 0.0), (0.1, 2.0)]


def test_console_script_module_entry(tmp_path):
    res = subprocess.run([sys.executable, "-m", "adjoint_mather.cli", "scenarios"], capture_output=True, text=True)
    assert res.returncode == 0 and "counterexample" in res.stdout


@given(st.floats(allow_nan=False))
def test_csv_float_format_round_trips(x):
    assert parse_value(format_value(x)) == x


def test_csv_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.1, "c": "ok", "d": float("nan")}]
    write_csv(tmp_path / "t.csv", ["a", "b", "c", "d"], rows)
    back = read_csv(tmp_path / "t.csv")[0]
    assert back["a"] == 1 and back["b"] == 0.1 and back["c"] == "ok" and back["d"] != back["d"]
    assert (tmp_path / "t.csv").read_text().splitlines()[1] == "1,1.0000000000000001e-01,ok,nan"


def test_failed_rows_are_marked():
    rows = [{"eps": 0.1, "P1": 0.0, "status": "solver-failure"}]
    verdict = evaluate(rows, Expectations(), 1, True)
    assert verdict["solver_failures"] == 1 and not verdict["all_pass"]
    assert row_checks(rows[0], Expectations(), 1) == {"solved": False}


def test_sort_rows():
    rows = [{"eps": 0.1, "P1": 1.0}, {"eps": 0.4, "P1": 2.0}, {"eps": 0.1, "P1": -1.0}]
    assert [(r["eps"], r["P1"]) for r in sort_rows(rows, 1)] == [(0.4, 2.0), (0.1, -1.0), (0.1, 1.0)]
