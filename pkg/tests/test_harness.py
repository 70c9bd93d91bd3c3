import csv
import io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridq.harness import (KINDS, ConfigError, RunError, Scenario, parse_scenario, run,
                             run_suite, serialize_scenario, write_outputs)
from hybridq.harness import runner as runner_mod
from hybridq.harness.cli import main
from hybridq.errors import HybridQError

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

MINIMAL_JC = """\
[scenario]
kind = jc

[params]
g = 1.0
kappa = 0.0
cutoff = 4
"""


def rows(report):
    return list(csv.DictReader(io.StringIO(report.csv_text())))


# -- parsing --------------------------------------------------------------------------

def test_minimal_jc_scenario():
    s = parse_scenario(MINIMAL_JC)
    assert s.kind == "jc"
    assert s.name == "jc"
    assert dict(s.params) == {"g": 1.0, "kappa": 0.0, "cutoff": 4}
    assert s.sweep is None and s.seed == 0


def test_unknown_kind_has_location():
    with pytest.raises(ConfigError) as exc:
        parse_scenario("# header\n[scenario]\nkind = foo\n")
    err = exc.value
    assert err.code == "UNKNOWN_KIND"
    assert (err.line, err.column) == (3, 8)
    assert err.as_dict()["error"] == "UNKNOWN_KIND"


def test_sweep_with_five_values():
    s = parse_scenario("[scenario]\nkind = adiabatic-check\n[params]\ndelta = 10\n"
                       "g_cm = 1\ng_ca = 1\n[sweep]\nparameter = delta\n"
                       "values = 10, 20, 30, 40, 50\n")
    assert s.sweep[0] == "delta"
    assert len(s.sweep[1]) == 5
    assert [p[2].params["delta"] for p in s.points()] == [10.0, 20.0, 30.0, 40.0, 50.0]


@pytest.mark.parametrize("text, code", [
    (MINIMAL_JC + "g = 2.0\n", "DUPLICATE_KEY"),
    ("[scenario]\nkind = jc\n[params]\nkappa = 0.1\n", "MISSING_PARAMETER"),
    ("[params]\ng = 1\n", "MISSING_PARAMETER"),
    (MINIMAL_JC.replace("cutoff = 4", "cutoff = 1"), "OUT_OF_RANGE"),
    (MINIMAL_JC.replace("kappa = 0.0", "kappa = -1"), "OUT_OF_RANGE"),
    (MINIMAL_JC + "bogus = 1\n", "UNKNOWN_PARAMETER"),
    (MINIMAL_JC.replace("g = 1.0", "g = abc"), "BAD_VALUE"),
    (MINIMAL_JC.replace("g = 1.0", "g = nan"), "BAD_VALUE"),
    (MINIMAL_JC + "[sweep]\nparameter = nope\nvalues = 1, 2\n", "UNKNOWN_SWEEP_PARAMETER"),
    (MINIMAL_JC + "[outputs]\nobservables = p_g1, nope\n", "UNKNOWN_OUTPUT"),
    (MINIMAL_JC.replace("kind = jc", "kind = jc\nunit = furlongs"), "BAD_UNIT"),
])
def test_error_codes(text, code):
    with pytest.raises(ConfigError) as exc:
        parse_scenario(text)
    assert exc.value.code == code
    assert exc.value.line is not None


def test_error_codes_are_distinct_for_each_failure_class():
    codes = set()
    for text in (MINIMAL_JC + "g = 2\n", "[scenario]\nkind = jc\n", "[scenario]\nkind = x\n",
                 MINIMAL_JC.replace("cutoff = 4", "cutoff = 0")):
        with pytest.raises(ConfigError) as exc:
            parse_scenario(text)
        codes.add(exc.value.code)
    assert codes == {"DUPLICATE_KEY", "MISSING_PARAMETER", "UNKNOWN_KIND", "OUT_OF_RANGE"}


def test_units_convert_once():
    s = parse_scenario(MINIMAL_JC.replace("kind = jc", "kind = jc\nunit = 2pi*MHz")
                       + "t_max = 2.0\n")
    assert s.si["g"] == pytest.approx(2 * np.pi * 1e6)
    assert s.si["t_max"] == pytest.approx(2.0 / (2 * np.pi * 1e6))
    assert s.params["g"] == 1.0


def test_quality_factor_is_exact():
    s = parse_scenario((SCENARIO_DIR / "jc_quality_factor.ini").read_text())
    assert s.exact("omega_c") / s.exact("kappa") == Fraction(10 ** 6)
    rep = run(s.with_params(n_times=3, t_max=1e-6))
    assert rep.points[0][2].summary["quality_factor"] == 1e6


# -- round trip -----------------------------------------------------------------------

_pos = st.floats(1e-3, 1e3, allow_nan=False)


@st.composite
def scenarios(draw):
    kind = draw(st.sampled_from(["jc", "tavis", "adiabatic-check"]))
    if kind == "jc":
        params = {"g": draw(_pos), "kappa": draw(st.floats(0, 10)),
                  "cutoff": draw(st.integers(2, 30)), "detuning": draw(st.floats(-5, 5))}
        sweep_name = "g"
    elif kind == "tavis":
        params = {"n_spins": draw(st.integers(1, 8)), "g": draw(_pos)}
        sweep_name = "n_spins"
    else:
        params = {"delta": draw(st.floats(5, 500)), "g_cm": draw(_pos), "g_ca": draw(_pos)}
        sweep_name = "delta"
    sweep = None
    if draw(st.booleans()):
        strat = st.integers(1, 8) if sweep_name == "n_spins" else st.floats(5, 500)
        sweep = (sweep_name, tuple(draw(st.lists(strat, min_size=1, max_size=6))))
    obs = KINDS[kind].observables
    outputs = tuple(draw(st.lists(st.sampled_from(obs), unique=True, max_size=len(obs))))
    name = draw(st.from_regex(r"[A-Za-z0-9_.-]{1,12}", fullmatch=True))
    unit = draw(st.sampled_from(["1", "rad/s", "Hz", "2pi*kHz", "MHz"]))
    return Scenario(kind, name, params, draw(st.integers(0, 2 ** 31)), unit, sweep, outputs)


@given(scenarios())
@settings(max_examples=150)
def test_parse_serialize_round_trip(s):
    assert parse_scenario(serialize_scenario(s)) == s


def test_round_trip_with_program():
    s = parse_scenario((SCENARIO_DIR / "state_synthesis.ini").read_text())
    assert parse_scenario(serialize_scenario(s)) == s


# -- runs -----------------------------------------------------------------------------

def test_jc_trace_peaks_at_quarter_period():
    s = parse_scenario(MINIMAL_JC + "t_max = 3.141592653589793\nn_times = 201\n"
                       "[outputs]\nobservables = p_g1\n")
    table = rows(run(s))
    t = np.array([float(r["t"]) for r in table])
    p = np.array([float(r["p_g1"]) for r in table])
    assert list(table[0]) == ["t", "p_g1"]
    assert abs(t[np.argmax(p)] - np.pi / 2) <= t[1] - t[0]
    np.testing.assert_allclose(p, np.sin(t) ** 2, atol=1e-7)


def test_adiabatic_sweep_is_monotone():
    s = parse_scenario((SCENARIO_DIR / "adiabatic_sweep.ini").read_text())
    rep = run(s, threads=2)
    dev = {}
    for r in rows(rep):
        dev[int(r["sweep_index"])] = float(r["max_x_deviation"])
    values = [dev[i] for i in sorted(dev)]
    assert [float(v) for v in s.sweep[1]] == [10, 20, 50, 100]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_outputs_are_byte_identical_for_same_seed(tmp_path):
    s = parse_scenario((SCENARIO_DIR / "epr_cascade.ini").read_text())
    s = s.with_params(t_final=2.0, n_traj=20)
    a = write_outputs(run(s), tmp_path / "a")
    b = write_outputs(run(s), tmp_path / "b")
    assert a[0].read_bytes() == b[0].read_bytes()
    ja, jb = (json.loads(p.read_text())["result"] for p in (a[1], b[1]))
    assert ja == jb


def test_seed_changes_stochastic_summary():
    s = parse_scenario((SCENARIO_DIR / "epr_cascade.ini").read_text())
    s = s.with_params(t_final=2.0, n_traj=20)
    a = run(s, seed=1).points[0][2].summary
    b = run(s, seed=2).points[0][2].summary
    assert a != b


def test_thread_count_does_not_change_results():
    s = parse_scenario((SCENARIO_DIR / "tavis_collective.ini").read_text())
    assert run(s, threads=1).csv_text() == run(s, threads=4).csv_text()


def test_csv_columns_depend_only_on_kind_and_outputs():
    base = MINIMAL_JC + "n_times = 11\n[outputs]\nobservables = n_cav, p_e0\n"
    a = run(parse_scenario(base))
    b = run(parse_scenario(base.replace("g = 1.0", "g = 0.3").replace("cutoff = 4",
                                                                         "cutoff = 7")))
    assert a.header == b.header == ["t", "n_cav", "p_e0"]
    full = run(parse_scenario(MINIMAL_JC + "n_times = 11\n"))
    assert full.header == ["t"] + list(KINDS["jc"].observables)


def test_every_example_scenario_parses():
    files = sorted(SCENARIO_DIR.glob("*.ini"))
    assert len(files) >= 10
    kinds = {parse_scenario(f.read_text()).kind for f in files}
    assert kinds == set(KINDS)


def test_run_error_identifies_point(monkeypatch):
    def boom(s, seed):
        if s.params["g"] > 1.5:
            raise HybridQError("integration failed")
        return runner_mod.run_jc(s, seed)

    monkeypatch.setitem(runner_mod.RUNNERS, "jc", boom)
    s = parse_scenario(MINIMAL_JC + "[sweep]\nparameter = g\nvalues = 1, 2\n")
    with pytest.raises(RunError) as exc:
        run(s)
    assert exc.value.point == 1
    assert exc.value.as_dict()["sweep_value"] == 2.0


# -- checks ---------------------------------------------------------------------------

def test_check_core_invariants_pass():
    results = run_suite("core-invariants")
    assert results and all(r.passed for r in results)


def test_check_epr_includes_record_independence():
    names = [r.name for r in run_suite("epr")]
    assert "record_independence" in names


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suite("nope")


# -- CLI ------------------------------------------------------------------------------

def test_cli_simulate_writes_files(tmp_path, capsys):
    code = main(["simulate", str(SCENARIO_DIR / "jc_vacuum_rabi.ini"),
                 "--out-dir", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "jc_vacuum_rabi.csv").exists()
    summary = json.loads((tmp_path / "jc_vacuum_rabi.summary.json").read_text())
    assert summary["result"]["scenario"]["kind"] == "jc"


def test_cli_seed_flag(tmp_path):
    path = tmp_path / "e.ini"
    path.write_text((SCENARIO_DIR / "epr_cascade.ini").read_text()
                    .replace("n_traj = 200", "n_traj = 10"))
    main(["simulate", str(path), "--out-dir", str(tmp_path / "a"), "--seed", "4"])
    main(["simulate", str(path), "--out-dir", str(tmp_path / "b"), "--seed", "4"])
    a = (tmp_path / "a" / "epr_cascade.csv").read_bytes()
    assert a == (tmp_path / "b" / "epr_cascade.csv").read_bytes()


def test_cli_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nkind = foo\n")
    assert main(["simulate", str(bad), "--out-dir", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["error"] == "UNKNOWN_KIND"
    assert err["error"]["line"] == 2


def test_cli_unreadable_file(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "missing.ini")]) == 2
    assert json.loads(capsys.readouterr().err)["error"]["error"] == "UNREADABLE_FILE"


def test_cli_sweep_requires_sweep_section(tmp_path, capsys):
    code = main(["sweep", str(SCENARIO_DIR / "jc_vacuum_rabi.ini"), "--out-dir", str(tmp_path)])
    assert code == 2
    assert "NO_SWEEP" in capsys.readouterr().err


def test_cli_sweep_runs(tmp_path):
    code = main(["sweep", str(SCENARIO_DIR / "qnd_check.ini"), "--out-dir", str(tmp_path),
                 "--threads", "2"])
    assert code == 0


def test_cli_run_error_exit_code(tmp_path, monkeypatch, capsys):
    def boom(s, seed):
        raise HybridQError("diverged")

    monkeypatch.setitem(runner_mod.RUNNERS, "jc", boom)
    code = main(["simulate", str(SCENARIO_DIR / "jc_vacuum_rabi.ini"),
                 "--out-dir", str(tmp_path)])
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"]["error"] == "RUN_FAILED"


def test_cli_check(capsys):
    assert main(["check", "core-invariants"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out


def test_cli_check_failure_with_tight_tolerance(capsys):
    assert main(["check", "jc", "--tolerance-scale", "1e-12"]) == 1
    assert "[FAIL]" in capsys.readouterr().out


def test_cli_unknown_suite(capsys):
    assert main(["check", "nope"]) == 2
    assert "UNKNOWN_SUITE" in capsys.readouterr().err


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_cli_explain(kind, capsys):
    assert main(["explain", kind]) == 0
    out = capsys.readouterr().out
    assert out.startswith(kind)
    for p in KINDS[kind].params:
        assert p.name in out


def test_cli_explain_unknown_kind(capsys):
    assert main(["explain", "foo"]) == 2
    assert "UNKNOWN_KIND" in capsys.readouterr().err
