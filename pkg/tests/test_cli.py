import csv
import json

import pytest
from hypothesis import given, settings, strategies as st

from cutstokes import __version__
from cutstokes.cli import CSV_HEADER, main, run
from cutstokes.config import ParseError, RunConfig, ValidationError, parse_config


def test_empty_config_defaults():
    cfg = parse_config("")
    assert (cfg.gamma, cfg.gamma_u_minus, cfg.gamma_u_plus, cfg.gamma_p_minus, cfg.gamma_p_plus) == (40, 0.05, 0.05, 0.05, 0.05)
    assert (cfg.alpha, cfg.beta, cfg.mu_minus, cfg.mu_plus, cfg.f) == (0, 1, 1, 10, 10)
    assert cfg.study == "convergence" and cfg.resolved_n_list() == (4, 8, 16, 32)
    assert cfg.resolved_n_list(64) == (4, 8, 16, 32, 64)


def test_weights_must_sum_to_one():
    with pytest.raises(ValidationError) as exc:
        parse_config("alpha=0.5 beta=0.6")
    assert exc.value.code == "VALIDATION_ERROR" and "alpha + beta" in str(exc.value)


def test_convergence_config():
    cfg = parse_config("study=convergence n_list=4,8,16,32")
    assert cfg.study == "convergence" and cfg.n_list == (4, 8, 16, 32)


def test_newlines_comments_aliases():
    cfg = parse_config("study=slip  # sweep\nf_list=0.5,1,2\ngamma_u=0.1\nmu=2,20\nc=0.1,-0.2\n")
    assert cfg.f_list == (0.5, 1.0, 2.0)
    assert cfg.gamma_u_minus == cfg.gamma_u_plus == 0.1
    assert (cfg.mu_minus, cfg.mu_plus, cfg.c1, cfg.c2) == (2, 20, 0.1, -0.2)


def test_json_config():
    cfg = parse_config('{"study": "position", "k_list": [1, 2], "dump_solution": true}')
    assert cfg.k_list == (1, 2) and cfg.dump_solution is True


@pytest.mark.parametrize("text,line,key", [
    ("foo=1", 1, "foo"),
    ("study=single\nn=abc", 2, "n"),
    ("gamma", 1, None),
    ("gamma=", 1, "gamma"),
    ("c=1", 1, "c"),
    ("dump_solution=maybe", 1, "dump_solution"),
])
def test_parse_errors(text, line, key):
    with pytest.raises(ParseError) as exc:
        parse_config(text)
    assert exc.value.code == "PARSE_ERROR"
    assert exc.value.line == line and exc.value.key == key


@pytest.mark.parametrize("text", [
    "gamma=0", "gamma=-1", "gamma_p_minus=-0.1", "mu_minus=10 mu_plus=1", "f=0", "n=6",
    "n_list=4,16,8", "n_list=3,6", "study=unknown", "study=viscosity mu_plus_list=0.5,10",
    "study=slip f_list=1,-1", "tol=0", "alpha=-0.5 beta=1.5",
])
def test_validation_errors(text):
    with pytest.raises(ValidationError):
        parse_config(text)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0.01, 100), st.floats(0, 1))
def test_valid_configs_roundtrip(alpha, gamma, gu):
    cfg = parse_config(f"alpha={alpha!r} beta={1 - alpha!r} gamma={gamma!r} gamma_u={gu!r}")
    assert cfg.alpha == alpha and cfg.gamma == gamma and cfg.gamma_u_plus == gu


def _read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_convergence(tmp_path):
    cfg = parse_config("study=convergence n_list=4,8 dump_solution=true dump_points=5")
    assert run(cfg, str(tmp_path / "a")) == 0
    rows = _read(tmp_path / "a" / "results.csv")
    assert rows[0] == CSV_HEADER
    assert len(rows) == 3
    first, second = (dict(zip(rows[0], r)) for r in rows[1:])
    assert first["eoc_l2_u"] == first["eoc_h1w_u"] == first["eoc_l2w_p"] == ""
    assert float(second["eoc_l2_u"]) > 2 and second["status"] == "OK"
    assert first["wall_ms"] == ""
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["version"] == __version__ and meta["config"]["n_list"] == [4, 8]
    assert meta["failed"] == 0 and len(meta["cases"]) == 2
    assert "scaled" in meta["scaled_error"]
    dump = (tmp_path / "a" / "solution_n8.txt").read_text().splitlines()
    assert dump[0] == "# x y phase u1 u2 p" and len(dump) == 26
    # byte-identical rerun, also with concurrent sweep entries
    assert run(cfg, str(tmp_path / "b"), threads=2) == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_run_position_rows(tmp_path):
    cfg = parse_config("study=position n=8")
    assert run(cfg, str(tmp_path)) == 0
    rows = [dict(zip(CSV_HEADER, r)) for r in _read(tmp_path / "results.csv")[1:]]
    assert [int(r["k"]) for r in rows] == list(range(1, 21))
    assert all(r["study"] == "position" and r["status"] == "OK" for r in rows)


def test_run_failure_exit_code(tmp_path):
    cfg = parse_config("study=single n=4 tol=1e-30")
    assert run(cfg, str(tmp_path)) == 1
    row = dict(zip(CSV_HEADER, _read(tmp_path / "results.csv")[1]))
    assert row["status"] == "NON_CONVERGED" and row["err_l2_u"] == ""


def test_run_timings_opt_in(tmp_path):
    cfg = parse_config("study=single n=4 record_timings=true k=3")
    assert run(cfg, str(tmp_path)) == 0
    row = dict(zip(CSV_HEADER, _read(tmp_path / "results.csv")[1]))
    assert float(row["wall_ms"]) > 0 and row["k"] == "3"
    assert float(row["c1"]) != 0


def test_n_max(tmp_path):
    with pytest.raises(ValidationError):
        run(parse_config("study=convergence n_list=4,64"), str(tmp_path))
    with pytest.raises(ValidationError):
        run(parse_config("study=single n=64"), str(tmp_path), n_max=32)


def test_main_entry(tmp_path, monkeypatch, capsys):
    cfgfile = tmp_path / "c.cfg"
    cfgfile.write_text("study=single n=4\n")
    monkeypatch.setenv("CUTSTOKES_THREADS", "2")
    assert main(["run", str(cfgfile), "--out", str(tmp_path / "o")]) == 0
    meta = json.loads((tmp_path / "o" / "meta.json").read_text())
    assert meta["threads"] == 2
    assert main(["run", str(cfgfile), "--out", str(tmp_path / "o"), "--threads", "1"]) == 0
    assert json.loads((tmp_path / "o" / "meta.json").read_text())["threads"] == 1
    cfgfile.write_text("bogus=1\n")
    assert main(["run", str(cfgfile)]) == 2
    assert "PARSE_ERROR" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2
