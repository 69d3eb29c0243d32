from __future__ import annotations

import csv
import io
import json

import pytest

from helpers import quartic_kappa_it
from kahlerflow import cli


def run(tmp_path, command, cfg, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if isinstance(cfg, dict) else cfg)
    out = tmp_path / (name + ".out")
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    text = out.read_text() if out.exists() else None
    return code, text


def load(text):
    return json.loads(text)


# ---------------------------------------------------------------------------
# config parsing


@pytest.mark.parametrize("v,expect", [(2, 2), ([0.5, -1], 0.5 - 1j), ("0.3 + 2*i", 0.3 + 2j), ("i", 1j)])
def test_to_complex(v, expect):
    assert cli.to_complex(v) == expect


def test_to_complex_rejects_symbols():
    with pytest.raises(ValueError):
        cli.to_complex("x + 1")


def test_taus_defaults():
    mk = lambda **kw: cli.RunConfig.model_validate({"model": {"name": "linear"}, **kw})
    assert mk().taus() == [0j]
    assert mk(t=0.5).taus() == [0.5j]
    assert mk(tau=[1, 0]).taus() == [1]
    assert mk(tau=[1, 1], t=2).taus() == [2 + 2j]
    assert mk(tau_sweep={"start": 0, "stop": [0, 1], "num": 3}).taus() == [0, 0.5j, 1j]


@pytest.mark.parametrize(
    "cfg",
    [
        {"model": {"name": "linear"}, "bogus": 1},
        {"model": {"name": "linear", "extra": 1}},
        {"model": {"name": "nope"}},
        {"model": {"name": "linear", "tau0": [0, -1]}},
        {"model": {"name": "linear"}, "fd_step": -1e-3},
        {"model": {"name": "linear"}, "ode_tol": 0},
        {"model": {"name": "linear"}, "order": 99},
        {"model": {"name": "linear"}, "tau": 1, "tau_sweep": {"start": 0, "stop": 1, "num": 2}},
        {"model": {"name": "linear"}, "t_samples": [0.2, 0.1]},
        {"model": {"name": "linear"}, "grid": {"lo": [0, 0, 0]}},
        {"model": {"name": "separable", "h": "y^"}, "t": 0.1},
        {"model": {"name": "tstark-su2"}},
    ],
)
def test_config_errors_exit_2(tmp_path, cfg, capsys):
    code, text = run(tmp_path, "evolve", cfg)
    assert code == 2 and text is None
    assert "configuration error" in capsys.readouterr().err


def test_unreadable_config_exit_2(tmp_path):
    assert run(tmp_path, "evolve", "{not json")[0] == 2
    assert cli.main(["evolve", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["frobnicate", "--config", "x"]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    cfg = {"model": {"name": "quartic"}, "t": 1.0, "grid": {"lo": 1e80, "hi": 2e80, "count": 2}, "order": 4}
    code, text = run(tmp_path, "evolve", cfg)
    assert code == 3 and text is None
    err = capsys.readouterr().err
    assert "numerical failure" in err and "x=1e+80" in err


# ---------------------------------------------------------------------------
# commands


def test_evolve_identity_at_tau_zero(tmp_path):
    code, text = run(tmp_path, "evolve", {"model": {"name": "quartic"}, "grid": {"count": 3}})
    assert code == 0
    for r in load(text)["records"]:
        assert r["z0"] == {"re": r["x"], "im": r["y"]}
        assert r["class"] == "kahler"


def test_evolve_linear_sweep_trichotomy(tmp_path):
    cfg = {"model": {"name": "linear"}, "tau_sweep": {"start": [0, -2], "stop": [0, 0], "num": 5}, "grid": {"count": 2}}
    code, text = run(tmp_path, "evolve", cfg)
    assert code == 0
    by_tau = {}
    for r in load(text)["records"]:
        by_tau.setdefault(r["tau"]["im"], set()).add(r["class"])
    assert by_tau == {-2.0: {"pseudo_kahler"}, -1.5: {"pseudo_kahler"}, -1.0: {"real"}, -0.5: {"kahler"}, 0.0: {"kahler"}}


def test_evolve_quartic_large_box_shows_regions(tmp_path):
    cfg = {"model": {"name": "quartic"}, "t": 1.0, "grid": {"lo": -3, "hi": 3, "count": 31}, "order": 48}
    code, text = run(tmp_path, "evolve", cfg)
    counts = load(text)["summary"]["class_counts"]
    assert code == 0 and counts["kahler"] > 0 and counts["pseudo_kahler"] > 0
    # pseudo-Kaehler points sit where 1/g < 0
    for r in load(text)["records"]:
        if r["class"] == "pseudo_kahler":
            assert r["inv_g"] < 0


def test_evolve_separable_numeric(tmp_path):
    code, text = run(tmp_path, "evolve", {"model": {"name": "separable"}, "t": 0.5, "grid": {"count": 3}})
    assert code == 0
    assert all(r["class"] == "kahler" for r in load(text)["records"])


def test_potential_quartic_matches_closed_form(tmp_path):
    cfg = {"model": {"name": "quartic"}, "t": 0.1, "grid": {"lo": -0.5, "hi": 0.5, "count": 5}, "order": 16}
    code, text = run(tmp_path, "potential", cfg)
    doc = load(text)
    assert code == 0 and doc["summary"]["max_reference_deviation"] <= 1e-9
    assert doc["summary"]["verify_potential"][0]["residual"] <= 1e-5
    r = doc["records"][7]
    assert r["kappa"] == pytest.approx(quartic_kappa_it(r["x"], r["y"], 0.1), abs=1e-12)


def test_potential_at_tau_zero_is_initial(tmp_path):
    code, text = run(tmp_path, "potential", {"model": {"name": "quartic"}, "grid": {"count": 3}})
    for r in load(text)["records"]:
        assert r["kappa"] == pytest.approx((r["x"] ** 2 + r["y"] ** 2) / 2, abs=1e-15)


def test_potential_tstark_su2(tmp_path):
    cfg = {"model": {"name": "tstark-su2"}, "tau": [0.2, 0.3], "grid": {"lo": -0.5, "hi": 0.5, "count": 3}}
    code, text = run(tmp_path, "potential", cfg)
    assert code == 0 and load(text)["summary"]["max_residual"] <= 1e-12


def test_geodesic_report(tmp_path):
    cfg = {"model": {"name": "linear"}, "t_samples": [0.05, 0.1], "grid": {"lo": -0.4, "hi": 0.4, "count": 3}, "order": 2}
    code, text = run(tmp_path, "geodesic", cfg)
    doc = load(text)
    assert code == 0 and len(doc["records"]) == 18
    assert [row["t"] for row in doc["summary"]["refinement"]] == [0.05, 0.1]
    assert all(r["geodesic_residual"] <= 1e-5 and r["phidot_residual"] <= 1e-6 for r in doc["records"])


def test_blu_report_and_undefined_projection(tmp_path):
    ok = {"model": {"name": "linear"}, "tau": [0, 1], "t": 0.5, "grid": {"lo": -0.5, "hi": 0.5, "count": 3}, "order": 2}
    code, text = run(tmp_path, "blu", ok)
    assert code == 0 and load(text)["summary"]["diagram_check"] <= 1e-8
    bad = dict(ok, tau=[0, -1], t=1.0)
    code, text = run(tmp_path, "blu", bad, name="bad.json")
    doc = load(text)
    assert code == 0 and doc["summary"]["undefined_points"] == 9
    assert all("real/mixed" in r["diagnostic"] and r["regime_tag"] == "real" for r in doc["records"])


@pytest.mark.parametrize("name", ["tstark-su2", "tstark-torus"])
def test_tstark_command(tmp_path, name):
    coords = 3 if name == "tstark-su2" else 2
    cfg = {"model": {"name": name, "seed": 7}, "tau": [0.3, 0.2], "order": 14,
           "grid": {"lo": -0.5, "hi": 0.5, "count": [2] * coords}}
    code, text = run(tmp_path, "tstark", cfg)
    s = load(text)["summary"]
    assert code == 0 and s["max_series_difference"] <= 1e-8 and s["max_kappa_residual"] <= 1e-12


# ---------------------------------------------------------------------------
# output


def test_csv_output(tmp_path):
    code, text = run(tmp_path, "evolve", {"model": {"name": "linear"}, "t": 0.5, "grid": {"count": 2}}, "--format", "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert code == 0
    assert rows[0][:6] == ["tau_re", "tau_im", "x", "y", "z0_re", "z0_im"]
    assert len(rows) == 5


def test_json_floats_use_17_digits_and_null():
    assert cli.dump_json({"a": 0.1, "b": float("nan"), "c": [1, True]}) == '{"a": 0.10000000000000001, "b": null, "c": [1, true]}\n'


def test_output_is_deterministic_across_thread_counts(tmp_path, monkeypatch):
    cfg = {"model": {"name": "quartic"}, "tau_sweep": {"start": 0, "stop": [0.2, 0.5], "num": 6},
           "grid": {"lo": -0.5, "hi": 0.5, "count": 4}, "order": 10}
    texts = []
    for n in ("1", "4"):
        monkeypatch.setenv("KAHLERFLOW_THREADS", n)
        texts.append(run(tmp_path, "evolve", cfg, name=f"c{n}.json")[1])
    assert texts[0] == texts[1]


def test_output_path_from_config(tmp_path):
    target = tmp_path / "res.json"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"name": "linear"}, "grid": {"count": 2}, "output": {"path": str(target)}}))
    assert cli.main(["evolve", "--config", str(cfg)]) == 0
    assert load(target.read_text())["command"] == "evolve"


def test_stdout_output(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"name": "linear"}, "grid": {"count": 2}}))
    assert cli.main(["evolve", "--config", str(cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["model"] == "linear"


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("KAHLERFLOW_THREADS", "3")
    assert cli.thread_count() == 3
    monkeypatch.setenv("KAHLERFLOW_THREADS", "many")
    with pytest.raises(ValueError):
        cli.thread_count()
    monkeypatch.setenv("KAHLERFLOW_THREADS", "4")
    assert cli.ordered_map(lambda v: v * v, range(9)) == [v * v for v in range(9)]
