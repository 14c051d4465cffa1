import copy
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from coxballs import config as cfgmod
from coxballs.cli import main
from coxballs.errors import ValidationError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = {
    "schema_version": 1,
    "model": {"d": 1, "kernel": {"family": "gaussian", "bandwidth": 1.0},
              "radius": {"beta": 1.5, "r0": 1.0}, "marks": {"family": "rademacher"},
              "scaling": {"scenario": "local", "v": 2.0}},
    "measures": {"unit": {"form": "interval", "a": 0.0, "b": 1.0}},
    "rho": [0.2],
    "N": 10,
    "seed": 11,
}


def write_config(tmp_path, **over):
    doc = copy.deepcopy(BASE)
    doc.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


# -- config ------------------------------------------------------------------


def test_shipped_configs_load():
    for p in sorted(CONFIGS.glob("*.json")):
        cfg = cfgmod.load_path(p)
        assert cfg.declared_checks


def test_config_defaults_are_explicit():
    cfg = cfgmod.load(BASE)
    res = cfg.resolved
    assert res["model"]["kernel"]["tail_mass"] == 1e-6
    assert res["checks"]["largeballs"]["threshold"] == 1.0
    assert res["checks"]["limitcf"]["thetas"] == cfgmod.DEFAULT_THETA_GRID
    assert cfg.thetas.size == 41


def test_config_overrides():
    cfg = cfgmod.load(BASE, seed=5, threads=3, output="elsewhere")
    assert (cfg.seed, cfg.threads, cfg.output) == (5, 3, "elsewhere")


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(schema_version=2),
    lambda d: d.update(bogus=1),
    lambda d: d.update(rho=[1.5]),
    lambda d: d.update(N=-1),
    lambda d: d.update(seed=-3),
    lambda d: d.update(checks={"nope": {}}),
    lambda d: d.update(checks={"tail": {"extra": 1}}),
    lambda d: d["model"]["radius"].update(beta=0.5),
    lambda d: d.update(measures={"sq": {"form": "box", "lo": [0, 0], "hi": [1, 1]}}),
])
def test_config_rejects(mutate):
    doc = copy.deepcopy(BASE)
    mutate(doc)
    with pytest.raises(ValidationError):
        cfgmod.load(doc)


# -- classify ----------------------------------------------------------------


def test_classify(tmp_path, capsys):
    cfg = write_config(tmp_path, model={**BASE["model"], "scaling": {"scenario": "global", "u": 1.5, "v": 0.0}})
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out.strip() == "global-poisson, a=1, n(rho)=1"
    summary = json.loads((tmp_path / "o" / "classify.json").read_text())
    assert summary["kind"] == "global-poisson" and summary["a"] == 1.0


def test_classify_invalid_growth(tmp_path, capsys):
    cfg = write_config(tmp_path, model={**BASE["model"], "marks": {"family": "exact-stable", "alpha": 1.8},
                                        "scaling": {"scenario": "global", "u": 0.5, "v": -1.0}})
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "u + v > 0" in capsys.readouterr().err


def test_missing_config_and_bad_args(tmp_path):
    assert main(["classify", "--config", str(tmp_path / "absent.json")]) == 2
    assert main(["frobnicate"]) == 2


# -- simulate ----------------------------------------------------------------


def test_simulate_thread_determinism(tmp_path):
    cfg = write_config(tmp_path, N=24, rho=[0.2, 0.1])
    outs = []
    for threads in (1, 3):
        out = tmp_path / f"t{threads}"
        assert main(["simulate", "--config", cfg, "--threads", str(threads), "--out", str(out)]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].glob("*.csv"))
    assert len(files) == 2
    for name in files:
        a = (outs[0] / name).read_bytes()
        assert a == (outs[1] / name).read_bytes()
        assert len(a.decode().splitlines()) == 25


def test_simulate_rerun_identical_and_seed_sensitive(tmp_path):
    cfg = write_config(tmp_path)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
    main(["simulate", "--config", cfg, "--seed", "12", "--out", str(tmp_path / "c")])
    name = "fluctuations_unit_rho0.2.csv"
    a = (tmp_path / "a" / name).read_bytes()
    assert a == (tmp_path / "b" / name).read_bytes()
    assert a != (tmp_path / "c" / name).read_bytes()


def test_simulate_empty(tmp_path):
    cfg = write_config(tmp_path, N=0)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "fluctuations_unit_rho0.2.csv").read_text()
    assert text == "seed_index,rho,value,centering,normalized\n"
    meta = json.loads((tmp_path / "o" / "simulate.json").read_text())
    assert meta["numeric_defaults"]["cf_grid_fine"]
    assert meta["config"]["model"]["kernel"]["tail_mass"] == 1e-6


# -- verify ------------------------------------------------------------------


def test_verify_largeballs_power(tmp_path, capsys):
    checks = {"largeballs": {"rho": [0.1], "N": 200, "theory_beta": 2.0}}
    cfg = write_config(tmp_path, checks=checks)
    assert main(["verify", "largeballs", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "largeballs: FAIL" in capsys.readouterr().out


def test_verify_largeballs_pass(tmp_path):
    cfg = write_config(tmp_path, checks={"largeballs": {"rho": [0.1], "N": 300}})
    assert main(["verify", "all", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "largeballs.json").read_text())
    assert rep["rows"][0]["expected"] == pytest.approx(6 * 100 * 0.1**1.5, rel=1e-6)
    summary = json.loads((tmp_path / "o" / "verify_summary.json").read_text())
    assert summary["pass"] and summary["checks"] == {"largeballs": True}


def test_verify_exactcf_small(tmp_path):
    cfg = write_config(tmp_path, checks={"exactcf": {"rho": 0.2, "N": 1000, "thetas": [0.5, 1.0]}})
    assert main(["verify", "exactcf", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "exactcf.csv").read_text().splitlines()
    assert lines[0] == "theta,ecf_re,ecf_im,th_re,th_im,se,z"
    assert len(lines) == 3


def test_verify_no_declared_checks(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["verify", "all", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


# -- plot --------------------------------------------------------------------


CF_ROWS = "theta,ecf_re,ecf_im,th_re,th_im,se,z\n" + "".join(
    f"{t},{np.exp(-t * t / 2)},0.0,{np.exp(-t * t / 2)},0.0,0.01,0.1\n" for t in np.linspace(-2, 2, 9))


def test_plot_empty_grid(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("theta,ecf_re,ecf_im,th_re,th_im,se,z\n")
    assert main(["plot", str(p), "--out", str(tmp_path)]) == 2
    assert main(["plot", "--out", str(tmp_path)]) == 2


def test_plot_malformed(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    assert main(["plot", str(p), "--out", str(tmp_path)]) == 2
    q = tmp_path / "bad.json"
    q.write_text("{}")
    assert main(["plot", str(q), "--out", str(tmp_path)]) == 2


def test_plot_cf_deterministic(tmp_path):
    p = tmp_path / "cf.csv"
    p.write_text(CF_ROWS)
    assert main(["plot", str(p), "--out", str(tmp_path / "a")]) == 0
    assert main(["plot", str(p), "--out", str(tmp_path / "b")]) == 0
    svg = (tmp_path / "a" / "cf.svg").read_bytes()
    assert svg == (tmp_path / "b" / "cf.svg").read_bytes()
    assert svg.decode().count('<g id="axes_') == 2


def test_plot_cf_curve_count(tmp_path):
    import matplotlib
    matplotlib.use("Agg")
    from coxballs.cli import plot_cf_report
    import matplotlib.pyplot as plt

    p = tmp_path / "cf.csv"
    p.write_text(CF_ROWS)
    captured = []
    orig = plt.close
    plt.close = lambda fig=None: captured.append(fig)
    try:
        plot_cf_report(p, tmp_path / "cf.svg")
    finally:
        plt.close = orig
    for ax in captured[0].axes:
        assert len(ax.lines) == 2
        assert len(ax.collections) == 1


def test_plot_largeballs_report(tmp_path):
    cfg = write_config(tmp_path, checks={"largeballs": {"rho": [0.2, 0.1], "N": 50}})
    main(["verify", "largeballs", "--config", cfg, "--out", str(tmp_path / "o")])
    assert main(["plot", str(tmp_path / "o" / "largeballs.json"), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "largeballs.svg").read_text().startswith("<?xml")


def test_console_script(tmp_path):
    cfg = write_config(tmp_path)
    res = subprocess.run([sys.executable, "-m", "coxballs.cli", "classify", "--config", cfg,
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("local-stable")
