"""Command-line front end.

Exit codes: 0 success or all checks pass, 1 a verification check failed,
2 configuration or validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import ValidationError
from .field import normalized_values, sample_fluctuations, write_fluctuations_csv
from .laws import RadiusLaw
from .limits import FINE, COARSE, exact_cf, fluctuation_variance, limit_cf, stable_limit_params
from .pointprocess import count_large_balls, expected_large_balls, sample_realization, truncation_bias_bound
from .rng import stream
from .stats import compare, hill_tail_index, variance_check

log = logging.getLogger("coxballs")

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
CHECKS = ("largeballs", "exactcf", "limitcf", "variance", "tail")


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="ascii")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _numeric_defaults() -> dict:
    return {"cf_grid_fine": FINE, "cf_grid_coarse": COARSE, "ecf_band_sigmas": 3.0}


# ---------------------------------------------------------------------------
# commands


def cmd_classify(cfg: cfgmod.ExperimentConfig, out: Path) -> int:
    reg = cfg.regime
    line = reg.describe()
    print(line)
    summary = {"kind": reg.kind, "a": reg.a, "gamma": reg.gamma, "n_exponent": reg.n_exponent,
               "n_coefficient": reg.n_coefficient, "summary": line}
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "classify.json", summary)
    return EXIT_OK


def cmd_simulate(cfg: cfgmod.ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for name, mu in cfg.measures.items():
        for rho in cfg.rho:
            t0 = time.perf_counter()
            samples = sample_fluctuations(cfg.model, mu, rho, cfg.N, cfg.seed, threads=cfg.threads,
                                          r_max=cfg.r_max, regime=cfg.regime)
            path = out / f"fluctuations_{name}_rho{_fmt(rho)}.csv"
            write_fluctuations_csv(samples, path)
            runs.append({"measure": name, "rho": rho, "file": path.name, "rows": len(samples),
                         "truncation_bias_bound": truncation_bias_bound(cfg.model, rho, mu, cfg.r_max),
                         "seconds": time.perf_counter() - t0})
            log.info("wrote %s (%d rows)", path, len(samples))
    _write_json(out / "simulate.json", {"seed": cfg.seed, "regime": cfg.regime.describe(),
                                        "runs": runs, "config": cfg.resolved,
                                        "numeric_defaults": _numeric_defaults()})
    return EXIT_OK


def _samples(cfg, check, mu, rho, N):
    s = sample_fluctuations(check.model, mu, rho, N, cfg.seed, threads=cfg.threads,
                            r_max=cfg.r_max, regime=check.regime)
    return normalized_values(s)


def verify_largeballs(cfg, check, out: Path) -> dict:
    s = check.settings
    model = check.model
    theory_radius = model.radius if s["theory_beta"] is None else RadiusLaw(float(s["theory_beta"]), model.radius.r0)
    rhos = s["rho"] if isinstance(s["rho"], list) else [s["rho"]]
    N = s["N"]
    origin = (np.zeros(model.d), np.zeros(model.d))
    rows = []
    for rho in rhos:
        counts = np.empty(N)
        for i in range(N):
            real = sample_realization(model, rho, origin, stream(cfg.seed, i), r_max=cfg.r_max)
            counts[i] = count_large_balls(real, s["threshold"])
        expected = expected_large_balls(model, rho, s["threshold"], radius=theory_radius)
        tol = 3.0 * math.sqrt(expected / N) if N else math.inf
        mean = float(np.mean(counts)) if N else math.nan
        scale = model.scaling.kappa(rho) * model.scaling.lam(rho) * rho ** model.radius.beta
        rows.append({"rho": rho, "N": N, "mean": mean, "expected": expected, "tolerance": tol,
                     "sample_variance": float(np.var(counts, ddof=1)) if N > 1 else math.nan,
                     "normalized_mean": mean / scale, "normalized_expected": expected / scale,
                     "pass": bool(abs(mean - expected) <= tol)})
    summary = {"check": "largeballs", "pass": all(r["pass"] for r in rows), "seed": cfg.seed,
               "theory_beta": theory_radius.beta, "rows": rows}
    _write_json(out / "largeballs.json", summary)
    return summary


def verify_exactcf(cfg, check, out: Path) -> dict:
    s = check.settings
    name, mu = cfg.measure(s["measure"])
    rho = float(s["rho"])
    thetas = cfgmod.theta_grid(s["thetas"])
    x = _samples(cfg, check, mu, rho, s["N"])
    rep = compare(x, lambda t: exact_cf(check.model, mu, rho, t, regime=check.regime), thetas,
                  seed=cfg.seed, label=f"exactcf {name} rho={rho}")
    rep.write_csv(out / "exactcf.csv")
    summary = {"check": "exactcf", **rep.summary(), "rho": rho, "measure": name}
    _write_json(out / "exactcf.json", summary)
    return summary


def verify_limitcf(cfg, check, out: Path) -> dict:
    s = check.settings
    name, mu = cfg.measure(s["measure"])
    thetas = cfgmod.theta_grid(s["thetas"])
    rhos = sorted((s["rho"] if isinstance(s["rho"], list) else [s["rho"]]), reverse=True)
    theory = limit_cf(check.regime, check.model, mu, thetas)
    rows = []
    for rho in rhos:
        x = _samples(cfg, check, mu, rho, s["N"])
        rep = compare(x, lambda t: theory, thetas, allowance=s["allowance"], seed=cfg.seed,
                      label=f"limitcf {name} rho={rho}")
        rep.write_csv(out / f"limitcf_rho{_fmt(rho)}.csv")
        rows.append({"rho": rho, **rep.summary()})
    sups = [r["sup_deviation"] for r in rows]
    monotone = all(b < a for a, b in zip(sups, sups[1:]))
    ok = rows[-1]["pass"] and (monotone or not s["monotone"])
    summary = {"check": "limitcf", "pass": bool(ok), "regime": check.regime.describe(),
               "monotone": monotone, "sup_deviations": sups, "rows": rows, "seed": cfg.seed}
    _write_json(out / "limitcf.json", summary)
    return summary


def verify_variance(cfg, check, out: Path) -> dict:
    s = check.settings
    name, mu = cfg.measure(s["measure"])
    rho = float(s["rho"])
    if check.regime.kind != "global-stable" or check.model.marks.attractor.alpha != 2.0:
        raise ValidationError("the variance check needs a global-stable regime with alpha = 2")
    params = stable_limit_params(mu, check.model.marks, check.model.radius, check.regime)
    predicted = 2.0 * params.sigma ** 2
    x = _samples(cfg, check, mu, rho, s["N"])
    res = variance_check(x, predicted, s["tolerance"])
    summary = {"check": "variance", "pass": res.passed, "rho": rho, "N": int(x.size), "seed": cfg.seed,
               "sample_variance": res.sample_variance, "predicted_limit_variance": predicted,
               "ratio": res.ratio, "tolerance": res.tolerance, "band": res.band}
    if mu.dimension == 1:
        summary["exact_finite_rho_variance"] = fluctuation_variance(check.model, mu, rho,
                                                                    regime=check.regime).value
    _write_json(out / "variance.json", summary)
    return summary


def verify_tail(cfg, check, out: Path) -> dict:
    s = check.settings
    name, mu = cfg.measure(s["measure"])
    rho = float(s["rho"])
    x = _samples(cfg, check, mu, rho, s["N"])
    h = hill_tail_index(x, s["k"])
    lo, hi = s["range"]
    summary = {"check": "tail", "pass": bool(lo <= h.index <= hi), "rho": rho, "N": int(x.size),
               "seed": cfg.seed, "hill_index": h.index, "k": h.k, "light_tailed": h.light_tailed,
               "range": [lo, hi]}
    _write_json(out / "tail.json", summary)
    return summary


VERIFIERS = {"largeballs": verify_largeballs, "exactcf": verify_exactcf, "limitcf": verify_limitcf,
             "variance": verify_variance, "tail": verify_tail}


def cmd_verify(cfg: cfgmod.ExperimentConfig, out: Path, which: str) -> int:
    names = list(cfg.declared_checks) if which == "all" else [which]
    if not names:
        raise ValidationError("the config declares no checks")
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for n in names:
        t0 = time.perf_counter()
        res = VERIFIERS[n](cfg, cfg.checks[n], out)
        res["seconds"] = time.perf_counter() - t0
        results[n] = res
        print(f"{n}: {'PASS' if res['pass'] else 'FAIL'}")
    ok = all(r["pass"] for r in results.values())
    _write_json(out / "verify_summary.json", {"pass": ok, "seed": cfg.seed,
                                               "checks": {k: v["pass"] for k, v in results.items()},
                                               "config": cfg.resolved,
                                               "numeric_defaults": _numeric_defaults()})
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# plotting

CF_HEADER = ["theta", "ecf_re", "ecf_im", "th_re", "th_im", "se", "z"]


def _read_cf_csv(path: Path) -> np.ndarray:
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CF_HEADER:
        raise ValidationError(f"{path} is not a CF report")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(CF_HEADER))
    except ValueError:
        raise ValidationError(f"{path} has malformed rows") from None
    if data.shape[0] == 0:
        raise ValidationError(f"{path} has an empty theta grid")
    return data


def _figure_setup():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "coxballs"
    plt.rcParams["svg.fonttype"] = "path"
    return plt


def plot_cf_report(path: Path, target: Path) -> None:
    data = _read_cf_csv(path)
    plt = _figure_setup()
    th = data[:, 0]
    band = 3.0 * data[:, 5]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for ax, ecol, tcol, title in ((axes[0], 1, 3, "real part"), (axes[1], 2, 4, "imaginary part")):
        ax.fill_between(th, data[:, tcol] - band, data[:, tcol] + band, color="0.85", label="3 se band")
        ax.plot(th, data[:, tcol], color="k", lw=1.2, label="theory")
        ax.plot(th, data[:, ecol], color="tab:red", lw=1.0, marker=".", ms=3, label="empirical")
        ax.set_xlabel("theta")
        ax.set_title(title)
    axes[0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(target, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_largeballs(path: Path, target: Path) -> None:
    try:
        rep = json.loads(path.read_text(encoding="ascii"))
        rows = rep["rows"]
        rho = np.array([r["rho"] for r in rows], float)
        mean = np.array([r["normalized_mean"] for r in rows], float)
        expd = np.array([r["normalized_expected"] for r in rows], float)
        err = np.array([r["tolerance"] / r["expected"] * r["normalized_expected"] for r in rows], float)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError):
        raise ValidationError(f"{path} is not a large-ball report") from None
    if rho.size == 0:
        raise ValidationError(f"{path} has no rows")
    plt = _figure_setup()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(rho, mean, yerr=err, fmt="o", color="tab:red", label="simulated / (kappa lambda rho^beta)")
    ax.plot(rho, expd, color="k", lw=1.2, label="exact")
    ax.set_xscale("log")
    ax.set_xlabel("rho")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(target, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_plot(reports: list[str], out: Path) -> int:
    if not reports:
        raise ValidationError("no report files given")
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        p = Path(r)
        if not p.is_file():
            raise ValidationError(f"report {p} does not exist")
        target = out / (p.stem + ".svg")
        if p.suffix == ".csv":
            plot_cf_report(p, target)
        elif p.suffix == ".json":
            plot_largeballs(p, target)
        else:
            raise ValidationError(f"unsupported report type {p.suffix!r}")
        print(target)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--threads", type=int, help="worker threads for replicate sampling")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="coxballs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("classify", parents=[common], help="print the limit regime")
    sub.add_parser("simulate", parents=[common], help="write fluctuation samples as CSV")
    v = sub.add_parser("verify", parents=[common], help="run verification checks")
    v.add_argument("check", choices=CHECKS + ("all",))
    pl = sub.add_parser("plot", help="render report files as SVG")
    pl.add_argument("reports", nargs="*")
    pl.add_argument("--out", default=".", help="output directory")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            return cmd_plot(args.reports, Path(args.out))
        cfg = cfgmod.load_path(args.config, seed=args.seed, threads=args.threads, output=args.out)
        out = Path(cfg.output)
        if args.command == "classify":
            return cmd_classify(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        return cmd_verify(cfg, out, args.check)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - the exit-code contract maps everything else to 3
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
