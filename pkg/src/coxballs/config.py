"""JSON experiment configuration (``schema_version: 1``).

Every default is resolved at load time and the resolved document is what
gets written into run metadata, so outputs record every number used.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .field import Regime, classify_regime
from .laws import Kernel, MarkLaw, RadiusLaw, StableParams
from .measures import TestMeasure
from .pointprocess import ModelSpec, ScalingLaw

SCHEMA_VERSION = 1

DEFAULT_MODEL = {
    "d": 1,
    "kernel": {"family": "gaussian", "bandwidth": 1.0, "tail_mass": 1e-6},
    "radius": {"beta": 1.5, "r0": 1.0},
    "marks": {"family": "rademacher", "scale": 1.0},
    "scaling": {"scenario": "local", "u": 0.0, "v": 2.0, "c_kappa": 1.0, "c_lambda": 1.0},
}

DEFAULT_CHECKS = {
    "largeballs": {"rho": [0.1], "N": 2000, "threshold": 1.0, "theory_beta": None},
    "exactcf": {"rho": 0.2, "N": 20000, "thetas": [0.5, 1.0, 2.0], "measure": None},
    "limitcf": {"rho": [0.2, 0.1, 0.05], "N": 5000, "thetas": None, "allowance": 0.05,
                "monotone": True, "measure": None},
    "variance": {"rho": 0.05, "N": 5000, "tolerance": 0.05, "measure": None},
    "tail": {"rho": 0.05, "N": 5000, "k": None, "range": [1.6, 2.0], "measure": None},
}

DEFAULT_THETA_GRID = {"min": -4.0, "max": 4.0, "count": 41}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(x, name: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ValidationError(f"{name} must be a finite number, got {x!r}")
    return float(x)


def _count(x, name: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or x < 0:
        raise ValidationError(f"{name} must be a nonnegative integer, got {x!r}")
    return x


def build_marks(node: dict) -> MarkLaw:
    fam = node.get("family")
    scale = _num(node.get("scale", 1.0), "marks.scale")
    if fam == "rademacher":
        law = MarkLaw.rademacher(scale)
    elif fam == "gaussian":
        law = MarkLaw.gaussian(scale)
    elif fam == "dirac":
        law = MarkLaw.dirac(scale)
    elif fam == "exact-stable":
        law = MarkLaw.stable(_num(node["alpha"], "marks.alpha"), scale, _num(node.get("b", 0.0), "marks.b"))
    elif fam == "two-sided-pareto":
        law = MarkLaw.two_sided_pareto(_num(node["alpha"], "marks.alpha"), scale,
                                       _num(node.get("p_plus", 0.5), "marks.p_plus"))
    else:
        raise ValidationError(f"unknown mark family {fam!r}")
    att = node.get("attractor")
    if att is not None:
        law = MarkLaw(law.family, law.scale, law.alpha, law.b, law.p_plus, law.psi_rel_tol,
                      law.psi_abs_tol, StableParams(att["alpha"], att["sigma"], att.get("b", 0.0)))
    return law


def build_model(node: dict) -> ModelSpec:
    try:
        d = _count(node["d"], "model.d")
        k = node["kernel"]
        kernel = Kernel(k["family"], _num(k.get("bandwidth", 1.0), "kernel.bandwidth"), d,
                        _num(k.get("tail_mass", 1e-6), "kernel.tail_mass"))
        r = node["radius"]
        radius = RadiusLaw(_num(r["beta"], "radius.beta"), _num(r.get("r0", 1.0), "radius.r0"))
        s = node["scaling"]
        scaling = ScalingLaw(s["scenario"], _num(s.get("u", 0.0), "scaling.u"),
                             _num(s["v"], "scaling.v"), _num(s.get("c_kappa", 1.0), "scaling.c_kappa"),
                             _num(s.get("c_lambda", 1.0), "scaling.c_lambda"))
        return ModelSpec(d, kernel, radius, build_marks(node["marks"]), scaling)
    except KeyError as e:
        raise ValidationError(f"model is missing the field {e.args[0]!r}") from None


def build_measure(node: dict) -> TestMeasure:
    form = node.get("form")
    w = _num(node.get("weight", 1.0), "measure.weight")
    try:
        if form == "interval":
            return TestMeasure.interval(_num(node["a"], "a"), _num(node["b"], "b"), w)
        if form == "box":
            return TestMeasure.box(node["lo"], node["hi"], w)
        if form == "ball":
            return TestMeasure.ball(node["center"], _num(node["radius"], "radius"), w)
        if form == "dirac":
            return TestMeasure.dirac(node["point"])
        if form == "sum":
            terms = [build_measure(t) for t in node["terms"]]
            if not terms:
                raise ValidationError("a sum measure needs at least one term")
            out = terms[0]
            for t in terms[1:]:
                out = out + t
            return out * w
    except KeyError as e:
        raise ValidationError(f"measure is missing the field {e.args[0]!r}") from None
    raise ValidationError(f"unknown measure form {form!r}")


def theta_grid(node) -> np.ndarray:
    if isinstance(node, dict):
        n = _count(node.get("count", 41), "thetas.count")
        return np.linspace(_num(node.get("min", -4.0), "thetas.min"),
                           _num(node.get("max", 4.0), "thetas.max"), n)
    return np.array([_num(t, "theta") for t in node], dtype=float)


def _rho(x, name) -> float:
    r = _num(x, name)
    if not 0.0 < r < 1.0:
        raise ValidationError(f"{name} must lie in (0, 1), got {r}")
    return r


@dataclass
class CheckConfig:
    name: str
    model: ModelSpec
    regime: Regime
    settings: dict


@dataclass
class ExperimentConfig:
    model: ModelSpec
    regime: Regime
    measures: dict[str, TestMeasure]
    rho: list[float]
    N: int
    thetas: np.ndarray
    seed: int
    threads: int
    r_max: float | None
    output: str
    checks: dict[str, CheckConfig]
    declared_checks: tuple[str, ...] = ()
    resolved: dict = field(repr=False, default_factory=dict)

    def measure(self, name: str | None) -> tuple[str, TestMeasure]:
        if name is None:
            name = next(iter(self.measures))
        if name not in self.measures:
            raise ValidationError(f"unknown measure {name!r}")
        return name, self.measures[name]


def resolve(doc: dict) -> dict:
    """Fill in every default; the result is fully explicit."""
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(f"schema_version must be {SCHEMA_VERSION}")
    out = {
        "schema_version": SCHEMA_VERSION,
        "model": _merge(DEFAULT_MODEL, doc.get("model", {})),
        "measures": doc.get("measures", {"unit": {"form": "interval", "a": 0.0, "b": 1.0}}),
        "rho": doc.get("rho", [0.2]),
        "N": doc.get("N", 1000),
        "thetas": doc.get("thetas", DEFAULT_THETA_GRID),
        "seed": doc.get("seed", 0),
        "threads": doc.get("threads", 1),
        "r_max": doc.get("r_max"),
        "output": doc.get("output", "out"),
        "checks": {},
    }
    unknown = set(doc) - set(out)
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")
    checks = doc.get("checks", {})
    bad = set(checks) - set(DEFAULT_CHECKS)
    if bad:
        raise ValidationError(f"unknown checks {sorted(bad)}")
    for name in DEFAULT_CHECKS:
        c = dict(checks.get(name, {}))
        model = _merge(out["model"], c.pop("model", {}))
        settings = _merge(DEFAULT_CHECKS[name], c)
        extra = set(settings) - set(DEFAULT_CHECKS[name])
        if extra:
            raise ValidationError(f"unknown keys for check {name}: {sorted(extra)}")
        if name == "limitcf" and settings["thetas"] is None:
            settings["thetas"] = out["thetas"]
        out["checks"][name] = {"model": model, **settings}
    return out


def load(doc: dict, *, seed: int | None = None, threads: int | None = None,
         output: str | None = None) -> ExperimentConfig:
    res = resolve(doc)
    if seed is not None:
        res["seed"] = seed
    if threads is not None:
        res["threads"] = threads
    if output is not None:
        res["output"] = output
    s = res["seed"]
    if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    threads = res["threads"]
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise ValidationError("threads must be a positive integer")
    model = build_model(res["model"])
    regime = classify_regime(model)
    if not isinstance(res["measures"], dict) or not res["measures"]:
        raise ValidationError("measures must be a nonempty object of named measures")
    measures = {str(k): build_measure(v) for k, v in res["measures"].items()}
    for name, mu in measures.items():
        if mu.dimension != model.d:
            raise ValidationError(f"measure {name!r} has dimension {mu.dimension}, model has {model.d}")
    rhos = res["rho"] if isinstance(res["rho"], list) else [res["rho"]]
    rhos = [_rho(r, "rho") for r in rhos]
    N = _count(res["N"], "N")
    thetas = theta_grid(res["thetas"])
    r_max = None if res["r_max"] is None else _num(res["r_max"], "r_max")
    checks = {}
    for name, c in res["checks"].items():
        cm = build_model(c["model"])
        creg = classify_regime(cm)
        settings = {k: v for k, v in c.items() if k != "model"}
        _validate_check(name, settings)
        checks[name] = CheckConfig(name, cm, creg, settings)
    declared = tuple(n for n in DEFAULT_CHECKS if n in doc.get("checks", {}))
    return ExperimentConfig(model, regime, measures, rhos, N, thetas, s, threads, r_max,
                            str(res["output"]), checks, declared, res)


def _validate_check(name: str, s: dict) -> None:
    rhos = s["rho"] if isinstance(s["rho"], list) else [s["rho"]]
    for r in rhos:
        _rho(r, f"checks.{name}.rho")
    _count(s["N"], f"checks.{name}.N")
    if "thetas" in s and s["thetas"] is not None and theta_grid(s["thetas"]).size == 0:
        raise ValidationError(f"checks.{name}.thetas is empty")


def load_path(path, **kw) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"config {path} is not valid JSON: {e}") from None
    return load(doc, **kw)
