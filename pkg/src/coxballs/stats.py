"""Empirical characteristic functions and simulation-vs-theory diagnostics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_THETAS = np.linspace(-4.0, 4.0, 41)


def _samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("empty sample")
    if not np.all(np.isfinite(x)):
        raise ValidationError("samples must be finite")
    return x


def ecf(samples, thetas) -> np.ndarray:
    """``(1/N) sum_j exp(i theta x_j)`` with pairwise summation.

    Negative ``theta`` is returned as the conjugate of ``|theta|`` so the
    Hermitian symmetry holds bit for bit.
    """
    x = _samples(samples)
    t = np.atleast_1d(np.asarray(thetas, dtype=float))
    out = np.empty(t.size, complex)
    for i, th in enumerate(t):
        a = abs(th) * x
        v = complex(np.sum(np.cos(a)), np.sum(np.sin(a))) / x.size
        out[i] = v if th >= 0 else v.conjugate()
    return out


@dataclass
class CFReport:
    thetas: np.ndarray
    empirical: np.ndarray
    theoretical: np.ndarray
    theory_error: np.ndarray
    N: int
    allowance: float = 0.0
    seed: int | None = None
    label: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def se(self) -> float:
        return math.sqrt(2.0 / self.N)

    @property
    def deviation(self) -> np.ndarray:
        return np.abs(self.empirical - self.theoretical)

    @property
    def sup_deviation(self) -> float:
        return float(np.max(self.deviation))

    @property
    def z(self) -> np.ndarray:
        return self.deviation / self.se

    @property
    def tolerance(self) -> np.ndarray:
        return 3.0 * self.se + self.allowance + self.theory_error

    @property
    def passed(self) -> bool:
        return bool(np.all(self.deviation <= self.tolerance))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "ecf_re", "ecf_im", "th_re", "th_im", "se", "z"])
            for th, e, t, z in zip(self.thetas, self.empirical, self.theoretical, self.z):
                w.writerow([repr(float(th)), repr(float(e.real)), repr(float(e.imag)),
                            repr(float(t.real)), repr(float(t.imag)), repr(self.se), repr(float(z))])

    def summary(self) -> dict:
        return {
            "label": self.label,
            "pass": self.passed,
            "N": self.N,
            "seed": self.seed,
            "sup_deviation": self.sup_deviation,
            "max_z": float(np.max(self.z)),
            "se": self.se,
            "allowance": self.allowance,
            "max_theory_error": float(np.max(self.theory_error)),
            **self.extra,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def compare(samples, theory, thetas=DEFAULT_THETAS, *, allowance: float = 0.0,
            theory_error=None, seed: int | None = None, label: str = "") -> CFReport:
    """Compare the ECF of ``samples`` with ``theory`` on ``thetas``.

    ``theory`` is an array of CF values, or a callable returning either such
    an array or an object with ``values`` and ``errors`` (as the CF evaluators
    do).  PASS iff at every theta
    ``|ECF - CF| <= 3 sqrt(2/N) + allowance + theory error``.
    """
    x = _samples(samples)
    t = np.atleast_1d(np.asarray(thetas, dtype=float))
    if t.size == 0:
        raise ValidationError("empty theta grid")
    err = np.zeros(t.size)
    if callable(theory):
        res = theory(t)
        if hasattr(res, "values"):
            vals, err = np.asarray(res.values, complex), np.asarray(res.errors, float)
        else:
            vals = np.asarray(res, complex)
    else:
        vals = np.asarray(theory, complex)
    if theory_error is not None:
        err = np.broadcast_to(np.asarray(theory_error, float), t.shape).copy()
    if vals.shape != t.shape:
        raise ValidationError("theory values do not match the theta grid")
    return CFReport(t, ecf(x, t), vals, err, x.size, allowance, seed, label)


@dataclass(frozen=True)
class HillResult:
    index: float
    k: int
    light_tailed: bool


def hill_tail_index(samples, k: int | None = None) -> HillResult:
    """Hill estimator of the tail index of ``|samples|`` from the ``k`` largest values.

    ``k`` defaults to ``floor(sqrt(N))``.  Estimates above 4 are flagged as
    ``light_tailed``: no stable-type power tail is visible.
    """
    a = np.sort(np.abs(_samples(samples)))[::-1]
    n = a.size
    k = int(math.isqrt(n)) if k is None else int(k)
    if k < 2 or k >= n / 2:
        raise ValidationError(f"Hill estimator needs 2 <= k < N/2, got k={k}, N={n}")
    if a[k] <= 0:
        raise ValidationError("too many zero samples for the Hill estimator")
    gamma = float(np.mean(np.log(a[:k] / a[k])))
    index = math.inf if gamma == 0 else 1.0 / gamma
    return HillResult(index, k, index > 4.0)


@dataclass(frozen=True)
class VarianceCheck:
    sample_variance: float
    predicted: float
    ratio: float
    tolerance: float
    band: float
    passed: bool


def variance_check(samples, predicted_variance: float, tolerance: float = 0.05) -> VarianceCheck:
    """PASS iff ``|s**2 / predicted - 1| <= tolerance + 3 sqrt(2/N)``."""
    x = _samples(samples)
    if x.size < 2:
        raise ValidationError("variance check needs at least two samples")
    v = float(np.var(x, ddof=1))
    band = 3.0 * math.sqrt(2.0 / x.size)
    if predicted_variance > 0:
        ratio = v / predicted_variance
    else:
        ratio = 1.0 if v == 0 else math.inf
    ok = abs(ratio - 1.0) <= tolerance + band
    return VarianceCheck(v, float(predicted_variance), ratio, tolerance, band, bool(ok))
