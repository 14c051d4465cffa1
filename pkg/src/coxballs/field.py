"""The random field ``M_rho(mu)``, its conditional centering, and regime classification."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import CapabilityError, ValidationError
from .measures import ClusterFunctional1D, TestMeasure, ball_mass
from .pointprocess import ModelSpec, Realization, sample_realization
from .quadrature import integrate_1d
from .rng import stream

RegimeKind = Literal["local-stable", "local-intermediate", "local-smallballs",
                     "global-stable", "global-poisson", "global-gamma"]


@dataclass(frozen=True)
class Regime:
    """Limit regime of a scaling law and its normalization ``n(rho) = coef * rho**exponent``."""

    kind: RegimeKind
    n_exponent: float
    n_coefficient: float
    gamma: float | None = None
    a: float | None = None

    def n(self, rho: float) -> float:
        return self.n_coefficient * rho**self.n_exponent

    @property
    def is_local(self) -> bool:
        return self.kind.startswith("local")

    def describe(self) -> str:
        parts = [self.kind]
        if self.a is not None:
            parts.append(f"a={self.a:g}")
        if self.gamma is not None:
            parts.append(f"gamma={self.gamma:g}")
        if self.n_exponent == 0.0:
            parts.append(f"n(rho)={self.n_coefficient:g}")
        else:
            parts.append(f"n(rho)={self.n_coefficient:g}*rho^{self.n_exponent:g}")
        return ", ".join(parts)


def _same(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)


def classify_regime(model: ModelSpec) -> Regime:
    """Route a model to one of the six limit regimes.

    The large-ball intensity ``kappa lambda rho**beta`` behaves like
    ``c rho**(beta - e)`` with ``e = v`` (local) or ``e = u + v`` (global).
    ``e > beta`` gives a stable limit with ``n = (c rho**(beta-e))**(1/alpha)``,
    ``e = beta`` a Poisson-type limit with ``n = 1`` and ``a = c``, and
    ``e < beta`` a small-ball limit with index ``gamma = beta/d`` and
    ``n = (c rho**(beta-e))**(1/gamma)``.
    """
    sc = model.scaling
    beta = model.radius.beta
    alpha = model.marks.attractor.alpha
    d = model.d
    if sc.scenario == "local":
        e, c, prefix = sc.v, sc.c_lambda, "local"
    else:
        e, c, prefix = sc.u + sc.v, sc.c_kappa * sc.c_lambda, "global"
    if _same(e, beta):
        kind = "local-intermediate" if prefix == "local" else "global-poisson"
        return Regime(kind, 0.0, 1.0, a=c)
    if e > beta:
        return Regime(f"{prefix}-stable", (beta - e) / alpha, c ** (1.0 / alpha))
    gamma = beta / d
    if not 1.0 < gamma < alpha:
        raise ValidationError(f"small-ball regimes need 1 < gamma = beta/d < alpha, got gamma={gamma}")
    if prefix == "local":
        return Regime("local-smallballs", (beta - e) / gamma, c ** (1.0 / gamma), gamma=gamma)
    if e <= 0:
        raise ValidationError(
            "global-gamma needs u + v > 0 (kappa*lambda must grow); the constraint "
            f"u + v > 0 fails with u + v = {e}")
    return Regime("global-gamma", (beta - e) / gamma, c ** (1.0 / gamma), gamma=gamma)


@dataclass(frozen=True)
class FluctuationSample:
    seed_index: int
    rho: float
    value: float
    centering: float
    normalized: float


def evaluate_field(realization: Realization, mu: TestMeasure) -> float:
    """``sum_i m_i mu(B(x_i, r_i))`` with pairwise summation."""
    if realization.n_balls == 0:
        return 0.0
    if realization.x.shape[1] != mu.dimension:
        raise ValidationError("realization and measure dimensions differ")
    return float(np.sum(realization.m * ball_mass(mu, realization.x, realization.r)))


class Centering:
    """Conditional mean ``m_bar lambda sum_y J(y)`` given the cluster centers.

    ``J(y) = int int mu(B(x, s)) k(x - y) dx f_rho(s) ds`` is tabulated once on
    a grid and evaluated by cubic interpolation.  Centers outside the near
    window are not all observed, so their contribution is replaced by its
    expectation ``m_bar lambda kappa int_{W^c} J``; ``far_sd`` is the standard
    deviation of the replaced term.  For centered marks everything is exactly 0.
    """

    def __init__(self, model: ModelSpec, rho: float, mu: TestMeasure):
        self.model, self.rho, self.mu = model, rho, mu
        self.mbar = model.marks.mean
        self.lam = model.scaling.lam(rho)
        self.kappa = model.scaling.kappa(rho)
        self.far_mean = 0.0
        self.far_sd = 0.0
        self.grid_error = 0.0
        self.interp_error = 0.0
        if self.mbar == 0.0 or not mu.pieces:
            self._spline = None
            return
        if model.d != 1:
            raise CapabilityError("non-centered marks are supported in dimension one only")
        w = model.radius.scaled_weight(rho)
        # the smoother is second order in the grid spacing: extrapolate from
        # two spacings and keep the fine-grid gap as the per-center error
        self._cf = ClusterFunctional1D(mu, w, model.kernel, spacing=0.01, ratio=1.005)
        coarse = ClusterFunctional1D(mu, w, model.kernel, spacing=0.02, ratio=1.01)
        y = self._cf.ygrid.x
        J_fine = self._cf.smoothed(lambda m: m)
        J_coarse = CubicSpline(coarse.ygrid.x, coarse.smoothed(lambda m: m))(y)
        J = (4.0 * J_fine - J_coarse) / 3.0
        self.interp_error = float(np.max(np.abs(J_fine - J_coarse))) / 3.0
        self._spline = CubicSpline(y, J)
        self._J = J
        lo, hi = mu.support_box
        reach = model.kernel.reach
        a, b = lo[0] - reach, hi[0] + reach
        total = self._cf.ygrid.integrate(J)
        inner = float(self._spline.integrate(a, b))
        total2 = self._cf.ygrid.integrate(J * J)
        inner2 = integrate_1d(lambda t: float(self._spline(t)) ** 2, a, b, 1e-10, 1e-14).value
        scale = self.mbar * self.lam
        self.far_mean = scale * self.kappa * (total.value - inner)
        self.far_sd = abs(scale) * math.sqrt(max(self.kappa * (total2.value - inner2), 0.0))
        n_near = self.kappa * (b - a)
        self.grid_error = abs(scale) * (total.error_estimate + n_near * self.interp_error)

    def J(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self._spline is None:
            return np.zeros(y.shape)
        return self._spline(y)

    def at(self, centers: np.ndarray) -> float:
        """``m_bar lambda sum_y J(y)`` over the given centers (no far term)."""
        if self._spline is None or centers.size == 0:
            return 0.0
        return float(self.mbar * self.lam * np.sum(self.J(centers[:, 0])))

    def for_realization(self, realization: Realization) -> float:
        if self._spline is None:
            return 0.0
        near = realization.centers[: realization.n_near_centers]
        return self.at(near) + self.far_mean

    def verify(self, n: int = 16, seed: int = 0, rel_tol: float = 1e-7) -> float:
        """Max relative gap between the table and direct quadrature at ``n`` random centers."""
        if self._spline is None:
            return 0.0
        rng = stream(seed, 0, tag=7)
        lo, hi = self.mu.support_box
        ys = rng.uniform(lo[0] - 3.0, hi[0] + 3.0, n)
        gaps = [abs(float(self.J(y)) - direct_J(self.model, self.rho, self.mu, y, rel_tol))
                / max(abs(float(self.J(y))), 1e-300) for y in ys]
        return max(gaps)


def direct_J(model: ModelSpec, rho: float, mu: TestMeasure, y: float, rel_tol: float = 1e-8) -> float:
    """``J(y)`` by nested adaptive quadrature over the radius and the density of ``mu``.

    Uses ``int mu(B(x, s)) k(x - y) dx = int phi(t) [K(t - y + s) - K(t - y - s)] dt``.
    """
    K = model.kernel.cdf1d
    w = model.radius.scaled_weight(rho)
    edges, vals = mu.segments()

    def inner(s):
        tot = 0.0
        for a, b, c in zip(edges[:-1], edges[1:], vals):
            if c == 0:
                continue
            g = lambda t: float(K(t - y + s) - K(t - y - s))
            tot += c * integrate_1d(g, a, b, rel_tol, 1e-15).value
        return tot * float(w.density(s))

    s0 = w.s0
    pts = sorted({abs(y - e) for e in edges if abs(y - e) > s0})
    head_end = max([s0 * 2] + pts) + 10.0 * model.kernel.reach
    head = integrate_1d(inner, s0, head_end, rel_tol, 1e-15, points=pts, limit=400)
    tail = integrate_1d(inner, head_end, math.inf, rel_tol, 1e-15, decay=w.beta + 1.0)
    return head.value + tail.value


@lru_cache(maxsize=16)
def _centering(model: ModelSpec, rho: float, mu: TestMeasure) -> Centering:
    return Centering(model, rho, mu)


def conditional_mean(centers, model: ModelSpec, rho: float, mu: TestMeasure) -> float:
    """``E[M_rho(mu) | centers]``.

    ``centers`` is an ``(n, d)`` array of cluster centers or a
    :class:`Realization`; for a realization the unobserved far centers enter
    through their expectation (see :class:`Centering`).
    """
    if model.marks.mean == 0.0:
        return 0.0
    cen = _centering(model, rho, mu)
    if isinstance(centers, Realization):
        return cen.for_realization(centers)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.size == 0:
        return 0.0
    return cen.at(centers)


def sample_fluctuations(model: ModelSpec, mu: TestMeasure, rho: float, N: int, seed: int, *,
                        threads: int = 1, r_max: float | None = None,
                        regime: Regime | None = None, start: int = 0) -> list[FluctuationSample]:
    """``N`` independent normalized fluctuations ``(M - E[M | centers]) / n(rho)``.

    Replicate ``i`` draws from the counter-based stream ``(seed, start + i)``,
    so the output does not depend on ``threads``.
    """
    if N < 0:
        raise ValidationError("N must be nonnegative")
    if N == 0:
        return []
    regime = classify_regime(model) if regime is None else regime
    n_rho = regime.n(rho)
    cen = _centering(model, rho, mu) if model.marks.mean != 0.0 else None

    def one(i: int) -> FluctuationSample:
        real = sample_realization(model, rho, mu, stream(seed, start + i), r_max=r_max)
        value = evaluate_field(real, mu)
        c = cen.for_realization(real) if cen is not None else 0.0
        return FluctuationSample(start + i, rho, value, c, (value - c) / n_rho)

    if threads <= 1:
        return [one(i) for i in range(N)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(N), chunksize=max(1, N // (8 * threads))))


def normalized_values(samples: list[FluctuationSample]) -> np.ndarray:
    return np.array([s.normalized for s in samples], dtype=float)


FLUCTUATION_COLUMNS = ("seed_index", "rho", "value", "centering", "normalized")


def write_fluctuations_csv(samples: list[FluctuationSample], path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLUCTUATION_COLUMNS)
        for s in samples:
            w.writerow([s.seed_index, repr(float(s.rho)), repr(float(s.value)),
                        repr(float(s.centering)), repr(float(s.normalized))])


def read_fluctuations_csv(path) -> list[FluctuationSample]:
    with open(path, newline="", encoding="ascii") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != FLUCTUATION_COLUMNS:
            raise ValidationError(f"unexpected fluctuation CSV columns {r.fieldnames}")
        return [FluctuationSample(int(row["seed_index"]), float(row["rho"]), float(row["value"]),
                                  float(row["centering"]), float(row["normalized"])) for row in r]
