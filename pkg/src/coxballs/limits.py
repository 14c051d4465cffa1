"""Characteristic functions of the normalized fluctuation: exact at finite ``rho`` and in the six limits.

Every evaluator returns :class:`CFValues`, the values on a theta grid with a
per-theta error estimate.  The grid-based evaluators (exact CF and the local
limits) estimate their discretization error by repeating the computation on
a coarser grid and adding the difference to the quadrature estimates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import CapabilityError, ValidationError
from .field import Regime, classify_regime
from .laws import (MarkLaw, PowerWeight, StableParams, one_minus_cos_integral,
                   sine_defect_integral, unit_ball_volume)
from .measures import (BallFunctional1D, ClusterFunctional1D, TestMeasure, global_x_grid,
                       signed_alpha_integrals)
from .pointprocess import ModelSpec
from .quadrature import QuadResult, integrate_1d

FINE = dict(spacing=0.01, ratio=1.005)
COARSE = dict(spacing=0.02, ratio=1.01)


@dataclass(frozen=True)
class CFValues:
    thetas: np.ndarray
    values: np.ndarray
    errors: np.ndarray

    def __len__(self) -> int:
        return self.thetas.size

    def at(self, theta: float) -> complex:
        i = int(np.flatnonzero(self.thetas == theta)[0])
        return complex(self.values[i])


def _thetas(theta) -> np.ndarray:
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    if t.ndim != 1 or not np.all(np.isfinite(t)):
        raise ValidationError("theta must be a finite scalar or 1-d array")
    return t


def _clip_unit(v: complex) -> complex:
    # a CF has modulus at most 1; quadrature noise may push it a hair above
    a = abs(v)
    return v / a if a > 1.0 else v


# ---------------------------------------------------------------------------
# constants of the small-ball limits


@dataclass(frozen=True)
class GammaConstants:
    """Constants of the gamma-stable limits, ``gamma = beta / d``.

    ``sigma_gamma = (C_beta v_d**gamma / d) I(gamma) int |m|**gamma G(dm)`` and
    ``b_gamma = -int sign(m) |m|**gamma G / int |m|**gamma G``.  In the
    notation of :class:`StableParams` the limit has log-CF
    ``-sigma_gamma |theta|**gamma (1 + i sign(theta) tan(pi gamma/2) b_gamma)``
    per unit of ``int |phi|**gamma``, i.e. ``sigma_gamma`` plays the role of
    ``sigma**gamma`` and the skewness is ``-b_gamma``.
    """

    sigma_gamma: float
    b_gamma: float
    gamma: float
    error_estimate: float = 0.0


def gamma_constants(marks: MarkLaw, beta: float, d: int, C_beta: float, *,
                    rel_tol: float = 1e-10) -> GammaConstants:
    gamma = beta / d
    alpha = marks.attractor.alpha
    if not 1.0 < gamma < alpha:
        raise ValidationError(f"need 1 < gamma = beta/d < alpha, got gamma={gamma}, alpha={alpha}")
    I = one_minus_cos_integral(gamma, rel_tol)
    abs_m = marks.abs_moment(gamma)
    pre = C_beta * unit_ball_volume(d) ** gamma / d
    sigma = pre * I.value * abs_m
    b = -marks.signed_moment(gamma) / abs_m if abs_m > 0 else 0.0
    return GammaConstants(sigma, b, gamma, pre * I.error_estimate * abs_m)


def small_ball_integral(marks: MarkLaw, gamma: float, sgn: float, *,
                        rel_tol: float = 1e-10) -> complex:
    """``Q(sgn) = int_0^inf psi_G(sgn v) v**(-1-gamma) dv`` for ``1 < gamma < alpha``.

    Substituting ``w = |m| v`` gives
    ``Q(+-1) = -I(gamma) E|m|**gamma -+ i J(gamma) E[sign(m) |m|**gamma]``
    with ``I`` and ``J`` the one-minus-cosine and sine-defect integrals.
    """
    I = one_minus_cos_integral(gamma, rel_tol).value
    J = sine_defect_integral(gamma, rel_tol).value
    q = complex(-I * marks.abs_moment(gamma), -J * marks.signed_moment(gamma))
    return q if sgn > 0 else q.conjugate()


# ---------------------------------------------------------------------------
# cluster-integral evaluators in dimension one


class _ClusterCF:
    """``exp(-kappa int (1 - exp(inner(y))) dy)`` with ``inner = lam * smooth(h)``.

    ``h(x) = int F_theta(mu(B(x, s))) w(s) ds`` is computed by
    :class:`ClusterFunctional1D` on a fine and a coarse grid.
    """

    def __init__(self, mu: TestMeasure, weight: PowerWeight, kernel, kappa: float, lam: float,
                 F, *, homogeneity=None, max_freq: float = 0.0):
        if mu.dimension != 1:
            raise CapabilityError("cluster characteristic functions are implemented for d = 1")
        self.kappa, self.lam, self.F, self.homogeneity = kappa, lam, F, homogeneity
        self.mu = mu
        self._args = (mu, weight, kernel)
        self._max_freq = max_freq

    @cached_property
    def fine(self) -> ClusterFunctional1D:
        return ClusterFunctional1D(*self._args, max_freq=self._max_freq, **FINE)

    @cached_property
    def coarse(self) -> ClusterFunctional1D:
        return ClusterFunctional1D(*self._args, max_freq=self._max_freq, **COARSE)

    def _one(self, cf: ClusterFunctional1D, theta: float) -> QuadResult:
        if not self.mu.pieces:
            return QuadResult(0.0, 0.0, 0)
        inner = self.lam * cf.smoothed(lambda m: self.F(theta, m), homogeneity=self.homogeneity)
        return cf.ygrid.integrate(-np.expm1(inner))

    def __call__(self, theta) -> CFValues:
        t = _thetas(theta)
        vals = np.empty(t.size, complex)
        errs = np.empty(t.size)
        for i, th in enumerate(t):
            if th == 0.0:
                vals[i], errs[i] = 1.0, 0.0
                continue
            f = self._one(self.fine, th)
            c = self._one(self.coarse, th)
            v = np.exp(-self.kappa * f.value)
            vals[i] = _clip_unit(complex(v))
            # d exp(-kappa z) = -kappa exp(-kappa z) dz
            dz = f.error_estimate + abs(f.value - c.value)
            errs[i] = abs(v) * self.kappa * dz * math.exp(self.kappa * dz) if self.kappa * dz < 50 else 2.0
        return CFValues(t, vals, np.minimum(errs, 2.0))


def _max_freq(theta_max: float, marks: MarkLaw, n: float) -> float:
    if marks.family in ("rademacher", "dirac"):
        return theta_max * abs(marks.scale) / n
    return 0.0


def exact_cf(model: ModelSpec, mu: TestMeasure, rho: float, theta, *,
             regime: Regime | None = None) -> CFValues:
    """CF of ``(M_rho(mu) - E[M_rho(mu) | centers]) / n(rho)`` at finite ``rho``.

    ``exp(-kappa int (1 - exp(I(y))) dy)`` with
    ``I(y) = lam int int psi_G(theta mu(B(x, s)) / n) k(x - y) f_rho(s) ds dx``.
    """
    if not 0.0 < rho < 1.0:
        raise ValidationError("rho must lie in (0, 1)")
    regime = classify_regime(model) if regime is None else regime
    t = _thetas(theta)
    n = regime.n(rho)
    marks = model.marks
    ev = _ClusterCF(mu, model.radius.scaled_weight(rho), model.kernel,
                    model.scaling.kappa(rho), model.scaling.lam(rho),
                    lambda th, m: marks.psi_G(th * m / n),
                    max_freq=_max_freq(float(np.max(np.abs(t))), marks, n))
    return ev(t)


def fluctuation_variance(model: ModelSpec, mu: TestMeasure, rho: float, *,
                         regime: Regime | None = None) -> QuadResult:
    """Exact variance of the normalized fluctuation at finite ``rho``.

    ``kappa lam E[m**2] int int mu(B(x, s))**2 f_rho(s) ds dx / n**2``; the
    kernel integrates out.  Needs marks with a finite second moment.
    """
    marks = model.marks
    if marks.attractor.alpha != 2.0:
        raise ValidationError("the fluctuation variance is infinite for marks with alpha < 2")
    if mu.dimension != 1:
        raise CapabilityError("fluctuation_variance is implemented for d = 1")
    if marks.family == "exact-stable":
        m2 = 2.0 * marks.attractor.sigma ** 2
    else:
        m2 = marks.abs_moment(2.0)
    regime = classify_regime(model) if regime is None else regime
    n = regime.n(rho)
    grid = global_x_grid(mu)
    engine = BallFunctional1D(mu, model.radius.scaled_weight(rho), grid.x)
    res = grid.integrate(engine.apply(lambda m: m * m))
    c = model.scaling.kappa(rho) * model.scaling.lam(rho) * m2 / n**2
    return QuadResult(c * res.value, c * res.error_estimate, res.evaluations)


# ---------------------------------------------------------------------------
# limits


def stable_limit_params(mu: TestMeasure, marks: MarkLaw, radius, regime: Regime, *,
                        rel_tol: float = 1e-8) -> StableParams:
    """Marginal law ``S_alpha(sigma A**(1/alpha), b B / A, 0)`` of the global-stable limit."""
    if regime.kind != "global-stable":
        raise ValidationError(f"stable_limit_params needs a global-stable regime, got {regime.kind}")
    att = marks.attractor
    A, B = signed_alpha_integrals(mu, att.alpha, radius.beta, radius.C_beta, rel_tol=rel_tol)
    if A.value == 0.0:
        return StableParams(att.alpha, 0.0, 0.0)
    b = float(np.clip(att.b * B.value / A.value, -1.0, 1.0))
    return StableParams(att.alpha, att.sigma * A.value ** (1.0 / att.alpha), b)


def _stable_F(att: StableParams):
    def F(theta, m):
        am = np.abs(m) ** att.alpha
        return -(att.sigma ** att.alpha) * abs(theta) ** att.alpha * am * (
            1.0 - 1j * np.sign(theta) * np.sign(m) * att.skew_tan)
    return F


def _piece_table(mu: TestMeasure):
    """``(volume, density)`` of the constant pieces of ``phi``."""
    if mu.dimension == 1:
        edges, vals = mu.segments()
        return np.diff(edges), vals
    vols = np.array([p.volume for p in mu.pieces])
    return vols, np.array([p.weight for p in mu.pieces])


def _gamma_exponent(theta: float, marks: MarkLaw, beta: float, d: int, C_beta: float,
                    vols: np.ndarray, dens: np.ndarray) -> np.ndarray:
    """``h = (C_beta v_d**gamma / d) |theta c|**gamma Q(sign(theta c))`` per piece."""
    gamma = beta / d
    pre = C_beta * unit_ball_volume(d) ** gamma / d
    qp = small_ball_integral(marks, gamma, 1.0)
    out = np.zeros(dens.size, complex)
    for i, c in enumerate(dens):
        u = theta * c
        if u != 0.0:
            out[i] = pre * abs(u) ** gamma * (qp if u > 0 else qp.conjugate())
    return out


class LimitCF:
    """Limit characteristic function of the normalized fluctuation for ``regime``."""

    def __init__(self, regime: Regime, model: ModelSpec, mu: TestMeasure):
        expected = classify_regime(model)
        if expected.kind != regime.kind:
            raise ValidationError(f"regime {regime.kind} does not match the model ({expected.kind})")
        if mu.dimension != model.d:
            raise ValidationError("measure and model dimensions differ")
        self.regime, self.model, self.mu = regime, model, mu
        self.marks = model.marks
        self.att = model.marks.attractor
        self.C_beta = model.radius.C_beta
        self.beta = model.radius.beta
        kind = regime.kind
        if kind in ("local-stable", "local-intermediate", "local-smallballs",
                    "global-poisson") and model.d != 1:
            raise CapabilityError(f"{kind} limits are implemented for d = 1")

    @cached_property
    def _signed(self):
        return signed_alpha_integrals(self.mu, self.att.alpha, self.beta, self.C_beta)

    def __call__(self, theta) -> CFValues:
        t = _thetas(theta)
        kind = self.regime.kind
        if kind == "global-stable":
            return self._global_stable(t)
        if kind == "global-poisson":
            return self._global_poisson(t)
        if kind == "global-gamma":
            return self._global_gamma(t)
        if kind == "local-smallballs":
            return self._local_smallballs(t)
        return self._local_cluster(t)

    def _global_stable(self, t) -> CFValues:
        A, B = self._signed
        att = self.att
        expo = -(att.sigma ** att.alpha) * np.abs(t) ** att.alpha * (
            A.value - 1j * np.sign(t) * att.skew_tan * B.value)
        vals = np.exp(expo)
        derr = (att.sigma ** att.alpha) * np.abs(t) ** att.alpha * (
            A.error_estimate + abs(att.skew_tan) * B.error_estimate)
        return CFValues(t, vals, np.abs(vals) * derr)

    def _global_poisson(self, t) -> CFValues:
        w = self.model.radius.limit_weight(self.regime.a)
        vals = np.empty(t.size, complex)
        errs = np.empty(t.size)
        results = {}
        for key, kw in (("fine", dict(spacing=0.01, ratio=1.02)), ("coarse", dict(spacing=0.02, ratio=1.04))):
            grid = global_x_grid(self.mu, **kw)
            mf = float(np.max(np.abs(t))) * _max_freq(1.0, self.marks, 1.0)
            engine = BallFunctional1D(self.mu, w, grid.x, max_freq=mf)
            results[key] = [grid.integrate(engine.apply(lambda m, th=th: self.marks.psi_G(th * m),
                                                        homogeneity=self.att.alpha))
                            if th != 0 else QuadResult(0.0, 0.0, 0) for th in t]
        for i in range(t.size):
            f, c = results["fine"][i], results["coarse"][i]
            v = np.exp(f.value)
            vals[i] = _clip_unit(complex(v))
            errs[i] = abs(v) * (f.error_estimate + abs(f.value - c.value))
        return CFValues(t, vals, errs)

    def _global_gamma(self, t) -> CFValues:
        vols, dens = _piece_table(self.mu)
        d = self.model.d
        vals = np.array([np.exp(np.sum(vols * _gamma_exponent(th, self.marks, self.beta, d,
                                                                self.C_beta, vols, dens)))
                         for th in t])
        return CFValues(t, vals, 1e-9 * np.abs(np.log(np.abs(vals) + 1e-300)))

    def _local_smallballs(self, t) -> CFValues:
        kernel = self.model.kernel
        edges, dens = self.mu.segments()
        K = kernel.cdf1d
        if kernel.family == "gaussian":
            lo, hi = edges[0] - 12 * kernel.bandwidth, edges[-1] + 12 * kernel.bandwidth
            pts = list(edges)
        else:
            lo, hi = edges[0] - kernel.bandwidth, edges[-1] + kernel.bandwidth
            pts = list(np.concatenate([edges - kernel.bandwidth, edges + kernel.bandwidth]))
        vals = np.empty(t.size, complex)
        errs = np.empty(t.size)
        for i, th in enumerate(t):
            if th == 0.0 or not self.mu.pieces:
                vals[i], errs[i] = 1.0, 0.0
                continue
            h = _gamma_exponent(th, self.marks, self.beta, 1, self.C_beta, np.diff(edges), dens)

            def g(y):
                inner = np.sum(h * (K(edges[1:] - y) - K(edges[:-1] - y)))
                return -np.expm1(inner)

            res = integrate_1d(g, lo, hi, 1e-10, 1e-13, points=pts, complex_valued=True, limit=400)
            v = np.exp(-res.value)
            vals[i] = _clip_unit(complex(v))
            errs[i] = abs(v) * res.error_estimate
        return CFValues(t, vals, errs)

    def _local_cluster(self, t) -> CFValues:
        kind = self.regime.kind
        if kind == "local-stable":
            w = PowerWeight(self.C_beta, self.beta, 0.0)
            F = _stable_F(self.att)
            mf = 0.0
        else:
            w = self.model.radius.limit_weight(self.regime.a)
            F = lambda th, m: self.marks.psi_G(th * m)
            mf = _max_freq(float(np.max(np.abs(t))), self.marks, 1.0)
        ev = _ClusterCF(self.mu, w, self.model.kernel, 1.0, 1.0, F,
                        homogeneity=self.att.alpha, max_freq=mf)
        return ev(t)


def limit_cf(regime: Regime, model: ModelSpec, mu: TestMeasure, theta) -> CFValues:
    """Limit CF of the normalized fluctuation in the given regime."""
    return LimitCF(regime, model, mu)(theta)


# ---------------------------------------------------------------------------
# export

CF_TABLE_COLUMNS = ("theta", "re", "im", "error_estimate")


def write_cf_table(cf: CFValues, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CF_TABLE_COLUMNS)
        for th, v, e in zip(cf.thetas, cf.values, cf.errors):
            w.writerow([repr(float(th)), repr(float(v.real)), repr(float(v.imag)), repr(float(e))])
