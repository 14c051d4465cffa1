"""Probability-law primitives: kernels, radius laws, mark laws, stable draws.

Conventions
-----------
``S_alpha(sigma, b, 0)`` is the stable law whose log characteristic function
is ``-sigma**alpha |t|**alpha (1 - i b sign(t) tan(pi alpha / 2))``.  For
``alpha = 2`` the skewness term is exactly zero and the law is ``N(0, 2 sigma**2)``.

``psi(u) = exp(iu) - 1 - iu`` and ``psi_G(u) = E[psi(u m)]`` for a mark ``m ~ G``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Literal

import numpy as np
from scipy import integrate as _sint
from scipy import special
from scipy.interpolate import CubicHermiteSpline

from .errors import ValidationError
from .quadrature import (QuadResult, QuadratureError, gauss_legendre, geometric_edges, integrate_1d,
                         panel_integrate)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sign(x):
    """Sign with sign(0) = 0, elementwise."""
    return np.sign(x)


# --------------------------------------------------------------------------
# psi and the special integrals built on it


def psi(u):
    """``exp(iu) - 1 - iu``, accurate for small ``|u|``."""
    u = np.asarray(u, dtype=float)
    re = -2.0 * np.sin(0.5 * u) ** 2
    small = np.abs(u) < 1e-2
    with np.errstate(invalid="ignore"):
        im = np.where(small, -(u**3) / 6.0 + u**5 / 120.0 - u**7 / 5040.0, np.sin(u) - u)
    out = re + 1j * im
    return out if out.ndim else complex(out)


def _qawf(fun, a, kind, rel_tol):
    """``int_a^inf fun(t) cos|sin(t) dt`` (QUADPACK QAWF), absolutely convergent ``fun``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _sint.IntegrationWarning)
        val, err = _sint.quad(fun, a, np.inf, weight=kind, wvar=1.0,
                              epsabs=1e-15, epsrel=rel_tol, limlst=200)
    return val, err


@lru_cache(maxsize=256)
def one_minus_cos_integral(p: float, rel_tol: float = 1e-10) -> QuadResult:
    """``I(p) = int_0^inf (1 - cos r) r**(-1-p) dr`` for ``0 < p < 2``.

    Split at ``r = 1``.  The head is plain adaptive quadrature; on the tail the
    ``cos`` part is integrated by parts twice, leaving an absolutely convergent
    ``r**(-3-p)`` Fourier integral.
    """
    if not 0 < p < 2:
        raise ValidationError(f"I(p) needs 0 < p < 2, got {p}")
    head = integrate_1d(lambda r: 2.0 * math.sin(0.5 * r) ** 2 * r ** (-1.0 - p),
                        0.0, 1.0, rel_tol, 1e-15)
    rest, rest_err = _qawf(lambda r: r ** (-3.0 - p), 1.0, "cos", rel_tol)
    cos_tail = -math.sin(1.0) + (1.0 + p) * (math.cos(1.0) - (2.0 + p) * rest)
    value = head.value + 1.0 / p - cos_tail
    err = head.error_estimate + (1.0 + p) * (2.0 + p) * rest_err
    return QuadResult(value, err, head.evaluations)


@lru_cache(maxsize=256)
def sine_defect_integral(p: float, rel_tol: float = 1e-10) -> QuadResult:
    """``J(p) = int_0^inf (u - sin u) u**(-1-p) du`` for ``1 < p < 3``."""
    if not 1 < p < 3:
        raise ValidationError(f"J(p) needs 1 < p < 3, got {p}")

    def head_f(u):
        return float(-np.imag(psi(u))) * u ** (-1.0 - p)

    head = integrate_1d(head_f, 0.0, 1.0, rel_tol, 1e-15)
    rest, rest_err = _qawf(lambda u: u ** (-2.0 - p), 1.0, "cos", rel_tol)
    sin_tail = math.cos(1.0) - (1.0 + p) * rest
    value = head.value + 1.0 / (p - 1.0) - sin_tail
    return QuadResult(value, head.error_estimate + (1.0 + p) * rest_err, head.evaluations)


# --------------------------------------------------------------------------
# stable laws


@dataclass(frozen=True)
class StableParams:
    alpha: float
    sigma: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise ValidationError(f"alpha must lie in (1, 2], got {self.alpha}")
        if self.sigma < 0:
            raise ValidationError("sigma must be nonnegative")
        if abs(self.b) > 1:
            raise ValidationError("skewness must lie in [-1, 1]")

    @property
    def skew_tan(self) -> float:
        """``tan(pi alpha / 2) * b``, exactly 0 at ``alpha = 2``."""
        if self.alpha == 2.0:
            return 0.0
        return math.tan(math.pi * self.alpha / 2.0) * self.b

    def log_cf(self, t):
        t = np.asarray(t, dtype=float)
        return -(self.sigma ** self.alpha) * np.abs(t) ** self.alpha * (
            1.0 - 1j * sign(t) * self.skew_tan)


def sample_stable(params: StableParams, rng: np.random.Generator, size=None):
    """Draw from ``S_alpha(sigma, b, 0)`` (Chambers-Mallows-Stuck, alpha > 1)."""
    a, s = params.alpha, params.sigma
    if a == 2.0:
        return rng.normal(0.0, math.sqrt(2.0) * s, size)
    v = rng.uniform(-math.pi / 2, math.pi / 2, size)
    w = rng.standard_exponential(size)
    zeta = params.skew_tan
    shift = math.atan(zeta) / a
    scale = (1.0 + zeta * zeta) ** (1.0 / (2.0 * a))
    x = (scale * np.sin(a * (v + shift)) / np.cos(v) ** (1.0 / a)
         * (np.cos(v - a * (v + shift)) / w) ** ((1.0 - a) / a))
    return s * x


# --------------------------------------------------------------------------
# radius law


@dataclass(frozen=True)
class PowerWeight:
    """Radius weight ``c * s**(-beta-1)`` on ``s >= s0`` (``s0 = 0`` allowed)."""

    c: float
    beta: float
    s0: float = 0.0

    def density(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(s >= self.s0, self.c * s ** (-self.beta - 1.0), 0.0)

    def tail(self, t: float) -> float:
        """``int_t^inf`` of the weight."""
        t = max(t, self.s0)
        if t == 0.0:
            return math.inf
        return self.c * t ** (-self.beta) / self.beta


@dataclass(frozen=True)
class RadiusLaw:
    """Pareto radii ``f(r) = beta r0**beta r**(-beta-1)`` on ``r >= r0``."""

    beta: float
    r0: float = 1.0

    def __post_init__(self):
        if self.beta <= 0 or self.r0 <= 0:
            raise ValidationError("Pareto radius law needs beta > 0 and r0 > 0")

    @property
    def C_beta(self) -> float:
        return self.beta * self.r0 ** self.beta

    @property
    def C_0(self) -> float:
        return self.C_beta

    def pdf(self, r):
        return PowerWeight(self.C_beta, self.beta, self.r0).density(r)

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= self.r0, 1.0, (self.r0 / np.maximum(t, self.r0)) ** self.beta)

    def moment(self, j: float) -> float:
        """``int r**j f(r) dr`` (finite for ``j < beta``)."""
        if j >= self.beta:
            return math.inf
        return self.beta * self.r0 ** j / (self.beta - j)

    def tail_moment(self, j: float, t: float) -> float:
        """``int_t^inf r**j f(r) dr``."""
        if j >= self.beta:
            return math.inf
        t = max(t, self.r0)
        return self.C_beta * t ** (j - self.beta) / (self.beta - j)

    def scaled_weight(self, rho: float) -> PowerWeight:
        """Density of ``rho * R``: ``f(s/rho)/rho``."""
        return PowerWeight(self.C_beta * rho ** self.beta, self.beta, rho * self.r0)

    def limit_weight(self, a: float = 1.0) -> PowerWeight:
        return PowerWeight(a * self.C_beta, self.beta, 0.0)


def sample_radius(law: RadiusLaw, rho: float, rng: np.random.Generator, size=None, *,
                  bias: float = 0.0):
    """Inverse-CDF Pareto draw times ``rho``.

    ``bias = j`` draws from the ``r**j``-size-biased law (Pareto with index
    ``beta - j``), used when sampling balls that hit a target set.
    """
    u = rng.random(size)
    return rho * law.r0 * (1.0 - u) ** (-1.0 / (law.beta - bias))


# --------------------------------------------------------------------------
# cluster kernel


@dataclass(frozen=True)
class Kernel:
    family: Literal["gaussian", "uniform-ball"]
    bandwidth: float = 1.0
    dimension: int = 1
    tail_mass: float = 1e-6

    def __post_init__(self):
        if self.family not in ("gaussian", "uniform-ball"):
            raise ValidationError(f"unknown kernel family {self.family!r}")
        if self.bandwidth <= 0 or self.dimension < 1:
            raise ValidationError("kernel needs a positive bandwidth and dimension")

    @property
    def peak(self) -> float:
        h, d = self.bandwidth, self.dimension
        if self.family == "gaussian":
            return (2.0 * math.pi * h * h) ** (-d / 2)
        return 1.0 / (unit_ball_volume(d) * h**d)

    @property
    def reach(self) -> float:
        """Radius outside which the kernel mass is negligible (Gaussian) or zero."""
        if self.family == "gaussian":
            return self.bandwidth * math.sqrt(2.0 * math.log(1.0 / self.tail_mass))
        return self.bandwidth

    def density(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[-1] != self.dimension:
            raise ValidationError("kernel dimension mismatch")
        r2 = np.sum(z * z, axis=-1)
        if self.family == "gaussian":
            return self.peak * np.exp(-0.5 * r2 / self.bandwidth**2)
        return np.where(r2 <= self.bandwidth**2, self.peak, 0.0)

    def sample_offset(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        d, h = self.dimension, self.bandwidth
        if self.family == "gaussian":
            return h * rng.standard_normal((size, d))
        g = rng.standard_normal((size, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return h * g * rng.random((size, 1)) ** (1.0 / d)

    # one-dimensional helpers used for exact convolution with piecewise-linear profiles
    def cdf1d(self, t):
        t = np.asarray(t, dtype=float)
        h = self.bandwidth
        if self.family == "gaussian":
            return special.ndtr(t / h)
        return np.clip((t + h) / (2.0 * h), 0.0, 1.0)

    def first_moment1d(self, t):
        """``int_{-inf}^t z k(z) dz`` in one dimension."""
        t = np.asarray(t, dtype=float)
        h = self.bandwidth
        if self.family == "gaussian":
            return -h * np.exp(-0.5 * (t / h) ** 2) / math.sqrt(2.0 * math.pi)
        c = np.clip(t, -h, h)
        return (c * c - h * h) / (4.0 * h)


def kernel_eval(k: Kernel, x, y) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[-1] != k.dimension or y.shape[-1] != k.dimension:
        raise ValidationError("point dimension does not match kernel")
    return k.density(x - y)


def kernel_sample_offset(k: Kernel, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    return k.sample_offset(rng, size)


# --------------------------------------------------------------------------
# marks

MarkFamily = Literal["rademacher", "gaussian", "exact-stable", "two-sided-pareto", "dirac"]


@dataclass(frozen=True)
class MarkLaw:
    """Mark distribution ``G`` with its stable attractor.

    Use the constructors (:meth:`rademacher`, :meth:`gaussian`, :meth:`stable`,
    :meth:`two_sided_pareto`, :meth:`dirac`) rather than the raw fields.
    ``scale`` multiplies the base variable in every family.
    """

    family: MarkFamily
    scale: float = 1.0
    alpha: float = 2.0
    b: float = 0.0
    p_plus: float = 0.5
    psi_rel_tol: float = 1e-8
    psi_abs_tol: float = 1e-12
    _attractor: StableParams | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in ("rademacher", "gaussian", "exact-stable", "two-sided-pareto", "dirac"):
            raise ValidationError(f"unknown mark family {self.family!r}")
        if self.family != "dirac" and self.scale <= 0:
            raise ValidationError("mark scale must be positive")
        if self.family == "two-sided-pareto":
            if not 1.0 < self.alpha < 2.0:
                raise ValidationError("two-sided Pareto marks need 1 < alpha < 2")
            if not 0.0 <= self.p_plus <= 1.0:
                raise ValidationError("p_plus must lie in [0, 1]")
        if self.family == "exact-stable":
            StableParams(self.alpha, self.scale, self.b)

    # constructors -------------------------------------------------------
    @classmethod
    def rademacher(cls, scale: float = 1.0) -> "MarkLaw":
        return cls("rademacher", scale)

    @classmethod
    def gaussian(cls, scale: float = 1.0) -> "MarkLaw":
        return cls("gaussian", scale)

    @classmethod
    def stable(cls, alpha: float, sigma: float = 1.0, b: float = 0.0) -> "MarkLaw":
        return cls("exact-stable", sigma, alpha=alpha, b=b)

    @classmethod
    def two_sided_pareto(cls, alpha: float, scale: float = 1.0, p_plus: float = 0.5) -> "MarkLaw":
        return cls("two-sided-pareto", scale, alpha=alpha, p_plus=p_plus)

    @classmethod
    def dirac(cls, m0: float = 1.0) -> "MarkLaw":
        return cls("dirac", m0)

    def scaled(self, c: float) -> "MarkLaw":
        """Law of ``c * m`` for ``c > 0``."""
        if c <= 0:
            raise ValidationError("scaling factor must be positive")
        return MarkLaw(self.family, self.scale * c, self.alpha, self.b, self.p_plus,
                       self.psi_rel_tol, self.psi_abs_tol)

    # attractor and moments ----------------------------------------------
    @property
    def attractor(self) -> StableParams:
        if self._attractor is not None:
            return self._attractor
        return self._default_attractor

    @cached_property
    def _default_attractor(self) -> StableParams:
        c = self.scale
        if self.family in ("rademacher", "gaussian", "dirac"):
            # variance c**2 = 2 sigma**2
            return StableParams(2.0, abs(c) / math.sqrt(2.0), 0.0)
        if self.family == "exact-stable":
            return StableParams(self.alpha, c, self.b)
        return estimate_attractor(self)

    @cached_property
    def mean(self) -> float:
        c = self.scale
        if self.family == "dirac":
            return c
        if self.family == "two-sided-pareto":
            return (2 * self.p_plus - 1) * self.alpha * c / (self.alpha - 1)
        return 0.0

    @cached_property
    def abs_mean(self) -> float:
        return self.abs_moment(1.0)

    def abs_moment(self, p: float) -> float:
        """``int |m|**p G(dm)`` for ``0 < p < alpha``."""
        c = abs(self.scale)
        if self.family in ("rademacher", "dirac"):
            return c**p
        if self.family == "gaussian":
            return c**p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
        if self.family == "two-sided-pareto":
            return self.alpha * c**p / (self.alpha - p)
        return _stable_abs_moment(self.attractor, p)

    def signed_moment(self, p: float) -> float:
        """``int sign(m) |m|**p G(dm)``."""
        c = self.scale
        if self.family in ("rademacher", "gaussian"):
            return 0.0
        if self.family == "dirac":
            return math.copysign(abs(c) ** p, c) if c else 0.0
        if self.family == "two-sided-pareto":
            return (2 * self.p_plus - 1) * self.alpha * c**p / (self.alpha - p)
        if self.b == 0.0:
            return 0.0
        return _stable_signed_moment(self.attractor, p)

    # psi_G --------------------------------------------------------------
    def psi_G(self, u):
        """Vectorised ``psi_G``; closed forms, or a tabulated quadrature for Pareto marks."""
        u = np.asarray(u, dtype=float)
        c = self.scale
        if self.family == "rademacher":
            out = -2.0 * np.sin(0.5 * c * u) ** 2 + 0j
        elif self.family == "gaussian":
            out = np.expm1(-0.5 * (c * u) ** 2) + 0j
        elif self.family == "dirac":
            out = psi(c * u)
        elif self.family == "exact-stable":
            out = np.expm1(self.attractor.log_cf(u))
        else:
            out = self._pareto_psi(u)
        out = np.asarray(out, dtype=complex)
        return out if out.ndim else complex(out)

    def psi_G_quad(self, u: float) -> complex:
        """``psi_G(u)`` by direct adaptive quadrature over ``G`` (reference path)."""
        u = float(u)
        if u == 0.0:
            return 0j
        c = self.scale
        rt, at = self.psi_rel_tol, self.psi_abs_tol
        if self.family == "gaussian":
            dens = lambda m: math.exp(-0.5 * m * m) / math.sqrt(2 * math.pi)
            res = integrate_1d(lambda m: (-2.0 * math.sin(0.5 * c * u * m) ** 2) * dens(m),
                               -40.0, 40.0, rt, at, points=[0.0])
            return complex(res.value, 0.0)
        if self.family == "two-sided-pareto":
            val = _pareto_psi_direct(self.alpha, abs(u) * c, rt)
            val = self.alpha * (abs(u) * c) ** self.alpha * (
                self.p_plus * val + (1 - self.p_plus) * np.conj(val))
            return complex(val if u > 0 else np.conj(val))
        return complex(self.psi_G(u))

    @cached_property
    def _pareto_table(self):
        return _PARETO_TABLES(self.alpha)

    def _pareto_psi(self, u):
        a = self.alpha
        t0 = np.abs(u) * self.scale
        P = self._pareto_table(t0)
        val = a * t0**a * (self.p_plus * P + (1 - self.p_plus) * np.conj(P))
        return np.where(u > 0, val, np.where(u < 0, np.conj(val), 0.0))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        c = self.scale
        if self.family == "rademacher":
            return c * (2.0 * rng.integers(0, 2, size) - 1.0)
        if self.family == "gaussian":
            return c * rng.standard_normal(size)
        if self.family == "dirac":
            return np.full(size, float(c))
        if self.family == "exact-stable":
            return sample_stable(self.attractor, rng, size)
        y = c * (1.0 - rng.random(size)) ** (-1.0 / self.alpha)
        s = np.where(rng.random(size) < self.p_plus, 1.0, -1.0)
        return s * y


def psi_G(u, marks: MarkLaw):
    return marks.psi_G(u)


def small_theta_coefficient(marks: MarkLaw, theta_sign: int = 1) -> complex:
    """Limit of ``psi_G(theta) / |theta|**alpha`` as ``theta -> 0`` from the given side."""
    att = marks.attractor
    coef = -(att.sigma ** att.alpha)
    if att.alpha == 2.0:
        return complex(coef, 0.0)
    return coef * (1.0 - 1j * np.sign(theta_sign) * att.skew_tan)


def psi_bound_constant(marks: MarkLaw, lo: float = 1e-4, hi: float = 1e4, points: int = 801) -> float:
    """Empirical ``K`` with ``|psi_G(theta)| <= K |theta|**alpha``: the maximum of the ratio
    over a log grid of ``|theta|`` in ``[lo, hi]`` on both signs.

    The ratio tends to ``|small_theta_coefficient|`` at zero and decays like
    ``|theta|**(1 - alpha)`` at infinity, so the grid maximum is the supremum up to
    the grid resolution.
    """
    a = marks.attractor.alpha
    t = np.geomspace(lo, hi, points)
    ratio = np.abs(np.concatenate([marks.psi_G(t), marks.psi_G(-t)])) / np.concatenate([t, t]) ** a
    edge = max(abs(small_theta_coefficient(marks, 1)), abs(small_theta_coefficient(marks, -1)))
    return float(max(np.max(ratio), edge))


# --------------------------------------------------------------------------
# stable fractional moments via the characteristic function


def _stable_cf_integral(att: StableParams, p: float, part: str) -> float:
    """``int_0^inf (1 - Re phi) t**(-p-1) dt`` (``part="re"``) or ``int -Im phi t**(-p-1) dt``."""
    s_a = att.sigma ** att.alpha
    if s_a == 0:
        return 0.0
    a, T_ = att.alpha, att.skew_tan
    # below t1, y = s_a t**alpha <= 1e-4 and a two-term series is exact to ~1e-12
    t1 = (1e-4 / s_a) ** (1.0 / a)
    # exp(-s_a t**alpha) < 1e-17 beyond t2
    t2 = (40.0 / s_a) ** (1.0 / a)
    if part == "re":
        c1, c2 = s_a, -0.5 * s_a**2 * (1.0 - T_ * T_)
    else:
        c1, c2 = -s_a * T_, s_a**2 * T_
    head = c1 * t1 ** (a - p) / (a - p) + c2 * t1 ** (2 * a - p) / (2 * a - p)

    def f(t):
        z = np.exp(complex(att.log_cf(t)))
        if part == "re":
            return (1.0 - z.real) * t ** (-p - 1.0)
        return -z.imag * t ** (-p - 1.0)

    res = integrate_1d(f, t1, t2, 1e-11, 1e-14, limit=1000)
    tail = t2 ** (-p) / p if part == "re" else 0.0
    return head + res.value + tail


def _stable_abs_moment(att: StableParams, p: float) -> float:
    if p >= att.alpha and att.alpha < 2:
        return math.inf
    if att.alpha == 2.0:
        sd = math.sqrt(2.0) * att.sigma
        return sd**p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
    return _stable_cf_integral(att, p, "re") / one_minus_cos_integral(p).value


def _stable_signed_moment(att: StableParams, p: float) -> float:
    if not 1.0 < p < att.alpha:
        raise ValidationError("signed stable moment implemented for 1 < p < alpha")
    # E[sign(X)|X|^p] J(p) = int (t E[X] - Im phi(t)) t^(-p-1) dt with E[X] = 0
    return _stable_cf_integral(att, p, "im") / sine_defect_integral(p).value


# --------------------------------------------------------------------------
# two-sided Pareto marks
#
# With Y ~ Pareto(alpha, 1): E psi(t Y) = alpha t**alpha P(t), where
# P(t) = int_t^inf psi(s) s**(-alpha-1) ds.


def _series_head(alpha: float, t):
    """``int_0^t psi(s) s**(-alpha-1) ds`` from the Taylor series of ``psi`` (small ``t``)."""
    a = alpha
    return (-(t ** (2 - a)) / (2 * (2 - a)) - 1j * t ** (3 - a) / (6 * (3 - a))
            + t ** (4 - a) / (24 * (4 - a)))


def _fourier_tail(alpha: float, T: float, rel_tol: float) -> complex:
    """``int_T^inf psi(s) s**(-alpha-1) ds``."""
    c, _ = _qawf(lambda s: s ** (-alpha - 1.0), T, "cos", rel_tol)
    s_, _ = _qawf(lambda s: s ** (-alpha - 1.0), T, "sin", rel_tol)
    return complex(c, s_) - T ** (-alpha) / alpha - 1j * T ** (1.0 - alpha) / (alpha - 1.0)


def _pareto_psi_direct(alpha: float, t0: float, rel_tol: float = 1e-11) -> complex:
    """``P(t0) = int_t0^inf psi(s) s**(-alpha-1) ds`` by panel quadrature plus a Fourier tail."""
    f = lambda s: psi(s) * s ** (-alpha - 1.0)
    T = 50.0
    if t0 >= T:
        return _fourier_tail(alpha, t0, rel_tol)
    lo = 1e-4
    head = 0j
    if t0 < lo:
        head = _series_head(alpha, lo) - _series_head(alpha, t0)
    start = max(t0, lo)
    one = max(1.0, start)
    edges = np.concatenate([geometric_edges(start, one, 1.5)[:-1],
                            np.linspace(one, T, int(2 * (T - one)) + 2)])
    body = complex(panel_integrate(f, edges, 24).value)
    return head + body + _fourier_tail(alpha, T, rel_tol)


def _pareto_full_integral(alpha: float, rel_tol: float = 1e-11) -> complex:
    """``P(0)`` by quadrature (the closed form is ``Gamma(-alpha) exp(-i pi alpha / 2)``)."""
    return _pareto_psi_direct(alpha, 0.0, rel_tol)


def _oscillatory_tail(b: float, t, terms: int = 10):
    """Asymptotic ``int_t^inf exp(is) s**(-b) ds`` from repeated integration by parts."""
    t = np.asarray(t, dtype=float)
    total = np.zeros(t.shape, dtype=complex)
    coef = 1j + 0j
    for k in range(terms):
        total = total + coef * t ** (-b - k)
        coef = coef * (-1j) * (b + k)
    return np.exp(1j * t) * total


class _ParetoTable:
    """Spline table of ``P(t)`` with series below and an asymptotic expansion above."""

    LO, MID, HI = 1e-6, 1.0, 50.0

    def __init__(self, alpha: float):
        self.alpha = a = alpha
        self.P0 = complex(special.gamma(-a) * np.exp(-0.5j * math.pi * a))
        f = lambda s: psi(s) * s ** (-a - 1.0)
        g_log = np.geomspace(self.LO, self.MID, 701)
        g_lin = np.linspace(self.MID, self.HI, 9801)
        grid = np.concatenate([g_log, g_lin[1:]])
        x, w = gauss_legendre(12)
        lo, hi = grid[:-1], grid[1:]
        nodes = 0.5 * (hi + lo)[:, None] + 0.5 * (hi - lo)[:, None] * x
        pieces = (0.5 * (hi - lo)[:, None] * w * f(nodes)).sum(axis=1)
        cum = _series_head(a, self.LO) + np.concatenate([[0.0], np.cumsum(pieces)])
        vals = self.P0 - cum
        deriv = -f(grid)
        n = g_log.size
        # Hermite interpolation with the exact derivative P'(t) = -psi(t) t**(-alpha-1)
        self.log_spline = CubicHermiteSpline(np.log(g_log), vals[:n], deriv[:n] * g_log)
        self.lin_spline = CubicHermiteSpline(g_lin, vals[n - 1:], deriv[n - 1:])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a = self.alpha
        out = np.empty(t.shape, dtype=complex)
        lo = t < self.LO
        hi = t > self.HI
        mid_log = (t >= self.LO) & (t < self.MID)
        mid_lin = (t >= self.MID) & ~hi
        out[lo] = self.P0 - _series_head(a, t[lo])
        lt = np.log(t[mid_log])
        out[mid_log] = self.log_spline(lt)
        out[mid_lin] = self.lin_spline(t[mid_lin])
        th = t[hi]
        out[hi] = (-th ** (-a) / a - 1j * th ** (1 - a) / (a - 1)
                   + _oscillatory_tail(a + 1.0, th))
        return out


@lru_cache(maxsize=32)
def _PARETO_TABLES(alpha: float) -> _ParetoTable:
    return _ParetoTable(alpha)


def estimate_attractor(marks: MarkLaw, thetas=(1e-3, 2.5e-4)) -> StableParams:
    """Estimate ``(sigma, b)`` from the small-``theta`` limit of ``psi_G(theta)/theta**alpha``.

    Two evaluations by direct quadrature; the leading ``theta**(2-alpha)``
    correction is removed by Richardson extrapolation.
    """
    a = marks.alpha
    t1, t2 = thetas
    if a == 2.0:
        # no theta**(2-alpha) correction; the real part converges at O(theta**2)
        s_a = -(marks.psi_G_quad(t2) / t2**2).real
        if s_a <= 0:
            raise QuadratureError("attractor estimate produced a nonpositive scale")
        return StableParams(2.0, math.sqrt(s_a), 0.0)
    g1 = marks.psi_G_quad(t1) / t1**a
    g2 = marks.psi_G_quad(t2) / t2**a
    w1, w2 = t1 ** (2 - a), t2 ** (2 - a)
    c = (g2 * w1 - g1 * w2) / (w1 - w2)
    s_a = -c.real
    if s_a <= 0:
        raise QuadratureError("attractor estimate produced a nonpositive scale")
    tan = math.tan(math.pi * a / 2)
    b = float(np.clip(c.imag / (s_a * tan), -1.0, 1.0))
    return StableParams(a, s_a ** (1.0 / a), b)
