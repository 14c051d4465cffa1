"""Shared numerical-integration engine.

Three tools live here:

* :func:`integrate_1d` -- adaptive Gauss-Kronrod (QUADPACK via scipy) with a
  power-law substitution for half-lines, complex integrands supported.
* :func:`panel_integrate` -- vectorised composite Gauss-Legendre on explicit
  panels with an embedded error estimate.  This is the workhorse of the hot
  paths, where the integrand is cheap to evaluate on whole arrays.
* :func:`integrate_box` / :func:`convolve_grid` -- low-dimensional cubature and
  uniform-grid convolution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _sint
from scipy import sparse
from scipy.signal import fftconvolve
from scipy.stats import qmc

from .errors import ValidationError


@dataclass(frozen=True)
class QuadResult:
    value: complex | float
    error_estimate: float
    evaluations: int

    def __iter__(self):
        yield self.value
        yield self.error_estimate


class QuadratureError(RuntimeError):
    """Raised when a rule cannot reach its tolerance; carries the best estimate."""

    def __init__(self, message: str, best: QuadResult | None = None):
        super().__init__(message)
        self.best = best


def _target(value, rel_tol, abs_tol):
    return max(abs_tol, rel_tol * abs(value))


def _quad_real(f, a, b, rel_tol, abs_tol, points, limit):
    # known breakpoints: integrate piece by piece, which is more robust than QAGP
    # when an endpoint singularity sits next to interior kinks
    cuts = [a, b]
    if points is not None and math.isfinite(a) and math.isfinite(b):
        cuts = [a] + sorted(p for p in set(points) if a < p < b) + [b]
    value, err, nev, ier = 0.0, 0.0, 0, 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _sint.IntegrationWarning)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            out = _sint.quad(f, lo, hi, epsabs=abs_tol / (len(cuts) - 1), epsrel=rel_tol,
                             limit=limit, full_output=1)
            value += out[0]
            err += out[1]
            nev += out[2]["neval"]
            ier = ier or len(out) != 3
    return value, err, nev, ier


def integrate_1d(
    f: Callable[[float], complex | float],
    a: float,
    b: float,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-12,
    *,
    decay: float | None = None,
    points: Sequence[float] | None = None,
    complex_valued: bool = False,
    limit: int = 500,
) -> QuadResult:
    """Adaptively integrate ``f`` over ``[a, b]``.

    ``b`` may be ``inf``; then ``decay`` must give an exponent ``p > 1`` such
    that ``|f(x)| = O(x**-p)``.  The tail ``[c, inf)`` is mapped to ``(0, 1]``
    through ``x = c * t**(-1/(p-1))``, which turns the algebraic tail into a
    bounded integrand.

    Raises :class:`QuadratureError` when the reported error exceeds the
    requested tolerance.
    """
    if b < a:
        res = integrate_1d(f, b, a, rel_tol, abs_tol, decay=decay, points=points,
                           complex_valued=complex_valued, limit=limit)
        return QuadResult(-res.value, res.error_estimate, res.evaluations)
    if math.isinf(a):
        raise ValueError("lower limit must be finite")
    if math.isinf(b):
        if decay is None or decay <= 1.0:
            raise ValueError("half-line integration requires a decay exponent > 1")
        c = max(1.0, a + 1.0) if a <= 0 else a
        head = integrate_1d(f, a, c, rel_tol, abs_tol, points=points,
                            complex_valued=complex_valued, limit=limit) if c > a else None
        q = 1.0 / (decay - 1.0)

        def g(t):
            if t <= 0.0:
                return 0.0
            x = c * t ** (-q)
            return f(x) * c * q * t ** (-q - 1.0)

        tail = integrate_1d(g, 0.0, 1.0, rel_tol, abs_tol,
                            complex_valued=complex_valued, limit=limit)
        if head is None:
            return tail
        return QuadResult(head.value + tail.value,
                          head.error_estimate + tail.error_estimate,
                          head.evaluations + tail.evaluations)

    if complex_valued:
        re = _quad_real(lambda x: complex(f(x)).real, a, b, rel_tol, abs_tol, points, limit)
        im = _quad_real(lambda x: complex(f(x)).imag, a, b, rel_tol, abs_tol, points, limit)
        value = complex(re[0], im[0])
        err = math.hypot(re[1], im[1])
        nev = re[2] + im[2]
        ier = re[3] or im[3]
    else:
        value, err, nev, ier = _quad_real(f, a, b, rel_tol, abs_tol, points, limit)
    res = QuadResult(value, float(err), int(nev))
    if ier and err > _target(value, rel_tol, abs_tol):
        raise QuadratureError(
            f"quadrature on [{a}, {b}] reached error {err:.3g} > tolerance "
            f"{_target(value, rel_tol, abs_tol):.3g}", res)
    return res


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def panel_nodes(edges: np.ndarray, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights for consecutive ``edges``."""
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    x, w = gauss_legendre(order)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def panel_integrate(
    f: Callable[[np.ndarray], np.ndarray],
    edges: Sequence[float],
    order: int = 16,
) -> QuadResult:
    """Integrate a vectorised ``f`` over panels given by ``edges``.

    The error estimate is the gap between the ``order`` rule and the rule of
    half the order on the same panels.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2:
        return QuadResult(0.0, 0.0, 0)
    xs, ws = panel_nodes(edges, order)
    fine = np.sum(ws * f(xs))
    xc, wc = panel_nodes(edges, max(2, order // 2))
    coarse = np.sum(wc * f(xc))
    return QuadResult(fine, float(abs(fine - coarse)), xs.size + xc.size)


def geometric_edges(lo: float, hi: float, ratio: float = 2.0) -> np.ndarray:
    """Panel edges between ``lo > 0`` and ``hi`` with consecutive ratio <= ``ratio``."""
    if hi <= lo:
        return np.array([lo, hi])
    n = max(1, int(math.ceil(math.log(hi / lo) / math.log(ratio))))
    return np.geomspace(lo, hi, n + 1)


def integrate_box(
    f: Callable[[np.ndarray], np.ndarray],
    box: tuple[Sequence[float], Sequence[float]],
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-12,
    *,
    points: Sequence[Sequence[float]] | None = None,
    qmc_points: int = 2**16,
    seed: int = 0,
    method: str = "auto",
) -> QuadResult:
    """Integrate ``f`` (array of shape ``(n, d)`` -> ``(n,)``) over a box.

    ``method="auto"`` uses tensor-product adaptive rules for ``d <= 2`` and
    randomised Sobol points for ``d == 3``; ``method="qmc"`` forces the Sobol
    rule in any dimension.  The QMC error heuristic is three standard errors
    over 8 independent scrambles.  ``points[i]`` lists known breakpoints along
    axis ``i`` (tensor rules only).
    """
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    d = lo.size
    if np.any(hi < lo):
        raise ValueError("empty box")
    if method not in ("auto", "qmc"):
        raise ValueError(f"unknown integration method {method!r}")
    if d > 3:
        raise ValueError(f"integrate_box supports d <= 3, got d={d}")
    if method == "qmc" or d == 3:
        vol = float(np.prod(hi - lo))
        m = int(2 ** math.ceil(math.log2(max(qmc_points // 8, 2))))
        ests = []
        for k in range(8):
            u = qmc.Sobol(d=d, scramble=True, seed=seed + k).random(m)
            ests.append(vol * float(np.mean(f(lo + u * (hi - lo)))))
        ests = np.array(ests)
        return QuadResult(float(ests.mean()), float(3 * ests.std(ddof=1) / math.sqrt(8)), 8 * m)
    if d == 1:
        pts = None if points is None else points[0]
        return integrate_1d(lambda x: float(f(np.array([[x]]))[0]), lo[0], hi[0],
                            rel_tol, abs_tol, points=pts)
    pts0 = None if points is None else points[0]
    pts1 = None if points is None else points[1]
    evals = 0

    def inner(x0):
        nonlocal evals
        r = integrate_1d(lambda x1: float(f(np.array([[x0, x1]]))[0]), lo[1], hi[1],
                         rel_tol, abs_tol * 1e-2, points=pts1)
        evals += r.evaluations
        return r.value

    outer = integrate_1d(inner, lo[0], hi[0], rel_tol, abs_tol, points=pts0)
    return QuadResult(outer.value, outer.error_estimate, evals)


def convolve_grid(values: np.ndarray, kernel, spacing: float) -> np.ndarray:
    """Convolve samples on a uniform grid with a kernel density.

    The kernel is sampled on the same spacing out to its reach and its
    weights are renormalised to unit mass, so constants are preserved away
    from the grid edge; within one kernel reach of the edge the result is
    truncated (mass outside the grid counts as zero).
    """
    values = np.asarray(values)
    d = values.ndim
    if kernel.dimension != d:
        raise ValueError("kernel dimension does not match grid")
    if kernel.bandwidth / spacing < 8:
        raise ValidationError(
            f"grid spacing {spacing} does not resolve bandwidth {kernel.bandwidth} "
            "(need >= 8 points per bandwidth)")
    m = int(math.ceil(kernel.reach / spacing))
    ax = np.arange(-m, m + 1) * spacing
    mesh = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1)
    w = kernel.density(mesh.reshape(-1, d)).reshape(mesh.shape[:-1])
    w = w / w.sum()
    if np.iscomplexobj(values):
        return fftconvolve(values.real, w, mode="same") + 1j * fftconvolve(values.imag, w, mode="same")
    return fftconvolve(values, w, mode="same")


def trapezoid_with_error(x: np.ndarray, y: np.ndarray) -> QuadResult:
    """Trapezoid rule on a (non-uniform) grid; error from the every-other-node rule."""
    full = np.trapezoid(y, x)
    half = np.trapezoid(y[::2], x[::2]) if x.size > 2 else full
    if x.size > 2 and (x.size - 1) % 2:
        half = half + np.trapezoid(y[-2:], x[-2:])
    return QuadResult(full, float(abs(full - half) / 3.0), x.size)


def piecewise_linear_smoother(x: np.ndarray, y: np.ndarray, cdf, first_moment, cutoff: float,
                              *, block: int = 256):
    """Sparse matrix ``S`` with ``(S @ h)[i] = int h(u) k(y[i] - u) du``.

    ``h`` is the piecewise-linear interpolant of values on the increasing grid
    ``x`` (zero outside it) and ``k`` a one-dimensional kernel given through
    its CDF ``K`` and first moment ``K1(t) = int_{-inf}^t z k(z) dz``.  The
    result is exact for the interpolant; segments farther than ``cutoff``
    from ``y[i]`` are skipped.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rows, cols, vals = [], [], []
    seg_lo = np.searchsorted(x, y - cutoff, side="right") - 1
    seg_hi = np.searchsorted(x, y + cutoff, side="left")
    seg_lo = np.clip(seg_lo, 0, x.size - 2)
    seg_hi = np.clip(seg_hi, 0, x.size - 1)
    for start in range(0, y.size, block):
        sl = slice(start, min(start + block, y.size))
        lo, hi = seg_lo[sl], seg_hi[sl]
        counts = np.maximum(hi - lo, 0)
        i = np.repeat(np.arange(sl.start, sl.stop), counts)
        j = np.repeat(lo, counts) + (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts))
        dx = x[j + 1] - x[j]
        t = y[i] - x[j]
        A = cdf(t) - cdf(t - dx)
        # int over the segment of (u - x_j) k(y - u) du
        M = t * A - (first_moment(t) - first_moment(t - dx))
        w_right = M / dx
        w_left = A - w_right
        rows += [i, i]
        cols += [j, j + 1]
        vals += [w_left, w_right]
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        rows = cols = np.zeros(0, dtype=int)
        vals = np.zeros(0)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(y.size, x.size))
