"""Test measures with piecewise-constant densities and exact ball masses.

A :class:`TestMeasure` is a signed combination of box and ball indicators.
``ball_mass(mu, x, r)`` returns ``mu(B(x, r))`` in closed form (slice
quadrature for box-ball intersections in three dimensions).  The module also
provides the ``x``/``r`` integral functionals of ball masses that the limit
formulas need, including a vectorised one-dimensional engine
(:class:`BallFunctional1D`) that evaluates ``x -> int F(mu(B(x, s))) w(s) ds``
on a whole grid of ``x`` at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .errors import CapabilityError, ValidationError
from .laws import PowerWeight, unit_ball_volume
from .quadrature import (QuadResult, gauss_legendre, integrate_1d, integrate_box,
                         piecewise_linear_smoother)


@dataclass(frozen=True)
class BoxPiece:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    weight: float = 1.0

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))


@dataclass(frozen=True)
class BallPiece:
    center: tuple[float, ...]
    radius: float
    weight: float = 1.0

    @property
    def volume(self) -> float:
        return unit_ball_volume(len(self.center)) * self.radius ** len(self.center)


Piece = BoxPiece | BallPiece


@dataclass(frozen=True)
class TestMeasure:
    """Finite signed measure ``phi(x) dx`` with piecewise-constant ``phi``.

    Build with :meth:`interval`, :meth:`box`, :meth:`ball` and combine with
    ``+``, ``-`` and scalar ``*``.  In dimension two and three the pieces of
    a sum must have disjoint bounding boxes, which keeps the total variation
    and ``sup |phi|`` exact.
    """

    __test__ = False  # not a pytest class

    dimension: int
    pieces: tuple[Piece, ...] = ()

    def __post_init__(self):
        d = self.dimension
        if d < 1 or d > 3:
            raise CapabilityError(f"test measures are implemented for d <= 3, got d={d}")
        for p in self.pieces:
            if isinstance(p, BoxPiece):
                if len(p.lo) != d or len(p.hi) != d:
                    raise ValidationError("box corner dimension does not match the measure")
                if any(h <= l for l, h in zip(p.lo, p.hi)):
                    raise ValidationError("box must have positive side lengths")
            elif isinstance(p, BallPiece):
                if len(p.center) != d:
                    raise ValidationError("ball center dimension does not match the measure")
                if p.radius <= 0:
                    raise ValidationError("ball radius must be positive")
            else:
                raise ValidationError(f"unsupported measure piece {p!r}")
            if not math.isfinite(p.weight):
                raise ValidationError("piece weights must be finite")
        if d >= 2 and len(self.pieces) > 1:
            boxes = [_piece_bbox(p) for p in self.pieces]
            for i in range(len(boxes)):
                for j in range(i + 1, len(boxes)):
                    if np.all(boxes[i][0] < boxes[j][1]) and np.all(boxes[j][0] < boxes[i][1]):
                        raise CapabilityError(
                            "in d >= 2 the pieces of a sum must have disjoint bounding boxes")

    # constructors ---------------------------------------------------------
    @classmethod
    def interval(cls, a: float, b: float, weight: float = 1.0) -> "TestMeasure":
        return cls(1, (BoxPiece((float(a),), (float(b),), float(weight)),))

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float], weight: float = 1.0) -> "TestMeasure":
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        return cls(len(lo), (BoxPiece(lo, hi, float(weight)),))

    @classmethod
    def ball(cls, center: Sequence[float], radius: float, weight: float = 1.0) -> "TestMeasure":
        c = tuple(float(v) for v in center)
        return cls(len(c), (BallPiece(c, float(radius), float(weight)),))

    @classmethod
    def zero(cls, dimension: int) -> "TestMeasure":
        return cls(dimension, ())

    @classmethod
    def dirac(cls, point: Sequence[float]) -> "TestMeasure":
        """Always rejected: a point mass has ball-mass profile ``v_d r**d`` at every
        scale, so its alpha-power profile cannot decay faster than ``r**d`` near 0."""
        raise ValidationError(
            "Dirac measures are not admissible test measures: their alpha-power "
            "ball-mass profile scales like r**d at small r")

    # algebra ---------------------------------------------------------------
    def __add__(self, other: "TestMeasure") -> "TestMeasure":
        if not isinstance(other, TestMeasure):
            return NotImplemented
        if other.dimension != self.dimension:
            raise ValidationError("cannot add measures of different dimensions")
        return TestMeasure(self.dimension, self.pieces + other.pieces)

    def __mul__(self, c: float) -> "TestMeasure":
        c = float(c)
        return TestMeasure(self.dimension, tuple(_reweight(p, p.weight * c) for p in self.pieces))

    __rmul__ = __mul__

    def __neg__(self) -> "TestMeasure":
        return self * -1.0

    def __sub__(self, other: "TestMeasure") -> "TestMeasure":
        return self + (-other)

    # summaries -------------------------------------------------------------
    @property
    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.pieces:
            z = np.zeros(self.dimension)
            return z, z.copy()
        boxes = [_piece_bbox(p) for p in self.pieces]
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        return lo, hi

    @property
    def total_mass(self) -> float:
        return float(sum(p.weight * p.volume for p in self.pieces))

    @property
    def total_variation(self) -> float:
        if self.dimension == 1:
            edges, vals = self.segments()
            return float(np.sum(np.abs(vals) * np.diff(edges)))
        return float(sum(abs(p.weight) * p.volume for p in self.pieces))

    @property
    def phi_sup(self) -> float:
        if not self.pieces:
            return 0.0
        if self.dimension == 1:
            return float(np.max(np.abs(self.segments()[1]), initial=0.0))
        return max(abs(p.weight) for p in self.pieces)

    def density(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for p in self.pieces:
            if isinstance(p, BoxPiece):
                inside = np.all((x >= p.lo) & (x < p.hi), axis=1)
            else:
                inside = np.sum((x - p.center) ** 2, axis=1) < p.radius**2
            out += p.weight * inside
        return out

    # one-dimensional representation ----------------------------------------
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Edges ``e_0 < ... < e_K`` and the constant density on each ``[e_i, e_{i+1})``."""
        if self.dimension != 1:
            raise CapabilityError("segments() is only defined in dimension one")
        ivs = [_interval_of(p) for p in self.pieces]
        if not ivs:
            return np.array([0.0, 0.0]), np.array([0.0])
        edges = np.unique(np.concatenate([[a, b] for a, b, _ in ivs]))
        mids = 0.5 * (edges[:-1] + edges[1:])
        vals = np.zeros(mids.size)
        for a, b, w in ivs:
            vals += w * ((mids >= a) & (mids < b))
        return edges, vals

    def cumulative(self) -> tuple[np.ndarray, np.ndarray]:
        """Edges and ``Phi(e_i) = mu((-inf, e_i])``; ``Phi`` is linear in between."""
        edges, vals = self.segments()
        return edges, np.concatenate([[0.0], np.cumsum(vals * np.diff(edges))])


def _reweight(p: Piece, w: float) -> Piece:
    if isinstance(p, BoxPiece):
        return BoxPiece(p.lo, p.hi, w)
    return BallPiece(p.center, p.radius, w)


def _piece_bbox(p: Piece) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(p, BoxPiece):
        return np.array(p.lo), np.array(p.hi)
    c = np.array(p.center)
    return c - p.radius, c + p.radius


def _interval_of(p: Piece) -> tuple[float, float, float]:
    if isinstance(p, BoxPiece):
        return p.lo[0], p.hi[0], p.weight
    return p.center[0] - p.radius, p.center[0] + p.radius, p.weight


# ---------------------------------------------------------------------------
# exact ball masses


def _overlap(a, b, lo, hi):
    return np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)


def _disk_corner_area(X, Y, r):
    """Signed area of ``disk(0, r)`` inside the rectangle with corners ``(0, 0)`` and ``(X, Y)``."""
    sx, sy = np.sign(X), np.sign(Y)
    X = np.minimum(np.abs(X), r)
    Y = np.minimum(np.abs(Y), r)
    safe_r = np.where(r > 0, r, 1.0)

    def S(u):
        # int_0^u sqrt(r^2 - t^2) dt
        return 0.5 * (u * np.sqrt(np.clip(r * r - u * u, 0.0, None))
                      + r * r * np.arcsin(np.clip(u / safe_r, -1.0, 1.0)))

    ustar = np.sqrt(np.clip(r * r - Y * Y, 0.0, None))
    inner = X <= ustar
    area = np.where(inner, X * Y, ustar * Y + S(X) - S(np.minimum(ustar, X)))
    return sx * sy * np.where(r > 0, area, 0.0)


def _rect_disk_area(lo, hi, c, r):
    """Area of ``[lo, hi] ∩ disk(c, r)`` for arrays of centers ``c`` (n, 2) and radii ``r`` (n,)."""
    x1, x2 = lo[0] - c[:, 0], hi[0] - c[:, 0]
    y1, y2 = lo[1] - c[:, 1], hi[1] - c[:, 1]
    F = _disk_corner_area
    return F(x2, y2, r) - F(x1, y2, r) - F(x2, y1, r) + F(x1, y1, r)


def _lens_area(D, R, r):
    D = np.asarray(D, dtype=float)
    out = np.zeros(np.broadcast(D, R, r).shape)
    R = np.broadcast_to(R, out.shape)
    r = np.broadcast_to(r, out.shape)
    D = np.broadcast_to(D, out.shape)
    inside = D <= np.abs(R - r)
    out[inside] = math.pi * np.minimum(R, r)[inside] ** 2
    part = ~inside & (D < R + r)
    d, a, b = D[part], R[part], r[part]
    c1 = np.clip((d * d + b * b - a * a) / (2 * d * b), -1, 1)
    c2 = np.clip((d * d + a * a - b * b) / (2 * d * a), -1, 1)
    k = np.clip((-d + b + a) * (d + b - a) * (d - b + a) * (d + b + a), 0, None)
    out[part] = b * b * np.arccos(c1) + a * a * np.arccos(c2) - 0.5 * np.sqrt(k)
    return out


def _lens_volume(D, R, r):
    D = np.asarray(D, dtype=float)
    out = np.zeros(np.broadcast(D, R, r).shape)
    R = np.broadcast_to(R, out.shape)
    r = np.broadcast_to(r, out.shape)
    D = np.broadcast_to(D, out.shape)
    inside = D <= np.abs(R - r)
    out[inside] = 4.0 / 3.0 * math.pi * np.minimum(R, r)[inside] ** 3
    part = ~inside & (D < R + r)
    d, a, b = D[part], R[part], r[part]
    out[part] = (math.pi * (a + b - d) ** 2
                 * (d * d + 2 * d * b - 3 * b * b + 2 * d * a + 6 * b * a - 3 * a * a) / (12 * d))
    return out


def _box_ball_volume(lo, hi, c, r, order: int = 16):
    """``vol([lo, hi] ∩ B(c, r))`` in three dimensions by exact slicing along the last axis.

    The slice area is piecewise smooth in the height ``t``; panels are cut
    where the slice radius meets an edge or corner distance, and each panel is
    integrated with Gauss-Legendre in ``t = r sin(phi)``, which removes the
    square-root behaviour at the poles.
    """
    n = c.shape[0]
    out = np.zeros(n)
    tlo = np.maximum(lo[2] - c[:, 2], -r)
    thi = np.minimum(hi[2] - c[:, 2], r)
    ok = thi > tlo
    if not np.any(ok):
        return out
    c, r, tlo, thi = c[ok], r[ok], tlo[ok], thi[ok]
    ex = np.stack([lo[0] - c[:, 0], hi[0] - c[:, 0]], axis=1)
    ey = np.stack([lo[1] - c[:, 1], hi[1] - c[:, 1]], axis=1)
    dists = [np.abs(ex[:, 0]), np.abs(ex[:, 1]), np.abs(ey[:, 0]), np.abs(ey[:, 1])]
    for i in range(2):
        for j in range(2):
            dists.append(np.hypot(ex[:, i], ey[:, j]))
    cuts = []
    for e in dists:
        h = np.sqrt(np.clip(r * r - e * e, 0.0, None))
        cuts += [h, -h]
    cuts = np.stack(cuts + [tlo, thi], axis=1)
    cuts = np.sort(np.clip(cuts, tlo[:, None], thi[:, None]), axis=1)
    phi = np.arcsin(np.clip(cuts / r[:, None], -1.0, 1.0))
    gx, gw = gauss_legendre(order)
    a, b = phi[:, :-1], phi[:, 1:]
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b)[..., None] + half[..., None] * gx
    weights = half[..., None] * gw
    t = r[:, None, None] * np.sin(nodes)
    jac = r[:, None, None] * np.cos(nodes)
    rad = np.sqrt(np.clip(r[:, None, None] ** 2 - t * t, 0.0, None))
    cc = np.broadcast_to(c[:, None, None, :2], t.shape + (2,)).reshape(-1, 2)
    area = _rect_disk_area(lo[:2], hi[:2], cc, rad.ravel()).reshape(t.shape)
    out[ok] = np.sum(area * jac * weights, axis=(1, 2))
    return out


def ball_mass(mu: TestMeasure, x, r):
    """``mu(B(x, r))`` for one point or an array of points ``x`` of shape ``(n, d)``."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != mu.dimension:
        raise ValidationError("point dimension does not match the measure")
    r = np.broadcast_to(np.asarray(r, dtype=float), (x.shape[0],))
    if np.any(r < 0):
        raise ValidationError("radius must be nonnegative")
    out = np.zeros(x.shape[0])
    d = mu.dimension
    for p in mu.pieces:
        if d == 1:
            a, b, w = _interval_of(p)
            out += w * _overlap(x[:, 0] - r, x[:, 0] + r, a, b)
        elif isinstance(p, BallPiece):
            D = np.linalg.norm(x - np.asarray(p.center), axis=1)
            lens = _lens_area if d == 2 else _lens_volume
            out += p.weight * lens(D, p.radius, r)
        elif d == 2:
            out += p.weight * _rect_disk_area(np.asarray(p.lo), np.asarray(p.hi), x, r)
        else:
            out += p.weight * _box_ball_volume(np.asarray(p.lo), np.asarray(p.hi), x, r)
    return float(out[0]) if scalar else out


def ball_mass_profile_1d(mu: TestMeasure, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Vectorised ``mu(B(x, s))`` in one dimension via the cumulative distribution."""
    edges, cum = mu.cumulative()
    return np.interp(x + s, edges, cum) - np.interp(x - s, edges, cum)


# ---------------------------------------------------------------------------
# alpha-power profiles and their radial integrals


def _powered(L, alpha, signed):
    a = np.abs(L) ** alpha
    return np.sign(L) * a if signed else a


def _linear_power_integral(L0, L1, width, alpha):
    """``int |L|**alpha`` over a segment where ``L`` is linear and does not change sign."""
    A0, A1 = np.abs(L0), np.abs(L1)
    diff = A1 - A0
    small = np.abs(diff) <= 1e-12 * np.maximum(A0, A1)
    with np.errstate(divide="ignore", invalid="ignore"):
        gen = (A1 ** (alpha + 1) - A0 ** (alpha + 1)) / ((alpha + 1) * diff)
    mean = np.where(small, 0.5 * (A0**alpha + A1**alpha), gen)
    return width * mean


def _edge_power_mean(left: float, right: float, alpha: float, signed: bool) -> float:
    """``int_0^1 |(1-t) left + t right|**alpha dt`` (signed variant with ``sign``)."""
    if left * right < 0:
        z = left / (left - right)
        parts = ((left, 0.0, z), (0.0, right, 1.0 - z))
    else:
        parts = ((left, right, 1.0),)
    total = 0.0
    for l0, l1, width in parts:
        seg = float(_linear_power_integral(np.array(l0), np.array(l1), width, alpha))
        total += seg * (np.sign(l0 + l1) if signed else 1.0)
    return total


def _profile_1d_small(edges, vals, alpha, r, signed):
    # for r below half the smallest gap each ball meets at most one edge, so the
    # profile is exactly (2r)**alpha * (sum_k P(phi_k) len_k + r * edge terms)
    P = lambda v: _powered(np.asarray(v, dtype=float), alpha, signed)
    core = float(np.sum(P(vals) * np.diff(edges)))
    dens = np.concatenate([[0.0], vals, [0.0]])
    corr = 0.0
    for left, right in zip(dens[:-1], dens[1:]):
        corr += 2.0 * _edge_power_mean(left, right, alpha, signed) - float(P(left)) - float(P(right))
    return (2.0 * r) ** alpha * (core + r * corr)


def _profile_1d(mu: TestMeasure, alpha: float, r: float, signed: bool) -> float:
    edges, vals = mu.segments()
    if r < 0.5 * float(np.min(np.diff(edges))):
        return _profile_1d_small(edges, vals, alpha, r, signed)
    pts = np.unique(np.concatenate([edges - r, edges + r]))
    L = ball_mass_profile_1d(mu, pts, r)
    xs, Ls = [pts[0]], [L[0]]
    for i in range(pts.size - 1):
        l0, l1 = L[i], L[i + 1]
        if l0 * l1 < 0:
            z = pts[i] + (pts[i + 1] - pts[i]) * l0 / (l0 - l1)
            xs.append(z)
            Ls.append(0.0)
        xs.append(pts[i + 1])
        Ls.append(l1)
    xs, Ls = np.array(xs), np.array(Ls)
    seg = _linear_power_integral(Ls[:-1], Ls[1:], np.diff(xs), alpha)
    if signed:
        sgn = np.sign(Ls[:-1] + Ls[1:])
        seg = seg * sgn
    return float(np.sum(seg))


def alpha_norm_profile(mu: TestMeasure, alpha: float, r: float, *, rel_tol: float = 1e-6,
                       signed: bool = False) -> QuadResult:
    """``int |mu(B(x, r))|**alpha dx`` (or the signed variant ``int sign * |.|**alpha``).

    In one dimension ``x -> mu(B(x, r))`` is piecewise linear, so the integral
    is exact per linear piece.  In two and three dimensions the integral runs
    over ``support_box ⊕ r`` with the adaptive cubature of :func:`integrate_box`.
    """
    if not 1.0 < alpha <= 2.0:
        raise ValidationError("alpha must lie in (1, 2]")
    if r <= 0 or not mu.pieces:
        return QuadResult(0.0, 0.0, 0)
    if mu.dimension == 1:
        val = _profile_1d(mu, alpha, r, signed)
        return QuadResult(val, 1e-14 * abs(val), 0)
    lo, hi = mu.support_box
    box = (lo - r, hi + r)
    pts = []
    for ax in range(mu.dimension):
        cand = []
        for p in mu.pieces:
            b0, b1 = _piece_bbox(p)
            cand += [b0[ax] - r, b0[ax] + r, b1[ax] - r, b1[ax] + r]
        pts.append(sorted(set(cand)))
    f = lambda xs: _powered(ball_mass(mu, xs, r), alpha, signed)
    return integrate_box(f, box, rel_tol, 1e-13, points=pts)


def _check_indices(mu: TestMeasure, alpha: float, beta: float):
    d = mu.dimension
    if not d < beta < alpha * d:
        raise ValidationError(
            f"the radial integral diverges unless d < beta < alpha*d (d={d}, beta={beta}, alpha={alpha})")


def _radial_integral(mu, alpha, beta, signed, rel_tol) -> QuadResult:
    d = mu.dimension
    lo, hi = mu.support_box
    split = float(np.max(hi - lo))
    f = lambda r: alpha_norm_profile(mu, alpha, r, rel_tol=rel_tol * 0.1, signed=signed).value * r ** (-beta - 1.0)
    pts = None
    if d == 1:
        # the profile is piecewise smooth in r with kinks at edge gaps and half-gaps
        e, _ = mu.segments()
        gaps = np.abs(e[:, None] - e[None, :]).ravel()
        pts = sorted(set(np.concatenate([gaps, 0.5 * gaps])) - {0.0})
    head = integrate_1d(f, 0.0, split, rel_tol, 1e-14, points=pts, limit=200)
    tail = integrate_1d(f, split, math.inf, rel_tol, 1e-14, decay=beta + 1.0 - d, limit=200)
    return QuadResult(head.value + tail.value, head.error_estimate + tail.error_estimate,
                      head.evaluations + tail.evaluations)


def mab_integral(mu: TestMeasure, alpha: float, beta: float, *, rel_tol: float = 1e-5) -> QuadResult:
    """``int_0^inf int |mu(B(x, r))|**alpha dx r**(-beta-1) dr`` by nested adaptive quadrature."""
    _check_indices(mu, alpha, beta)
    if not mu.pieces:
        return QuadResult(0.0, 0.0, 0)
    return _radial_integral(mu, alpha, beta, False, rel_tol)


def signed_alpha_integrals(mu: TestMeasure, alpha: float, beta: float, C_beta: float = None,
                           *, rel_tol: float = 1e-8) -> tuple[QuadResult, QuadResult]:
    """``(A, B)`` with ``A = C_beta int int |mu(B)|**alpha dx r**(-beta-1) dr`` and ``B`` the
    same integral weighted by ``sign(mu(B))``.

    ``C_beta`` defaults to 1.  One-dimensional measures use the panel engine
    :class:`BallFunctional1D`; other dimensions fall back to nested quadrature.
    """
    _check_indices(mu, alpha, beta)
    c = 1.0 if C_beta is None else float(C_beta)
    if not mu.pieces:
        z = QuadResult(0.0, 0.0, 0)
        return z, z
    if mu.dimension != 1:
        A = _radial_integral(mu, alpha, beta, False, max(rel_tol, 1e-5))
        B = _radial_integral(mu, alpha, beta, True, max(rel_tol, 1e-5))
        return (QuadResult(c * A.value, c * A.error_estimate, A.evaluations),
                QuadResult(c * B.value, c * B.error_estimate, B.evaluations))
    w = PowerWeight(c, beta, 0.0)
    grid = global_x_grid(mu)
    engine = BallFunctional1D(mu, w, grid.x)
    res = []
    for signed in (False, True):
        h = engine.apply(lambda m, s=signed: _powered(m, alpha, s), homogeneity=alpha)
        res.append(grid.integrate(h))
    return res[0], res[1]


# ---------------------------------------------------------------------------
# one-dimensional ball-functional engine


class BallFunctional1D:
    """Precomputed quadrature for ``h(x) = int F(mu(B(x, s))) w(s) ds`` on a grid of ``x``.

    ``w`` is a :class:`PowerWeight` ``c s**(-beta-1)`` on ``s >= s0``.  For each
    ``x`` the radius axis is cut at the distances ``|x - e_j|`` to the density
    edges (where ``s -> mu(B(x, s))`` changes slope) and then into geometric
    panels of ratio at most 2; beyond the largest distance the ball covers the
    whole support and the tail ``F(mu(R)) * int w`` is added in closed form.

    When ``s0 = 0`` the first panel touches the origin where the integrand
    behaves like a power of ``s``.  It is resolved down to ``2**-depth`` of its
    length and the remainder is added from the local power law, whose exponent
    is either declared through ``homogeneity`` (``F(m) ~ |m|**p``) or
    estimated from the two smallest nodes.

    ``max_freq`` bounds ``|d F(m)/dm| / |F|`` style oscillation: panels are
    further split so that ``max_freq * |d mu(B)/ds| * panel_length <= pi``.
    """

    def __init__(self, mu: TestMeasure, weight: PowerWeight, x: np.ndarray, *,
                 order: int = 16, depth: int = 24, max_freq: float = 0.0):
        if mu.dimension != 1:
            raise CapabilityError("the ball-functional engine is one-dimensional")
        self.mu = mu
        self.weight = weight
        self.x = x = np.asarray(x, dtype=float)
        edges, _ = mu.segments()
        self.total = mu.total_mass
        s0 = weight.s0
        dist = np.abs(x[:, None] - edges[None, :])
        # distances below rounding level of the coordinates carry no information
        # and would overflow the power weight
        tiny = 1e-13 * (1.0 + np.abs(x[:, None]) + np.abs(edges[None, :]))
        dist = np.where(dist < tiny, 0.0, dist)
        s_cover = np.max(dist, axis=1)
        self.tail = weight.c * np.maximum(s_cover, s0) ** (-weight.beta) / weight.beta

        cuts = np.sort(np.concatenate([dist, np.full((x.size, 1), s0)], axis=1), axis=1)
        cuts = np.maximum(cuts, s0)
        p, q = cuts[:, :-1], cuts[:, 1:]
        owner = np.broadcast_to(np.arange(x.size)[:, None], p.shape)
        keep = q > p
        p, q, owner = p[keep], q[keep], owner[keep]

        # mass is zero on panels where the ball misses the support entirely
        mid_mass = ball_mass_profile_1d(mu, self.x[owner], 0.5 * (p + q))
        lo_mass = ball_mass_profile_1d(mu, self.x[owner], p)
        hi_mass = ball_mass_profile_1d(mu, self.x[owner], q)
        live = (mid_mass != 0) | (lo_mass != 0) | (hi_mass != 0)
        p, q, owner = p[live], q[live], owner[live]

        # origin panels (s0 = 0): cut at q * 2**-depth and keep a remainder record
        at0 = p == 0.0
        self.rem_owner = owner[at0]
        self.rem_eps = q[at0] * 2.0 ** (-depth)
        p = p.copy()
        p[at0] = self.rem_eps

        n_geo = np.ceil(np.log2(q / p) - 1e-12).astype(int)
        n_sub = np.maximum(n_geo, 1)
        if max_freq > 0:
            slope = 2.0 * mu.phi_sup
            n_osc = np.ceil(max_freq * slope * q * np.log(q / p) / math.pi).astype(int)
            n_sub = np.maximum(n_sub, n_osc)
        idx = np.repeat(np.arange(p.size), n_sub)
        k = np.arange(idx.size) - np.repeat(np.cumsum(n_sub) - n_sub, n_sub)
        ratio = (q / p)[idx]
        a = p[idx] * ratio ** (k / n_sub[idx])
        b = p[idx] * ratio ** ((k + 1) / n_sub[idx])
        gx, gw = gauss_legendre(order)
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[:, None] + half[:, None] * gx
        wts = half[:, None] * gw * weight.density(s)
        own = np.repeat(owner[idx], order)
        self.node_owner = own
        self.node_weight = wts.ravel()
        self.node_mass = ball_mass_profile_1d(mu, self.x[own], s.ravel())
        if self.rem_owner.size:
            e = self.rem_eps
            xs = self.x[self.rem_owner]
            self.rem_mass = (ball_mass_profile_1d(mu, xs, e), ball_mass_profile_1d(mu, xs, 0.5 * e))
        self.n_nodes = self.node_mass.size

    def apply(self, F: Callable[[np.ndarray], np.ndarray], *, homogeneity: float | None = None) -> np.ndarray:
        """Return ``h(x)`` on the grid for a vectorised ``F`` with ``F(0) = 0``."""
        vals = F(self.node_mass) * self.node_weight
        n = self.x.size
        if np.iscomplexobj(vals):
            h = (np.bincount(self.node_owner, vals.real, n)
                 + 1j * np.bincount(self.node_owner, vals.imag, n))
        else:
            h = np.bincount(self.node_owner, vals, n)
        if self.total != 0.0:
            h = h + F(np.array([self.total]))[0] * self.tail
        if self.rem_owner.size:
            beta = self.weight.beta
            e = self.rem_eps
            f1 = F(self.rem_mass[0])
            if homogeneity is None:
                f2 = F(self.rem_mass[1])
                with np.errstate(divide="ignore", invalid="ignore"):
                    p_est = np.log2(np.abs(f1) / np.abs(f2))
                p_est = np.where(np.isfinite(p_est), p_est, 2.0)
            else:
                p_est = homogeneity
            # int_0^e F(slope s) c s^(-beta-1) ds with F(slope s) ~ f1 (s/e)^p
            with np.errstate(divide="ignore", invalid="ignore"):
                rem = f1 * self.weight.c * e ** (-beta) / (p_est - beta)
            rem = np.where(np.abs(f1) > 0, rem, 0.0)
            if np.iscomplexobj(rem):
                np.add.at(h, self.rem_owner, rem)
            else:
                h = h.astype(np.result_type(h, rem))
                np.add.at(h, self.rem_owner, rem)
        return h


@dataclass(frozen=True)
class XGrid:
    """Line grid: a dense core ``[a, b]`` plus geometric wings out to ``far``.

    Integrals use Simpson's rule in ``x`` on the core and in
    ``log|x - center|`` on the wings, where integrands decay like powers.
    """

    x: np.ndarray
    a: float
    b: float
    center: float

    def _rule(self, x, g):
        core = (x >= self.a) & (x <= self.b)
        total = simpson(g[core], x=x[core])
        for side in (x > self.b, x < self.a):
            idx = np.flatnonzero(side)
            if idx.size == 0:
                continue
            # join the wing to the core end point
            join = np.flatnonzero(core)[-1] if side[-1] else np.flatnonzero(core)[0]
            idx = np.concatenate([[join], idx]) if side[-1] else np.concatenate([idx, [join]])
            r = np.abs(x[idx] - self.center)
            total += simpson(g[idx] * r, x=np.log(r)) * (1.0 if side[-1] else -1.0)
        return total

    def integrate(self, g: np.ndarray, *, tail_fit: bool = True) -> QuadResult:
        """``int g`` over the line with an every-other-node error estimate and
        power-law continuation of ``g`` beyond both ends of the grid."""
        x = self.x
        full = self._rule(x, g)
        sub_idx = np.arange(0, x.size, 2)
        if sub_idx[-1] != x.size - 1:
            sub_idx = np.append(sub_idx, x.size - 1)
        sub = self._rule(x[sub_idx], g[sub_idx])
        tail = 0.0
        tail_err = 0.0
        if tail_fit:
            for i0, i1 in ((-2, -1), (1, 0)):
                r0, r1 = abs(x[i0] - self.center), abs(x[i1] - self.center)
                g0, g1 = g[i0], g[i1]
                if g1 == 0 or g0 == 0:
                    continue
                slope = math.log(abs(g1) / abs(g0)) / math.log(r1 / r0)
                if slope < -1.0:
                    piece = g1 * r1 / (-slope - 1.0)
                else:
                    piece = g1 * r1  # too slow to extrapolate; charged to the error
                    tail_err += abs(piece)
                tail += piece
        err = abs(full - sub) / 3.0 + tail_err + 1e-2 * abs(tail)
        return QuadResult(full + tail, float(err), x.size)


def global_x_grid(mu: TestMeasure, *, spacing: float = 0.01, margin: float = 2.0,
                  extra: float = 0.0, ratio: float = 1.02, far: float = 1e12,
                  breakpoints: Sequence[float] = (), grade_ratio: float | None = 1.2,
                  grade_min: float = 1e-12) -> XGrid:
    """Grid for integrating ball functionals over the line.

    Uniform spacing over ``[e_0 - margin - extra, e_K + margin + extra]``,
    geometric beyond with the given ratio out to distance ``far`` from the
    support.  Ball functionals have power-type cusps at the density edges
    (and at any extra ``breakpoints``), so the grid is graded geometrically
    towards each of them with ratio ``grade_ratio`` down to ``grade_min * step``.
    Integration uses Simpson's rule, which stays accurate on such graded cusps.
    ``grade_ratio=None`` keeps the kinks as plain grid points.
    """
    edges, _ = mu.segments()
    a, b = edges[0] - margin - extra, edges[-1] + margin + extra
    n = int(math.ceil((b - a) / spacing))
    core = np.linspace(a, b, n + 1)
    step = (b - a) / n
    m = int(math.ceil(math.log(far / step) / math.log(ratio)))
    offs = step * (ratio ** np.arange(1, m + 1) - 1.0) / (ratio - 1.0)
    offs = offs[offs <= far]
    kinks = np.array([e for e in np.concatenate([edges, np.asarray(breakpoints, float)])
                      if a < e < b])
    if grade_ratio is None:
        graded = np.zeros(0)
    else:
        # geometric steps t * (ratio - 1) grow until they match the core spacing
        top = step / (grade_ratio - 1.0)
        k = int(math.ceil(math.log(top / (grade_min * step)) / math.log(grade_ratio)))
        fine = top * grade_ratio ** -np.arange(0, k + 1)
        graded = (kinks[:, None] + np.concatenate([-fine, fine])[None, :]).ravel()
        graded = graded[(graded > a) & (graded < b)]
    x = np.unique(np.concatenate([a - offs[::-1], core, kinks, graded, b + offs]))
    keep = np.concatenate([[True], np.diff(x) > 1e-15 * (1.0 + np.abs(x[1:]))])
    return XGrid(x[keep], a, b, 0.5 * (edges[0] + edges[-1]))


class ClusterFunctional1D:
    """Kernel-smoothed ball functionals ``y -> int int F(mu(B(x, s))) k(x - y) w(s) ds dx``.

    Holds an ``x`` grid graded towards the cusps of ``h(x) = int F(mu(B(x, s))) w(s) ds``,
    the :class:`BallFunctional1D` engine on it, a smooth ``y`` grid, and the
    exact smoother of the piecewise-linear ``h`` by the kernel.
    """

    def __init__(self, mu: TestMeasure, weight: PowerWeight, kernel, *, spacing: float = 0.01,
                 ratio: float = 1.005, far: float = 1e12, max_freq: float = 0.0):
        if mu.dimension != 1 or kernel.dimension != 1:
            raise CapabilityError("cluster functionals are implemented in dimension one")
        self.mu, self.weight, self.kernel = mu, weight, kernel
        edges, _ = mu.segments()
        s0 = weight.s0
        kinks = np.concatenate([edges - s0, edges + s0]) if s0 > 0 else np.zeros(0)
        self.xgrid = global_x_grid(mu, spacing=spacing, margin=0.5, ratio=ratio, far=far,
                                   breakpoints=kinks)
        if kernel.family == "gaussian":
            cutoff = 9.0 * kernel.bandwidth
            ykinks = np.zeros(0)
        else:
            cutoff = kernel.bandwidth
            base = np.concatenate([edges, kinks])
            ykinks = np.concatenate([base - cutoff, base + cutoff])
        self.ygrid = global_x_grid(mu, spacing=spacing, margin=0.5, extra=cutoff, ratio=ratio,
                                   far=far, breakpoints=ykinks, grade_ratio=None)
        self.engine = BallFunctional1D(mu, weight, self.xgrid.x, max_freq=max_freq)
        self.smoother = piecewise_linear_smoother(self.xgrid.x, self.ygrid.x, kernel.cdf1d,
                                                  kernel.first_moment1d, cutoff)

    def profile(self, F, *, homogeneity: float | None = None) -> np.ndarray:
        return self.engine.apply(F, homogeneity=homogeneity)

    def smooth(self, h: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(h):
            return self.smoother @ h.real + 1j * (self.smoother @ h.imag)
        return self.smoother @ h

    def smoothed(self, F, *, homogeneity: float | None = None) -> np.ndarray:
        return self.smooth(self.profile(F, homogeneity=homogeneity))
