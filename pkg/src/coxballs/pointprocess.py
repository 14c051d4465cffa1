"""Poisson and shot-noise Cox configurations of marked balls at scale ``rho``.

A cluster centered at ``y`` carries ``Poisson(lambda)`` balls ``B(y + z, s)``
with ``z ~ k`` and ``s = rho * R``.  Only balls that touch the target box can
contribute to the field, so :func:`sample_realization` returns exactly those,
grouped by cluster, and the sampling is exact on the whole space:

* clusters whose center lies in the near window (target box grown by the
  kernel reach) are sampled in full and their irrelevant balls discarded;
* every other cluster that owns at least one relevant ball is found through
  the Poisson process of relevant balls itself.  A relevant ball is drawn
  from its intensity, its center recovered from the kernel offset, and the
  rest of its cluster drawn from the Palm distribution.  Each relevant ball
  carries a uniform label and a cluster is kept only through its
  smallest-label relevant ball, which selects every far cluster exactly once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special

from .errors import ValidationError
from .laws import Kernel, MarkLaw, RadiusLaw, unit_ball_volume
from .measures import TestMeasure


@dataclass(frozen=True)
class ScalingLaw:
    """Cluster intensity ``kappa = c_kappa rho**-u`` and cluster size ``lambda = c_lambda rho**-v``."""

    scenario: Literal["local", "global"]
    u: float = 0.0
    v: float = 0.0
    c_kappa: float = 1.0
    c_lambda: float = 1.0

    def __post_init__(self):
        if self.scenario not in ("local", "global"):
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        if self.c_kappa <= 0 or self.c_lambda <= 0:
            raise ValidationError("c_kappa and c_lambda must be positive")
        if self.scenario == "local":
            if self.u != 0.0 or self.c_kappa != 1.0:
                raise ValidationError("the local scenario keeps kappa = 1 (u = 0, c_kappa = 1)")
            if self.v <= 0:
                raise ValidationError("the local scenario needs v > 0 so that lambda grows")
        elif self.u <= 0:
            raise ValidationError("the global scenario needs u > 0 so that kappa grows")

    def kappa(self, rho: float) -> float:
        return self.c_kappa * rho ** (-self.u)

    def lam(self, rho: float) -> float:
        return self.c_lambda * rho ** (-self.v)


@dataclass(frozen=True)
class ModelSpec:
    d: int
    kernel: Kernel
    radius: RadiusLaw
    marks: MarkLaw
    scaling: ScalingLaw

    def __post_init__(self):
        if self.kernel.dimension != self.d:
            raise ValidationError("kernel dimension differs from the model dimension")
        alpha = self.marks.attractor.alpha
        if not self.d < self.radius.beta < alpha * self.d:
            raise ValidationError(
                f"need d < beta < alpha*d, got d={self.d}, beta={self.radius.beta}, alpha={alpha}")


@dataclass(frozen=True)
class TargetBox:
    """Axis-aligned box (possibly degenerate, e.g. a single point)."""

    lo: np.ndarray
    hi: np.ndarray

    @property
    def dimension(self) -> int:
        return self.lo.size

    def distance(self, x: np.ndarray) -> np.ndarray:
        gap = np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0)
        return np.sqrt(np.sum(gap * gap, axis=-1))

    def grown(self, r: float) -> "TargetBox":
        return TargetBox(self.lo - r, self.hi + r)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def steiner_coefficients(self) -> np.ndarray:
        """``c_j`` with ``vol(box ⊕ B(0, s)) = sum_j c_j s**j``."""
        L = self.hi - self.lo
        d = L.size
        out = np.zeros(d + 1)
        for j in range(d + 1):
            e = sum(math.prod(c) for c in itertools.combinations(L, d - j)) if d - j > 0 else 1.0
            out[j] = unit_ball_volume(j) * e
        return out


def as_target(target, d: int) -> TargetBox:
    if isinstance(target, TargetBox):
        box = target
    elif isinstance(target, TestMeasure):
        lo, hi = target.support_box
        box = TargetBox(np.asarray(lo, float), np.asarray(hi, float))
    else:
        lo, hi = target
        box = TargetBox(np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float)))
    if box.dimension != d:
        raise ValidationError("target dimension does not match the model")
    if not (np.all(np.isfinite(box.lo)) and np.all(np.isfinite(box.hi))):
        raise ValidationError("the target must be bounded")
    if np.any(box.hi < box.lo):
        raise ValidationError("empty target box")
    return box


@dataclass
class Realization:
    """Relevant marked balls of one configuration, grouped by cluster.

    ``centers`` lists every near-window center and the far centers that own a
    relevant ball; ``cluster[i]`` indexes the center of ball ``i``.
    """

    centers: np.ndarray
    cluster: np.ndarray
    x: np.ndarray
    r: np.ndarray
    m: np.ndarray
    rho: float
    window: TargetBox
    target: TargetBox
    r_max: float | None = None
    tail_mass: float = 0.0
    n_near_centers: int = 0
    n_discarded: int = 0
    n_sampled: int = 0

    @property
    def n_balls(self) -> int:
        return self.r.size


def sample_poisson(window, intensity: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson points in a box ``(lo, hi)``; returns an ``(n, d)`` array."""
    lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in
              ((window.lo, window.hi) if isinstance(window, TargetBox) else window))
    if intensity < 0:
        raise ValidationError("intensity must be nonnegative")
    vol = float(np.prod(hi - lo))
    if not math.isfinite(vol):
        raise ValidationError("window must have finite volume")
    n = rng.poisson(intensity * vol) if intensity > 0 else 0
    return lo + (hi - lo) * rng.random((n, lo.size))


# --------------------------------------------------------------------------
# kernel offsets split at the kernel reach


def _radial_cdf(kernel: Kernel, R: float) -> float:
    if kernel.family == "gaussian":
        return float(special.gammainc(kernel.dimension / 2, 0.5 * (R / kernel.bandwidth) ** 2))
    return 1.0 if R >= kernel.bandwidth else (R / kernel.bandwidth) ** kernel.dimension


def _directions(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _offsets_inside(kernel: Kernel, R: float, rng, n: int) -> np.ndarray:
    """Kernel offsets conditioned on ``|z| <= R`` (rejection; acceptance is near 1)."""
    out = np.empty((0, kernel.dimension))
    while out.shape[0] < n:
        z = kernel.sample_offset(rng, 2 * (n - out.shape[0]) + 8)
        z = z[np.linalg.norm(z, axis=1) <= R]
        out = np.concatenate([out, z])
    return out[:n]


def _offsets_outside(kernel: Kernel, R: float, rng, n: int) -> np.ndarray:
    """Gaussian offsets conditioned on ``|z| > R`` by inverting the radial law."""
    d, h = kernel.dimension, kernel.bandwidth
    a = d / 2
    q = special.gammaincc(a, 0.5 * (R / h) ** 2)
    g = special.gammainccinv(a, q * rng.random(n))
    rad = h * np.sqrt(2.0 * g)
    return rad[:, None] * _directions(rng, n, d)


# --------------------------------------------------------------------------


def _relevant(target: TargetBox, x, s, r_max):
    keep = target.distance(x) < s
    if r_max is not None:
        keep &= s <= r_max
    return keep


def _draw_radii(radius: RadiusLaw, rho: float, rng, n: int, above: np.ndarray | float = 0.0):
    """``rho * R`` conditioned on exceeding ``above`` (Pareto is closed under conditioning)."""
    base = np.maximum(rho * radius.r0, above)
    return base * (1.0 - rng.random(n)) ** (-1.0 / radius.beta)


def sample_realization(model: ModelSpec, rho: float, target, rng: np.random.Generator, *,
                       r_max: float | None = None) -> Realization:
    """Sample the balls of the rescaled model that touch ``target``.

    ``target`` is a :class:`TestMeasure` (its support box is used), a
    :class:`TargetBox` or a ``(lo, hi)`` pair.  ``r_max`` optionally removes
    every ball with radius above it (a thinning of the model; see
    :func:`truncation_bias_bound`).
    """
    if not 0.0 < rho < 1.0:
        raise ValidationError("rho must lie in (0, 1)")
    d = model.d
    S = as_target(target, d)
    kappa = model.scaling.kappa(rho)
    lam = model.scaling.lam(rho)
    if not (kappa > 0 and lam > 0 and math.isfinite(kappa) and math.isfinite(lam)):
        raise ValidationError("degenerate scaling: kappa and lambda must be positive and finite")
    kern, rad = model.kernel, model.radius
    reach = kern.reach
    W = S.grown(reach)

    # near clusters, sampled in full
    yc = sample_poisson(W, kappa, rng)
    counts = rng.poisson(lam, yc.shape[0])
    total = int(counts.sum())
    owner = np.repeat(np.arange(yc.shape[0]), counts)
    x = yc[owner] + kern.sample_offset(rng, total)
    s = _draw_radii(rad, rho, rng, total)
    keep = _relevant(S, x, s, r_max)
    xs, ss, owners = [x[keep]], [s[keep]], [owner[keep]]
    n_discarded = total - int(keep.sum())
    n_sampled = total

    # far clusters through their relevant balls
    steiner = S.steiner_coefficients()
    moments = np.array([rho**j * rad.moment(j) for j in range(d + 1)])
    terms = steiner * moments
    n_cand = rng.poisson(kappa * lam * terms.sum())
    far_centers = []
    if n_cand:
        j = rng.choice(d + 1, size=n_cand, p=terms / terms.sum())
        sc = rho * rad.r0 * (1.0 - rng.random(n_cand)) ** (-1.0 / (rad.beta - j))
        xc = _uniform_in_parallel_body(S, sc, rng)
        zc = kern.sample_offset(rng, n_cand)
        yfar = xc - zc
        label = rng.random(n_cand)
        outside = ~W.contains(yfar)
        if r_max is not None:
            outside &= sc <= r_max
        idx = np.flatnonzero(outside)
        yfar, xc, sc, label = yfar[idx], xc[idx], sc[idx], label[idx]
        ox, os_, oown, n_other = _palm_relevant_others(model, rho, lam, S, yfar, rng, r_max)
        n_sampled += n_other + idx.size
        # keep a cluster only through its smallest-label relevant ball
        olabel = rng.random(os_.size)
        beaten = np.zeros(yfar.shape[0], dtype=bool)
        np.logical_or.at(beaten, oown, olabel < label[oown])
        acc = np.flatnonzero(~beaten)
        remap = -np.ones(yfar.shape[0], dtype=int)
        remap[acc] = yc.shape[0] + np.arange(acc.size)
        far_centers.append(yfar[acc])
        xs.append(xc[acc])
        ss.append(sc[acc])
        owners.append(remap[acc])
        take = ~beaten[oown]
        xs.append(ox[take])
        ss.append(os_[take])
        owners.append(remap[oown[take]])

    centers = np.concatenate([yc] + far_centers) if far_centers else yc
    xb = np.concatenate(xs)
    sb = np.concatenate(ss)
    cl = np.concatenate(owners).astype(np.int64)
    order = np.argsort(cl, kind="stable")
    xb, sb, cl = xb[order], sb[order], cl[order]
    marks = model.marks.sample(rng, sb.size)
    tail = float(rad.survival(r_max / rho)) if r_max is not None else 0.0
    return Realization(centers, cl, xb, sb, np.asarray(marks, dtype=float), rho, W, S, r_max, tail,
                       yc.shape[0], n_discarded, n_sampled)


def _uniform_in_parallel_body(S: TargetBox, s: np.ndarray, rng) -> np.ndarray:
    """One uniform point in ``S ⊕ B(0, s_i)`` for each radius (rejection from the grown box)."""
    n, d = s.size, S.dimension
    out = np.empty((n, d))
    todo = np.arange(n)
    while todo.size:
        lo = S.lo - s[todo, None]
        hi = S.hi + s[todo, None]
        p = lo + (hi - lo) * rng.random((todo.size, d))
        ok = S.distance(p) < s[todo]
        out[todo[ok]] = p[ok]
        todo = todo[~ok]
    return out


def _palm_relevant_others(model: ModelSpec, rho, lam, S: TargetBox, y: np.ndarray, rng, r_max):
    """Relevant balls among the ``Poisson(lambda)`` other balls of clusters centered at ``y``.

    Offsets are split at the kernel reach ``R``.  A ball with ``|z| <= R`` can
    only be relevant if its radius exceeds ``dist(y, S) - R``, so those radii
    are drawn directly from the conditioned Pareto law with a thinned count.
    Offsets beyond ``R`` (Gaussian kernel only) are drawn from the radial
    tail with unrestricted radii.
    """
    kern, rad = model.kernel, model.radius
    d = model.d
    n = y.shape[0]
    R = kern.reach
    p_in = _radial_cdf(kern, R)
    smin = rho * rad.r0
    t_star = np.maximum(S.distance(y) - R, smin)
    surv = (smin / t_star) ** rad.beta
    cnt_in = rng.poisson(lam * p_in * surv)
    tot_in = int(cnt_in.sum())
    own_in = np.repeat(np.arange(n), cnt_in)
    x_in = y[own_in] + _offsets_inside(kern, R, rng, tot_in)
    s_in = _draw_radii(rad, rho, rng, tot_in, above=t_star[own_in])
    parts_x, parts_s, parts_o = [x_in], [s_in], [own_in]
    sampled = tot_in
    if p_in < 1.0:
        cnt_out = rng.poisson(lam * (1.0 - p_in), n)
        tot_out = int(cnt_out.sum())
        own_out = np.repeat(np.arange(n), cnt_out)
        x_out = y[own_out] + _offsets_outside(kern, R, rng, tot_out)
        s_out = _draw_radii(rad, rho, rng, tot_out)
        parts_x.append(x_out)
        parts_s.append(s_out)
        parts_o.append(own_out)
        sampled += tot_out
    x = np.concatenate(parts_x) if parts_x else np.empty((0, d))
    s = np.concatenate(parts_s)
    o = np.concatenate(parts_o)
    keep = _relevant(S, x, s, r_max)
    return x[keep], s[keep], o[keep], sampled


# --------------------------------------------------------------------------
# large balls and truncation


def pareto_tail_moment(radius: RadiusLaw, j: float, t: float) -> float:
    """``int_t^inf r**j f(r) dr``."""
    return radius.tail_moment(j, t)


def truncation_bias_bound(model: ModelSpec, rho: float, mu: TestMeasure, r_max: float | None) -> float:
    """Bound on ``E|field mass|`` carried by balls of radius above ``r_max``.

    Uses ``int |mu(B(x, s))| dx <= ||mu|| v_d s**d``, so the lost mass is at most
    ``kappa lambda m1 ||mu|| v_d rho**d int_{r_max/rho}^inf r**d f(r) dr``.
    """
    if r_max is None or math.isinf(r_max):
        return 0.0
    d = model.d
    return (model.scaling.kappa(rho) * model.scaling.lam(rho) * unit_ball_volume(d)
            * mu.total_variation * model.marks.abs_mean * rho**d
            * pareto_tail_moment(model.radius, d, r_max / rho))


def count_large_balls(realization: Realization, threshold: float = 1.0) -> int:
    """Balls with radius above ``threshold`` that contain the origin."""
    inside = np.linalg.norm(realization.x, axis=1) < realization.r
    return int(np.count_nonzero(inside & (realization.r > threshold)))


def expected_large_balls(model: ModelSpec, rho: float, threshold: float = 1.0, *,
                         radius: RadiusLaw | None = None) -> float:
    """Mean number of balls with radius above ``threshold`` covering a fixed point.

    Equals ``kappa lambda v_d int_{s > threshold} s**d f_rho(s) ds``; for Pareto
    radii and ``rho * r0 <= threshold`` this is
    ``kappa lambda rho**beta v_d C_beta threshold**(d-beta) / (beta - d)``.
    ``radius`` replaces the model's radius law in the formula.
    """
    d = model.d
    radius = model.radius if radius is None else radius
    return (model.scaling.kappa(rho) * model.scaling.lam(rho) * unit_ball_volume(d)
            * rho**d * pareto_tail_moment(radius, d, threshold / rho))
