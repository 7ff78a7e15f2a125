"""Bregman generators on [0, 1], their divergences, and the envelope tables used by the bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull, QhullError

from .errors import DomainError, UnknownGenerator, ZeroMassSlice
from .structure import InformationStructure, Rectangle, _slice

ArrayFn = Callable[[np.ndarray], np.ndarray]

RANGE_GRID = 10_001
DEFAULT_ENVELOPE_GRID = 2001
DEFAULT_TRIANGLE_STEP = 1e-3


@dataclass(frozen=True)
class BregmanGenerator:
    """A strictly convex potential G on [0, 1].

    ``value`` and ``derivative`` are vectorized.  ``derivative`` may return
    +/-inf at the endpoints (negative entropy does).  ``divergence`` and ``jb``
    are optional closed forms used instead of the generic expressions when the
    generic ones lose precision to cancellation.
    """

    name: str
    value: ArrayFn = field(repr=False)
    derivative: ArrayFn = field(repr=False)
    range_m: float
    minimizer: float
    symmetric: bool
    divergence: ArrayFn | None = field(default=None, repr=False)
    jb: ArrayFn | None = field(default=None, repr=False)

    def G(self, x: float) -> float:
        return float(self.value(np.asarray(x, dtype=float)))


def make_generator(
    name: str,
    value: ArrayFn,
    derivative: ArrayFn,
    *,
    divergence: ArrayFn | None = None,
    jb: ArrayFn | None = None,
    minimizer: float | None = None,
    range_m: float | None = None,
) -> BregmanGenerator:
    """Build a generator, deriving M, the minimizer and symmetry numerically where not supplied."""
    grid = np.linspace(0.0, 1.0, RANGE_GRID)
    vals = np.asarray(value(grid), dtype=float)
    if minimizer is None:
        k = int(np.argmin(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, RANGE_GRID - 1)]
        f = lambda x: float(value(np.asarray(x)))
        minimizer = float(minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}).x)
        for end in (0.0, 1.0):
            if f(end) <= f(minimizer):
                minimizer = end
    if range_m is None:
        gmin = min(float(vals.min()), float(value(np.asarray(minimizer))))
        range_m = float(vals.max()) - gmin
    symmetric = bool(np.allclose(vals, vals[::-1], rtol=0.0, atol=1e-12))
    return BregmanGenerator(name, value, derivative, float(range_m), float(minimizer), symmetric, divergence, jb)


def _squared() -> BregmanGenerator:
    return make_generator(
        "squared",
        lambda x: np.square(x),
        lambda x: 2.0 * np.asarray(x),
        divergence=lambda y, x: np.square(np.asarray(y) - np.asarray(x)),
        jb=lambda a, b: np.square(np.asarray(a) - np.asarray(b)) / 4.0,
        minimizer=0.0,
        range_m=1.0,
    )


def _xlogx(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def _xlog_ratio(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y * log(y / x) with 0 log 0 = 0 and y > 0, x = 0 -> +inf."""
    y, x = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(x, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(y > 0, y * (np.log(np.where(y > 0, y, 1.0)) - np.log(x)), 0.0)
    return out


def _neg_entropy(x):
    return _xlogx(x) + _xlogx(1.0 - np.asarray(x, dtype=float))


def _neg_entropy_derivative(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(x) - np.log1p(-x)


def _kl_divergence(y, x):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    out = _xlog_ratio(y, x) + _xlog_ratio(1.0 - y, 1.0 - x)
    return np.where(y == x, 0.0, np.maximum(out, 0.0))


def _kl_jb(a, b):
    # u log(2u / (u + v)) written without halving u + v, which underflows for subnormal inputs
    def term(u, v):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(u > 0, u * (math.log(2.0) + np.log(np.where(u > 0, u, 1.0)) - np.log(np.where(u > 0, u + v, 1.0))), 0.0)

    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = 0.5 * (term(a, b) + term(b, a) + term(1.0 - a, 1.0 - b) + term(1.0 - b, 1.0 - a))
    return np.where(a == b, 0.0, np.maximum(out, 0.0))


def _kl() -> BregmanGenerator:
    return make_generator(
        "kl",
        _neg_entropy,
        _neg_entropy_derivative,
        divergence=_kl_divergence,
        jb=_kl_jb,
        minimizer=0.5,
        range_m=math.log(2.0),
    )


def _power(r: float) -> BregmanGenerator:
    if not r > 1:
        raise UnknownGenerator(f"power generator needs r > 1, got {r}")
    return make_generator(
        f"power:{r:g}",
        lambda x: np.power(np.asarray(x, dtype=float), r),
        lambda x: r * np.power(np.asarray(x, dtype=float), r - 1.0),
        minimizer=0.0,
        range_m=1.0,
    )


SQUARED = _squared()
KL = _kl()


def get_generator(name: str) -> BregmanGenerator:
    """Resolve a CLI generator name: ``squared``, ``kl`` or ``power:r``."""
    key = name.strip().lower()
    if key == "squared":
        return SQUARED
    if key == "kl":
        return KL
    if key.startswith("power:"):
        try:
            r = float(key.split(":", 1)[1])
        except ValueError:
            raise UnknownGenerator(f"cannot parse exponent in {name!r}") from None
        return _power(r)
    raise UnknownGenerator(f"unknown generator {name!r}; expected squared, kl or power:r")


def check_generator(g: BregmanGenerator, points: int = 101) -> list[str]:
    """Grid checks of strict convexity and the stored range M.  Returns the list of problems."""
    problems: list[str] = []
    t = np.linspace(0.0, 1.0, points)
    a, x, b = np.meshgrid(t, t, t, indexing="ij")
    sel = (a < x) & (x < b)
    a, x, b = a[sel], x[sel], b[sel]
    chord = ((b - x) * g.value(a) + (x - a) * g.value(b)) / (b - a)
    if not np.all(g.value(x) < chord - 1e-15):
        problems.append("not strictly convex on the check grid")
    vals = g.value(np.linspace(0.0, 1.0, RANGE_GRID))
    if abs((vals.max() - vals.min()) - g.range_m) > 1e-6:
        problems.append(f"range M={g.range_m} disagrees with grid range {vals.max() - vals.min()}")
    if not g.range_m > 0:
        problems.append("range M must be positive")
    return problems


def _check_unit(*args: float) -> None:
    for v in args:
        if not (0.0 <= v <= 1.0):
            raise DomainError(f"argument {v!r} outside [0, 1]")


def bregman_array(g: BregmanGenerator, y, x) -> np.ndarray:
    """Elementwise D_G(y || x); +inf where G' is unbounded at x and y != x."""
    y, x = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(x, dtype=float))
    if g.divergence is not None:
        return np.asarray(g.divergence(y, x), dtype=float)
    d = np.asarray(g.derivative(x), dtype=float)
    finite = np.isfinite(d)
    with np.errstate(invalid="ignore"):
        raw = g.value(y) - g.value(x) - (y - x) * np.where(finite, d, 0.0)
    out = np.where(finite, np.maximum(raw, 0.0), np.inf)
    return np.where(y == x, 0.0, out)


def bregman(g: BregmanGenerator, y: float, x: float) -> float:
    """D_G(y || x) = G(y) - G(x) - (y - x) G'(x)."""
    _check_unit(y, x)
    return float(bregman_array(g, y, x))


def jb_array(g: BregmanGenerator, a, b) -> np.ndarray:
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if g.jb is not None:
        out = np.asarray(g.jb(a, b), dtype=float)
    else:
        out = (g.value(a) + g.value(b)) / 2.0 - g.value((a + b) / 2.0)
    return np.where(a == b, 0.0, np.maximum(out, 0.0))


def jensen_bregman(g: BregmanGenerator, a: float, b: float) -> float:
    """(G(a) + G(b)) / 2 - G((a + b) / 2); symmetric and finite."""
    _check_unit(a, b)
    return float(jb_array(g, a, b))


def c_approx_min_ratio(g: BregmanGenerator, grid_step: float = DEFAULT_TRIANGLE_STEP, *, return_argmin: bool = False):
    """min over grid triples a < x < b of (JB(a,x) + JB(x,b)) / JB(a,b).

    Points outside [a, b] never attain the minimum (JB grows under nesting), so
    only interior x are scanned.  The result upper-bounds the best constant c.
    """
    if not (0 < grid_step <= 0.1):
        raise DomainError("grid_step must lie in (0, 0.1]")
    n = int(round(1.0 / grid_step)) + 1
    t = np.linspace(0.0, 1.0, n)
    J = jb_array(g, t[:, None], t[None, :])
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    J_upper = np.where(upper, J, np.inf)  # J_upper[k, j] finite only for k < j
    best, where = np.inf, (0, 0, 0)
    for i in range(n - 2):
        denom = J[i, i + 1 :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (J[i, i + 1 :, None] + J_upper[i + 1 :, i + 1 :]) / np.where(denom > 0, denom, np.nan)[None, :]
        ratio = np.where(np.isnan(ratio), np.inf, ratio)
        k, j = np.unravel_index(np.argmin(ratio), ratio.shape)
        if ratio[k, j] < best:
            best, where = float(ratio[k, j]), (i, i + 1 + k, i + 1 + j)
    if return_argmin:
        i, k, j = where
        return best, (float(t[i]), float(t[k]), float(t[j]))
    return best


@dataclass(frozen=True)
class EnvelopeTable:
    """Grid samples of G~(x) = max_{|a-b|<=x} G(a) - G(b) and its upper concave envelope G~*."""

    grid_x: np.ndarray
    tilde_g: np.ndarray
    tilde_g_star: np.ndarray
    generator: BregmanGenerator = field(repr=False)
    hull_x: np.ndarray = field(repr=False)
    hull_y: np.ndarray = field(repr=False)

    def g_tilde(self, x) -> np.ndarray:
        return tilde_g(self.generator, x)

    def g_star(self, x):
        """Query G~* by interpolating the hull.

        Both the hull interpolant and G~ itself lie below the true envelope, so
        their max is the tightest safe value; arguments beyond 1 saturate at M.
        """
        xa = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        out = np.maximum(np.interp(xa, self.hull_x, self.hull_y), tilde_g(self.generator, xa))
        return float(out) if np.ndim(out) == 0 else out


def tilde_g(g: BregmanGenerator, x) -> np.ndarray:
    """Closed form of G~ for convex G with minimizer x*.

    For a fixed gap d the difference G(a) - G(a +/- d) is monotone in position,
    so the extremes sit at the interval ends; the running max over d <= x then
    stops growing once the gap reaches the minimizer.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    xs = g.minimizer
    g0, g1 = g.G(0.0), g.G(1.0)
    left = g0 - g.value(np.minimum(x, xs))
    right = g1 - g.value(np.maximum(1.0 - x, xs))
    out = np.maximum(np.maximum(left, right), 0.0)
    return float(out) if out.ndim == 0 else out


def upper_hull(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the upper concave hull of points sorted by x."""
    if x.size < 3:
        return x.copy(), y.copy()
    try:
        verts = np.sort(ConvexHull(np.column_stack([x, y])).vertices)
    except QhullError:  # all points collinear: the chord is the hull
        return x[[0, -1]], y[[0, -1]]
    # a convex polygon's upper chain is the set of vertices on or above the end-to-end chord
    chord = y[0] + (y[-1] - y[0]) * (x[verts] - x[0]) / (x[-1] - x[0])
    keep = verts[y[verts] >= chord - 1e-15]
    keep = np.unique(np.concatenate([[0], keep, [x.size - 1]]))
    return x[keep], y[keep]


def envelope(g: BregmanGenerator, grid_size: int = DEFAULT_ENVELOPE_GRID) -> EnvelopeTable:
    if grid_size < 101:
        raise DomainError("envelope grid needs at least 101 points")
    gx = np.linspace(0.0, 1.0, grid_size)
    gt = tilde_g(g, gx)
    hx, hy = upper_hull(gx, gt)
    star = np.interp(gx, hx, hy)
    return EnvelopeTable(gx, gt, star, g, hx, hy)


def pythagorean_residual(
    s: InformationStructure, g: BregmanGenerator, rect: Rectangle, side: str = "alice"
) -> float:
    """|E[D(A||C)] - E[D(A||B)] - E[D(B||C)]| on ``rect``.

    A = mu_sigma,tau, C = mu_ST, and B = mu_sigma,T (``side='alice'``) or
    mu_S,tau (``side='bob'``).  Cells whose terms are infinite are dropped.
    """
    p, mu = _slice(s, rect)
    total = p.sum()
    if total <= 0:
        raise ZeroMassSlice(f"rectangle {rect} has zero mass")
    w = p / total
    c = float((w * mu).sum())
    axis = 1 if side == "alice" else 0
    mass = w.sum(axis=axis, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        b = np.where(mass > 0, (w * mu).sum(axis=axis, keepdims=True) / mass, c)
    b = np.broadcast_to(b, mu.shape)
    live = w > 0
    ac = bregman_array(g, mu, c)
    ab = bregman_array(g, mu, b)
    bc = bregman_array(g, b, c)
    ok = live & np.isfinite(ac) & np.isfinite(ab) & np.isfinite(bc)
    lhs = float((w[ok] * ac[ok]).sum())
    rhs = float((w[ok] * ab[ok]).sum() + (w[ok] * bc[ok]).sum())
    return abs(lhs - rhs)
