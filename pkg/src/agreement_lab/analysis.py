"""Theorem bounds, interval-partition constructions, and agreement-implies-accuracy audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .divergence import (
    DEFAULT_ENVELOPE_GRID,
    SQUARED,
    BregmanGenerator,
    EnvelopeTable,
    bregman_array,
    envelope,
    jb_array,
)
from .errors import DomainError, NotBoolean
from .metrics import accuracy_profile, agreement_profile
from .protocol import (
    Transcript,
    fast_bits,
    fmt,
    grid_index,
    run_protocol,
    state_expectations,
)
from .structure import InformationStructure, alice_beliefs, bob_beliefs
from .substitutes import MAX_SIDE, delta_estimate, rectangle_check

BETA_GRID_POINTS = 200
BETA_MIN = 1e-8
BETA_FLOOR = 1e-12
SATISFY_TOL = 1e-9
BISECT_TOL = 1e-12
AUDIT_COLUMNS = (
    "label", "protocol", "generator", "epsilonTarget", "epsilonMeasured", "accuracyAlice",
    "accuracyBob", "bound", "satisfied", "vacuous", "bits", "tEnd", "deltaLowerBound",
)


# bounds ---------------------------------------------------------------------


def bound_quadratic(epsilon: float, delta: float = 0.0) -> float:
    """10 eps^(1/3) + delta."""
    if epsilon < 0 or delta < 0:
        raise DomainError("epsilon and delta must be nonnegative")
    return 10.0 * epsilon ** (1.0 / 3.0) + delta


@lru_cache(maxsize=32)
def cached_envelope(g: BregmanGenerator, grid_size: int = DEFAULT_ENVELOPE_GRID) -> EnvelopeTable:
    return envelope(g, grid_size)


def _exponent(c: float) -> float:
    return 1.0 / (1.0 - math.log2(c))


@dataclass(frozen=True)
class BregmanBound:
    """Value of (8/c^2) beta + 16 G~*((eps/beta)^(1/(1 - log2 c))) at the chosen beta."""

    value: float
    beta: float
    c: float
    epsilon: float
    vacuous: bool
    candidates: dict = field(default_factory=dict)


def _check_c(c: float) -> None:
    if not (0.0 < c < 1.0):
        raise DomainError(f"c must lie in (0, 1), got {c}")


def bregman_bound_at(g: BregmanGenerator, c: float, epsilon: float, beta: float) -> float:
    _check_c(c)
    if beta <= 0:
        raise DomainError("beta must be positive")
    q = (epsilon / beta) ** _exponent(c)
    return 8.0 / c**2 * beta + 16.0 * cached_envelope(g).g_star(min(q, 1.0))


def corollary_betas(g: BregmanGenerator, c: float, epsilon: float) -> dict[str, float]:
    """The closed-form beta choices: bounded-slope (r = 1) rate, and the entropy rate for KL."""
    out = {}
    if 0 < epsilon < 1:
        out["rate-r1"] = epsilon ** (1.0 / (2.0 - math.log2(c)))
        if g.name == "kl":
            out["kl-log"] = epsilon ** (1.0 / 3.0) * math.log(1.0 / epsilon) ** (2.0 / 3.0)
    return out


def bound_bregman(g: BregmanGenerator, c: float, epsilon: float, beta: float | str = "auto") -> BregmanBound:
    """General agreement-to-accuracy bound; ``beta='auto'`` minimizes over a log grid plus the corollary choices."""
    _check_c(c)
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    if epsilon == 0:
        # the bound tends to 0 as beta -> 0
        return BregmanBound(0.0, BETA_FLOOR, c, 0.0, False, {"limit": 0.0})
    if beta != "auto":
        v = bregman_bound_at(g, c, epsilon, float(beta))
        return BregmanBound(v, float(beta), c, epsilon, v >= g.range_m, {"given": v})
    top = max(1.0, float(jb_array(g, 0.0, 1.0)))
    grid = np.geomspace(BETA_MIN, top, BETA_GRID_POINTS)
    cands = {f"grid{i}": float(b) for i, b in enumerate(grid)}
    cands.update(corollary_betas(g, c, epsilon))
    values = {k: bregman_bound_at(g, c, epsilon, b) for k, b in cands.items()}
    best = min(values, key=lambda k: (values[k], cands[k]))
    reported = {k: values[k] for k in values if not k.startswith("grid")}
    reported["grid-min"] = min(v for k, v in values.items() if k.startswith("grid"))
    v = values[best]
    return BregmanBound(v, cands[best], c, epsilon, v >= g.range_m, reported)


def bound_bregman_symmetric(g: BregmanGenerator, c: float, epsilon: float, beta: float) -> float:
    """Bound for G symmetric about 1/2, valid for beta >= 2 eps / c."""
    _check_c(c)
    if not g.symmetric:
        raise DomainError(f"generator {g.name} is not symmetric")
    if beta < 2.0 * epsilon / c:
        raise DomainError("symmetric form needs beta >= 2 eps / c")
    q = (epsilon / beta) ** _exponent(c)
    return 8.0 / c**2 * beta + 16.0 * (g.G(0.0) - g.G(q))


# thwart density and interval partitions --------------------------------------


def _belief_pairs(s: InformationStructure):
    live = s.prob > 0
    a = np.broadcast_to(alice_beliefs(s)[:, None], s.shape)[live]
    b = np.broadcast_to(bob_beliefs(s)[None, :], s.shape)[live]
    return np.minimum(a, b), np.maximum(a, b), s.prob[live]


def _rho(lo, hi, w, xs, strict: bool) -> np.ndarray:
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    inside = (lo[None, :] <= xs[:, None]) & (xs[:, None] <= hi[None, :])
    if strict:
        inside &= (lo != hi)[None, :]
    return inside.astype(float) @ w


def thwart_density(s: InformationStructure, x: float, inclusive: bool = True) -> float:
    """P[x between Alice's and Bob's initial beliefs]; the strict form also needs the beliefs to differ."""
    lo, hi, w = _belief_pairs(s)
    return float(_rho(lo, hi, w, x, strict=not inclusive)[0])


@dataclass(frozen=True)
class IntervalPartition:
    """Intervals [0, x_1), [x_1, x_2), ..., [x_{N-1}, 1]."""

    boundaries: tuple[float, ...]
    construction: str
    windows: tuple[tuple[float, float], ...] | None = None
    coarse: tuple[float, ...] = ()
    alphas: tuple[float, ...] = ()
    beta: float | None = None
    c: float | None = None

    @property
    def n_intervals(self) -> int:
        return len(self.boundaries) + 1

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], self.boundaries, [1.0]])

    def index(self, x) -> np.ndarray:
        return np.searchsorted(np.asarray(self.boundaries), np.asarray(x, dtype=float), side="right")

    def lengths(self) -> np.ndarray:
        return np.diff(self.edges)

    def mismatch(self, s: InformationStructure) -> float:
        """P[k(sigma) != k(tau)]."""
        live = s.prob > 0
        ka = np.broadcast_to(self.index(alice_beliefs(s))[:, None], s.shape)
        kb = np.broadcast_to(self.index(bob_beliefs(s))[None, :], s.shape)
        return float(s.prob[live & (ka != kb)].sum())


def _argmin_rho(lo, hi, w, left: float, right: float, strict: bool, floor: float | None = None):
    """Exact minimizer of rho on [left, right], excluding 0, 1 and anything <= floor.

    rho is piecewise constant with breakpoints at belief values, so the
    breakpoints in range, the range ends and the midpoints between them cover
    every value it takes.  Ties go to the point nearest the range center.
    """
    beliefs = np.concatenate([lo, hi])
    pts = np.unique(np.concatenate([[left, right], beliefs[(beliefs > left) & (beliefs < right)]]))
    cands = np.unique(np.concatenate([pts, (pts[:-1] + pts[1:]) / 2.0]))
    keep = (cands > 0.0) & (cands < 1.0)
    if floor is not None:
        keep &= cands > floor
    cands = cands[keep]
    if cands.size == 0:
        raise DomainError(f"no admissible point in [{left}, {right}]")
    vals = _rho(lo, hi, w, cands, strict)
    center = 0.5 * (left + right)
    order = np.lexsort((cands, np.abs(cands - center), vals))
    k = order[0]
    return float(cands[k]), float(vals[k])


def default_n(epsilon: float) -> int:
    """max(2, ceil(eps^(-1/6))) with eps = E[(mu_sigma - mu_tau)^2]."""
    if epsilon <= 0:
        return 2
    return max(2, math.ceil(epsilon ** (-1.0 / 6.0) - 1e-12))


def belief_gap(s: InformationStructure) -> float:
    """E[(mu_sigma - mu_tau)^2] over realized pairs."""
    lo, hi, w = _belief_pairs(s)
    return float((w * (hi - lo) ** 2).sum())


def partition_windowed(s: InformationStructure, n: int) -> IntervalPartition:
    """N intervals with x_i in [i/N - 1/(2N), i/N + 1/(2N)] minimizing the inclusive thwart density."""
    if n < 2:
        raise DomainError("need N >= 2")
    lo, hi, w = _belief_pairs(s)
    xs, wins = [], []
    for i in range(1, n):
        left, right = i / n - 1 / (2 * n), i / n + 1 / (2 * n)
        x, _ = _argmin_rho(lo, hi, w, left, right, strict=False, floor=xs[-1] if xs else None)
        xs.append(x)
        wins.append((left, right))
    return IntervalPartition(tuple(xs), "windowed", tuple(wins))


def _root(f, lo: float, hi: float, tol: float = BISECT_TOL) -> float:
    """Root of f increasing on [lo, hi] with f(lo) <= 0 <= f(hi), nudged onto the f <= 0 side."""
    if f(hi) <= 0:
        return hi
    x = brentq(f, lo, hi, xtol=tol)
    while f(x) > 0 and x > lo:
        x = max(lo, x - tol)
    return x


def _jb(g: BregmanGenerator, a: float, b: float) -> float:
    return float(jb_array(g, a, b))


def coarse_boundaries(g: BregmanGenerator, beta: float, c: float) -> list[float]:
    """Coarse step: march boundaries with JB(prev, next) = 2 beta / c, splitting the short tail evenly."""
    target = 2.0 * beta / c
    if _jb(g, 0.0, 1.0) <= target:
        return []
    xs: list[float] = []
    prev = 0.0
    while True:
        y = _root(lambda x: _jb(g, prev, x) - target, prev, 1.0)
        if _jb(g, y, 1.0) < target:
            # balance the last two intervals instead of leaving a short tail
            xp = _root(lambda x: _jb(g, prev, x) - _jb(g, x, 1.0), prev, 1.0)
            xs.append(xp)
            return xs
        xs.append(y)
        prev = y


def partition_jb_intervals(s: InformationStructure, g: BregmanGenerator, beta: float, c: float) -> IntervalPartition:
    """Coarse intervals of controlled JB, then the strict thwart-density minimizer inside each."""
    _check_c(c)
    if beta <= 0:
        raise DomainError("beta must be positive")
    coarse = coarse_boundaries(g, beta, c)
    if not coarse:
        return IntervalPartition((), "jb-intervals", None, (), (), beta, c)
    edges = [0.0] + coarse + [1.0]
    lo, hi, w = _belief_pairs(s)
    xs, alphas = [], []
    for left, right in zip(edges[:-1], edges[1:]):
        x, a = _argmin_rho(lo, hi, w, left, right, strict=True, floor=xs[-1] if xs else None)
        xs.append(x)
        alphas.append(a)
    wins = tuple(zip(edges[:-1], edges[1:]))
    return IntervalPartition(tuple(xs), "jb-intervals", wins, tuple(coarse), tuple(alphas), beta, c)


# lemma-level checks ------------------------------------------------------------


@dataclass(frozen=True)
class JBIntervalCheck:
    coarse_jb: tuple[float, ...]
    fine_jb: tuple[float, ...]
    alpha_sum_lhs: float
    alpha_sum_rhs: float
    first_summand: float
    first_summand_bound: float
    second_summand: float
    second_summand_bound: float
    mismatch: float
    epsilon: float

    def coarse_ok(self, beta: float, c: float, rtol: float = 1e-9) -> bool:
        lo, hi = beta * (1 - rtol), 2.0 * beta / c * (1 + rtol)
        return all(lo <= v <= hi for v in self.coarse_jb)

    def fine_ok(self, beta: float, c: float, rtol: float = 1e-9) -> bool:
        return all(v <= 4.0 * beta / c**2 * (1 + rtol) for v in self.fine_jb)

    @property
    def alpha_ok(self) -> bool:
        return self.alpha_sum_lhs <= self.alpha_sum_rhs + 1e-12

    @property
    def summands_ok(self) -> bool:
        return (self.first_summand <= self.first_summand_bound + 1e-12
                and self.second_summand <= self.second_summand_bound + 1e-12)


def _group_means(s: InformationStructure, k_sigma: np.ndarray):
    """mu_{S^(k) tau} per cell and mu_{S^(k)} per row, where S^(k) groups Alice's signals by interval."""
    p, pm = s.prob, s.prob * s.mean
    kk = np.broadcast_to(k_sigma[:, None], s.shape)
    n_groups = int(k_sigma.max()) + 1
    cols = np.broadcast_to(np.arange(s.cols)[None, :], s.shape)
    key = kk * s.cols + cols
    den = np.bincount(key.ravel(), p.ravel(), n_groups * s.cols)
    num = np.bincount(key.ravel(), pm.ravel(), n_groups * s.cols)
    with np.errstate(invalid="ignore", divide="ignore"):
        cell = np.where(den[key] > 0, num[key] / den[key], np.nan)
    gden = np.bincount(k_sigma, p.sum(axis=1), n_groups)
    gnum = np.bincount(k_sigma, pm.sum(axis=1), n_groups)
    with np.errstate(invalid="ignore", divide="ignore"):
        row = np.where(gden[k_sigma] > 0, gnum[k_sigma] / gden[k_sigma], np.nan)
    return cell, row


def check_jb_intervals(s: InformationStructure, g: BregmanGenerator, part: IntervalPartition) -> JBIntervalCheck:
    beta, c = part.beta, part.c
    edges_c = [0.0, *part.coarse, 1.0]
    coarse_jb = tuple(_jb(g, a, b) for a, b in zip(edges_c[:-1], edges_c[1:])) if part.coarse else ()
    e = part.edges
    fine_jb = tuple(_jb(g, a, b) for a, b in zip(e[:-1], e[1:]))
    lo, hi, w = _belief_pairs(s)
    eps = float((w * jb_array(g, lo, hi)).sum())
    rhs = 4.0 * (eps / (beta * c)) ** _exponent(c)
    lhs = 2.0 * sum(part.alphas)

    mu_s, mu_t = alice_beliefs(s), bob_beliefs(s)
    k_sigma = part.index(np.nan_to_num(mu_s))
    cell, row = _group_means(s, k_sigma)
    live = s.prob > 0
    wl = s.prob[live]
    mu_s_cells = np.broadcast_to(mu_s[:, None], s.shape)[live]
    row_cells = np.broadcast_to(row[:, None], s.shape)[live]
    first = float((wl * bregman_array(g, mu_s_cells, row_cells)).sum())
    mu_t_cells = np.broadcast_to(mu_t[None, :], s.shape)[live]
    second = float((wl * bregman_array(g, cell[live], mu_t_cells)).sum())
    q = part.mismatch(s)
    return JBIntervalCheck(
        coarse_jb, fine_jb, lhs, rhs, first, 8.0 * beta / c**2, second,
        2.0 * cached_envelope(g).g_star(q), q, eps,
    )


def lemma_quadratic_gap(s: InformationStructure) -> tuple[float, float]:
    """(E[(mu_st - mu_t)^2], 6 eps^(1/3)) with eps = E[(mu_s - mu_t)^2]."""
    live = s.prob > 0
    mu_t = np.broadcast_to(bob_beliefs(s)[None, :], s.shape)[live]
    lhs = float((s.prob[live] * (s.mean[live] - mu_t) ** 2).sum())
    return lhs, 6.0 * belief_gap(s) ** (1.0 / 3.0)


def lemma_bregman_gap(s: InformationStructure, g: BregmanGenerator, c: float, beta: float) -> tuple[float, float]:
    """(E[D_G(mu_st || mu_t)], bound at beta) with eps = E[JB(mu_s, mu_t)]."""
    live = s.prob > 0
    mu_t = np.broadcast_to(bob_beliefs(s)[None, :], s.shape)[live]
    lhs = float((s.prob[live] * bregman_array(g, s.mean[live], mu_t)).sum())
    lo, hi, w = _belief_pairs(s)
    eps = float((w * jb_array(g, lo, hi)).sum())
    return lhs, bregman_bound_at(g, c, eps, beta)


# audits ------------------------------------------------------------------------


def partition_quads(s: InformationStructure, t: Transcript) -> list[float]:
    """Quadratic agreement 1/4 E[(a - b)^2] at every simulated state, including rounds past t_end."""
    live = s.prob > 0
    out = []
    for part in t.partitions:
        a, b, _ = state_expectations(s, part)
        out.append(float((s.prob[live] * (a[live] - b[live]) ** 2).sum()) / 4.0)
    return out


def continued_agreement_violations(quads: list[float], epsilon: float | None = None, tol: float = 1e-12) -> list[int]:
    """Rounds t' breaking 'once eps-agreed, stay 10 eps^(1/3)-agreed'.

    With ``epsilon`` the premise is the first round at or below it; without,
    every earlier round's value serves as its own premise.
    """
    bad = []
    if epsilon is not None:
        first = next((t for t, q in enumerate(quads) if q <= epsilon), None)
        if first is None:
            return bad
        cap = 10.0 * epsilon ** (1.0 / 3.0)
        return [t for t in range(first + 1, len(quads)) if quads[t] > cap + tol]
    running = math.inf
    for t, q in enumerate(quads):
        if t > 0 and q > 10.0 * running ** (1.0 / 3.0) + tol:
            bad.append(t)
        running = min(running, q)
    return bad


@dataclass(frozen=True)
class AuditReport:
    """One protocol run checked against the matching accuracy bound.

    ``applicable`` is False when the structure fails rectangle substitutes for
    the generator; the bound is still evaluated but carries no guarantee.
    """

    label: str
    protocol: str
    generator: str
    epsilon_target: float
    epsilon_measured: float
    accuracy_alice: float
    accuracy_bob: float
    bound: float
    satisfied: bool
    vacuous: bool
    bits: int
    t_end: int
    delta_lower_bound: float | None
    applicable: bool
    bound_kind: str
    parameters: dict = field(default_factory=dict)
    continued_violations: tuple[int, ...] = ()

    def csv_row(self) -> list[str]:
        return [
            self.label, self.protocol, self.generator, fmt(self.epsilon_target), fmt(self.epsilon_measured),
            fmt(self.accuracy_alice), fmt(self.accuracy_bob), fmt(self.bound), fmt(self.satisfied),
            fmt(self.vacuous), str(self.bits), str(self.t_end),
            "" if self.delta_lower_bound is None else fmt(self.delta_lower_bound),
        ]


def audit_agreement_accuracy(
    s: InformationStructure,
    g: BregmanGenerator,
    protocol: str,
    epsilon: float,
    *,
    c: float = 0.5,
    max_rounds: int = 1000,
    delta: str | None = None,
    transcript: Transcript | None = None,
    t_end_objective: str = "divergence",
) -> AuditReport:
    """Run ``protocol`` and compare both parties' final accuracy with the bound at the measured agreement.

    ``delta`` may be None, 'lower' or 'exact'; for the quadratic bound the
    chosen delta estimate is added (graceful-decay form).
    """
    quadratic = g.name == "squared"
    applicable = True
    if max(s.shape) <= MAX_SIDE:
        applicable = rectangle_check(s, g, "rectangle").holds
    t = transcript or run_protocol(s, protocol, epsilon, g, max_rounds, t_end_objective)
    ag = agreement_profile(s, t.final, g)
    ac = accuracy_profile(s, t.final, g)
    delta_lb, delta_used, params = None, 0.0, {}
    if delta is not None:
        est = delta_estimate(s, g, exact_limit=9 if delta == "exact" else 0)
        delta_lb = est.lower_bound
        if delta == "exact":
            if est.exact is None:
                raise DomainError("exact delta needs rows * cols <= 9")
            delta_used = est.exact
        else:
            delta_used = est.lower_bound
        params["delta"] = delta_used
    if quadratic:
        eps_hat = ag.quad
        acc_a, acc_b = ac.alice_quad, ac.bob_quad
        bound = bound_quadratic(eps_hat, delta_used)
        vacuous = bound >= 1.0
        kind = "quadratic"
    else:
        eps_hat = ag.jb
        acc_a, acc_b = ac.alice_bregman, ac.bob_bregman
        bb = bound_bregman(g, c, eps_hat)
        bound, vacuous, kind = bb.value + delta_used, bb.vacuous, "bregman"
        params.update(beta=bb.beta, c=c)
    satisfied = max(acc_a, acc_b) <= bound + SATISFY_TOL
    cont = tuple(continued_agreement_violations(partition_quads(s, t))) if quadratic else ()
    return AuditReport(
        s.label, protocol, g.name, float(epsilon), eps_hat, acc_a, acc_b, bound, bool(satisfied),
        bool(vacuous), t.bits, t.t_end, delta_lb, applicable, kind, params, cont,
    )


@dataclass(frozen=True)
class BooleanResult:
    error_probability: float
    bits: int
    epsilon: float
    tie_rule: str = "0.5 -> 1"


def compute_boolean(s: InformationStructure, delta: float) -> BooleanResult:
    """Two rounded messages with eps = sqrt(delta / 8); output Bob's announced value rounded to {0, 1}."""
    if not (0.0 < delta < 1.0):
        raise DomainError("delta must lie in (0, 1)")
    live = s.prob > 0
    if not np.all((s.mean[live] == 0.0) | (s.mean[live] == 1.0)):
        raise NotBoolean("every realized pair needs a mean of exactly 0 or 1")
    eps = math.sqrt(delta / 8.0)
    t = run_protocol(s, "fast", eps, SQUARED)
    _, b, _ = state_expectations(s, t.partition_at(1))
    announced = grid_index(np.where(live, b, 0.0), eps) * eps
    out = (announced >= 0.5 - 1e-12).astype(float)
    err = float(s.prob[live & (out != s.mean)].sum())
    return BooleanResult(err, fast_bits(eps), eps)
