"""Canonical and synthesized information structures.

All randomness comes from ``numpy.random.default_rng(seed)`` (PCG64); the
algorithm name and seed are embedded in every generated label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergence import SQUARED, BregmanGenerator
from .errors import DimensionMismatch, SynthesisFailed
from .structure import InformationStructure, alice_beliefs, bob_beliefs, from_arrays
from .substitutes import rectangle_check

PRNG = "pcg64"
KINDS = ("xor", "appendix-a", "identical", "random", "substitutes", "boolean-substitutes")
MAX_SYNTH_SIDE = 8
SEARCH_STEPS = 64
# the search certifies against a tighter tolerance than the final check so that
# rounding in restrictions or re-serialization cannot tip a structure over
SEARCH_TOL = 1e-12


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    rows: int = 2
    cols: int = 2
    seed: int = 0
    mix_weight: float | None = None

    def build(self, g: BregmanGenerator = SQUARED) -> InformationStructure:
        if self.kind == "xor":
            return make_xor()
        if self.kind == "appendix-a":
            return make_appendix_a()
        if self.kind == "identical":
            rng = np.random.default_rng(self.seed)
            d = rng.dirichlet(np.ones(self.rows))
            return make_identical(d, rng.random(self.rows), label=f"identical|{PRNG}|seed={self.seed}")
        if self.kind == "random":
            return random_structure(self.rows, self.cols, self.seed)
        if self.kind == "substitutes":
            if self.mix_weight is not None:
                return blend_structure(self.rows, self.cols, self.seed, self.mix_weight)
            return random_substitutes_structure(self.rows, self.cols, self.seed, g)
        if self.kind == "boolean-substitutes":
            return random_boolean_substitutes(self.rows, self.cols, self.seed, g)
        raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")


def make_xor() -> InformationStructure:
    """Two independent fair bits; Y is their XOR."""
    return from_arrays(np.full((2, 2), 0.25), [[0.0, 1.0], [1.0, 0.0]], "xor")


def make_appendix_a() -> InformationStructure:
    """Coin-plus-bit signals: signal index = 2 * coin + bit, coin 0 = heads.

    Both parties see the coin.  Heads gives correlated bits (equal w.p. 0.9),
    tails anticorrelated ones; Y is the XOR of the bits.
    """
    prob = np.zeros((4, 4))
    mean = np.zeros((4, 4))
    for coin, p_equal in ((0, 0.45), (1, 0.05)):
        for a in (0, 1):
            for b in (0, 1):
                i, j = 2 * coin + a, 2 * coin + b
                prob[i, j] = 0.5 * (p_equal if a == b else 0.5 - p_equal)
    for i in range(4):
        for j in range(4):
            mean[i, j] = float((i & 1) ^ (j & 1))
    return from_arrays(prob, mean, "appendix-a")


def make_identical(dist, values, label: str = "identical") -> InformationStructure:
    """Both parties receive the same signal: prob(i, i) = dist[i], mean(i, i) = values[i]."""
    d = np.asarray(dist, dtype=float)
    v = np.asarray(values, dtype=float)
    if d.ndim != 1 or v.shape != d.shape:
        raise DimensionMismatch("dist and values must be vectors of equal length")
    return from_arrays(np.diag(d), np.diag(v), label)


def _random_arrays(rng: np.random.Generator, rows: int, cols: int):
    p = rng.random((rows, cols))
    p = p / p.sum()
    return p, rng.random((rows, cols))


def random_structure(rows: int, cols: int, seed: int) -> InformationStructure:
    """Uniform weights normalized to a distribution, with uniform conditional means."""
    if rows < 1 or cols < 1:
        raise DimensionMismatch("rows and cols must be >= 1")
    p, mu = _random_arrays(np.random.default_rng(seed), rows, cols)
    return from_arrays(p, mu, f"random|{PRNG}|seed={seed}|{rows}x{cols}")


def _one_sided_mean(rng: np.random.Generator, rows: int, cols: int, seed: int) -> np.ndarray:
    """Conditional means that depend on one party's signal only: Alice's for even seeds, Bob's for odd."""
    if seed % 2 == 0:
        return np.repeat(rng.random(rows)[:, None], cols, axis=1)
    return np.repeat(rng.random(cols)[None, :], rows, axis=0)


def _blend_parts(rows: int, cols: int, seed: int):
    rng = np.random.default_rng(seed)
    p, mu = _random_arrays(rng, rows, cols)
    return p, mu, _one_sided_mean(rng, rows, cols, seed)


def _mix(parts, w: float):
    p, mu, v = parts
    return p, (1.0 - w) * mu + w * v


def blend_structure(rows: int, cols: int, seed: int, w: float) -> InformationStructure:
    """Random structure whose means are pulled toward a one-sided pattern by weight ``w``.

    The joint distribution of signals stays as drawn; only the conditional
    means move.  At w=1 the target depends on one signal alone.
    """
    p, mu = _mix(_blend_parts(rows, cols, seed), w)
    return from_arrays(p, mu, f"substitutes|{PRNG}|seed={seed}|{rows}x{cols}|w={w!r}")


def random_substitutes_structure(
    rows: int, cols: int, seed: int, g: BregmanGenerator = SQUARED
) -> InformationStructure:
    """Certified rectangle-substitutes structure by bisection on the blend weight.

    At w=1 the mean is a function of one party's signal, which satisfies the
    condition for every generator: on any rectangle, RHS - LHS equals the
    expected divergence between the other party's belief and Charlie's.  The
    search looks for the smallest passing w (monotonicity is not guaranteed;
    the final check is).
    """
    if not (1 <= rows <= MAX_SYNTH_SIDE and 1 <= cols <= MAX_SYNTH_SIDE):
        raise DimensionMismatch(f"synthesis needs 1 <= rows, cols <= {MAX_SYNTH_SIDE}")
    parts = _blend_parts(rows, cols, seed)

    def report(w):
        p, mu = _mix(parts, w)
        return rectangle_check(from_arrays(p, mu), g, "rectangle", tol=SEARCH_TOL)

    best_violation = np.inf
    r0 = report(0.0)
    if r0.holds:
        hi = 0.0
    else:
        lo, hi = 0.0, 1.0
        best_violation = r0.worst_violation
        for _ in range(SEARCH_STEPS):
            if hi - lo <= 1e-12:
                break
            mid = 0.5 * (lo + hi)
            r = report(mid)
            if r.holds:
                hi = mid
            else:
                lo = mid
                best_violation = min(best_violation, r.worst_violation)
    s = blend_structure(rows, cols, seed, hi)
    final = rectangle_check(s, g, "rectangle")
    if not final.holds:
        raise SynthesisFailed(f"blend at w={hi} failed certification", min(best_violation, final.worst_violation))
    return s


def _both_uncertain(s: InformationStructure) -> bool:
    """Neither party knows Y from its own signal alone."""
    live = s.prob > 0
    a = np.broadcast_to(alice_beliefs(s)[:, None], s.shape)[live]
    b = np.broadcast_to(bob_beliefs(s)[None, :], s.shape)[live]
    y = s.mean[live]
    return bool(np.any(np.abs(a - y) > 1e-12) and np.any(np.abs(b - y) > 1e-12))


def random_boolean_substitutes(
    rows: int, cols: int, seed: int, g: BregmanGenerator = SQUARED, attempts: int = 400
) -> InformationStructure:
    """Certified rectangle-substitutes structure with Y in {0, 1} on every realized pair.

    Draws sparse random supports with random 0/1 labels.  The first certified
    draw in which neither party already knows Y wins; failing that, the first
    certified draw; failing that, Y = f(Alice's signal), which always
    certifies because Bob's signal then adds nothing.
    """
    rng = np.random.default_rng(seed)
    fallback = None
    for k in range(attempts):
        density = rng.uniform(0.2, 0.6)
        support = rng.random((rows, cols)) < density
        if not support.any():
            continue
        p = np.where(support, rng.random((rows, cols)), 0.0)
        p = p / p.sum()
        mu = rng.integers(0, 2, (rows, cols)).astype(float)
        s = from_arrays(p, mu, f"boolean|{PRNG}|seed={seed}|try={k}|{rows}x{cols}")
        if rectangle_check(s, g, "rectangle").holds:
            if _both_uncertain(s):
                return s
            fallback = fallback or s
    if fallback is not None:
        return fallback
    p, _ = _random_arrays(rng, rows, cols)
    f = rng.integers(0, 2, rows).astype(float)
    mu = np.repeat(f[:, None], cols, axis=1)
    s = from_arrays(p, mu, f"boolean|{PRNG}|seed={seed}|alice-determined|{rows}x{cols}")
    if not rectangle_check(s, g, "rectangle").holds:
        raise SynthesisFailed("fallback boolean structure failed certification", np.nan)
    return s
