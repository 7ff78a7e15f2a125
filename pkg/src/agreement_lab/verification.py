"""Built-in invariant suite behind ``agreement-lab verify``.

Each check returns a :class:`CheckResult`; the suite passes only if all do.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analysis, corpus, divergence, metrics, protocol, substitutes
from .divergence import KL, SQUARED, bregman_array, jb_array
from .structure import Rectangle, from_arrays, restrict


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_triples(rng: np.random.Generator, n: int):
    pts = np.sort(rng.random((n, 3)), axis=1)
    return pts[:, 0], pts[:, 1], pts[:, 2]


def check_divergence_facts(n: int = 10_000, seed: int = 0) -> CheckResult:
    """Midpoint, reverse-triangle, nesting and Jensen-gap facts about JB on random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for g in (SQUARED, KL):
        a, x, b = _random_triples(rng, n)
        y = rng.random(n)
        jab = jb_array(g, a, b)
        # midpoint: any reference point is no closer than the midpoint
        f1 = jab - 0.5 * (bregman_array(g, a, y) + bregman_array(g, b, y))
        # reverse triangle inequality for x inside [a, b]
        f2 = jb_array(g, a, x) + jb_array(g, x, b) - jab
        # nesting: shrinking the interval never raises JB
        a2 = a + (x - a) * rng.random(n)
        b2 = x + (b - x) * rng.random(n)
        f3 = jb_array(g, a2, b2) - jab
        # Jensen gap of a 5-point law on [a, b] is at most 2 JB(a, b)
        pts = a[:, None] + (b - a)[:, None] * rng.random((n, 5))
        w = rng.dirichlet(np.ones(5), n)
        gap = (w * g.value(pts)).sum(axis=1) - g.value((w * pts).sum(axis=1))
        f4 = gap - 2.0 * jab
        for f in (f1, f2, f3, f4):
            worst = max(worst, float(np.nanmax(f[np.isfinite(f)])) if np.isfinite(f).any() else 0.0)
    return CheckResult("divergence-facts", worst <= 1e-12, f"max excess {worst:.3g}")


def check_triangle(step: float = 1e-3) -> CheckResult:
    vals = {g.name: divergence.c_approx_min_ratio(g, step) for g in (SQUARED, KL)}
    ok = all(v >= 0.5 - 1e-6 for v in vals.values())
    return CheckResult("c-approx-triangle", ok, ", ".join(f"{k}={v:.9f}" for k, v in vals.items()))


def check_pythagorean(count: int = 50, seed: int = 1) -> CheckResult:
    worst = 0.0
    rng = np.random.default_rng(seed)
    for k in range(count):
        m, n = rng.integers(1, 7, 2)
        s = corpus.random_structure(int(m), int(n), seed * 1000 + k)
        clamped = from_arrays(s.prob, np.clip(s.mean, 1e-6, 1 - 1e-6))
        rect = Rectangle(range(m), range(n))
        for g in (SQUARED, KL):
            for side in ("alice", "bob"):
                worst = max(worst, divergence.pythagorean_residual(clamped, g, rect, side))
    return CheckResult("pythagorean", worst <= 1e-8, f"max residual {worst:.3g}")


def check_protocol_invariants(count: int = 20, seed: int = 2) -> CheckResult:
    problems = []
    for k in range(count):
        s = corpus.random_structure(5, 5, seed * 1000 + k)
        for t in (protocol.run_discretized_quadratic(s, 0.05), protocol.run_discretized_bregman(s, KL, 0.1)):
            parts = t.partitions
            for a, b in zip(parts[:-1], parts[1:]):
                if not b.refines(a):
                    problems.append(f"{s.label}: round {b.round} does not refine")
                d = metrics.monovariant_decrease(s, KL if t.protocol == "disc-bregman" else SQUARED, a, b)
                if d < 0:
                    problems.append(f"{s.label}: negative monovariant drop")
            if t.bits != protocol.trit_bits(t.t_end):
                problems.append(f"{s.label}: bit count")
    return CheckResult("protocol-invariants", not problems, "; ".join(problems[:3]) or f"{count} structures")


def check_substitutes_closure(count: int = 10, seed: int = 3) -> CheckResult:
    problems = []
    for k in range(count):
        s = corpus.random_substitutes_structure(3, 3, seed * 1000 + k, SQUARED)
        for rows in ((0, 1), (1, 2), (0, 2)):
            for cols in ((0, 1), (0, 1, 2)):
                r = Rectangle(rows, cols)
                if s.prob[np.ix_(rows, cols)].sum() <= 0:
                    continue
                if not substitutes.rectangle_check(restrict(s, r), SQUARED).holds:
                    problems.append(f"{s.label} restricted to {r}")
    return CheckResult("substitutes-closure", not problems, "; ".join(problems[:3]) or "closed under restriction")


def check_canonical() -> CheckResult:
    xor, app = corpus.make_xor(), corpus.make_appendix_a()
    weak = substitutes.rectangle_check(xor, SQUARED, "weak")
    init = protocol.ProtocolPartition.initial(xor)
    acc = metrics.accuracy_profile(xor, init, SQUARED)
    aw = substitutes.rectangle_check(app, SQUARED, "weak")
    ar = substitutes.rectangle_check(app, SQUARED, "rectangle")
    acc_a = metrics.accuracy_profile(app, protocol.ProtocolPartition.initial(app), SQUARED)
    ok = (
        abs(weak.worst_violation - 0.25) <= 1e-12
        and abs(acc.alice_quad - 0.25) <= 1e-12
        and aw.holds and abs(aw.lhs - 0.09) <= 1e-12 and abs(aw.rhs - 0.16) <= 1e-12
        and not ar.holds
        and abs(acc_a.alice_quad - 0.09) <= 1e-12
    )
    return CheckResult("canonical-structures", ok, f"xor violation {weak.worst_violation:.3g}, appendix-a lhs/rhs {aw.lhs:.3g}/{aw.rhs:.3g}")


def check_audits(count: int = 10) -> CheckResult:
    failed = []
    for k in range(count):
        s = corpus.random_substitutes_structure(4, 4, k, SQUARED)
        for kind, eps in (("standard", 0.0), ("disc-quad", 0.05), ("fast", 0.05)):
            r = analysis.audit_agreement_accuracy(s, SQUARED, kind, eps, max_rounds=200)
            if not (r.satisfied and not r.continued_violations):
                failed.append(f"{s.label}/{kind}")
    return CheckResult("agreement-implies-accuracy", not failed, "; ".join(failed[:3]) or f"{3 * count} audits")


SUITE: tuple[Callable[[], CheckResult], ...] = (
    check_divergence_facts,
    check_triangle,
    check_pythagorean,
    check_protocol_invariants,
    check_substitutes_closure,
    check_canonical,
    check_audits,
)


def run_suite() -> list[CheckResult]:
    out = []
    for check in SUITE:
        try:
            out.append(check())
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            out.append(CheckResult(check.__name__, False, f"{type(exc).__name__}: {exc}"))
    return out


def summary_ok(results: list[CheckResult]) -> bool:
    return bool(results) and all(r.passed for r in results)
