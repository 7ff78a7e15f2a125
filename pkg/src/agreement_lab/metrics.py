"""Agreement and accuracy measures for a protocol state."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .divergence import BregmanGenerator, bregman_array, jb_array
from .errors import NotARefinement
from .protocol import ProtocolPartition, charlie_drop, fmt, state_expectations
from .structure import InformationStructure

METRIC_COLUMNS = (
    "round", "quad", "jb", "withCharlie", "symmetrized",
    "aliceQuad", "bobQuad", "aliceBregman", "bobBregman", "midpoint",
)


@dataclass(frozen=True)
class AgreementProfile:
    """How far apart Alice (a), Bob (b) and Charlie (c) are, in expectation over realized pairs.

    Attributes:
        quad: E[(a - b)^2] / 4.
        jb: E[JB_G(a, b)].
        with_charlie: E[D_G(a || c) + D_G(b || c)] / 2.
        symmetrized: E[D_G(a || b) + D_G(b || a)] / 2.
        infinite_cells: cells whose terms were +inf (only possible for endpoint-singular G).
    """

    quad: float
    jb: float
    with_charlie: float
    symmetrized: float
    infinite_cells: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class AccuracyProfile:
    """Expected distance from the full-information mean mu_sigma,tau to each estimate.

    Attributes:
        alice_quad, bob_quad: E[(mu - a)^2], E[(mu - b)^2].
        alice_bregman, bob_bregman: E[D_G(mu || a)], E[D_G(mu || b)].
        midpoint: E[D_G(mu || (a + b) / 2)].
        infinite_cells: cells whose Bregman terms were +inf.
    """

    alice_quad: float
    bob_quad: float
    alice_bregman: float
    bob_bregman: float
    midpoint: float
    infinite_cells: tuple[tuple[int, int], ...] = ()


def _expect(w: np.ndarray, d: np.ndarray) -> float:
    if np.any(np.isinf(d)):
        return math.inf
    return float((w * d).sum())


def _cells(mask: np.ndarray, live: np.ndarray) -> tuple[tuple[int, int], ...]:
    idx = np.argwhere(live)[mask]
    return tuple((int(i), int(j)) for i, j in idx)


def agreement_profile(s: InformationStructure, part: ProtocolPartition, g: BregmanGenerator) -> AgreementProfile:
    a, b, c = state_expectations(s, part)
    live = s.prob > 0
    w, a, b, c = s.prob[live], a[live], b[live], c[live]
    ac, bc = bregman_array(g, a, c), bregman_array(g, b, c)
    ab, ba = bregman_array(g, a, b), bregman_array(g, b, a)
    bad = np.isinf(ac) | np.isinf(bc) | np.isinf(ab) | np.isinf(ba)
    return AgreementProfile(
        quad=float((w * (a - b) ** 2).sum()) / 4.0,
        jb=_expect(w, jb_array(g, a, b)),
        with_charlie=_expect(w, (ac + bc) / 2.0),
        symmetrized=_expect(w, (ab + ba) / 2.0),
        infinite_cells=_cells(bad, live),
    )


def accuracy_profile(s: InformationStructure, part: ProtocolPartition, g: BregmanGenerator) -> AccuracyProfile:
    a, b, _ = state_expectations(s, part)
    live = s.prob > 0
    w, mu, a, b = s.prob[live], s.mean[live], a[live], b[live]
    da, db = bregman_array(g, mu, a), bregman_array(g, mu, b)
    dm = bregman_array(g, mu, (a + b) / 2.0)
    bad = np.isinf(da) | np.isinf(db) | np.isinf(dm)
    return AccuracyProfile(
        alice_quad=float((w * (mu - a) ** 2).sum()),
        bob_quad=float((w * (mu - b) ** 2).sum()),
        alice_bregman=_expect(w, da),
        bob_bregman=_expect(w, db),
        midpoint=_expect(w, dm),
        infinite_cells=_cells(bad, live),
    )


def monovariant_decrease(
    s: InformationStructure, g: BregmanGenerator, before: ProtocolPartition, after: ProtocolPartition
) -> float:
    """Drop in Charlie's expected error E[D_G(Y || c)] from ``before`` to ``after``.

    By the Pythagorean identity this equals E[D_G(c_after || c_before)], so it
    needs no knowledge of Y beyond its conditional means.
    """
    if not after.refines(before):
        raise NotARefinement("the later partition does not refine the earlier one")
    return charlie_drop(s, g, before, after)


def charlie_excess_error(s: InformationStructure, g: BregmanGenerator, part: ProtocolPartition) -> float:
    """E[D_G(Y || c)] - E[G(Y)] = -E[G(c)]; exact differences between rounds, absolute level unknown."""
    _, _, c = state_expectations(s, part)
    live = s.prob > 0
    return -float((s.prob[live] * g.value(c[live])).sum())


def metrics_row(t: int, ag: AgreementProfile, ac: AccuracyProfile) -> list[str]:
    vals = [ag.quad, ag.jb, ag.with_charlie, ag.symmetrized,
            ac.alice_quad, ac.bob_quad, ac.alice_bregman, ac.bob_bregman, ac.midpoint]
    return [str(t)] + [fmt(v) for v in vals]
