"""Weak, rectangle and approximate rectangle substitutes.

Every check uses the mean-only form of the substitutes inequality.  On a
rectangle R = S x T with expectations conditioned on R,

    LHS = E[D(mu_st || mu_St)] = E[G(mu_st)] - E[G(mu_St)]
    RHS = E[D(mu_sT || mu_ST)] = E[G(mu_sT)] - G(mu_ST)

and the violation is LHS - RHS.  The Jensen-gap form never produces an
infinite term, even for generators with unbounded slope at the endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergence import BregmanGenerator
from .errors import TooLargeForEnumeration
from .structure import InformationStructure, Rectangle

DEFAULT_TOL = 1e-10
MAX_SIDE = 12
EXACT_LIMIT = 9


@dataclass(frozen=True)
class SubstitutesReport:
    holds: bool
    worst_rect: Rectangle | None
    worst_violation: float
    rectangles_checked: int
    mode: str
    lhs: float
    rhs: float

    def to_dict(self) -> dict:
        rect = None
        if self.worst_rect is not None:
            rect = {"rows": list(self.worst_rect.rows), "cols": list(self.worst_rect.cols)}
        return {
            "mode": self.mode,
            "holds": self.holds,
            "worstViolation": self.worst_violation,
            "worstRect": rect,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "rectanglesChecked": self.rectangles_checked,
        }


@dataclass(frozen=True)
class DeltaEstimate:
    """Bounds on the smallest delta for which approximate rectangle substitutes holds.

    ``lower_bound`` is the best single rectangle completed by singletons;
    ``exact`` maximizes over every partition into rectangles (tiny grids only).
    """

    lower_bound: float
    exact: float | None
    partitions_enumerated: int
    worst_rect: Rectangle | None


def subset_masks(k: int) -> np.ndarray:
    """All nonempty subsets of range(k) as a (2^k - 1) x k 0/1 matrix, ordered by bitmask."""
    codes = np.arange(1, 1 << k, dtype=np.int64)
    return ((codes[:, None] >> np.arange(k)) & 1).astype(float)


def _mask_to_rect(row_bits: np.ndarray, col_bits: np.ndarray) -> Rectangle:
    return Rectangle(np.flatnonzero(row_bits).tolist(), np.flatnonzero(col_bits).tolist())


def _gvals(g: BregmanGenerator, num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """den * G(num / den), with 0 where den = 0."""
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.where(den > 0, den * g.value(np.clip(x, 0.0, 1.0)), 0.0)


def rectangle_terms(s: InformationStructure, g: BregmanGenerator, row_masks: np.ndarray, col_mask: np.ndarray):
    """Mass-weighted (LHS, RHS) and mass for every row subset against one column subset.

    Returned values are unconditional, i.e. already multiplied by the rectangle mass.
    """
    cols = np.flatnonzero(col_mask)
    p = s.prob[:, cols]
    pm = p * s.mean[:, cols]
    pg = np.where(p > 0, p * g.value(s.mean[:, cols]), 0.0)

    mass = row_masks @ p.sum(axis=1)
    e_cell = row_masks @ pg.sum(axis=1)
    # Bob's side: column j's conditional mean within S
    col_mass = row_masks @ p
    col_num = row_masks @ pm
    e_bob = _gvals(g, col_num, col_mass).sum(axis=1)
    # Alice's side: row i's conditional mean within T
    row_p, row_pm = p.sum(axis=1), pm.sum(axis=1)
    e_alice = row_masks @ _gvals(g, row_pm, row_p)
    e_joint = _gvals(g, row_masks @ row_pm, mass)
    return e_cell - e_bob, e_alice - e_joint, mass


def _guard(s: InformationStructure, max_side: int, allow_large: bool) -> None:
    if not allow_large and max(s.rows, s.cols) > max_side:
        raise TooLargeForEnumeration(
            f"{s.rows}x{s.cols} exceeds the {max_side}-per-side enumeration guard; pass allow_large to override"
        )


def _scan(s: InformationStructure, g: BregmanGenerator):
    """Yield (row_masks, col_mask, lhs, rhs, mass) per column subset."""
    rows = subset_masks(s.rows)
    for col_mask in subset_masks(s.cols):
        lhs, rhs, mass = rectangle_terms(s, g, rows, col_mask)
        yield rows, col_mask, lhs, rhs, mass


def rectangle_check(
    s: InformationStructure,
    g: BregmanGenerator,
    mode: str = "rectangle",
    tol: float = DEFAULT_TOL,
    max_side: int = MAX_SIDE,
    allow_large: bool = False,
) -> SubstitutesReport:
    """Test weak substitutes (full rectangle only) or rectangle substitutes (every positive-mass sub-rectangle)."""
    if mode == "weak":
        full = np.ones((1, s.rows))
        lhs, rhs, mass = rectangle_terms(s, g, full, np.ones(s.cols))
        viol = float(lhs[0] - rhs[0]) / float(mass[0])
        return SubstitutesReport(viol <= tol, s.full_rectangle(), viol, 1, "weak",
                                 float(lhs[0] / mass[0]), float(rhs[0] / mass[0]))
    if mode != "rectangle":
        raise ValueError(f"mode must be 'weak' or 'rectangle', got {mode!r}")
    _guard(s, max_side, allow_large)

    best = (-np.inf, None, 0.0, 0.0)
    checked = 0
    for rows, col_mask, lhs, rhs, mass in _scan(s, g):
        live = mass > 0
        checked += int(live.sum())
        if not live.any():
            continue
        viol = np.where(live, (lhs - rhs) / np.where(live, mass, 1.0), -np.inf)
        k = int(np.argmax(viol))
        if viol[k] > best[0]:
            best = (float(viol[k]), _mask_to_rect(rows[k], col_mask), float(lhs[k] / mass[k]), float(rhs[k] / mass[k]))
    worst, rect, l, r = best
    return SubstitutesReport(worst <= tol, rect, worst, checked, "rectangle", l, r)


def rectangle_gains(s: InformationStructure, g: BregmanGenerator) -> dict[tuple[int, int], float]:
    """mass * violation keyed by (row bitmask, column bitmask), positive-mass rectangles only."""
    out = {}
    for rows, col_mask, lhs, rhs, mass in _scan(s, g):
        ccode = int((col_mask * (1 << np.arange(s.cols))).sum())
        for k in np.flatnonzero(mass > 0):
            out[(int(k) + 1, ccode)] = float(lhs[k] - rhs[k])
    return out


def _exact_delta(s: InformationStructure, gains: dict[tuple[int, int], float]) -> tuple[float, int]:
    """Max over partitions of the grid into rectangles of the summed gains, and the number of partitions.

    Dynamic programming over sets of cells: each step places the rectangle
    covering the lowest uncovered cell, so every partition is counted once.
    """
    m, n = s.rows, s.cols
    full = (1 << (m * n)) - 1
    rects = []
    for rcode in range(1, 1 << m):
        for ccode in range(1, 1 << n):
            cells = 0
            for i in range(m):
                if rcode >> i & 1:
                    for j in range(n):
                        if ccode >> j & 1:
                            cells |= 1 << (i * n + j)
            rects.append((cells, gains.get((rcode, ccode), 0.0)))
    best = {0: 0.0}
    count = {0: 1}
    for u in range(1, full + 1):
        low = u & -u
        b, c = -np.inf, 0
        for cells, gain in rects:
            if cells & low and cells & u == cells:
                rest = u ^ cells
                b = max(b, gain + best[rest])
                c += count[rest]
        best[u], count[u] = b, c
    return max(0.0, best[full]), count[full]


def delta_estimate(
    s: InformationStructure,
    g: BregmanGenerator,
    exact_limit: int = EXACT_LIMIT,
    max_side: int = MAX_SIDE,
    allow_large: bool = False,
) -> DeltaEstimate:
    _guard(s, max_side, allow_large)
    gains = rectangle_gains(s, g)
    code, lower = max(gains.items(), key=lambda kv: kv[1])
    worst = None
    if lower > 0:
        worst = Rectangle([i for i in range(s.rows) if code[0] >> i & 1], [j for j in range(s.cols) if code[1] >> j & 1])
    lower = max(0.0, lower)
    exact, count = None, 0
    if s.rows * s.cols <= exact_limit:
        exact, count = _exact_delta(s, gains)
    return DeltaEstimate(lower, exact, count, worst)
