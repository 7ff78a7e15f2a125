"""Finite information structures and their conditional expectations.

A structure is stored as two m x n matrices: the joint probability of the
signal pair (Alice's row index, Bob's column index) and the conditional mean
of the target ``Y`` given that pair.  Everything downstream only needs these
two sufficient statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import (
    DimensionMismatch,
    MassNotOne,
    MeanOutOfRange,
    NegativeProbability,
    SchemaError,
    ZeroMassSlice,
)

MASS_TOLERANCE = 1e-9
# below this the deviation is summation noise; rescaling would only churn bits
RENORMALIZE_ABOVE = 1e-12
STRUCTURE_KEYS = frozenset({"rows", "cols", "prob", "mean", "label"})
MODES = ("joint", "alice-row", "bob-col", "cell")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class InformationStructure:
    """Validated, immutable joint law of (Alice's signal, Bob's signal) plus E[Y | signals].

    Attributes:
        prob: m x n joint probabilities, summing to one.
        mean: m x n conditional means in [0, 1]; entries at zero-mass cells are never read.
        label: free-text identifier (generators embed their recipe here).
        mass_deviation: |sum(prob) - 1| of the raw input before renormalization.
    """

    prob: np.ndarray
    mean: np.ndarray
    label: str = ""
    mass_deviation: float = 0.0

    @property
    def rows(self) -> int:
        return self.prob.shape[0]

    @property
    def cols(self) -> int:
        return self.prob.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.prob.shape

    @property
    def renormalized(self) -> bool:
        return self.mass_deviation > RENORMALIZE_ABOVE

    def full_rectangle(self) -> "Rectangle":
        return Rectangle(range(self.rows), range(self.cols))

    def same_as(self, other: "InformationStructure", tol: float = 1e-15) -> bool:
        if self.shape != other.shape:
            return False
        live = self.prob > 0
        return bool(
            np.allclose(self.prob, other.prob, rtol=0.0, atol=tol)
            and np.allclose(self.mean[live], other.mean[live], rtol=0.0, atol=tol)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "prob": self.prob.tolist(),
            "mean": self.mean.tolist(),
            "label": self.label,
        }


@dataclass(frozen=True)
class Rectangle:
    """A product set S x T of Alice-signal indices and Bob-signal indices."""

    rows: tuple[int, ...]
    cols: tuple[int, ...]

    def __init__(self, rows: Iterable[int], cols: Iterable[int]):
        r = tuple(sorted({int(i) for i in rows}))
        c = tuple(sorted({int(j) for j in cols}))
        if not r or not c:
            raise DimensionMismatch("rectangle needs nonempty row and column sets")
        object.__setattr__(self, "rows", r)
        object.__setattr__(self, "cols", c)

    def __contains__(self, cell: tuple[int, int]) -> bool:
        i, j = cell
        return i in self.rows and j in self.cols

    def mask(self, m: int, n: int) -> np.ndarray:
        out = np.zeros((m, n), dtype=bool)
        out[np.ix_(self.rows, self.cols)] = True
        return out

    def intersect(self, other: "Rectangle") -> "Rectangle":
        return Rectangle(set(self.rows) & set(other.rows), set(self.cols) & set(other.cols))

    def size(self) -> int:
        return len(self.rows) * len(self.cols)


def validate_structure(raw: Mapping[str, Any] | InformationStructure) -> InformationStructure:
    """Check a candidate structure and return the immutable validated form.

    ``raw`` supplies ``prob`` and ``mean`` (row-major nested lists or arrays) and
    optionally ``rows``, ``cols`` and ``label``.  Total mass within 1e-9 of one is
    accepted and rescaled when off by more than 1e-12; the raw deviation is
    kept on the result.
    """
    if isinstance(raw, InformationStructure):
        raw = raw.to_dict()
    try:
        prob = np.asarray(raw["prob"], dtype=float)
        mean = np.asarray(raw["mean"], dtype=float)
    except KeyError as exc:
        raise SchemaError(f"missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch(f"matrices are not rectangular numeric arrays: {exc}") from None

    if prob.ndim != 2 or mean.ndim != 2:
        raise DimensionMismatch("prob and mean must be 2-D matrices")
    if prob.shape != mean.shape:
        raise DimensionMismatch(f"prob shape {prob.shape} != mean shape {mean.shape}")
    m, n = prob.shape
    if m < 1 or n < 1:
        raise DimensionMismatch("need at least one signal per party")
    if raw.get("rows", m) != m or raw.get("cols", n) != n:
        raise DimensionMismatch(
            f"declared {raw.get('rows')}x{raw.get('cols')} but matrices are {m}x{n}"
        )

    if not np.all(np.isfinite(prob)):
        raise NegativeProbability("probabilities must be finite")
    if np.any(prob < 0):
        raise NegativeProbability(f"negative probability {prob.min()!r}")
    total = float(prob.sum())
    deviation = abs(total - 1.0)
    if deviation > MASS_TOLERANCE:
        raise MassNotOne(f"total mass {total!r} deviates from 1 by {deviation:.3g}")
    if deviation > RENORMALIZE_ABOVE:
        prob = prob / total

    if not np.all(np.isfinite(mean)) or np.any(mean < 0) or np.any(mean > 1):
        bad = mean[~(np.isfinite(mean) & (mean >= 0) & (mean <= 1))]
        raise MeanOutOfRange(f"conditional mean {bad.flat[0]!r} outside [0, 1]")

    label = raw.get("label", "") or ""
    return InformationStructure(_frozen(prob), _frozen(mean), str(label), deviation)


def from_arrays(prob: Any, mean: Any, label: str = "") -> InformationStructure:
    return validate_structure({"prob": prob, "mean": mean, "label": label})


def _check_rect(s: InformationStructure, rect: Rectangle) -> None:
    if rect.rows[-1] >= s.rows or rect.cols[-1] >= s.cols or rect.rows[0] < 0 or rect.cols[0] < 0:
        raise DimensionMismatch(f"rectangle {rect} does not fit a {s.rows}x{s.cols} structure")


def _slice(s: InformationStructure, rect: Rectangle) -> tuple[np.ndarray, np.ndarray]:
    _check_rect(s, rect)
    ix = np.ix_(rect.rows, rect.cols)
    return s.prob[ix], s.mean[ix]


def rectangle_mass(s: InformationStructure, rect: Rectangle) -> float:
    p, _ = _slice(s, rect)
    return float(p.sum())


def conditional_mean(s: InformationStructure, rect: Rectangle, mode: str = "joint"):
    """Conditional expectation of Y over ``rect``.

    ``joint`` gives the scalar mu_ST; ``alice-row`` the vector mu_sigma,T over
    rect's rows; ``bob-col`` the vector mu_S,tau over rect's columns; ``cell``
    the matrix of mu_sigma,tau inside the rectangle.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    p, mu = _slice(s, rect)
    total = p.sum()
    if total <= 0:
        raise ZeroMassSlice(f"rectangle {rect} has zero mass")
    if mode == "joint":
        return float((p * mu).sum() / total)
    if mode == "cell":
        return mu.copy()
    axis = 1 if mode == "alice-row" else 0
    mass = p.sum(axis=axis)
    if np.any(mass <= 0):
        which = "row" if axis == 1 else "column"
        raise ZeroMassSlice(f"a {which} of {rect} has zero mass inside the rectangle")
    return (p * mu).sum(axis=axis) / mass


def restrict(s: InformationStructure, rect: Rectangle) -> InformationStructure:
    """The structure conditioned on (sigma, tau) in ``rect``; indices are re-based to 0."""
    p, mu = _slice(s, rect)
    total = float(p.sum())
    if total <= 0:
        raise ZeroMassSlice(f"rectangle {rect} has zero mass")
    label = f"{s.label}|restrict({list(rect.rows)},{list(rect.cols)})"
    return InformationStructure(_frozen(p / total), _frozen(mu), label, 0.0)


def transpose(s: InformationStructure) -> InformationStructure:
    """Swap the roles of Alice and Bob."""
    return InformationStructure(_frozen(s.prob.T), _frozen(s.mean.T), f"{s.label}|T", s.mass_deviation)


def alice_beliefs(s: InformationStructure) -> np.ndarray:
    """mu_sigma for every row; NaN on zero-mass rows."""
    mass = s.prob.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mass > 0, (s.prob * s.mean).sum(axis=1) / mass, np.nan)


def bob_beliefs(s: InformationStructure) -> np.ndarray:
    """mu_tau for every column; NaN on zero-mass columns."""
    mass = s.prob.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mass > 0, (s.prob * s.mean).sum(axis=0) / mass, np.nan)


def structure_from_json(text: str) -> InformationStructure:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("top level must be an object")
    unknown = set(data) - STRUCTURE_KEYS
    if unknown:
        raise SchemaError(f"unknown top-level keys: {sorted(unknown)}")
    missing = {"rows", "cols", "prob", "mean"} - set(data)
    if missing:
        raise SchemaError(f"missing keys: {sorted(missing)}")
    return validate_structure(data)


def structure_to_json(s: InformationStructure) -> str:
    return json.dumps(s.to_dict(), indent=2)


def load_structure(path: str | Path) -> InformationStructure:
    return structure_from_json(Path(path).read_text())


def save_structure(s: InformationStructure, path: str | Path) -> None:
    Path(path).write_text(structure_to_json(s) + "\n")
