from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from strategies import structures

from agreement_lab.errors import (
    DimensionMismatch,
    MassNotOne,
    MeanOutOfRange,
    NegativeProbability,
    SchemaError,
    ZeroMassSlice,
)
from agreement_lab.structure import (
    Rectangle,
    alice_beliefs,
    bob_beliefs,
    conditional_mean,
    from_arrays,
    load_structure,
    rectangle_mass,
    restrict,
    save_structure,
    structure_from_json,
    structure_to_json,
    transpose,
    validate_structure,
)


def test_xor_validates_and_round_trips(xor):
    again = structure_from_json(structure_to_json(xor))
    assert again.same_as(xor, 0.0)
    assert again.label == "xor"


def test_mass_not_one():
    with pytest.raises(MassNotOne):
        from_arrays([[0.45, 0.45]], [[0.0, 1.0]])


def test_small_mass_error_is_renormalized():
    s = from_arrays([[0.5, 0.5 + 5e-10]], [[0.0, 1.0]])
    assert s.renormalized
    assert s.prob.sum() == pytest.approx(1.0, abs=1e-15)
    assert s.mass_deviation == pytest.approx(5e-10, rel=1e-3)


def test_mean_out_of_range():
    with pytest.raises(MeanOutOfRange):
        from_arrays([[0.5, 0.5]], [[0.2, 1.5]])


def test_negative_probability():
    with pytest.raises(NegativeProbability):
        from_arrays([[1.2, -0.2]], [[0.2, 0.5]])


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        from_arrays([[0.5, 0.5]], [[0.2], [0.5]])
    with pytest.raises(DimensionMismatch):
        validate_structure({"rows": 3, "cols": 2, "prob": [[0.5, 0.5]], "mean": [[0.0, 1.0]]})


def test_schema_errors():
    with pytest.raises(SchemaError):
        structure_from_json("{not json")
    with pytest.raises(SchemaError):
        structure_from_json(json.dumps({"rows": 1, "cols": 1, "prob": [[1]], "mean": [[0]], "extra": 1}))
    with pytest.raises(SchemaError):
        structure_from_json(json.dumps({"rows": 1, "cols": 1, "prob": [[1]]}))


def test_structures_are_immutable(xor):
    with pytest.raises(ValueError):
        xor.prob[0, 0] = 1.0


def test_file_round_trip(tmp_path, appendix_a):
    path = tmp_path / "a.json"
    save_structure(appendix_a, path)
    assert load_structure(path).same_as(appendix_a, 0.0)


def test_conditional_means_on_canonical_structures(xor, appendix_a):
    assert conditional_mean(xor, xor.full_rectangle()) == 0.5
    assert conditional_mean(xor, Rectangle([1], [0])) == 1.0
    rows = conditional_mean(appendix_a, appendix_a.full_rectangle(), "alice-row")
    assert np.allclose(rows, [0.1, 0.1, 0.9, 0.9], atol=1e-15)
    cols = conditional_mean(appendix_a, appendix_a.full_rectangle(), "bob-col")
    assert np.allclose(cols, [0.1, 0.1, 0.9, 0.9], atol=1e-15)
    assert np.array_equal(conditional_mean(xor, Rectangle([0], [0, 1]), "cell"), [[0.0, 1.0]])
    with pytest.raises(ValueError):
        conditional_mean(xor, xor.full_rectangle(), "diagonal")


def test_zero_mass_slice():
    s = from_arrays([[0.5, 0.0], [0.0, 0.5]], [[0.2, 0.0], [0.0, 0.7]])
    with pytest.raises(ZeroMassSlice):
        conditional_mean(s, Rectangle([0], [1]))
    with pytest.raises(ZeroMassSlice):
        conditional_mean(s, Rectangle([0, 1], [1]), "alice-row")
    with pytest.raises(ZeroMassSlice):
        restrict(s, Rectangle([1], [0]))


def test_rectangle_out_of_bounds(xor):
    with pytest.raises(DimensionMismatch):
        rectangle_mass(xor, Rectangle([0, 2], [0]))
    with pytest.raises(DimensionMismatch):
        Rectangle([], [0])


def test_restrict_examples(xor, appendix_a):
    assert restrict(xor, xor.full_rectangle()).same_as(xor)
    heads = restrict(appendix_a, Rectangle([0, 1], [0, 1]))
    assert np.allclose(heads.prob, [[0.45, 0.05], [0.05, 0.45]], atol=1e-15)
    assert np.array_equal(heads.mean, [[0.0, 1.0], [1.0, 0.0]])
    row = restrict(xor, Rectangle([1], [0, 1]))
    assert np.array_equal(conditional_mean(row, row.full_rectangle(), "cell"), [[1.0, 0.0]])


def test_rectangle_helpers():
    r = Rectangle([2, 0, 2], [1])
    assert r.rows == (0, 2) and r.size() == 2
    assert (2, 1) in r and (1, 1) not in r
    assert r.intersect(Rectangle([0, 1], [1, 3])) == Rectangle([0], [1])
    assert r.mask(3, 2).sum() == 2


@settings(max_examples=60, deadline=None)
@given(structures())
def test_json_round_trip_is_exact(s):
    again = structure_from_json(structure_to_json(s))
    assert np.array_equal(again.prob, s.prob) and np.array_equal(again.mean, s.mean)


@settings(max_examples=60, deadline=None)
@given(structures())
def test_beliefs_average_to_the_prior_mean(s):
    prior = float((s.prob * s.mean).sum())
    assert float(s.prob.sum(axis=1) @ alice_beliefs(s)) == pytest.approx(prior, abs=1e-12)
    assert float(s.prob.sum(axis=0) @ bob_beliefs(s)) == pytest.approx(prior, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(structures(min_side=2))
def test_restriction_tower_property(s):
    rect = Rectangle(range(s.rows - 1), range(s.cols))
    if rectangle_mass(s, rect) <= 0:
        return
    sub = restrict(s, rect)
    assert sub.prob.sum() == pytest.approx(1.0, abs=1e-12)
    assert conditional_mean(sub, sub.full_rectangle()) == pytest.approx(conditional_mean(s, rect), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(structures())
def test_transpose_swaps_roles(s):
    t = transpose(s)
    assert np.allclose(alice_beliefs(t), bob_beliefs(s), equal_nan=True)
    assert transpose(t).same_as(s, 0.0)
