from __future__ import annotations

import numpy as np
import pytest

from agreement_lab.corpus import (
    KINDS,
    GeneratorSpec,
    blend_structure,
    make_appendix_a,
    make_identical,
    make_xor,
    random_boolean_substitutes,
    random_structure,
    random_substitutes_structure,
)
from agreement_lab.divergence import KL, SQUARED
from agreement_lab.errors import DimensionMismatch
from agreement_lab.structure import alice_beliefs, bob_beliefs, structure_to_json
from agreement_lab.substitutes import rectangle_check


def test_canonical_shapes():
    x, a = make_xor(), make_appendix_a()
    assert x.shape == (2, 2) and a.shape == (4, 4)
    assert x.prob.sum() == pytest.approx(1.0) and a.prob.sum() == pytest.approx(1.0)
    # Alice's belief is 0.1 or 0.9 on every row of the coin-plus-bit structure
    assert sorted(np.round(alice_beliefs(a), 12).tolist()) == [0.1, 0.1, 0.9, 0.9]


def test_make_identical_validation():
    s = make_identical([0.3, 0.7], [0.2, 0.4])
    assert np.allclose(alice_beliefs(s), [0.2, 0.4]) and np.allclose(bob_beliefs(s), [0.2, 0.4])
    with pytest.raises(DimensionMismatch):
        make_identical([0.5, 0.5], [0.1])


def test_random_structure_deterministic():
    a, b = random_structure(3, 5, 11), random_structure(3, 5, 11)
    assert structure_to_json(a) == structure_to_json(b)
    assert structure_to_json(a) != structure_to_json(random_structure(3, 5, 12))
    assert a.label == "random|pcg64|seed=11|3x5"


@pytest.mark.parametrize("g", [SQUARED, KL], ids=lambda g: g.name)
def test_substitutes_certified_and_labelled(g):
    for seed in range(6):
        s = random_substitutes_structure(4, 4, seed, g)
        assert rectangle_check(s, g).holds
        assert s.label.startswith(f"substitutes|pcg64|seed={seed}|4x4|w=")
        assert structure_to_json(s) == structure_to_json(random_substitutes_structure(4, 4, seed, g))


def test_blend_endpoints():
    # the blend moves only the means; at w = 1 they depend on one party's signal
    base = blend_structure(3, 4, 6, 0.0)
    even = blend_structure(3, 4, 6, 1.0)
    odd = blend_structure(3, 4, 7, 1.0)
    assert np.array_equal(base.prob, even.prob)
    assert np.all(even.mean == even.mean[:, :1])
    assert np.all(odd.mean == odd.mean[:1, :])


def test_substitutes_size_guard():
    with pytest.raises(DimensionMismatch):
        random_substitutes_structure(9, 2, 0)


def test_boolean_substitutes():
    for seed in range(8):
        s = random_boolean_substitutes(3, 3, seed)
        live = s.prob > 0
        assert set(np.unique(s.mean[live]).tolist()) <= {0.0, 1.0}
        assert rectangle_check(s, SQUARED).holds


def test_generator_spec_dispatch():
    assert GeneratorSpec("xor").build().label == "xor"
    assert GeneratorSpec("appendix-a").build().shape == (4, 4)
    ident = GeneratorSpec("identical", rows=3, seed=2).build()
    assert ident.shape == (3, 3) and np.count_nonzero(ident.prob) == 3
    assert GeneratorSpec("random", 2, 3, 1).build().shape == (2, 3)
    fixed = GeneratorSpec("substitutes", 3, 3, 0, mix_weight=0.25).build()
    assert fixed.label.endswith("w=0.25")
    assert GeneratorSpec("boolean-substitutes", 2, 2, 0).build().shape == (2, 2)
    with pytest.raises(ValueError):
        GeneratorSpec("nope").build()
    assert set(KINDS) == {"xor", "appendix-a", "identical", "random", "substitutes", "boolean-substitutes"}
