from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from strategies import interior, structures, unit

from agreement_lab.divergence import (
    KL,
    SQUARED,
    bregman,
    bregman_array,
    c_approx_min_ratio,
    check_generator,
    envelope,
    get_generator,
    jb_array,
    jensen_bregman,
    make_generator,
    pythagorean_residual,
    tilde_g,
    upper_hull,
)
from agreement_lab.errors import DomainError, UnknownGenerator
from agreement_lab.structure import Rectangle, from_arrays

GENERATORS = [SQUARED, KL, get_generator("power:3")]


def test_generator_lookup():
    assert get_generator("Squared") is SQUARED
    assert get_generator("kl") is KL
    assert get_generator("power:2.5").name == "power:2.5"
    for bad in ("cubic", "power:x", "power:1", "power:0.5"):
        with pytest.raises(UnknownGenerator):
            get_generator(bad)


def test_generator_metadata():
    assert SQUARED.range_m == 1.0 and SQUARED.minimizer == 0.0 and not SQUARED.symmetric
    assert KL.range_m == pytest.approx(math.log(2), abs=1e-12)
    assert KL.minimizer == pytest.approx(0.5, abs=1e-9) and KL.symmetric


@pytest.mark.parametrize("g", GENERATORS, ids=lambda g: g.name)
def test_shipped_generators_pass_self_check(g):
    assert check_generator(g) == []


def test_check_generator_flags_non_convex():
    g = make_generator("sine", lambda x: np.sin(3 * np.asarray(x)), lambda x: 3 * np.cos(3 * np.asarray(x)))
    assert check_generator(g)


def test_numeric_metadata_for_custom_generator():
    # (x - 0.3)^2: minimizer 0.3, M = 0.49
    g = make_generator("shifted", lambda x: (np.asarray(x) - 0.3) ** 2, lambda x: 2 * (np.asarray(x) - 0.3))
    assert g.minimizer == pytest.approx(0.3, abs=1e-9)
    assert g.range_m == pytest.approx(0.49, abs=1e-9)


def test_bregman_examples():
    assert bregman(SQUARED, 0.7, 0.2) == pytest.approx(0.25, abs=1e-15)
    # y ln(y/x) + (1-y) ln((1-y)/(1-x)) at y=1/2, x=1/4 is (1/2) ln(4/3)
    assert bregman(KL, 0.5, 0.25) == pytest.approx(0.14384103622589045, abs=1e-15)
    assert bregman(KL, 0.5, 0.0) == math.inf
    assert bregman(KL, 0.0, 0.0) == 0.0
    assert bregman(KL, 1.0, 0.5) == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(DomainError):
        bregman(SQUARED, 1.2, 0.5)


def test_generic_bregman_matches_closed_form():
    slow = make_generator("kl-generic", KL.value, KL.derivative)
    y = np.linspace(0.0, 1.0, 11)
    x = np.linspace(0.05, 0.95, 11)
    assert np.allclose(bregman_array(slow, y[:, None], x[None, :]),
                       bregman_array(KL, y[:, None], x[None, :]), atol=1e-12)
    assert bregman_array(slow, 0.3, 0.0) == math.inf


def test_jensen_bregman_examples():
    assert jensen_bregman(SQUARED, 0.2, 0.6) == pytest.approx(0.04, abs=1e-15)
    assert jensen_bregman(KL, 0.0, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    for g in GENERATORS:
        assert jensen_bregman(g, 0.37, 0.37) == 0.0
    with pytest.raises(DomainError):
        jensen_bregman(KL, -0.1, 0.5)


@pytest.mark.parametrize("g", GENERATORS, ids=lambda g: g.name)
@settings(max_examples=200, deadline=None)
@given(a=unit, b=unit, x=unit)
def test_jb_facts(g, a, b, x):
    a, b = min(a, b), max(a, b)
    jab = float(jb_array(g, a, b))
    assert jab == pytest.approx(float(jb_array(g, b, a)), abs=1e-15)
    # the midpoint is the closest reference point
    assert jab <= 0.5 * float(bregman_array(g, a, x) + bregman_array(g, b, x)) + 1e-12
    if a <= x <= b:
        # reverse triangle inequality, and shortening the interval
        assert float(jb_array(g, a, x) + jb_array(g, x, b)) <= jab + 1e-12
        assert float(jb_array(g, x, b)) <= jab + 1e-12


@pytest.mark.parametrize("g", GENERATORS, ids=lambda g: g.name)
@settings(max_examples=100, deadline=None)
@given(st.lists(unit, min_size=2, max_size=6), st.integers(0, 2**32 - 1))
def test_jensen_gap_at_most_twice_jb(g, pts, seed):
    # Jensen gap: E[G(X)] - G(E[X]) <= 2 JB(min X, max X)
    pts = np.array(pts)
    w = np.random.default_rng(seed).dirichlet(np.ones(pts.size))
    gap = float(w @ g.value(pts) - g.value(w @ pts))
    assert gap <= 2 * float(jb_array(g, pts.min(), pts.max())) + 1e-12


def test_triangle_ratio_squared_argmin_is_the_midpoint():
    ratio, (a, x, b) = c_approx_min_ratio(SQUARED, 1e-2, return_argmin=True)
    assert ratio == pytest.approx(0.5, abs=1e-9)
    assert x == pytest.approx((a + b) / 2, abs=1e-12)


def test_triangle_ratio_kl():
    assert c_approx_min_ratio(KL, 1e-2) >= 0.5 - 1e-6
    with pytest.raises(DomainError):
        c_approx_min_ratio(KL, 0.0)


def _tilde_brute(g, x, n=401):
    t = np.linspace(0.0, 1.0, n)
    a, b = np.meshgrid(t, t, indexing="ij")
    diff = g.value(a) - g.value(b)
    return float(np.where(np.abs(a - b) <= x + 1e-12, diff, -np.inf).max())


@pytest.mark.parametrize("g", GENERATORS, ids=lambda g: g.name)
def test_tilde_g_matches_brute_force(g):
    for x in (0.0, 0.0025, 0.1, 0.3, 0.5, 0.75, 1.0):
        assert tilde_g(g, x) == pytest.approx(_tilde_brute(g, x), abs=5e-3)


def test_tilde_g_examples():
    assert tilde_g(SQUARED, 0.3) == pytest.approx(0.51, abs=1e-15)
    assert tilde_g(SQUARED, 0.0) == 0.0
    for x in (0.1, 0.3, 0.5):
        assert tilde_g(KL, x) == pytest.approx(KL.G(0.0) - KL.G(x), abs=1e-15)
    assert tilde_g(KL, 0.8) == pytest.approx(KL.range_m, abs=1e-12)


@pytest.mark.parametrize("g", GENERATORS, ids=lambda g: g.name)
def test_envelope_is_concave_majorant(g):
    env = envelope(g, 1001)
    assert env.tilde_g_star[0] == 0.0 and env.g_star(0.0) == 0.0
    assert np.all(env.tilde_g_star >= env.tilde_g - 1e-12)
    second = np.diff(env.tilde_g_star, 2)
    assert np.all(second <= 1e-12)
    assert env.g_star(2.0) == pytest.approx(env.g_star(1.0))


def test_envelope_guard():
    with pytest.raises(DomainError):
        envelope(SQUARED, 50)


def test_upper_hull_of_convex_points_is_the_chord():
    x = np.linspace(0, 1, 11)
    hx, hy = upper_hull(x, x**2)
    assert list(hx) == [0.0, 1.0] and list(hy) == [0.0, 1.0]


def test_upper_hull_collinear_and_tiny():
    x = np.linspace(0, 1, 7)
    hx, hy = upper_hull(x, 2 * x + 1)
    assert list(hx) == [0.0, 1.0] and list(hy) == [1.0, 3.0]
    hx, _ = upper_hull(x[:2], x[:2])
    assert list(hx) == [0.0, 1.0 / 6]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 40))
def test_upper_hull_dominates_and_is_concave(seed, n):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.choice(np.linspace(0, 1, 1001), n, replace=False))
    y = rng.random(n)
    hx, hy = upper_hull(x, y)
    assert hx[0] == x[0] and hx[-1] == x[-1]
    # vertices are input points, the interpolant covers every point, and slopes decrease
    assert set(zip(hx.tolist(), hy.tolist())) <= set(zip(x.tolist(), y.tolist()))
    assert np.all(np.interp(x, hx, hy) >= y - 1e-12)
    slopes = np.diff(hy) / np.diff(hx)
    assert np.all(np.diff(slopes) <= 1e-9)


def test_pythagorean_single_cell_and_squared(rand44):
    assert pythagorean_residual(rand44, SQUARED, Rectangle([2], [3])) == 0.0
    assert pythagorean_residual(rand44, SQUARED, rand44.full_rectangle(), "bob") <= 1e-10


@settings(max_examples=80, deadline=None)
@given(structures(max_side=5, sparse=True), st.sampled_from(["alice", "bob"]))
def test_pythagorean_identity_kl(s, side):
    clamped = from_arrays(s.prob, np.clip(s.mean, 1e-6, 1 - 1e-6))
    assert pythagorean_residual(clamped, KL, clamped.full_rectangle(), side) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(interior, interior)
def test_kl_divergence_nonnegative_and_zero_only_on_diagonal(y, x):
    d = float(bregman_array(KL, y, x))
    assert d >= 0
    if abs(y - x) > 1e-3:
        assert d > 0
