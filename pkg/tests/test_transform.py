import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from natgrad import expr as E
from natgrad.operators import OperatorSpec
from natgrad.transform import GSpec, RangeError, TransformError, build_h, build_table

EXAMPLE_G = "2*t/(1+t^2)"
EXAMPLE_F = "exp(t+t^3/3)/(1+t^2)^3"


@pytest.fixture(scope="module")
def example():
    return build_table(GSpec.from_string(EXAMPLE_G), -50, 50)


@pytest.fixture(scope="module")
def zero():
    return build_table(GSpec.from_string("0"), -20, 20)


@pytest.fixture(scope="module")
def const1():
    return build_table(GSpec.from_string("1", positive_only=True), -10, 10)


def test_identity_for_zero_g(zero):
    assert zero.phi(7.0) == pytest.approx(7.0, abs=1e-12)
    assert zero.G(3.0) == 0.0


def test_example_closed_form(example):
    assert abs(example.phi(1.0) - 4 / 3) <= 1e-10
    t = np.linspace(-5, 5, 101)
    assert np.allclose(example.G(t), np.log1p(t * t), rtol=1e-12, atol=1e-13)
    assert np.allclose(example.phi(t), t + t**3 / 3, rtol=1e-12, atol=1e-13)


def test_exponential_closed_form(const1):
    assert abs(const1.phi(1.0) - (math.e - 1)) <= 1e-10


def test_anchor(example, zero, const1):
    for tbl in (example, zero, const1):
        assert tbl.phi(0.0) == 0.0
        assert tbl.G(0.0) == 0.0


def test_phi_inv_examples(example):
    assert abs(example.phi_inv(4 / 3) - 1.0) <= 1e-10
    assert example.phi_inv(0.0) == 0.0


def test_round_trip_1000(example):
    rng = np.random.default_rng(0)
    t = rng.uniform(example.t_min, example.t_max, 1000)
    err = np.abs(example.phi_inv(example.phi(t)) - t) / (1 + np.abs(t))
    assert err.max() <= 1e-10


def test_out_of_range(example):
    with pytest.raises(RangeError):
        example.phi(51.0)
    with pytest.raises(RangeError):
        example.phi_inv(example.phi_max * 1.01)


def test_round_trip_at_table_ends():
    for lo, hi in [(-1.0, 10.0), (-50.0, 50.0), (-3.0, 7.25)]:
        tbl = build_table(GSpec.from_string(EXAMPLE_G), lo, hi)
        ends = np.array([lo, hi])
        assert np.allclose(tbl.phi_inv(tbl.phi(ends)), ends, rtol=1e-12)


def test_pull_range_error_reports_index(zero):
    with pytest.raises(RangeError) as info:
        zero.pull_solution(np.array([0.0, 1.0, 25.0, 2.0]))
    assert info.value.index == 2


def test_push_pull(example):
    assert not example.push_solution(np.zeros((3, 4))).any()
    rng = np.random.default_rng(1)
    u = rng.uniform(-1, 1, (20, 20))
    assert np.max(np.abs(example.pull_solution(example.push_solution(u)) - u) / (1 + np.abs(u))) <= 1e-9
    assert example.push_solution(np.array([1.0]))[0] == pytest.approx(4 / 3, abs=1e-12)


def test_bad_inputs():
    gs = GSpec.from_string(EXAMPLE_G)
    with pytest.raises(TransformError):
        build_table(gs, 1.0, 5.0)
    with pytest.raises(TransformError):
        build_table(gs, -1.0, 1.0, quad_tol=0.0)
    with pytest.raises(TransformError):
        GSpec.from_string("x1*t")


def test_sign_check_rejects_violation():
    with pytest.raises(TransformError, match="sign condition"):
        build_table(GSpec.from_string("-1"), -1, 1)
    # g = 1 satisfies g >= 0 but not g <= 0 on the negative side
    with pytest.raises(TransformError):
        build_table(GSpec.from_string("1"), -1, 1)
    # t + 1 is positive on (-1, 0], which the negative side forbids for s0 = 0
    with pytest.raises(TransformError, match="g <= 0"):
        build_table(GSpec.from_string("t+1"), -1, 1)
    build_table(GSpec.from_string("t+1", s0=1.0), -1, 1)
    build_table(GSpec.from_string("t^3-t", s0=1.0), -3, 3)


def test_non_finite_g_is_reported():
    with pytest.raises(TransformError):
        build_table(GSpec.from_string("1/t"), -1, 1, check_sign=False)


def test_csv_export(example):
    text = example.to_csv()
    lines = text.split("\n")
    assert lines[0] == "t,G,Phi,Phi_prime"
    assert text.endswith("\n") and "\r" not in text
    row = lines[1].split(",")
    assert len(row) == 4 and float(row[0]) == example.t_min


# -- invariants -----------------------------------------------------------------


def test_monotone_on_ordered_pairs(example):
    rng = np.random.default_rng(2)
    a = rng.uniform(example.t_min, example.t_max, 10_000)
    b = rng.uniform(example.t_min, example.t_max, 10_000)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keep = hi > lo
    assert np.all(example.phi(lo[keep]) < example.phi(hi[keep]))


@pytest.mark.parametrize("g, s0, rng_", [(EXAMPLE_G, 0.0, (-50, 50)), ("t^3-t", 1.0, (-3, 3)), ("0", 0.0, (-5, 5))])
def test_convexity_split(g, s0, rng_):
    tbl = build_table(GSpec.from_string(g, s0=s0), *rng_)
    for lo, hi, sign in ((rng_[0], -s0, -1), (s0, rng_[1], 1)):
        t = np.linspace(lo, hi, 2001)
        d = t[1] - t[0]
        p = tbl.phi(t)
        second = (p[2:] - 2 * p[1:-1] + p[:-2]) / d**2
        scale = 1 + np.abs(tbl.phi_prime(t[1:-1]))
        if sign > 0:
            assert np.all(second / scale >= -1e-8)
        else:
            assert np.all(second / scale <= 1e-8)


def test_growth_bounds(example):
    s0 = 0.0
    assert example.phi(example.t_max) >= math.exp(example.G(s0)) * (example.t_max - s0)
    assert example.phi(example.t_min) <= -math.exp(example.G(-s0)) * (-s0 - example.t_min)


@pytest.mark.parametrize("fixture", ["example", "zero", "const1"])
def test_second_derivative_identity(fixture, request):
    tbl = request.getfixturevalue(fixture)
    t = tbl.knots
    lhs = tbl.phi_second(t) - tbl.g_spec(t) * tbl.phi_prime(t)
    assert np.max(np.abs(lhs) / (1 + np.abs(tbl.phi_prime(t)))) <= 1e-8


def test_inverse_derivative_identity(example):
    rng = np.random.default_rng(3)
    s = rng.uniform(example.phi(-10.0), example.phi(10.0), 1000)
    w = example.phi_inv(s)
    # fourth-order differences of the numerical inverse, step scaled to the local slope
    ds = 3e-3 * example.phi_prime(w)
    inv = example.phi_inv
    inv_prime = (-inv(s + 2 * ds) + 8 * inv(s + ds) - 8 * inv(s - ds) + inv(s - 2 * ds)) / (12 * ds)
    assert np.max(np.abs(inv_prime * example.phi_prime(w) - 1)) <= 1e-8


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50))
def test_round_trip_property(t):
    tbl = _example_cache()
    assert abs(tbl.phi_inv(tbl.phi(t)) - t) <= 1e-9 * (1 + abs(t))


_CACHE = {}


def _example_cache():
    if "p" not in _CACHE:
        _CACHE["p"] = build_table(GSpec.from_string(EXAMPLE_G), -50, 50)
    return _CACHE["p"]


# -- transformed reaction ------------------------------------------------------


def test_h_worked_example(example):
    h = build_h(example, EXAMPLE_F, OperatorSpec("infinity_laplace", 2))
    x = np.zeros(2)
    assert abs(h(x, 0.0) - 1.0) <= 1e-8
    s = np.linspace(-3, 30, 50)
    assert np.allclose(h(np.zeros((50, 2)), s), np.exp(s), rtol=1e-9)
    assert np.allclose(h.h0(np.zeros((50, 2)), s), -np.exp(s), rtol=1e-9)


def test_h_zero_g_is_f(zero):
    f = "x1*t + sin(x2)"
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    s = np.array([0.7, -4.0])
    for op in (OperatorSpec("laplace", 2), OperatorSpec("infinity_laplace", 2)):
        h = build_h(zero, f, op)
        expect = E.evaluate(E.parse(f), {"x1": x[:, 0], "x2": x[:, 1], "t": s})
        assert np.allclose(h(x, s), expect, rtol=1e-12)


def test_h_zero_f(example):
    h = build_h(example, "0", OperatorSpec("infinity_laplace", 2))
    assert not np.any(h(np.zeros((5, 2)), np.linspace(-1, 1, 5)))
