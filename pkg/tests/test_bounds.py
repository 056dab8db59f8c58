import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflect_sim.bounds import BoundInputs, G, G_convex_limit, local_time_bound_AB, local_time_bound_convex
from reflect_sim.geometry import Box, truncate


def test_G_examples():
    assert G(3.7, 1.0, 1.0) == 8.0
    assert G(0.0, 1.0, 1.0, 1.0) == pytest.approx(4 * (1 + math.e) * math.e, rel=1e-15)
    assert G(0.0, 1.0, 1.0, 1.0) == pytest.approx(40.4294, abs=1e-4)
    assert G(1.0, 2.0, 0.5) == 12.0
    with pytest.raises(ValueError):
        G(-1.0, 1.0, 1.0)


def test_AB_value():
    # G is evaluated at the window oscillation, here 1: exponent (2 + 1) / 2
    g = 4 * (1 + math.exp(1.5)) * math.exp(1.5)
    expected = ((g + 1) + 1) * (g + 2)
    val = local_time_bound_AB(BoundInputs(1, 1, 1, 1, 1, 1))
    assert val == pytest.approx(expected, rel=1e-14)
    assert val == pytest.approx(10053.853104, rel=1e-9)


def test_AB_degenerate_and_missing():
    assert local_time_bound_AB(BoundInputs(1, 5.0, 0.0, 2.0, 1.0, 1.0)) == 0.0
    with pytest.raises(ValueError):
        local_time_bound_AB(BoundInputs(1, 1, 1))
    a = local_time_bound_AB(BoundInputs(1, 1, 1, 1, 1, 1))
    assert local_time_bound_AB(BoundInputs(1, 2, 1, 1, 1, 1)) > a


def test_convex_examples():
    val = local_time_bound_convex(BoundInputs(1, 1, 1, R0=2, sup_xi=1))
    assert val == pytest.approx(10 * (8 * math.sqrt(2) + 2) * 2, rel=1e-14)
    assert val == pytest.approx(266.27, abs=5e-3)
    assert local_time_bound_convex(BoundInputs(1, 1, 0, R0=2, sup_xi=1)) == 0.0
    with pytest.raises(ValueError):
        local_time_bound_convex(BoundInputs(1, 1, 1, R0=0, sup_xi=1))


def test_G_limit():
    assert G_convex_limit(1, 1) == pytest.approx(4 * (1 + math.sqrt(5)), rel=1e-15)
    assert G_convex_limit(1, 1) == pytest.approx(12.9443, abs=1e-4)
    beta = math.sqrt(1 + (2 * 3.0 / 1.5) ** 2)
    assert G(0.4, beta, 0.75) == pytest.approx(G_convex_limit(3.0, 1.5), rel=1e-15)


def test_input_validation():
    with pytest.raises(ValueError):
        BoundInputs(0.5)
    with pytest.raises(ValueError):
        BoundInputs(1, -1.0)
    with pytest.raises(ValueError):
        BoundInputs(1, 1, 1, beta=0.5, delta=1)
    with pytest.raises(ValueError):
        BoundInputs(1, 1, 1, 1, 1, r0=0.0)


def test_overflow_returns_inf():
    assert local_time_bound_AB(BoundInputs(1, 1, 1, 50.0, 1.0, 1e-3)) == math.inf
    assert local_time_bound_AB(BoundInputs(500, 1, 1, 1.0, 1e-3)) == math.inf


def test_convex_AB_consistency():
    trunc, delta, beta = truncate(Box([0.0, 0.0], [10.0, 10.0]), [5.0, 5.0], 4.0, 2.0)
    for omega, osc in ((0.5, 0.1), (3.0, 1.0), (10.0, 2.0)):
        ab = local_time_bound_AB(BoundInputs(1, omega, osc, beta, delta))
        cv = local_time_bound_convex(BoundInputs(1, omega, osc, R0=2.0, sup_xi=4.0))
        assert math.isfinite(ab) and ab <= cv <= 1e3 * ab


pos = st.floats(0.01, 5.0)


@settings(max_examples=300, deadline=None)
@given(pos, pos, pos, pos, pos, pos, st.floats(1.0, 3.0), st.floats(1.0, 2.0))
def test_monotonicity(omega, osc, beta_extra, delta, r0, sup_xi, q, f):
    beta = 1.0 + beta_extra
    base = local_time_bound_AB(BoundInputs(q, omega, osc, beta, delta, r0))
    assert local_time_bound_AB(BoundInputs(q, omega * f, osc, beta, delta, r0)) >= base
    assert local_time_bound_AB(BoundInputs(q, omega, osc * f, beta, delta, r0)) >= base
    assert local_time_bound_AB(BoundInputs(q, omega, osc, beta * f, delta, r0)) >= base
    # delta enters G's exponent too, so the bound only decreases in delta when r0 is infinite
    flat = local_time_bound_AB(BoundInputs(q, omega, osc, beta, delta))
    assert local_time_bound_AB(BoundInputs(q, omega, osc, beta, delta * f)) <= flat
    assert local_time_bound_AB(BoundInputs(q, omega, osc, beta, delta, r0 * f)) <= base
    R0 = r0
    cb = local_time_bound_convex(BoundInputs(q, omega, osc, R0=R0, sup_xi=sup_xi))
    assert local_time_bound_convex(BoundInputs(q, omega * f, osc, R0=R0, sup_xi=sup_xi)) >= cb
    assert local_time_bound_convex(BoundInputs(q, omega, osc * f, R0=R0, sup_xi=sup_xi)) >= cb
    assert local_time_bound_convex(BoundInputs(q, omega, osc, R0=R0, sup_xi=sup_xi * f)) >= cb
    assert local_time_bound_convex(BoundInputs(q, omega, osc, R0=R0 * f, sup_xi=sup_xi)) <= cb
