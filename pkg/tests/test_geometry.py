import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflect_sim.errors import (DimensionMismatchError, NotOnBoundaryError, SubstepTooCoarseError,
                                UnsupportedOperationError)
from reflect_sim.geometry import (Ball, BallComplement, Box, ConvexPolytope, HalfSpace, TruncatedDomain,
                                  beta_from_alpha, certify_condition_A, certify_condition_B,
                                  check_directions, choose_delta, cone_certificate, contains,
                                  domain_from_dict, normal_cone, project, pushback, sample_near,
                                  sphere_margin, truncate)

BOX = Box([0.0, 0.0], [1.0, 1.0])
HS = HalfSpace([1.0, 0.0], 0.0)
BC = BallComplement([0.0, 0.0], 1.0)
ORTHANT = Box([0.0, 0.0], [None, None])
TRI = ConvexPolytope((HalfSpace([1.0, 0.0], 0.0), HalfSpace([0.0, 1.0], 0.0),
                      HalfSpace(np.array([-1.0, -1.0]) / math.sqrt(2), -1 / math.sqrt(2))))

CONVEX = [BOX, HS, ORTHANT, Ball([0.0, 0.0], 1.0), TRI,
          TruncatedDomain(ORTHANT, [2.0, 2.0], 6.0, 2.0)]


# ---------------------------------------------------------------- construction

def test_invariants_rejected():
    with pytest.raises(ValueError):
        HalfSpace([1.0, 1.0], 0.0)
    with pytest.raises(ValueError):
        Box([0.0], [0.0])
    with pytest.raises(ValueError):
        Ball([0.0, 0.0], 0.0)
    with pytest.raises(ValueError):
        BallComplement([0.0], -1.0)
    with pytest.raises(ValueError):
        TruncatedDomain(ORTHANT, [1.0, 1.0], 6.0, 2.0)


def test_dict_roundtrip():
    for dom in CONVEX + [BC]:
        again = domain_from_dict(dom.to_dict())
        assert again.to_dict() == dom.to_dict()
    with pytest.raises(DimensionMismatchError):
        domain_from_dict({"variant": "Ball", "dimension": 3, "center": [0, 0], "radius": 1})


# ---------------------------------------------------------------- contains / project / pushback

def test_contains_examples():
    assert contains(BOX, [0.5, 0.5])
    assert not contains(HS, [-1e-3, 0.0])
    assert contains(BC, [1.0, 0.0])
    with pytest.raises(DimensionMismatchError):
        contains(BOX, [0.5, 0.5, 0.5])


def test_project_examples():
    np.testing.assert_array_equal(project(BOX, [0.5, 0.5]), [0.5, 0.5])
    np.testing.assert_allclose(project(HS, [-1.0, 2.0]), [0.0, 2.0], atol=1e-15)
    np.testing.assert_allclose(project(Ball([0.0, 0.0], 1.0), [2.0, 0.0]), [1.0, 0.0], atol=1e-15)
    with pytest.raises(UnsupportedOperationError):
        project(BC, [0.5, 0.0])


def test_pushback_examples():
    y, n, d = pushback(HS, [-0.3, 1.0])
    np.testing.assert_allclose(y, [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(n, [1.0, 0.0], atol=1e-15)
    assert d == pytest.approx(0.3, abs=1e-15)

    y, n, d = pushback(BC, [0.5, 0.0])
    np.testing.assert_allclose(y, [1.0, 0.0])
    np.testing.assert_allclose(n, [1.0, 0.0])
    assert d == pytest.approx(0.5)

    y, n, d = pushback(Box([0.0], [1.0]), [-0.2])
    np.testing.assert_allclose(y, [0.0], atol=1e-15)
    np.testing.assert_allclose(n, [1.0])
    assert d == pytest.approx(0.2)

    with pytest.raises(SubstepTooCoarseError):
        pushback(BC, [0.2, 0.0])


def test_polytope_corner_projection():
    np.testing.assert_allclose(project(TRI, [2.0, 2.0]), [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(project(TRI, [-1.0, -2.0]), [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(project(TRI, [3.0, -1.0]), [1.0, 0.0], atol=1e-12)


pts = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2)


@settings(max_examples=200, deadline=None)
@given(pts, pts, st.sampled_from(range(len(CONVEX))))
def test_projection_properties(x, y, k):
    dom = CONVEX[k]
    px, py = project(dom, x), project(dom, y)
    assert contains(dom, px, 1e-9)
    np.testing.assert_allclose(project(dom, px), px, atol=1e-12)
    assert np.linalg.norm(px - py) <= np.linalg.norm(np.subtract(x, y)) + 1e-12
    if not contains(dom, x):
        yb, n, d = pushback(dom, x)
        np.testing.assert_allclose(yb, px, atol=1e-12)


def test_projection_matches_brute_force():
    rng = np.random.default_rng(3)
    trunc = CONVEX[-1]
    grid = rng.uniform(-2, 10, size=(200000, 2))
    grid = grid[trunc.contains(grid)]
    for x in rng.uniform(-3, 10, size=(20, 2)):
        p = project(trunc, x)
        brute = np.min(np.linalg.norm(grid - x, axis=1))
        assert np.linalg.norm(p - x) <= brute + 1e-9


# ---------------------------------------------------------------- normal cones

def test_normal_cone_examples():
    nc = normal_cone(HS, [0.0, 3.0])
    np.testing.assert_allclose(nc.normals, [[1.0, 0.0]])
    assert math.isinf(nc.r0)
    nc = normal_cone(BOX, [0.0, 0.0])
    assert {tuple(v) for v in np.round(nc.normals, 12)} == {(1.0, 0.0), (0.0, 1.0)}
    nc = normal_cone(BC, [1.0, 0.0])
    np.testing.assert_allclose(nc.normals, [[1.0, 0.0]])
    assert nc.r0 == 1.0
    with pytest.raises(NotOnBoundaryError):
        normal_cone(BOX, [0.5, 0.5])


@pytest.mark.parametrize("dom", CONVEX + [BC])
def test_normal_cone_validity(dom):
    rng = np.random.default_rng(1)
    r0 = dom.exterior_radius
    radius = 2.0 * r0 if math.isfinite(r0) else 2.0
    for x in dom.sample_boundary(10, rng):
        if dom.boundary_distance(x[None])[0] > 1e-9:
            continue
        nc = normal_cone(dom, x)
        assert np.allclose(np.linalg.norm(nc.normals, axis=1), 1.0)
        z = sample_near(dom, x, radius, 1000, rng)
        for n in nc.normals:
            assert sphere_margin(x, n, z, r0) >= -1e-9


def test_corner_cone_interior_direction():
    rng = np.random.default_rng(2)
    z = sample_near(BOX, np.zeros(2), 1.0, 1000, rng)
    for a in np.linspace(0, math.pi / 2, 7):
        assert sphere_margin(np.zeros(2), np.array([math.cos(a), math.sin(a)]), z, math.inf) >= -1e-12


# ---------------------------------------------------------------- condition A

def test_condition_A():
    for dom in CONVEX:
        assert certify_condition_A(dom, samples=40, z_samples=200).status == "certified"
    assert certify_condition_A(BC, samples=100, r0=1.0).status == "certified"
    cert = certify_condition_A(BC, samples=100, r0=2.0)
    assert cert.status == "failed" and cert.worst_margin < 0
    assert cert.to_dict()["condition"] == "A"


# ---------------------------------------------------------------- condition B

def test_condition_B_halfspace():
    cert = certify_condition_B(HS, 0.5, samples=40)
    assert cert.status == "certified"
    assert cert.beta == pytest.approx(1.0, abs=1e-9)


def test_condition_B_box_corner():
    cert = certify_condition_B(BOX, 0.1, samples=200)
    assert cert.status == "certified"
    assert cert.beta == pytest.approx(math.sqrt(2), rel=1e-4)
    # flat-face points alone give beta 1
    flat = certify_condition_B(HalfSpace([0.0, 1.0], 0.0), 0.1, samples=40)
    assert flat.beta == pytest.approx(1.0, abs=1e-9)


def test_condition_B_ball_complement():
    cert = certify_condition_B(BC, 0.5, samples=200)
    assert cert.status == "certified"
    assert 1.0 <= cert.beta < 1.5


def test_choose_delta_largest_candidate():
    cert = choose_delta(HS, candidates=(0.25, 1.0, 0.5), samples=20)
    assert cert.delta == 1.0 and cert.status == "certified"


def test_beta_from_alpha():
    assert beta_from_alpha(0.0) == 1.0
    assert beta_from_alpha(0.6) == pytest.approx(1.25, abs=1e-12)
    assert beta_from_alpha(0.8) == pytest.approx(5 / 3, abs=1e-12)
    with pytest.raises(ValueError):
        beta_from_alpha(1.0)


@pytest.mark.parametrize("R0,R,beta", [(2.0, 2.0, math.sqrt(5)), (1.0, 1.0, math.sqrt(5)),
                                       (2.0, 10.0, math.sqrt(101))])
def test_truncate_constants(R0, R, beta):
    trunc, delta, b = truncate(Box([-20.0, -20.0], [20.0, 20.0]), [0.0, 0.0], R, R0)
    assert delta == R0 / 2
    assert b == pytest.approx(beta, abs=1e-12)
    assert isinstance(trunc, TruncatedDomain)


def test_truncate_errors():
    with pytest.raises(ValueError):
        truncate(ORTHANT, [1.0, 1.0], 6.0, 2.0)
    with pytest.raises(ValueError):
        truncate(ORTHANT, [2.0, 2.0], 1.0, 2.0)
    with pytest.raises(UnsupportedOperationError):
        truncate(BC, [3.0, 0.0], 2.0, 1.0)


def test_cone_certificate_implies_B():
    trunc, delta, beta = truncate(ORTHANT, [2.0, 2.0], 6.0, 2.0)
    cert = cone_certificate(trunc)
    assert cert.status == "certified"
    assert cert.beta == pytest.approx(beta_from_alpha(cert.alpha), abs=1e-12)
    assert cert.beta == pytest.approx(math.sqrt(37), abs=1e-12)
    # the same (delta, l_x) data pass the direct check with beta from alpha
    assert check_directions(trunc, delta, cert.points, cert.directions) >= 1 / cert.beta - 1e-9


def test_truncated_orthant_numeric_certificate():
    trunc, delta, beta = truncate(ORTHANT, [2.0, 2.0], 6.0, 2.0)
    cert = certify_condition_B(trunc, delta, samples=200)
    assert cert.status == "certified"
    assert cert.beta <= math.sqrt(37) + 1e-6
