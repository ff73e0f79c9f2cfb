import numpy as np
import pytest

from cgowave.carleman import (
    CarlemanWeight,
    TestField,
    check_carleman_convexified,
    check_carleman_linear,
    check_carleman_negative,
    conjugated_apply,
    random_suite,
)
from cgowave.fields import ScalarField, laplacian, synth_potential
from cgowave.geometry import build_grid

RHO = 8.0
THETA = np.array([1.0, 0.0])


@pytest.fixture(scope="module")
def grid(disk):
    return build_grid(disk, 0.5 / RHO, 0.1, 0.5, pad=0.1)


@pytest.fixture(scope="module")
def suite(grid):
    return random_suite(grid, 4, RHO, seed=0, theta=THETA)


@pytest.fixture(scope="module")
def inner_suite(grid):
    return random_suite(grid, 4, RHO, seed=1, theta=THETA, boundary=False)


def test_weight_formula():
    w = CarlemanWeight(2.0, 10.0, np.array([0.6, 0.8]), -1)
    X, Y = np.array([1.0]), np.array([2.0])
    t = 0.6 + 1.6
    assert w(X, Y)[0] == pytest.approx(-10 * t - t * t)


def test_weight_rejects_bad_parameters():
    with pytest.raises(ValueError):
        CarlemanWeight(12.0, 10.0, THETA)
    with pytest.raises(ValueError):
        CarlemanWeight(2.0, 10.0, THETA, sign=0)


def test_conjugation_linear_weight_expansion(grid, suite):
    """s = 0, A = q = 0: P v = Delta v + 2 rho theta.grad v + rho^2 v up to O(h^2)."""
    v = suite[0].values
    h = grid.spacing
    Pv = conjugated_apply(v, None, None, 0.0, RHO, 1, THETA, grid)
    ref = laplacian(v, h) + 2 * RHO * (np.roll(v, -1, 0) - np.roll(v, 1, 0)) / (2 * h[0]) + RHO**2 * v
    inner = (slice(2, -2),) * 3
    err = np.max(np.abs(Pv - ref)[inner])
    assert err < 0.05 * np.max(np.abs(ref)[inner])


def test_zero_field_maps_to_zero(grid):
    v = np.zeros(grid.shape, dtype=complex)
    assert np.all(conjugated_apply(v, None, None, 7.0, RHO, 1, THETA, grid) == 0)


def test_potential_adds_q_times_v(grid, suite):
    v = suite[1].values
    q = ScalarField(np.full(grid.shape, 0.3 - 0.2j), grid)
    base = conjugated_apply(v, None, None, 7.0, RHO, 1, THETA, grid)
    with_q = conjugated_apply(v, None, q, 7.0, RHO, 1, THETA, grid)
    assert np.max(np.abs(with_q - base - q.values * v)) < 1e-9 * np.max(np.abs(base))


def test_overflow_guard(disk):
    g = build_grid(disk, 0.2, 0.2, 1.0, pad=0.2)
    v = np.ones(g.shape, dtype=complex)
    with pytest.raises(ValueError, match="weight overflow"):
        conjugated_apply(v, None, None, 0.0, 1000.0, 1, THETA, g)


def test_s_below_threshold_rejected(grid, suite):
    A = synth_potential("gaussian-bump", grid, radius=0.4, amplitude=(0.5, 0.0, 0.0))
    with pytest.raises(ValueError, match="48"):
        check_carleman_convexified(suite, A, None, 7.0, RHO, THETA)


def test_convexified_terms_nonnegative(suite):
    rep = check_carleman_convexified(suite, None, None, 7.0, RHO, THETA)
    for lt, rt in zip(rep.lhs_terms, rep.rhs_terms):
        assert all(v >= 0 for v in lt.values()) and all(v >= 0 for v in rt.values())
    assert np.isfinite(rep.fitted_C) and rep.fitted_C > 0
    assert np.all(rep.ratios <= rep.fitted_C)


def test_homogeneity(suite):
    scaled = [TestField(2 * v.values, v.grid) for v in suite]
    for check in (lambda s: check_carleman_linear(s, None, None, RHO, THETA),
                  lambda s: check_carleman_negative(s, None, None, RHO, THETA),
                  lambda s: check_carleman_convexified(s, None, None, 7.0, RHO, THETA)):
        a, b = check(suite), check(scaled)
        for la, lb in zip(a.lhs_terms, b.lhs_terms):
            for k in la:
                assert lb[k] == pytest.approx(4 * la[k], rel=1e-10, abs=1e-300)
        assert b.fitted_C == pytest.approx(a.fitted_C, rel=1e-10)


def test_theta_reversal_swaps_faces(suite):
    a = check_carleman_convexified(suite, None, None, 7.0, RHO, THETA, sign=1)
    b = check_carleman_convexified(suite, None, None, 7.0, RHO, -THETA, sign=-1)
    for la, ra, lb, rb in zip(a.lhs_terms, a.rhs_terms, b.lhs_terms, b.rhs_terms):
        # the weight is unchanged, and the face {theta.nu > 0} for +theta is {(-theta).nu < 0}
        assert lb["l2"] == pytest.approx(la["l2"], rel=1e-12)
        assert rb["equation"] == pytest.approx(ra["equation"], rel=1e-10)
        assert lb["boundary"] + rb["boundary"] == pytest.approx(la["boundary"] + ra["boundary"], rel=1e-12)


def test_interior_suite_has_no_boundary_terms(inner_suite):
    rep = check_carleman_linear(inner_suite, None, None, RHO, THETA)
    # cubic-spline trace sampling leaks only round-off-sized values from the interior
    for lt, rt in zip(rep.lhs_terms, rep.rhs_terms):
        assert lt["boundary"] <= 1e-9 * lt["l2"] and rt["boundary"] <= 1e-9 * lt["l2"]


def test_negative_estimate_zero_field(grid):
    rep = check_carleman_negative([TestField(np.zeros(grid.shape, complex), grid)], None, None, RHO, THETA)
    assert rep.fitted_C == 0


def test_negative_estimate_bounded_potential(grid, inner_suite):
    X, Y, Z = grid.coords()
    q = ScalarField(np.cos(3 * X) * np.exp(-Z**2) + 0j, grid)  # ||q||_inf <= 1
    c0 = check_carleman_negative(inner_suite, None, None, RHO, THETA).fitted_C
    cq = check_carleman_negative(inner_suite, None, q, RHO, THETA).fitted_C
    assert cq <= 2 * c0


def test_suite_is_deterministic(grid):
    a = random_suite(grid, 2, RHO, seed=5)
    b = random_suite(grid, 2, RHO, seed=5)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
