import numpy as np
import pytest

from cgowave.cauchy import angle_count, cauchy_phase, dbar_residual, phase_at, phase_decay
from cgowave.fields import make_mollifier, mollify, synth_potential, zero_potential
from cgowave.geometry import build_frame, build_grid


@pytest.fixture(scope="module")
def frame(disk):
    return build_frame((1.0, 0.0), (0.0, 0.5), 4.0, disk.R)


@pytest.fixture(scope="module")
def A(coarse_grid):
    return synth_potential("gaussian-bump", coarse_grid, radius=0.6, amplitude=(0.3, 0.2, 0.1))


@pytest.fixture(scope="module")
def A_rho(A):
    return mollify(A, make_mollifier(8))


@pytest.fixture(scope="module")
def phases(A_rho, frame):
    return cauchy_phase(A_rho, frame, 1, rho=8), cauchy_phase(A_rho, frame, -1, rho=8)


def test_zero_field_gives_zero_phase(coarse_grid, frame):
    Z = zero_potential(coarse_grid)
    P = cauchy_phase(Z, frame, 1, rho=8)
    assert np.all(P.values == 0)
    r = dbar_residual(P, Z)
    assert r["mollified_sup"] == 0 and r["exact_sup"] == 0


def test_field_along_third_direction_gives_zero_phase(coarse_grid, frame):
    e3 = np.cross(frame.theta3, frame.eta)
    B = synth_potential("gaussian-bump", coarse_grid, radius=0.6, amplitude=tuple(e3))
    P = cauchy_phase(B, frame, 1, rho=8)
    assert np.max(np.abs(P.values)) < 1e-15


def test_phase_is_linear_in_the_field(A_rho, frame, phases):
    pts = np.array([[0.1, -0.2, 0.05], [0.5, 0.3, -0.4], [-0.7, 0.0, 0.2]])
    P = phases[0]
    twice = phase_at(A_rho.scaled(2.0), frame, 1, pts, dr=P.dr, n_phi=P.n_phi, window=P.window)
    once = P.evaluate(pts)
    assert np.max(np.abs(twice - 2 * once)) <= 1e-12 * np.max(np.abs(once))


def test_opposite_signs_are_conjugate_negatives(phases):
    P1, P2 = phases
    assert np.max(np.abs(np.conj(P2.values) + P1.values)) < 1e-12
    assert np.max(np.abs(P1.amplitude() * np.conj(P2.amplitude()) - 1)) < 1e-10


def test_phase_sup_frozen(phases):
    assert np.max(np.abs(phases[0].values)) == pytest.approx(0.029370032623880202, rel=1e-6)


def test_mollified_residual_smaller_than_exact(A, phases):
    r = dbar_residual(phases[0], A)
    assert r["mollified_l2"] < 0.1 * r["exact_l2"]
    assert r["exact_l2"] <= 2 * r["mollification_error"]


def test_phase_decay_slope(A_rho, frame):
    slope, status = phase_decay(A_rho, frame)
    assert status == "ok"
    assert slope <= -0.9


def test_phase_decay_zero_field(coarse_grid, frame):
    slope, status = phase_decay(zero_potential(coarse_grid), frame)
    assert status == "zero field" and np.isnan(slope)


def test_phase_decay_rejects_small_window(A_rho, frame):
    with pytest.raises(ValueError, match="window too small"):
        phase_decay(A_rho, frame, window=2 * frame.R1)


def test_window_smaller_than_R1_rejected(A_rho, frame):
    with pytest.raises(ValueError, match="R1"):
        phase_at(A_rho, frame, 1, np.zeros((1, 3)), window=0.5 * frame.R1)


def test_bad_sign_rejected(A_rho, frame):
    with pytest.raises(ValueError):
        phase_at(A_rho, frame, 0, np.zeros((1, 3)))


def test_angle_count_even_and_resolving():
    n = angle_count(0.01, 1.0)
    assert n % 2 == 0 and n >= 2 * np.pi / 0.01
    assert angle_count(1.0, 0.1) == 64


def test_dbar_residual_first_order(disk, frame):
    res = []
    for h in (0.2, 0.1):
        g = build_grid(disk, h, h, 2.0, pad=0.3)
        B = synth_potential("gaussian-bump", g, radius=0.6, amplitude=(0.3, 0.2, 0.1))
        P = cauchy_phase(mollify(B, make_mollifier(4)), frame, 1, rho=4)
        res.append(dbar_residual(P, B)["mollified_l2"])
    assert res[0] / res[1] >= 2
