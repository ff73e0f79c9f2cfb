import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgowave.geometry import (
    boundary_band,
    boundary_partition,
    build_cross_section,
    build_frame,
    build_grid,
    perpendicular,
    write_boundary_csv,
)


def test_disk_normals_are_outward_unit(disk):
    assert np.allclose(np.linalg.norm(disk.normals, axis=1), 1.0)
    assert np.all(np.sum(disk.normals * disk.midpoints, axis=1) > 0)
    assert disk.R == pytest.approx(1.0)


def test_square_contains_and_distance():
    sq = build_cross_section({"polygon": [[-1, -1], [1, -1], [1, 1], [-1, 1]]})
    pts = np.array([[0.0, 0.0], [0.9, 0.5], [1.5, 0.0]])
    assert list(sq.contains(pts)) == [True, True, False]
    assert sq.distance_to_boundary(pts[:1])[0] == pytest.approx(1.0)


def test_self_intersecting_polygon_rejected():
    with pytest.raises(ValueError, match="self-intersecting polygon: segments 0 and 2 cross"):
        build_cross_section({"polygon": [[0, 0], [1, 1], [1, 0], [0, 1]]})


def test_clockwise_polygon_rejected():
    with pytest.raises(ValueError, match="positively oriented"):
        build_cross_section({"polygon": [[0, 0], [0, 1], [1, 1], [1, 0]]})


def test_grid_snaps_axial_spacing(disk):
    g = build_grid(disk, 0.1, 0.3, 1.0, pad=0.2)
    assert g.z[0] == pytest.approx(-1.0) and g.z[-1] == pytest.approx(1.0)
    assert np.any(np.isclose(g.z, 0.0))
    assert g.h3 == pytest.approx(1.0 / 3)


def test_grid_too_coarse_rejected(disk):
    with pytest.raises(ValueError, match="grid too coarse"):
        build_grid(disk, 0.6, 0.1, 1.0, pad=0.1)


def test_boundary_weights_integrate_lateral_area(disk):
    g = build_grid(disk, 0.2, 0.25, 1.0, pad=0.2)
    area = g.boundary_weights().sum()
    assert area == pytest.approx(disk.lengths.sum() * 2.0)
    assert g.boundary_nodes().shape == (disk.n_segments * len(g.z), 3)


def test_frame_spot_value():
    fr = build_frame((1.0, 0.0), (0.0, 1.0), 1.0, 1.0)
    assert np.allclose(fr.eta, [0.0, 1 / np.sqrt(2), -1 / np.sqrt(2)], atol=1e-15)
    z = fr.zeta(1)
    assert abs(z @ z) < 1e-15


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0, 2 * np.pi), r=st.floats(0.05, 20), s=st.sampled_from([-1.0, 1.0]),
       x3=st.floats(0.05, 20), s3=st.sampled_from([-1.0, 1.0]))
def test_frame_orthogonality(a, r, s, x3, s3):
    th = np.array([np.cos(a), np.sin(a)])
    fr = build_frame(th, s * r * perpendicular(th), s3 * x3, 1.0)
    assert abs(fr.eta @ fr.xi) < 1e-12 * max(1, np.linalg.norm(fr.xi))
    assert abs(fr.theta3 @ fr.xi) < 1e-12 * max(1, np.linalg.norm(fr.xi))
    assert abs(fr.theta3 @ fr.eta) < 1e-12
    assert abs(np.linalg.norm(fr.eta) - 1) < 1e-12


@pytest.mark.parametrize("args, msg", [
    (((1.0, 0.1), (0.0, 1.0), 1.0), "unit vector"),
    (((1.0, 0.0), (0.0, 1.0), 0.0), "xi3"),
    (((1.0, 0.0), (0.0, 0.0), 1.0), "nonzero"),
    (((1.0, 0.0), (1.0, 1.0), 1.0), "orthogonal"),
])
def test_frame_rejects_inadmissible(args, msg):
    with pytest.raises(ValueError, match=msg):
        build_frame(*args, 1.0)


def test_frame_r1_formula():
    fr = build_frame((1.0, 0.0), (0.0, 2.0), 1.0, 1.5)
    assert fr.R1 == pytest.approx(2 * np.sqrt(2) * (3.5 + 3.5 / 2))


def test_partition_covers_boundary(disk):
    illum, shadow = boundary_partition(disk, (1.0, 0.0), 0.2)
    assert len(illum) + len(shadow) == disk.n_segments
    assert np.all(disk.normals[illum] @ np.array([1.0, 0.0]) > 0.2)
    with pytest.raises(ValueError):
        boundary_partition(disk, (1.0, 0.0), 1.0)


def test_band_rejects_beyond_truncation(disk):
    g = build_grid(disk, 0.2, 0.25, 1.0, pad=0.2)
    assert len(boundary_band(g, 0.5)) == disk.n_segments * 5
    with pytest.raises(ValueError, match="band exceeds truncation"):
        boundary_band(g, 1.5)


def test_boundary_csv(disk, tmp_path):
    p = tmp_path / "b.csv"
    write_boundary_csv(p, disk, [0, 1])
    rows = p.read_text().splitlines()
    assert rows[0] == "segment,cx,cy,nx,ny" and len(rows) == 3
