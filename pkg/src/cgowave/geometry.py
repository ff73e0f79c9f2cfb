"""Cross-section and cylinder geometry, direction frames and boundary subsets.

The cross-section omega is a closed polyline. The cylinder omega x [-L, L] is
sampled on a rectilinear box grid whose transverse nodes are masked by the
inside predicate; fields live on the full box and are extended by zero.
Boundary "nodes" are segment midpoints of the polyline times axial nodes.
"""

from dataclasses import dataclass, field
import csv

import numpy as np


@dataclass(frozen=True)
class CrossSection:
    """Closed, simple, positively oriented polyline bounding omega."""

    vertices: np.ndarray  # (M, 2)
    normals: np.ndarray  # (M, 2) outward unit normal of segment k = (v_k, v_{k+1})
    midpoints: np.ndarray  # (M, 2)
    lengths: np.ndarray  # (M,)
    R: float

    @property
    def n_segments(self):
        return len(self.vertices)

    def contains(self, pts):
        """Inside predicate (even-odd crossing rule), vectorized over (..., 2)."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        inside = np.zeros(x.shape, dtype=bool)
        v0 = self.vertices
        v1 = np.roll(self.vertices, -1, axis=0)
        for (ax, ay), (bx, by) in zip(v0, v1):
            crosses = (ay > y) != (by > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = ax + (y - ay) * (bx - ax) / (by - ay)
            inside ^= crosses & (x < xint)
        return inside

    def distance_to_boundary(self, pts):
        """Euclidean distance from points (..., 2) to the polyline."""
        pts = np.asarray(pts, dtype=float)[..., None, :]
        a = self.vertices
        d = np.roll(self.vertices, -1, axis=0) - a
        t = np.clip(np.sum((pts - a) * d, axis=-1) / np.sum(d * d, axis=-1), 0.0, 1.0)
        proj = a + t[..., None] * d
        return np.min(np.linalg.norm(pts - proj, axis=-1), axis=-1)

    def winding_number(self, point):
        ang = np.arctan2(self.vertices[:, 1] - point[1], self.vertices[:, 0] - point[0])
        dang = np.diff(np.append(ang, ang[0]))
        dang = (dang + np.pi) % (2 * np.pi) - np.pi
        return int(round(np.sum(dang) / (2 * np.pi)))


def _segments_intersect(p1, p2, p3, p4):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _check_simple(vertices):
    m = len(vertices)
    for i in range(m):
        a, b = vertices[i], vertices[(i + 1) % m]
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue
            c, d = vertices[j], vertices[(j + 1) % m]
            if _segments_intersect(a, b, c, d):
                raise ValueError(f"self-intersecting polygon: segments {i} and {j} cross")


def build_cross_section(spec):
    """Build a CrossSection from {"disk": radius, "segments": M} or {"polygon": vertices}."""
    if "disk" in spec:
        radius = float(spec["disk"])
        if radius <= 0:
            raise ValueError("disk radius must be positive")
        m = int(spec.get("segments", 64))
        t = 2 * np.pi * np.arange(m) / m
        vertices = radius * np.column_stack([np.cos(t), np.sin(t)])
    elif "polygon" in spec:
        vertices = np.asarray(spec["polygon"], dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or len(vertices) < 3:
            raise ValueError("polygon needs at least three 2-D vertices")
        if np.allclose(vertices[0], vertices[-1]):
            vertices = vertices[:-1]
    else:
        raise ValueError("cross-section spec needs 'disk' or 'polygon'")

    _check_simple(vertices)
    nxt = np.roll(vertices, -1, axis=0)
    area = 0.5 * np.sum(vertices[:, 0] * nxt[:, 1] - nxt[:, 0] * vertices[:, 1])
    if area <= 0:
        raise ValueError("polygon must be positively oriented (counter-clockwise)")
    d = nxt - vertices
    lengths = np.linalg.norm(d, axis=1)
    if np.any(lengths == 0):
        raise ValueError("polygon has repeated vertices")
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
    cs = CrossSection(
        vertices=vertices,
        normals=normals,
        midpoints=0.5 * (vertices + nxt),
        lengths=lengths,
        R=float(np.max(np.linalg.norm(vertices, axis=1))),
    )
    centroid = vertices.mean(axis=0)
    probe = centroid if cs.contains(centroid) else cs.midpoints[0] - 1e-6 * normals[0]
    if cs.winding_number(probe) != 1:
        raise ValueError("polyline does not enclose a simply connected region")
    return cs


@dataclass(frozen=True)
class CylinderGrid:
    """Box grid covering omega x [-L, L], with a transverse mask for omega.

    Transverse nodes are h' * k for |k| <= K, so the box extends ``pad``
    beyond the bounding radius. Axial nodes are symmetric about 0 and include
    it. Arrays of field values have shape (nx, ny, nz).
    """

    cs: CrossSection
    hp: float
    h3: float
    L: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    mask2d: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return (len(self.x), len(self.y), len(self.z))

    @property
    def spacing(self):
        return (self.hp, self.hp, self.h3)

    @property
    def cell_volume(self):
        return self.hp * self.hp * self.h3

    @property
    def mask(self):
        return np.broadcast_to(self.mask2d[:, :, None], self.shape)

    @property
    def n_nodes(self):
        return int(self.mask2d.sum()) * len(self.z)

    def coords(self):
        """Coordinate arrays X, Y, Z of the full box, each of shape ``self.shape``."""
        return np.meshgrid(self.x, self.y, self.z, indexing="ij")

    def nodes(self):
        """Ordered list (N, 3) of nodes in omega x [-L, L], node-major in (x, y, z)."""
        X, Y, Z = self.coords()
        m = self.mask
        return np.column_stack([X[m], Y[m], Z[m]])

    def boundary_nodes(self):
        """Boundary sample points (n_seg * nz, 3), segment-major then axial."""
        mid = self.cs.midpoints
        nz = len(self.z)
        pts = np.empty((len(mid), nz, 3))
        pts[:, :, :2] = mid[:, None, :]
        pts[:, :, 2] = self.z[None, :]
        return pts.reshape(-1, 3)

    def boundary_normals(self):
        nz = len(self.z)
        nrm = np.zeros((self.cs.n_segments, nz, 3))
        nrm[:, :, :2] = self.cs.normals[:, None, :]
        return nrm.reshape(-1, 3)

    def boundary_weights(self):
        """Segment-length times axial trapezoid weights for boundary integrals."""
        wz = np.full(len(self.z), self.h3)
        wz[[0, -1]] *= 0.5
        return (self.cs.lengths[:, None] * wz[None, :]).ravel()


def build_grid(cs, hp, h3, L, pad=None):
    """Sample omega x [-L, L]; ``pad`` (default 1) widens the transverse box.

    h3 is adjusted to L / round(L / h3) so the axial nodes include -L, 0, L.
    """
    if hp <= 0 or h3 <= 0 or L <= 0:
        raise ValueError("spacings and half-length must be positive")
    pad = 1.0 if pad is None else float(pad)
    K = int(np.ceil((cs.R + pad) / hp))
    x = hp * np.arange(-K, K + 1)
    # snap h3 so that the axial nodes land exactly on -L, 0 and L
    nz_half = max(int(round(L / h3)), 1)
    h3 = L / nz_half
    z = h3 * np.arange(-nz_half, nz_half + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    mask2d = cs.contains(np.stack([X, Y], axis=-1))
    across = max(mask2d.any(axis=1).sum(), 0), max(mask2d.any(axis=0).sum(), 0)
    if min(across) < 5 or len(z) < 5:
        raise ValueError("grid too coarse: fewer than 5 nodes across a dimension")
    return CylinderGrid(cs=cs, hp=float(hp), h3=float(h3), L=float(L), x=x, y=x.copy(), z=z, mask2d=mask2d)


@dataclass(frozen=True)
class DirectionFrame:
    """The triple (theta, eta, xi) with eta . xi = theta~ . xi = theta~ . eta = 0."""

    theta: np.ndarray  # (2,)
    xi_p: np.ndarray  # (2,)
    xi3: float
    xi: np.ndarray  # (3,)
    eta: np.ndarray  # (3,)
    theta3: np.ndarray  # (3,) = (theta, 0)
    R1: float

    def zeta(self, sigma=1):
        """Complex direction sigma*theta~ + i*eta, which satisfies zeta . zeta = 0."""
        return sigma * self.theta3 + 1j * self.eta


def build_frame(theta, xi_p, xi3, R):
    theta = np.asarray(theta, dtype=float)
    xi_p = np.asarray(xi_p, dtype=float)
    xi3 = float(xi3)
    if abs(np.linalg.norm(theta) - 1.0) > 1e-8:
        raise ValueError("theta must be a unit vector")
    theta = theta / np.linalg.norm(theta)
    if xi3 == 0.0:
        raise ValueError("xi3 must be nonzero")
    nxi = np.linalg.norm(xi_p)
    if nxi == 0.0:
        raise ValueError("xi' must be nonzero")
    if abs(xi_p @ theta) > 1e-8 * nxi:
        raise ValueError("xi' must be orthogonal to theta")
    # remove round-off so the orthogonality relations hold to machine precision
    xi_p = xi_p - (xi_p @ theta) * theta
    n2 = xi_p @ xi_p
    eta = np.array([xi_p[0], xi_p[1], -n2 / xi3]) / np.sqrt(n2 + n2 * n2 / xi3**2)
    nxi = np.sqrt(n2)
    R1 = 2 * np.sqrt(2) * (R + 2 + (R + 2) / nxi)
    return DirectionFrame(
        theta=theta,
        xi_p=xi_p,
        xi3=xi3,
        xi=np.array([xi_p[0], xi_p[1], xi3]),
        eta=eta,
        theta3=np.array([theta[0], theta[1], 0.0]),
        R1=float(R1),
    )


def perpendicular(theta):
    """Unit vector obtained by rotating theta by +90 degrees."""
    return np.array([-theta[1], theta[0]])


def boundary_partition(cs, theta, eps):
    """Split segment indices into illuminated {nu.theta > eps} and shadowed {nu.theta <= eps}."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    dots = cs.normals @ np.asarray(theta, dtype=float)
    idx = np.arange(cs.n_segments)
    return idx[dots > eps], idx[dots <= eps]


def boundary_band(grid, r):
    """Indices into ``grid.boundary_nodes()`` with |x3| <= r."""
    if r <= 0:
        raise ValueError("band radius must be positive")
    if r > grid.L * (1 + 1e-12):
        raise ValueError("band exceeds truncation: r > L")
    z = grid.boundary_nodes()[:, 2]
    return np.nonzero(np.abs(z) <= r + 1e-12 * grid.L)[0]


def write_boundary_csv(path, cs, indices=None):
    """Export boundary segments (index, center point, normal) as CSV."""
    indices = np.arange(cs.n_segments) if indices is None else np.asarray(indices)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "cx", "cy", "nx", "ny"])
        for k in indices:
            w.writerow([int(k), repr(float(cs.midpoints[k, 0])), repr(float(cs.midpoints[k, 1])),
                        repr(float(cs.normals[k, 0])), repr(float(cs.normals[k, 1]))])
