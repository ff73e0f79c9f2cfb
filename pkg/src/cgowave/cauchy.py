"""Phase correctors Phi by the plane-sliced Cauchy transform, and their checks.

For zeta = sigma*theta~ + i*eta,

    Phi(x) = (-i/2pi) int_0^{2pi} int_0^R e^{-i phi} f(x - sigma r cos(phi) theta~ - r sin(phi) eta) dr dphi,

with f = zeta . A_rho. This is the Cauchy transform in the plane spanned by
(theta~, eta) written in polar coordinates, which removes the 1/(s1 + i s2)
singularity. It solves zeta . grad(Phi) = -i f, so b = exp(Phi) satisfies
zeta . grad(b) + i (zeta . A_rho) b = 0.

The quadrature is a trapezoid rule on a fixed (r, phi) lattice. For each
evaluation point only the lattice cells whose samples can touch the support
of A_rho are visited; every skipped sample is exactly zero.
"""

from dataclasses import dataclass
import os

import numba
import numpy as np

from .fields import diff, l2_norm

if "CGOWAVE_JOBS" in os.environ:
    numba.set_num_threads(max(1, min(int(os.environ["CGOWAVE_JOBS"]), numba.config.NUMBA_NUM_THREADS)))


@numba.njit(cache=True, inline="always")
def _trilinear(fre, fim, ox, oy, oz, hx, hy, hz, px, py, pz):
    nx, ny, nz = fre.shape
    gx = (px - ox) / hx
    gy = (py - oy) / hy
    gz = (pz - oz) / hz
    i = int(np.floor(gx))
    j = int(np.floor(gy))
    k = int(np.floor(gz))
    if i < 0 or j < 0 or k < 0 or i >= nx - 1 or j >= ny - 1 or k >= nz - 1:
        return 0.0, 0.0
    tx = gx - i
    ty = gy - j
    tz = gz - k
    re = 0.0
    im = 0.0
    for di in range(2):
        wx = tx if di else 1.0 - tx
        for dj in range(2):
            wy = ty if dj else 1.0 - ty
            for dk in range(2):
                w = wx * wy * (tz if dk else 1.0 - tz)
                re += w * fre[i + di, j + dj, k + dk]
                im += w * fim[i + di, j + dj, k + dk]
    return re, im


@numba.njit(parallel=True, cache=True)
def _phase_kernel(fre, fim, origin, spacing, pts, e1, e2, e3, center, rs, dr, n_phi, rmax, out):
    dphi = 2.0 * np.pi / n_phi
    cphi = np.cos(dphi * np.arange(n_phi))
    sphi = np.sin(dphi * np.arange(n_phi))
    kcap = int(np.floor(rmax / dr))
    ox, oy, oz = origin[0], origin[1], origin[2]
    hx, hy, hz = spacing[0], spacing[1], spacing[2]
    for p in numba.prange(pts.shape[0]):
        x0, x1, x2 = pts[p, 0], pts[p, 1], pts[p, 2]
        d0, d1, d2 = center[0] - x0, center[1] - x1, center[2] - x2
        a3 = d0 * e3[0] + d1 * e3[1] + d2 * e3[2]
        if abs(a3) >= rs:
            out[p] = 0.0
            continue
        rpl = np.sqrt(rs * rs - a3 * a3)
        a1 = d0 * e1[0] + d1 * e1[1] + d2 * e1[2]
        a2 = d0 * e2[0] + d1 * e2[1] + d2 * e2[2]
        d = np.sqrt(a1 * a1 + a2 * a2)
        if d <= rpl:
            jlo = 0
            jhi = n_phi - 1
        else:
            alpha = np.arcsin(rpl / d)
            pc = np.arctan2(a2, a1)
            jlo = int(np.floor((pc - alpha) / dphi))
            jhi = int(np.ceil((pc + alpha) / dphi))
        acc_re = 0.0
        acc_im = 0.0
        for jj in range(jlo, jhi + 1):
            j = jj % n_phi
            # chord of the ray through the support disk (exact: zero elsewhere)
            t = a1 * cphi[j] + a2 * sphi[j]
            disc = rpl * rpl - d * d + t * t
            if disc <= 0.0:
                continue
            sq = np.sqrt(disc)
            kmin = max(int(np.floor((t - sq) / dr)), 0)
            kmax = min(int(np.ceil((t + sq) / dr)), kcap)
            if kmax < kmin:
                continue
            ux = cphi[j] * e1[0] + sphi[j] * e2[0]
            uy = cphi[j] * e1[1] + sphi[j] * e2[1]
            uz = cphi[j] * e1[2] + sphi[j] * e2[2]
            sre = 0.0
            sim = 0.0
            for k in range(kmin, kmax + 1):
                r = k * dr
                vr, vi = _trilinear(fre, fim, ox, oy, oz, hx, hy, hz, x0 + r * ux, x1 + r * uy, x2 + r * uz)
                w = 0.5 if k == 0 else 1.0
                sre += w * vr
                sim += w * vi
            # multiply by e^{-i phi}
            acc_re += cphi[j] * sre + sphi[j] * sim
            acc_im += cphi[j] * sim - sphi[j] * sre
        # times -i / (2 pi) * dphi * dr
        s = dphi * dr / (2.0 * np.pi)
        out[p] = complex(acc_im * s, -acc_re * s)


@dataclass(frozen=True)
class PhaseCorrector:
    """Phi sampled on the nodes of a grid (or at explicit points), with its provenance."""

    values: np.ndarray
    frame: object
    sigma: int
    rho: float
    A_rho: object
    dr: float
    n_phi: int
    window: float

    def amplitude(self):
        """b = exp(Phi)."""
        return np.exp(self.values)

    def evaluate(self, pts):
        """Phi at arbitrary points (N, 3) with the same quadrature lattice."""
        return phase_at(self.A_rho, self.frame, self.sigma, pts, dr=self.dr, n_phi=self.n_phi, window=self.window)


def _interp_slack(grid):
    return float(np.sqrt(2 * grid.hp**2 + grid.h3**2))


def default_dr(grid):
    return 0.5 * min(grid.hp, grid.h3)


def angle_count(dr, reach, n_angles=64):
    """Even number of angles: at least ``n_angles``, arc spacing <= dr at distance ``reach``.

    ``reach`` is normally the support radius, so arcs across the support are
    resolved at the radial step; an even count makes the sigma = -1 lattice
    the mirror image of the sigma = +1 lattice.
    """
    n = max(int(n_angles), int(np.ceil(2 * np.pi * reach / dr)))
    return n + (n % 2)


def _basis(frame, sigma):
    e1 = -sigma * frame.theta3
    e2 = -frame.eta
    e3 = np.cross(frame.theta3, frame.eta)
    return e1, e2, e3


def phase_at(A_rho, frame, sigma, pts, dr=None, n_phi=None, window=None, n_angles=64):
    """Evaluate Phi at points (N, 3)."""
    if sigma not in (1, -1):
        raise ValueError("sigma must be +1 or -1")
    grid = A_rho.grid
    window = frame.R1 if window is None else float(window)
    if window < frame.R1 * (1 - 1e-12):
        raise ValueError("frame R1 exceeds the quadrature window")
    dr = default_dr(grid) if dr is None else float(dr)
    pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 3))
    rs = A_rho.radius + _interp_slack(grid)
    if n_phi is None:
        n_phi = angle_count(dr, rs, n_angles)
    f = A_rho.dot(frame.zeta(sigma))
    out = np.zeros(len(pts), dtype=complex)
    if not np.any(f != 0) or len(pts) == 0:
        return out
    e1, e2, e3 = _basis(frame, sigma)
    origin = np.array([grid.x[0], grid.y[0], grid.z[0]])
    _phase_kernel(np.ascontiguousarray(f.real), np.ascontiguousarray(f.imag), origin, np.array(grid.spacing, dtype=float),
                  pts, e1, e2, e3, np.asarray(A_rho.center, dtype=float), rs, dr, int(n_phi), window, out)
    return out


def cauchy_phase(A_rho, frame, sigma, rho=None, dr=None, n_angles=64, window=None, z_range=None):
    """Phi on every box node of A_rho.grid (optionally only where |x3 - c3| <= z_range)."""
    grid = A_rho.grid
    X, Y, Z = grid.coords()
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    dr = default_dr(grid) if dr is None else float(dr)
    window = frame.R1 if window is None else float(window)
    n_phi = angle_count(dr, A_rho.radius + _interp_slack(grid), n_angles)
    sel = np.ones(len(pts), dtype=bool)
    if z_range is not None:
        sel = np.abs(pts[:, 2] - A_rho.center[2]) <= z_range
    vals = np.zeros(len(pts), dtype=complex)
    vals[sel] = phase_at(A_rho, frame, sigma, pts[sel], dr=dr, n_phi=n_phi, window=window)
    return PhaseCorrector(vals.reshape(grid.shape), frame, sigma, rho, A_rho, dr, n_phi, window)


def _zeta_grad(b, zeta, spacing):
    return sum(zeta[k] * diff(b, k, spacing[k]) for k in range(3))


def _interior(shape, width=1):
    m = np.zeros(shape, dtype=bool)
    m[width:-width, width:-width, width:-width] = True
    return m


def dbar_residual(Phi, A, frame=None, sigma=None):
    """Residuals of zeta . grad(b) + i (zeta . A) b for b = exp(Phi).

    Returns a dict with the residual against the mollified potential (the
    transport equation Phi was built for), the residual against the exact
    potential A, and ||A - A_rho||_{L2}. Both residuals use centered
    differences and are measured on box nodes away from the box faces.
    """
    frame = Phi.frame if frame is None else frame
    sigma = Phi.sigma if sigma is None else sigma
    grid = A.grid
    zeta = frame.zeta(sigma)
    b = Phi.amplitude()
    zb = _zeta_grad(b, zeta, grid.spacing)
    r_moll = zb + 1j * Phi.A_rho.dot(zeta) * b
    r_exact = zb + 1j * A.dot(zeta) * b
    inner = _interior(grid.shape)
    r_moll = np.where(inner, r_moll, 0)
    r_exact = np.where(inner, r_exact, 0)
    return dict(
        mollified_sup=float(np.max(np.abs(r_moll))),
        mollified_l2=l2_norm(r_moll, grid),
        exact_sup=float(np.max(np.abs(r_exact))),
        exact_l2=l2_norm(r_exact, grid),
        mollification_error=l2_norm(A.values - Phi.A_rho.values, grid),
    )


def phase_decay(A_rho, frame, sigma=1, n_rays=16, n_radii=12, window=None, dr=None):
    """Least-squares slope of log|Phi| against log|x''| for |x''| in [2 R1, 4 R1].

    x'' is the coordinate in the (theta~, eta) plane through the support
    center; |Phi| is averaged over ``n_rays`` directions at each radius.
    Returns (slope, status) with status "ok", "zero field" or "zero phase"
    (the quadrature saw no support, as on grids too coarse for the mollifier).
    """
    R1 = frame.R1
    rs = A_rho.radius + _interp_slack(A_rho.grid)
    window = 4 * R1 + 2 * rs if window is None else float(window)
    if window < 4 * R1 + rs:
        raise ValueError("window too small: must reach 4 R1 beyond the support")
    if not np.any(A_rho.dot(frame.zeta(sigma)) != 0):
        return float("nan"), "zero field"
    radii = np.geomspace(2 * R1, 4 * R1, n_radii)
    psi = 2 * np.pi * (np.arange(n_rays) + 0.5) / n_rays
    dirs = np.cos(psi)[:, None] * frame.theta3 + np.sin(psi)[:, None] * frame.eta
    pts = A_rho.center + (radii[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    vals = phase_at(A_rho, frame, sigma, pts, dr=dr, window=window).reshape(n_radii, n_rays)
    mag = np.mean(np.abs(vals), axis=1)
    if np.any(mag == 0):
        return float("nan"), "zero phase"
    slope = np.polyfit(np.log(radii), np.log(mag), 1)[0]
    return float(slope), "ok"
