"""CGO solutions u = e^{sigma rho theta.x'} (psi b e^{i rho eta.x - i kappa.x} + w).

kappa = xi for sigma = +1 and kappa = 0 for sigma = -1. The remainder w solves
the conjugated equation P w = e^{i rho eta.x} F with

    P = e^{-sigma rho theta.x'} (Delta_A + q) e^{sigma rho theta.x'},
    Delta_A = Delta + 2i A.grad + i div A - |A|^2,

discretized with centered differences in which the exponential weight is
carried exactly by the stencil coefficients. The system is solved in the
minimum-norm damped least-squares sense: equations sit at nodes of omega
strictly inside the axial range, unknowns are those nodes plus one stencil
layer around them, and w = 0 on the two axial end planes.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import lsqr

from .cauchy import cauchy_phase
from .fields import diff, divergence, interpolate, l2_norm, laplacian, make_mollifier, mollify


class SolverError(RuntimeError):
    """Raised when the remainder solve does not reach its residual target."""


# ---------------------------------------------------------------------------
# axial cutoff


def _f(u):
    out = np.zeros_like(u)
    m = u > 1e-3  # exp(-1/u) underflows to 0 below this
    out[m] = np.exp(-1.0 / u[m])
    return out


def _f1(u):
    out = np.zeros_like(u)
    m = u > 1e-3  # exp(-1/u) underflows to 0 below this
    out[m] = np.exp(-1.0 / u[m]) / u[m] ** 2
    return out


def _f2(u):
    out = np.zeros_like(u)
    m = u > 1e-3  # exp(-1/u) underflows to 0 below this
    um = u[m]
    out[m] = np.exp(-1.0 / um) * (1.0 / um**4 - 2.0 / um**3)
    return out


def smooth_step(u):
    """C-infinity step S(u): 0 for u <= 0, 1 for u >= 1, with first two derivatives."""
    u = np.asarray(u, dtype=float)
    g, k = _f(u), _f(1 - u)
    g1, k1 = _f1(u), -_f1(1 - u)
    g2, k2 = _f2(u), _f2(1 - u)
    D = g + k
    D1 = g1 + k1
    D2 = g2 + k2
    S = g / D
    num1 = g1 * D - g * D1
    S1 = num1 / D**2
    S2 = (g2 * D - g * D2) / D**2 - 2 * D1 * num1 / D**3
    return S, S1, S2


@dataclass(frozen=True)
class AxialCutoff:
    """psi(t) = 1 for |t| <= plateau, 0 for |t| >= support, smooth in between.

    The CGO uses psi(rho^{-1/4} x3).
    """

    plateau: float = 1.0
    support: float = 2.0

    def profile(self, t):
        """psi, psi', psi'' at t (derivatives in t)."""
        t = np.asarray(t, dtype=float)
        w = self.support - self.plateau
        u = (np.abs(t) - self.plateau) / w
        S, S1, S2 = smooth_step(u)
        sgn = np.sign(t)
        return 1.0 - S, -S1 * sgn / w, -S2 / w**2

    def scaled(self, x3, rho):
        """psi(rho^{-1/4} x3) and its first two x3-derivatives."""
        s = rho ** (-0.25)
        p, p1, p2 = self.profile(s * np.asarray(x3, dtype=float))
        return p, s * p1, s * s * p2


# ---------------------------------------------------------------------------
# principal part and source


def _kappa(frame, sigma):
    return frame.xi if sigma == 1 else np.zeros(3)


def _phase(grid, frame, rho, sigma):
    X, Y, Z = grid.coords()
    k = rho * frame.eta - _kappa(frame, sigma)
    return np.exp(1j * (k[0] * X + k[1] * Y + k[2] * Z))


def weight_exponent(grid, frame, rho, sigma):
    X, Y, _ = grid.coords()
    return sigma * rho * (frame.theta[0] * X + frame.theta[1] * Y)


def amplitude_on_grid(Phi, grid):
    """b = exp(Phi) on ``grid``; Phi is resampled (cubic) when it lives on another grid."""
    if Phi.A_rho.grid is grid:
        return np.exp(Phi.values)
    src = Phi.A_rho.grid
    X, Y, Z = grid.coords()
    coords = np.stack([(X - src.x[0]) / src.hp, (Y - src.y[0]) / src.hp, (Z - src.z[0]) / src.h3])
    kw = dict(order=3, mode="nearest")
    vals = ndimage.map_coordinates(Phi.values.real, coords, **kw) + 1j * ndimage.map_coordinates(Phi.values.imag, coords, **kw)
    return np.exp(vals)


def _check_phase(Phi, frame, sigma):
    if Phi.sigma != sigma or Phi.frame is not frame and not (
        np.allclose(Phi.frame.eta, frame.eta) and np.allclose(Phi.frame.theta, frame.theta) and np.allclose(Phi.frame.xi, frame.xi)
    ):
        raise ValueError("phase corrector built for a different frame or sign")


def assemble_principal(frame, rho, Phi, psi, sigma, grid=None, weighted=True):
    """e^{sigma rho theta.x'} psi(rho^{-1/4} x3) b e^{i rho eta.x - i kappa.x} on the grid box.

    With ``weighted=False`` the exponential weight is left out.
    """
    _check_phase(Phi, frame, sigma)
    grid = Phi.A_rho.grid if grid is None else grid
    _, _, Z = grid.coords()
    p, _, _ = psi.scaled(Z, rho)
    out = p * amplitude_on_grid(Phi, grid) * _phase(grid, frame, rho, sigma)
    if weighted:
        out = out * np.exp(weight_exponent(grid, frame, rho, sigma))
    return out


def cgo_source(frame, rho, A, q, Phi, psi, sigma=1, parts=False):
    """Source F with P w = e^{i rho eta.x} F, from -P applied to the principal part.

    With g = psi b e^{-i kappa.x} and zeta = sigma theta~ + i eta (zeta.zeta = 0),

        F = -[Delta g + 2 i A.grad g + (i div A - |A|^2 + q) g]
            - 2 rho [i eta3 psi_3 b + psi (zeta.grad b + i (zeta.A) b)] e^{-i kappa.x},

    where psi_3 is the x3-derivative of psi(rho^{-1/4} x3). Derivatives of b
    and div A are centered differences; derivatives of psi and of the plane
    wave are exact. ``parts=True`` also returns the transport term
    2 rho psi (zeta.grad b + i zeta.A b) e^{-i kappa.x} separately.
    """
    _check_phase(Phi, frame, sigma)
    grid = A.grid
    h = grid.spacing
    X, Y, Z = grid.coords()
    kap = _kappa(frame, sigma)
    zeta = frame.zeta(sigma)
    e = np.exp(-1j * (kap[0] * X + kap[1] * Y + kap[2] * Z))
    p0, p1, p2 = psi.scaled(Z, rho)
    b = amplitude_on_grid(Phi, grid)
    gb = [diff(b, k, h[k]) for k in range(3)]
    lb = laplacian(b, h)
    Av = A.values
    kdotgb = sum(kap[k] * gb[k] for k in range(3))
    lap_g = (p2 * b + 2 * p1 * gb[2] + p0 * lb - 2j * kap[2] * p1 * b - 2j * p0 * kdotgb - (kap @ kap) * p0 * b) * e
    Adotgb = sum(Av[k] * gb[k] for k in range(3))
    Adotk = sum(Av[k] * kap[k] for k in range(3))
    A_grad_g = (Av[2] * p1 * b + p0 * Adotgb - 1j * p0 * Adotk * b) * e
    zero_order = (1j * divergence(Av, h) - np.sum(Av * Av, axis=0) + q.values) * p0 * b * e
    transport = sum(zeta[k] * gb[k] for k in range(3)) + 1j * A.dot(zeta) * b
    transport_term = 2 * rho * p0 * transport * e
    F = -(lap_g + 2j * A_grad_g + zero_order) - 2 * rho * 1j * frame.eta[2] * p1 * b * e - transport_term
    if parts:
        return F, transport_term
    return F


# ---------------------------------------------------------------------------
# remainder solve


@dataclass
class ConjugatedSystem:
    """Sparse discrete conjugated operator between node sets of a grid."""

    matrix: sp.csr_matrix
    eq_mask: np.ndarray
    unk_mask: np.ndarray
    unk_index: np.ndarray = field(repr=False)


def node_sets(grid):
    """Equation nodes (omega nodes with |x3| < L) and unknown nodes (plus one layer, not on end planes)."""
    eq = np.zeros(grid.shape, dtype=bool)
    eq[:, :, 1:-1] = grid.mask2d[:, :, None]
    unk = eq.copy()
    for ax in range(3):
        for s in (1, -1):
            unk |= np.roll(eq, s, axis=ax)
    unk[:, :, [0, -1]] = False
    if eq[[0, -1], :, :].any() or eq[:, [0, -1], :].any():
        raise ValueError("cross-section touches the box edge; increase pad")
    return eq, unk


def conjugated_matrix(grid, A, q, rho, sigma, theta, eq=None, unk=None):
    """Matrix of e^{-phi}(Delta + 2iA.grad + i div A - |A|^2 + q)e^{phi}, phi = sigma rho theta.x'.

    Rows are ``eq`` nodes, columns ``unk`` nodes; neighbours outside ``unk``
    are fixed to zero.
    """
    if eq is None:
        eq, unk = node_sets(grid)
    h = grid.spacing
    idx = -np.ones(grid.shape, dtype=np.int64)
    idx[unk] = np.arange(int(unk.sum()))
    eqi = np.argwhere(eq)
    n = len(eqi)
    rows = np.arange(n)
    Av = A.values[:, eq]
    zero = 1j * divergence(A.values, h)[eq] - np.sum(Av * Av, axis=0)
    if q is not None:
        zero = zero + q.values[eq]
    grad_w = np.array([sigma * rho * theta[0], sigma * rho * theta[1], 0.0])
    diag = zero - sum(2.0 / hk**2 for hk in h)
    R, C, V = [rows], [idx[tuple(eqi.T)]], [diag.astype(complex)]
    for ax in range(3):
        ep = np.exp(grad_w[ax] * h[ax])
        for s, c in ((1, ep), (-1, 1.0 / ep)):
            nb = eqi.copy()
            nb[:, ax] += s
            col = idx[tuple(nb.T)]
            val = c / h[ax] ** 2 + 2j * Av[ax] * s * c / (2 * h[ax])
            keep = col >= 0
            R.append(rows[keep])
            C.append(col[keep])
            V.append(val[keep].astype(complex))
    M = sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))), shape=(n, int(unk.sum())))
    return ConjugatedSystem(M, eq, unk, idx)


def check_resolution(grid, frame, rho, sigma, nodes_per_wavelength=6):
    k = np.abs(rho * frame.eta - _kappa(frame, sigma))
    h = np.array(grid.spacing)
    worst = np.max(k * h)
    if worst > 2 * np.pi / nodes_per_wavelength:
        raise ValueError(f"under-resolved: {2 * np.pi / worst:.2f} nodes per wavelength, need {nodes_per_wavelength}")


def solve_remainder(F, A, q, frame, rho, sigma=1, tol=1e-8, damp_rel=1e-10, iter_lim=50000):
    """Minimum-norm damped least-squares solution of P w = e^{i rho eta.x} F.

    Returns (w on the grid box, relative linear residual, iterations).
    """
    grid = A.grid
    if rho <= 1:
        raise ValueError("rho must exceed 1")
    check_resolution(grid, frame, rho, sigma)
    system = conjugated_matrix(grid, A, q, rho, sigma, frame.theta)
    X, Y, Z = grid.coords()
    rhs = np.exp(1j * rho * (frame.eta[0] * X + frame.eta[1] * Y + frame.eta[2] * Z)) * F
    f = rhs[system.eq_mask]
    w = np.zeros(grid.shape, dtype=complex)
    fn = np.linalg.norm(f)
    if fn == 0:
        return w, 0.0, 0
    scale = abs(system.matrix).sum(axis=1).max()
    sol = lsqr(system.matrix, f, damp=damp_rel * scale, atol=1e-15, btol=tol * 0.1, iter_lim=iter_lim)
    x, itn = sol[0], sol[2]
    rel = float(np.linalg.norm(system.matrix @ x - f) / fn)
    if rel > tol:
        raise SolverError(f"remainder solve stalled after {itn} iterations (relative residual {rel:.2e})")
    w[system.unk_mask] = x
    return w, rel, int(itn)


def h1_norm(w, grid):
    h = grid.spacing
    g2 = sum(np.abs(diff(w, k, h[k])) ** 2 for k in range(3))
    return float(np.sqrt(grid.cell_volume * np.sum(np.abs(w) ** 2 + g2)))


@dataclass
class CGOSolution:
    frame: object
    rho: float
    sigma: int
    principal: np.ndarray  # unweighted: psi b e^{i rho eta.x - i kappa.x}
    remainder: np.ndarray  # w
    report: dict
    grid: object = field(repr=False)

    def weight(self):
        return np.exp(weight_exponent(self.grid, self.frame, self.rho, self.sigma))

    def full(self):
        """u on the box (zero away from the unknown nodes)."""
        return self.weight() * (self.principal + self.remainder)


def pde_residual(sol, A, q):
    """Interior residual of (Delta_A + q) u in the conjugated frame and its truncation estimate.

    Residual: e^{-phi}(Delta_A + q)_h u = P_h (principal + w) at equation nodes.
    Estimate: h_max^2 rho^2 ||D2 u~|| where D2 u~ is the sum of the absolute
    second differences of u~ = principal + w (the exponential weight is exact
    in the stencil, so only the oscillation is truncated).
    """
    grid = sol.grid
    system = conjugated_matrix(grid, A, q, sol.rho, sol.sigma, sol.frame.theta)
    eq = system.eq_mask
    ut = sol.principal + sol.remainder
    # unknown layer for the principal part: its values at margin nodes are part of u
    vec = ut[system.unk_mask]
    r = system.matrix @ vec
    res = float(np.sqrt(grid.cell_volume) * np.linalg.norm(r))
    h = grid.spacing
    d2 = sum(np.abs(_d2(ut, k, h[k])) for k in range(3))
    d2 = np.where(eq, d2, 0.0)
    est = max(h) ** 2 * sol.rho**2 * l2_norm(d2, grid)
    return res, est


def _d2(f, axis, h):
    return (np.roll(f, 1, axis) - 2 * f + np.roll(f, -1, axis)) / h**2


def build_cgo(A, q, frame, rho, sigma=1, psi=None, A_field=None, Phi=None):
    """Full CGO solution on A.grid.

    The phase corrector is built from mollify(A_field) (default: A itself),
    possibly on a coarser field grid, and resampled onto A.grid.
    """
    psi = AxialCutoff() if psi is None else psi
    grid = A.grid
    if Phi is None:
        src = A if A_field is None else A_field
        A_rho = mollify(src, make_mollifier(rho))
        Phi = cauchy_phase(A_rho, frame, sigma, rho=rho)
    F, transport = cgo_source(frame, rho, A, q, Phi, psi, sigma, parts=True)
    _, unk = node_sets(grid)
    F = np.where(unk, F, 0)
    transport = np.where(unk, transport, 0)
    w, rel, itn = solve_remainder(F, A, q, frame, rho, sigma)
    principal = assemble_principal(frame, rho, Phi, psi, sigma, grid=grid, weighted=False)
    principal = np.where(unk, principal, 0)
    sol = CGOSolution(frame, float(rho), int(sigma), principal, w, {}, grid)
    l2 = l2_norm(w, grid)
    h1 = h1_norm(w, grid)
    res, est = pde_residual(sol, A, q)
    sol.report.update(
        rho=float(rho),
        sigma=int(sigma),
        w_l2=l2,
        w_h1_over_rho=h1 / rho,
        decay_quantity=h1 / rho + l2,
        source_l2=l2_norm(F, grid),
        transport_term_l2=l2_norm(transport, grid),
        linear_residual=rel,
        iterations=itn,
        pde_residual=res,
        truncation_estimate=est,
        phi_sup=float(np.max(np.abs(Phi.values))),
    )
    return sol


def traces(u, A, grid, delta=None, order=1):
    """Dirichlet and magnetic Neumann samples -d_nu u - i (A.nu) u at the boundary nodes.

    d_nu u uses the one-sided second-order difference
    (3 u(x) - 4 u(x - delta nu) + u(x - 2 delta nu)) / (2 delta), with u
    sampled by interpolation within each axial plane.
    """
    delta = grid.hp if delta is None else delta
    pts = grid.boundary_nodes()
    nrm = grid.boundary_normals()

    def sample(p):
        coords = np.stack([(p[:, 0] - grid.x[0]) / grid.hp, (p[:, 1] - grid.y[0]) / grid.hp, (p[:, 2] - grid.z[0]) / grid.h3])
        kw = dict(order=order, mode="nearest")
        if np.iscomplexobj(u):
            return ndimage.map_coordinates(u.real, coords, **kw) + 1j * ndimage.map_coordinates(u.imag, coords, **kw)
        return ndimage.map_coordinates(u, coords, **kw)

    u0 = sample(pts)
    dn = (3 * u0 - 4 * sample(pts - delta * nrm) + sample(pts - 2 * delta * nrm)) / (2 * delta)
    if A is None:
        a_nu = 0.0
    else:
        a_nu = sum(interpolate(A.values[k], grid, pts) * nrm[:, k] for k in range(3))
    return u0, -dn - 1j * a_nu * u0
