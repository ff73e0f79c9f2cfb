"""Fourier recovery of dA and q from CGO pairings, the gauge potential, and
the partial-data inequality chain.

Transforms use F(f)(xi) = (2 pi)^{-3/2} int f(x) e^{-i x.xi} dx, evaluated by
direct quadrature on the grid nodes.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .cauchy import phase_at
from .cgo import AxialCutoff, build_cgo, conjugated_matrix, node_sets, traces
from .fields import (
    ScalarField, curl_components, diff, divergence, interpolate, l2_norm, make_mollifier, mollify,
)
from .geometry import boundary_partition, build_frame

NORM = (2 * np.pi) ** -1.5
PAIRS = ((0, 1), (0, 2), (1, 2))


def direct_transform(values, grid, xi, weight=None):
    """(2 pi)^{-3/2} sum f(x) e^{-i x.xi} dV over the box nodes where f != 0."""
    vals = values if weight is None else values * weight
    nz = np.nonzero(vals)
    if len(nz[0]) == 0:
        return 0j
    x, y, z = grid.x[nz[0]], grid.y[nz[1]], grid.z[nz[2]]
    ph = np.exp(-1j * (xi[0] * x + xi[1] * y + xi[2] * z))
    return complex(NORM * grid.cell_volume * np.sum(vals[nz] * ph))


def pairing_integral(u1, u2, A, qt, grid):
    """i int (A.grad u1) conj(u2) - i int u1 conj(A.grad u2) + int qt u1 conj(u2) over omega nodes."""
    h = grid.spacing
    m = grid.mask
    total = 0j
    if A is not None:
        Ag1 = sum(A.values[k] * diff(u1, k, h[k]) for k in range(3))
        Ag2 = sum(A.values[k] * diff(u2, k, h[k]) for k in range(3))
        total += 1j * np.sum((Ag1 * np.conj(u2))[m]) - 1j * np.sum((u1 * np.conj(Ag2))[m])
    if qt is not None:
        total += np.sum((qt.values * u1 * np.conj(u2))[m])
    return complex(total * grid.cell_volume)


def verify_fourier_identity(A_rho, Phi_rho, frame, xi=None):
    """lhs = int (zeta.A_rho) e^{Phi_rho} e^{-i x.xi}, rhs = (2 pi)^{3/2} zeta.F(A_rho)(xi).

    zeta = theta~ + i eta. ``Phi_rho`` is a PhaseCorrector on the grid of
    A_rho. Returns (lhs, rhs, relative error). The error is measured against
    int |zeta.A_rho|, which bounds both sides; |rhs| itself vanishes for
    gradient fields and for fields odd along the probe.
    """
    xi = frame.xi if xi is None else np.asarray(xi, float)
    zeta = frame.zeta(1)
    f = A_rho.dot(zeta)
    grid = A_rho.grid
    lhs = direct_transform(f * np.exp(Phi_rho.values), grid, xi) / NORM
    rhs = direct_transform(f, grid, xi) / NORM
    scale = grid.cell_volume * float(np.sum(np.abs(f)))
    rel = 0.0 if scale == 0 else abs(lhs - rhs) / scale
    return lhs, rhs, rel


# ---------------------------------------------------------------------------
# probes


@dataclass
class FourierProbe:
    """Admissible frequencies xi = (xi', xi3) with xi' != 0, xi3 != 0 and a frame for each."""

    xis: np.ndarray
    frames: list = field(default_factory=list)
    thetas: np.ndarray = None


def make_probe(xis, R, theta=None):
    """Frames for each xi; theta defaults to xi' rotated by -90 degrees (so xi' is orthogonal to theta)."""
    xis = np.atleast_2d(np.asarray(xis, float))
    frames, thetas = [], []
    for xi in xis:
        xp = xi[:2]
        if theta is None:
            th = np.array([xp[1], -xp[0]]) / np.linalg.norm(xp)
        else:
            th = np.asarray(theta, float)
        frames.append(build_frame(th, xp, xi[2], R))
        thetas.append(th)
    return FourierProbe(xis, frames, np.array(thetas))


def default_probe_xis():
    """Twelve admissible frequencies, closed under xi -> -xi."""
    base = [
        (0.6, 30.0, 1.0), (1.0, 100.0, -1.5), (1.4, 200.0, 0.8),
        (0.8, 290.0, 2.0), (1.8, 60.0, -1.0), (1.2, 160.0, 1.6),
    ]
    out = []
    for r, ang, x3 in base:
        a = np.deg2rad(ang)
        xi = np.array([r * np.cos(a), r * np.sin(a), x3])
        out += [xi, -xi]
    return np.array(out)


# ---------------------------------------------------------------------------
# extrapolation


def richardson(rhos, values, power=0.5):
    """Polynomial extrapolation to rho = infinity in t = rho^{-power} through all ladder points."""
    t = np.asarray(rhos, float) ** (-power)
    vals = np.asarray(values)
    out = 0.0 + 0.0j
    for i in range(len(t)):
        li = 1.0
        for j in range(len(t)):
            if j != i:
                li *= (0.0 - t[j]) / (t[i] - t[j])
        out = out + li * vals[i]
    return out


def ladder_converges(values):
    """True when successive ladder differences shrink (the ladder looks Cauchy)."""
    d = np.abs(np.diff(np.asarray(values), axis=0))
    if d.ndim > 1:
        d = d.max(axis=tuple(range(1, d.ndim)))
    return bool(len(d) < 2 or np.all(d[1:] <= d[:-1] * (1 + 1e-12) + 1e-14))


# ---------------------------------------------------------------------------
# dA recovery


@dataclass
class RecoveryResult:
    """Per-xi curl samples xi_k a^_j - xi_j a^_k, oracle values and error metrics."""

    xis: np.ndarray
    curl: np.ndarray  # (n_xi, 3) complex, pairs (0,1), (0,2), (1,2)
    oracle: np.ndarray
    flags: list
    ladder: dict = field(default_factory=dict)
    unsymmetrized_gap: float = 0.0

    def sample(self, i, j, k):
        """Curl sample for the ordered pair (j, k); antisymmetric in (j, k)."""
        if j == k:
            return 0j
        if (j, k) in PAIRS:
            return self.curl[i, PAIRS.index((j, k))]
        return -self.curl[i, PAIRS.index((k, j))]

    @property
    def max_rel_err(self):
        scale = np.max(np.abs(self.oracle)) or 1.0
        return float(np.max(np.abs(self.curl - self.oracle)) / scale)

    @property
    def rms_rel_err(self):
        den = np.sqrt(np.mean(np.abs(self.oracle) ** 2))
        num = np.sqrt(np.mean(np.abs(self.curl - self.oracle) ** 2))
        return float(num / den) if den > 0 else float(num)

    @property
    def rms(self):
        return float(np.sqrt(np.mean(np.abs(self.curl) ** 2)))

    def to_records(self):
        out = []
        for i, xi in enumerate(self.xis):
            out.append(dict(
                xi=[float(v) for v in xi],
                curl_samples=[[float(c.real), float(c.imag)] for c in self.curl[i]],
                oracle=[[float(c.real), float(c.imag)] for c in self.oracle[i]],
                rel_err=float(np.max(np.abs(self.curl[i] - self.oracle[i])) / (np.max(np.abs(self.oracle)) or 1.0)),
                diverged=bool(self.flags[i]),
            ))
        return out


def leading_functional(A_rho, frame, rho, psi=None):
    """int psi^2(rho^{-1/4} x3) (zeta.A_rho) e^{Phi_rho} e^{-i x.xi} dx, zeta = theta~ + i eta.

    This is the leading part of rho^{-1} times the pairing of the two CGO
    solutions; Phi_rho = Phi_1 + conj(Phi_2) reduces to the phase of the
    difference potential. Phi is evaluated only where A_rho is nonzero.
    """
    grid = A_rho.grid
    f = A_rho.dot(frame.zeta(1))
    nz = np.nonzero(f)
    if len(nz[0]) == 0:
        return 0j
    pts = np.column_stack([grid.x[nz[0]], grid.y[nz[1]], grid.z[nz[2]]])
    Phi = phase_at(A_rho, frame, 1, pts)
    w = 1.0
    if psi is not None:
        w = psi.scaled(pts[:, 2], rho)[0] ** 2
    ph = np.exp(-1j * (pts @ frame.xi))
    return complex(grid.cell_volume * np.sum(w * f[nz] * np.exp(Phi) * ph))


def _frame_pair(frame, R):
    """The frame itself and the one with theta reversed (same xi, same eta)."""
    minus = build_frame(-frame.theta, frame.xi_p, frame.xi3, R)
    return frame, minus


def recover_dA(A1, A2, probe, ladder, psi=None, symmetrize=True):
    """Curl samples of A = A1 - A2 at each probe frequency from the rho ladder.

    For each xi the leading functional is evaluated for zeta = theta~ + i eta
    and zeta = -theta~ + i eta, extrapolated to rho = infinity (Richardson in
    rho^{-1/2}), and split into theta~.A^ and eta.A^. Since (theta~, eta,
    xi/|xi|) is an orthonormal basis, xi x A^ only needs those two
    components. Because A is real, a curl sample at -xi is minus the
    conjugate of the sample at xi; estimates at xi and -xi are averaged
    onto that relation when both are in the probe.
    """
    A = A1 - A2
    grid = A.grid
    R = grid.cs.R
    molls = {rho: mollify(A, make_mollifier(rho)) for rho in ladder}
    nxi = len(probe.xis)
    comp = np.zeros((nxi, 3), dtype=complex)
    flags = []
    ladder_vals = {}
    for i, (xi, frame) in enumerate(zip(probe.xis, probe.frames)):
        fp, fm = _frame_pair(frame, R)
        tp = [leading_functional(molls[r], fp, r, psi) for r in ladder]
        tm = [leading_functional(molls[r], fm, r, psi) for r in ladder]
        ladder_vals[i] = (tp, tm)
        Tp = richardson(ladder, tp) * NORM
        Tm = richardson(ladder, tm) * NORM
        conv = ladder_converges(np.column_stack([tp, tm])) or max(abs(Tp), abs(Tm)) < 1e-12
        flags.append(not conv)
        a_theta = 0.5 * (Tp - Tm)
        a_eta = (Tp + Tm) / 2j
        Ahat = a_theta * frame.theta3 + a_eta * frame.eta
        for p, (j, k) in enumerate(PAIRS):
            comp[i, p] = xi[k] * Ahat[j] - xi[j] * Ahat[k]
    gap = 0.0
    if symmetrize:
        comp, gap = _conjugate_symmetrize(probe.xis, comp)
    oracle = curl_oracle(A, probe.xis)
    return RecoveryResult(probe.xis, comp, oracle, flags, ladder_vals, gap)


def _conjugate_symmetrize(xis, comp):
    out = comp.copy()
    gap = 0.0
    done = set()
    for i, xi in enumerate(xis):
        if i in done:
            continue
        d = np.linalg.norm(xis + xi, axis=1)
        j = int(np.argmin(d))
        if d[j] < 1e-12 and j != i:
            gap = max(gap, float(np.max(np.abs(comp[j] + np.conj(comp[i])))))
            avg = 0.5 * (comp[i] - np.conj(comp[j]))
            out[i], out[j] = avg, -np.conj(avg)
            done |= {i, j}
    return out, gap


def curl_oracle(A, xis):
    """xi_k a^_j - xi_j a^_k = -i F(d_k a_j - d_j a_k)(xi) from the difference curl."""
    curls = curl_components(A.values, A.grid.spacing)
    out = np.zeros((len(xis), 3), dtype=complex)
    for i, xi in enumerate(xis):
        for p, (j, k) in enumerate(PAIRS):
            # curls[(j, k)] = d_j a_k - d_k a_j, so d_k a_j - d_j a_k = -curls[(j, k)]
            out[i, p] = -1j * direct_transform(-curls[(j, k)], A.grid, xi)
    return out


# ---------------------------------------------------------------------------
# gauge potential


def gauge_potential(A, n_points=64, reference=None, tol=1e-6):
    """phi(x) = int_0^1 A(s x).x ds by an n-point trapezoid rule along rays from the origin.

    A is sampled by trilinear interpolation. The constant is fixed so that
    phi vanishes at a reference node outside the support of A (default:
    the box corner). Raises if the centered-difference curl of A exceeds
    ``tol``.
    """
    grid = A.grid
    curls = curl_components(A.values, grid.spacing)
    worst = max(float(np.max(np.abs(c[1:-1, 1:-1, 1:-1]))) for c in curls.values())
    if worst > tol:
        raise ValueError(f"not a gradient field: discrete curl {worst:.2e} exceeds {tol:.0e}")
    X, Y, Z = grid.coords()
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    s = np.linspace(0.0, 1.0, n_points)
    w = np.full(n_points, s[1] - s[0])
    w[[0, -1]] *= 0.5
    phi = np.zeros(len(pts))
    for si, wi in zip(s, w):
        sp = si * pts
        a = np.stack([interpolate(A.values[k], grid, sp) for k in range(3)], axis=1)
        phi += wi * np.sum(a * pts, axis=1)
    phi = phi.reshape(grid.shape)
    if reference is None:
        reference = (0, 0, 0)
    phi -= phi[reference]
    return phi


# ---------------------------------------------------------------------------
# q recovery


def recover_q(q, probe_xis, ladder, psi):
    """Per xi: ladder values int q psi^2(rho^{-1/4} x3) e^{-i x.xi} (normalized), limit and oracle.

    Returns dict with "ladder" (n_rho, n_xi), "limit" (last ladder value,
    exact once psi^2 = 1 on supp q), "oracle" (direct transform of q).
    """
    grid = q.grid
    _, _, Z = grid.coords()
    xis = np.atleast_2d(np.asarray(probe_xis, float))
    vals = np.zeros((len(ladder), len(xis)), dtype=complex)
    for a, rho in enumerate(ladder):
        wgt = psi.scaled(Z, rho)[0] ** 2
        for b, xi in enumerate(xis):
            vals[a, b] = direct_transform(q.values, grid, xi, weight=wgt)
    oracle = np.array([direct_transform(q.values, grid, xi) for xi in xis])
    return dict(ladder=vals, limit=vals[-1], oracle=oracle)


# ---------------------------------------------------------------------------
# partial data


def cone_thetas(theta0, eps, n=5):
    """Unit directions theta with |theta - theta0| <= eps, evenly spread in angle."""
    theta0 = np.asarray(theta0, float) / np.linalg.norm(theta0)
    half = 2 * np.arcsin(min(eps, 2.0) / 2)
    base = np.arctan2(theta0[1], theta0[0])
    angs = base + np.linspace(-half, half, n) if n > 1 else np.array([base])
    return np.column_stack([np.cos(angs), np.sin(angs)])


def shadow_cover(cs, theta0, eps, n=9):
    """Smallest segment set containing {nu.theta <= eps} for every theta in the cone around theta0."""
    idx = set()
    for th in cone_thetas(theta0, eps, n):
        idx |= set(boundary_partition(cs, th, eps)[1].tolist())
    return np.array(sorted(idx), dtype=int)


def check_partial_geometry(cs, V, theta0, eps, n=9):
    """Raise unless V covers the shadowed faces for all directions near theta0."""
    need = shadow_cover(cs, theta0, eps, n)
    missing = np.setdiff1d(need, np.asarray(V, dtype=int))
    if len(missing):
        raise ValueError(f"V does not cover the shadowed faces: {len(missing)} segments missing (first {int(missing[0])})")


@dataclass
class PartialDataReport:
    """Per-rho links of the partial-data inequality chain and fitted constants."""

    boundary_set: dict
    records: list
    eps: float

    @property
    def fitted(self):
        return np.array([r["C_fit"] for r in self.records])

    @property
    def drift(self):
        c = self.fitted
        if len(c) == 0 or np.all(c == 0):
            return 1.0
        if np.any(c == 0):
            return np.inf
        return float(c.max() / c.min())

    def to_dict(self):
        return dict(boundary_set=self.boundary_set, eps=self.eps, records=self.records, drift=self.drift)


def _weighted_diff(f, axis, h, a):
    """e^{-a x} d/dx (e^{a x} f) by centered differences of the weighted field."""
    ea = np.exp(a * h)
    return (ea * np.roll(f, -1, axis) - np.roll(f, 1, axis) / ea) / (2 * h)


def _conjugated_source(u1t, A, qcoef, rho, theta, grid):
    """e^{-rho theta.x'} [2i A.grad u1 + qcoef u1] with u1 = e^{rho theta.x'} u1t."""
    h = grid.spacing
    a = (rho * theta[0], rho * theta[1], 0.0)
    out = qcoef * u1t
    for k in range(3):
        out = out + 2j * A.values[k] * _weighted_diff(u1t, k, h[k], a[k])
    return out


def _dirichlet_solve(grid, A2, q2, rho, theta, rhs, eq):
    """Zero-Dirichlet solve of e^{-phi}(Delta_A2 + q2)e^{phi} ut = rhs on the equation nodes."""
    system = conjugated_matrix(grid, A2, q2, rho, 1, theta, eq=eq, unk=eq)
    M = system.matrix.tocsc()
    b = rhs[eq]
    out = np.zeros(grid.shape, dtype=complex)
    if not np.any(b):
        return out, 0.0
    x = spla.splu(M, permc_spec="COLAMD").solve(b)
    rel = float(np.linalg.norm(M @ x - b) / np.linalg.norm(b))
    out[eq] = x
    return out, rel


def partial_data_check(A1, A2, q1, q2, V, theta0, eps, ladder, xi_p=None, xi3=4.0,
                       A_fields=None, psi=None, theta=None, cover_samples=9):
    """Evaluate every link of the partial-data inequality chain along a rho ladder.

    u1 is the CGO solution for (A1, q1) growing along theta, u2 the decaying
    one for (A2, conj q2), and u solves (Delta_A2 + q2) u = S with zero
    Dirichlet data, S = 2i A.grad u1 + (q + i div A + |A2|^2 - |A1|^2) u1,
    A = A1 - A2, q = q1 - q2. All quantities are computed in the weighted
    variables u~ = e^{-rho theta.x'} u, u1~ = e^{-rho theta.x'} u1 and
    u2~ = e^{rho theta.x'} u2, so no exponential factor is ever formed.

    ``V`` is an array of boundary segment indices (times the full axial
    extent) or the string "full". Per rho the record holds:

      pairing        int_Omega S conj(u2)
      boundary_total int_{dOmega} d_nu u conj(u2) (Green consistency)
      term_a         the same integral over dOmega \\ V
      term_b         int_{theta.nu > 0} |e^{-rho theta.x'} d_nu u|^2 |theta.nu|
      shadow_b       the same over theta.nu <= 0 (vanishes when the data agree on V)
      links          Cauchy-Schwarz, eps step, Carleman, source and trace ratios
      C_fit          |pairing|^2 eps / (rho^2 ||A2 - A2_rho||^2 ||A||^2)
    """
    grid = A1.grid
    cs = grid.cs
    psi = AxialCutoff() if psi is None else psi
    theta0 = np.asarray(theta0, float)
    theta = theta0 if theta is None else np.asarray(theta, float)
    if V is None or isinstance(V, str) and V == "full":
        Vset = np.arange(cs.n_segments)
        desc = dict(kind="full", segments=int(cs.n_segments))
    else:
        Vset = np.unique(np.asarray(V, dtype=int))
        desc = dict(kind="segments", segments=[int(k) for k in Vset])
    desc.update(theta0=[float(t) for t in theta0], eps=float(eps), axial="full")
    check_partial_geometry(cs, Vset, theta0, eps, cover_samples)
    if np.linalg.norm(theta - theta0) > eps + 1e-12:
        raise ValueError("probe direction lies outside the cone |theta - theta0| <= eps")
    if xi_p is None:
        xi_p = 0.5 * np.array([-theta[1], theta[0]])
    frame = build_frame(theta, xi_p, xi3, cs.R)
    A = A1 - A2
    qd = q1.values - q2.values
    qcoef = (qd + 1j * divergence(A.values, grid.spacing)
             + np.sum(A2.values ** 2, axis=0) - np.sum(A1.values ** 2, axis=0))
    A_norm = l2_norm(A.values, grid)
    comp = np.ones(cs.n_segments, dtype=bool)
    comp[Vset] = False
    nz = len(grid.z)
    dots = cs.normals @ theta
    illum = dots > 0
    wts = grid.boundary_weights().reshape(cs.n_segments, nz)
    eq, _ = node_sets(grid)
    q2c = ScalarField(np.conj(q2.values), grid)
    A1f, A2f = (None, None) if A_fields is None else A_fields
    records = []
    for rho in ladder:
        rho = float(rho)
        M = make_mollifier(rho)
        A2src = A2 if A2f is None else A2f
        moll_err = l2_norm(A2src.values - mollify(A2src, M).values, A2src.grid)
        rec = dict(rho=rho, mollification_error=moll_err, A_l2=A_norm)
        trivial = A_norm == 0 and not np.any(qd)
        if trivial:
            rec.update(pairing=[0.0, 0.0], boundary_total=[0.0, 0.0], term_a=[0.0, 0.0], term_b=0.0,
                       shadow_b=0.0, source_l2sq=0.0, u2_trace_complement=0.0, dirichlet_residual=0.0,
                       links=dict(cauchy_schwarz=0.0, eps_step=0.0, carleman=0.0, source=0.0, trace=0.0),
                       C_fit=0.0)
            records.append(rec)
            continue
        s1 = build_cgo(A1, q1, frame, rho, 1, psi=psi, A_field=A1f)
        s2 = build_cgo(A2, q2c, frame, rho, -1, psi=psi, A_field=A2f)
        u1t = s1.principal + s1.remainder
        u2t = s2.principal + s2.remainder
        St = np.where(eq, _conjugated_source(u1t, A, qcoef, rho, theta, grid), 0)
        ut, drel = _dirichlet_solve(grid, A2, q2, rho, theta, St, eq)
        pairing = complex(grid.cell_volume * np.sum(St * np.conj(u2t)))
        u0, mag = traces(ut, None, grid, order=3)
        nrm = grid.boundary_normals()
        dn = -mag + rho * (nrm[:, :2] @ theta) * u0
        u2b, _ = traces(u2t, None, grid, order=1)
        integrand = (dn * np.conj(u2b)).reshape(cs.n_segments, nz) * wts
        total = complex(integrand.sum())
        term_a = complex(integrand[comp].sum())
        dn2 = np.abs(dn.reshape(cs.n_segments, nz)) ** 2 * wts
        term_b = float((dn2 * np.abs(dots)[:, None])[illum].sum())
        shadow_b = float((dn2 * np.abs(dots)[:, None])[~illum].sum())
        I_comp = float(dn2[comp].sum())
        J_comp = float((np.abs(u2b.reshape(cs.n_segments, nz)) ** 2 * wts)[comp].sum())
        src = float(grid.cell_volume * np.sum(np.abs(St) ** 2))
        links = dict(
            cauchy_schwarz=abs(term_a) ** 2 / (I_comp * J_comp) if I_comp * J_comp > 0 else 0.0,
            eps_step=eps * I_comp / term_b if term_b > 0 else 0.0,
            carleman=rho * term_b / (src + rho * shadow_b) if src + rho * shadow_b > 0 else 0.0,
            source=src / (rho**2 * A_norm**2) if A_norm > 0 else 0.0,
            trace=J_comp / (rho * moll_err**2) if moll_err > 0 else 0.0,
        )
        denom = rho**2 * moll_err**2 * A_norm**2
        rec.update(
            pairing=[pairing.real, pairing.imag],
            boundary_total=[total.real, total.imag],
            green_gap=abs(total - pairing) / max(abs(pairing), 1e-300),
            term_a=[term_a.real, term_a.imag],
            term_b=term_b,
            shadow_b=shadow_b,
            source_l2sq=src,
            u2_trace_complement=J_comp,
            dirichlet_residual=drel,
            scaled_pairing=abs(pairing) / rho,
            links=links,
            C_fit=abs(pairing) ** 2 * eps / denom if denom > 0 else 0.0,
            cgo=dict(u1=s1.report, u2=s2.report),
        )
        records.append(rec)
    return PartialDataReport(desc, records, float(eps))
