"""Carleman weights, conjugated operators and numerical stress tests of the
three Carleman estimates (convexified weight, linear weight with boundary
terms, and the negative-order semiclassical estimate).

Every inequality has an unknown constant, so each check evaluates both sides
on a suite of test fields and reports C = max LHS/RHS; the meaningful claim
is that C stays bounded as rho grows.
"""

from dataclasses import dataclass, field

import numpy as np

from .cgo import traces
from .fields import diff, divergence, laplacian, weighted_norm
from .geometry import boundary_partition

OVERFLOW = 700.0


@dataclass(frozen=True)
class CarlemanWeight:
    """phi(x) = sign * rho * theta.x' - s (x'.theta)^2 / 2."""

    s: float
    rho: float
    theta: np.ndarray
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.s != 0 and not 1 < self.s < self.rho:
            raise ValueError("need 1 < s < rho")

    def __call__(self, X, Y):
        t = self.theta[0] * X + self.theta[1] * Y
        return self.sign * self.rho * t - 0.5 * self.s * t * t


def _apply_weighted(op, v, phi, support):
    """e^{-phi} op(e^{phi} v), with phi shifted by its max over the support of v."""
    if not np.any(support):
        return np.zeros_like(v, dtype=complex)
    ph = phi[support]
    if np.max(np.abs(ph)) > OVERFLOW:
        raise ValueError("weight overflow; shrink rho or support")
    shift = np.max(ph)
    e = np.exp(np.clip(phi - shift, -OVERFLOW, OVERFLOW))
    out = op(e * v)
    return out / e


def magnetic_operator(A, q, grid, full=False):
    """Return w -> (Delta + 2i A.grad + q) w, or the full magnetic Laplacian plus q."""
    h = grid.spacing

    def op(w):
        out = laplacian(w, h)
        if A is not None:
            out = out + 2j * sum(A.values[k] * diff(w, k, h[k]) for k in range(3))
            if full:
                out = out + (1j * divergence(A.values, h) - np.sum(A.values**2, axis=0)) * w
        if q is not None:
            out = out + q.values * w
        return out

    return op


def conjugated_apply(v, A, q, s, rho, sign, theta, grid, full=False):
    """P v = e^{-phi} (Delta + 2i A.grad + q)(e^{phi} v) with phi = phi_{sign,s}.

    The difference operator is applied to e^{phi} v; the weight is never
    differenced on its own. ``s = 0`` gives the linear weight.
    """
    X, Y, _ = grid.coords()
    phi = CarlemanWeight(s, rho, np.asarray(theta, float), sign)(X, Y)
    return _apply_weighted(magnetic_operator(A, q, grid, full), v, phi, v != 0)


@dataclass
class CarlemanReport:
    """Per-field LHS/RHS terms, the fitted constant and run metadata."""

    name: str
    lhs_terms: list
    rhs_terms: list
    meta: dict = field(default_factory=dict)

    @property
    def ratios(self):
        out = []
        for lt, rt in zip(self.lhs_terms, self.rhs_terms):
            L, R = sum(lt.values()), sum(rt.values())
            out.append(0.0 if L == 0 else (np.inf if R == 0 else L / R))
        return np.array(out)

    @property
    def fitted_C(self):
        r = self.ratios
        return float(r.max()) if len(r) else 0.0

    def to_dict(self):
        return dict(name=self.name, fitted_C=self.fitted_C, lhs=self.lhs_terms, rhs=self.rhs_terms, meta=self.meta)


def _omega_integral(f, grid):
    return float(grid.cell_volume * np.sum(np.where(grid.mask, f, 0.0)))


def _face_integrals(dn, grid, theta, sign_face):
    """rho-free boundary integrals of |dn|^2 |theta.nu| over the two faces.

    Returns (integral over {theta.nu > 0}, integral over {theta.nu <= 0}).
    """
    cs = grid.cs
    illum, shadow = boundary_partition(cs, theta, 0.0)
    nz = len(grid.z)
    dots = np.abs(cs.normals @ theta)
    wts = grid.boundary_weights().reshape(cs.n_segments, nz)
    vals = np.abs(dn.reshape(cs.n_segments, nz)) ** 2 * dots[:, None] * wts
    return float(vals[illum].sum()), float(vals[shadow].sum())


def _normal_derivative(v, grid):
    u0, mag = traces(v, None, grid, order=3)
    return -mag  # with A = None the magnetic Neumann value is -d_nu v


def check_carleman_convexified(suite, A, q, s, rho, theta, sign=1):
    """Both sides of the convexified-weight estimate for every field of the suite.

    LHS: rho int_{face_sign} |d_nu v|^2 |theta.nu| + s rho^-2 ||Delta v||^2
         + s ||grad v||^2 + s rho^2 ||v||^2
    RHS: ||P_{A,q,sign,s} v||^2 + rho int_{face_-sign} |d_nu v|^2 |theta.nu|
    where face_+ = {theta.nu > 0}, face_- = {theta.nu <= 0}.
    """
    theta = np.asarray(theta, float)
    s1 = 48 * (A.sup() if A is not None else 0.0) ** 2 + 6
    if s <= s1:
        raise ValueError(f"s must exceed 48 ||A||^2 + 6 = {s1:.3f}")
    lhs, rhs = [], []
    for v in suite:
        g = v.grid
        vals = v.values
        h = g.spacing
        Pv = conjugated_apply(vals, A, q, s, rho, sign, theta, g)
        dn = _normal_derivative(vals, g)
        plus, minus = _face_integrals(dn, g, theta, sign)
        own, other = (plus, minus) if sign == 1 else (minus, plus)
        grad2 = sum(np.abs(diff(vals, k, h[k])) ** 2 for k in range(3))
        lhs.append(dict(
            boundary=rho * own,
            laplacian=s * rho**-2 * _omega_integral(np.abs(laplacian(vals, h)) ** 2, g),
            gradient=s * _omega_integral(grad2, g),
            l2=s * rho**2 * _omega_integral(np.abs(vals) ** 2, g),
        ))
        rhs.append(dict(equation=_omega_integral(np.abs(Pv) ** 2, g), boundary=rho * other))
    return CarlemanReport("convexified", lhs, rhs, dict(s=s, rho=rho, sign=sign, theta=theta.tolist(), s1=s1))


def check_carleman_linear(suite, A, q, rho, theta):
    """Both sides of the linear-weight estimate with boundary terms.

    With weight W = e^{-2 rho theta.x'}:
    LHS: rho int_{theta.nu>0} W |d_nu u|^2 |theta.nu| + rho^2 int W|u|^2 + int W|grad u|^2
    RHS: int W |(Delta + 2i A.grad + q) u|^2 + rho int_{theta.nu<=0} W |d_nu u|^2 |theta.nu|
    Suite members are the weighted fields v = e^{-rho theta.x'} u, i.e. each
    test field is u = e^{rho theta.x'} v, so every weighted term is finite.
    """
    theta = np.asarray(theta, float)
    lhs, rhs = [], []
    for v in suite:
        g = v.grid
        vals = v.values
        h = g.spacing
        X, Y, _ = g.coords()
        phi = rho * (theta[0] * X + theta[1] * Y)
        support = vals != 0
        Lu = _apply_weighted(magnetic_operator(A, q, g), vals, phi, support)
        grad2 = sum(np.abs(_apply_weighted(lambda w, k=k: diff(w, k, h[k]), vals, phi, support)) ** 2 for k in range(3))
        # on the boundary v = 0, so e^{-rho theta.x'} d_nu u = d_nu v exactly
        dn = _normal_derivative(vals, g)
        plus, minus = _face_integrals(dn, g, theta, 1)
        lhs.append(dict(
            boundary=rho * plus,
            l2=rho**2 * _omega_integral(np.abs(vals) ** 2, g),
            gradient=_omega_integral(grad2, g),
        ))
        rhs.append(dict(equation=_omega_integral(np.abs(Lu) ** 2, g), boundary=rho * minus))
    return CarlemanReport("linear", lhs, rhs, dict(rho=rho, theta=theta.tolist()))


def check_carleman_negative(suite, A, q, rho, theta, sign=1):
    """rho^-1 ||v||_{H^1_rho} <= C ||P_{A,q,sign} v||_{H^-1_rho} for compactly supported v.

    P_{A,q,sign} = e^{-sign rho x'.theta} (Delta_A + q) e^{sign rho x'.theta}
    with the full magnetic Laplacian. Terms are reported squared so that
    every term is quadratic in v.
    """
    theta = np.asarray(theta, float)
    lhs, rhs = [], []
    for v in suite:
        g = v.grid
        vals = v.values
        Pv = conjugated_apply(vals, A, q, 0.0, rho, sign, theta, g, full=True)
        lhs.append(dict(h1=(weighted_norm(vals, 1, rho, g.spacing) / rho) ** 2))
        rhs.append(dict(hm1=weighted_norm(Pv, -1, rho, g.spacing) ** 2))
    return CarlemanReport("negative", lhs, rhs, dict(rho=rho, sign=sign, theta=theta.tolist()))


@dataclass(frozen=True)
class TestField:
    __test__ = False  # not a pytest class

    values: np.ndarray
    grid: object


def random_suite(grid, n, rho, seed, theta=(1.0, 0.0), boundary=True, modulate=True):
    """n random test fields: product of a smooth bump envelope, a boundary factor and e^{i rho x3}.

    The boundary factor vanishes on the boundary of omega (1 - |x'|^2 / R^2 on
    a disk, product of edge distances on a convex polygon), so fields lie in
    H^1_0 with nonzero normal derivative. ``boundary=False`` keeps the
    envelopes strictly inside omega instead. The axial modulation e^{i rho x3}
    (direction orthogonal to theta) keeps the suite near the characteristic
    set of the conjugated operator, which is where the estimates are sharp.
    """
    rng = np.random.default_rng(seed)
    X, Y, Z = grid.coords()
    cs = grid.cs
    factor = _boundary_factor(cs, X, Y) if boundary else 1.0
    suite = []
    for _ in range(n):
        if boundary:
            c = rng.uniform(-0.4, 0.4, 2) * cs.R
            wt = rng.uniform(0.3, 0.6) * cs.R
            env = np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2) / (2 * wt**2))
        else:
            c = rng.uniform(-0.2, 0.2, 2) * cs.R
            a = rng.uniform(0.3, 0.5) * cs.R
            r = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2)
            t = np.clip(r / a, 0, 1)
            env = np.where(t < 1, np.exp(1 - 1 / np.maximum(1 - t**2, 1e-300)), 0.0)
        c3 = rng.uniform(-0.1, 0.1) * grid.L
        w3 = rng.uniform(0.12, 0.2) * grid.L
        t3 = np.clip(np.abs(Z - c3) / (0.9 * grid.L - abs(c3)), 0, 1)
        ax = np.where(t3 < 1, np.exp(-((Z - c3) ** 2) / (2 * w3**2)) * np.exp(1 - 1 / np.maximum(1 - t3**2, 1e-300)), 0.0)
        vals = env * factor * ax * (np.exp(1j * rho * Z) if modulate else 1.0)
        vals = vals * (1 if boundary else grid.mask)
        suite.append(TestField(np.asarray(vals, dtype=complex), grid))
    return suite


def _boundary_factor(cs, X, Y):
    """Smooth function positive in omega and vanishing on its boundary (disk or convex polygon)."""
    mid = cs.midpoints
    nrm = cs.normals
    dist = np.abs(np.linalg.norm(cs.vertices, axis=1) - cs.R)
    if np.max(dist) < 1e-9 * cs.R and cs.n_segments >= 32:
        return 1.0 - (X**2 + Y**2) / cs.R**2
    out = np.ones_like(X)
    for m, n in zip(mid, nrm):
        out = out * ((m[0] - X) * n[0] + (m[1] - Y) * n[1])
    return out
