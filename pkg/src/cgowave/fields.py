"""Grid fields, synthetic potentials, the scaled mollifier and weighted norms."""

from dataclasses import dataclass
from functools import lru_cache
import csv
import struct
import warnings

import numpy as np
from scipy import fft as sfft
from scipy import integrate, ndimage


@dataclass(frozen=True)
class ScalarField:
    """Complex (or real) values on the full box of ``grid``, zero outside omega."""

    values: np.ndarray
    grid: object

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError("field shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")


@dataclass(frozen=True)
class VectorPotential:
    """Three real components on the box; vanishes outside the ball (center, radius)."""

    values: np.ndarray  # (3, nx, ny, nz)
    grid: object
    center: np.ndarray
    radius: float

    @property
    def axial_radius(self):
        return float(abs(self.center[2]) + self.radius)

    def sup(self):
        return float(np.max(np.linalg.norm(self.values, axis=0)))

    def dot(self, vec):
        """Pointwise vec . A for a constant (possibly complex) 3-vector."""
        return np.tensordot(np.asarray(vec), self.values, axes=(0, 0))

    def __add__(self, other):
        return _combine(self, other, 1.0, 1.0)

    def __sub__(self, other):
        return _combine(self, other, 1.0, -1.0)

    def scaled(self, alpha):
        return VectorPotential(alpha * self.values, self.grid, self.center, self.radius)


def _combine(a, b, sa, sb):
    if a.grid is not b.grid and a.grid.shape != b.grid.shape:
        raise ValueError("potentials live on different grids")
    lo = np.minimum(a.center - a.radius, b.center - b.radius)
    hi = np.maximum(a.center + a.radius, b.center + b.radius)
    center = 0.5 * (lo + hi)
    return VectorPotential(sa * a.values + sb * b.values, a.grid, center, float(0.5 * np.max(hi - lo) * np.sqrt(3)))


def zero_potential(grid):
    return VectorPotential(np.zeros((3,) + grid.shape), grid, np.zeros(3), 0.0)


# ---------------------------------------------------------------------------
# smooth compact bump and synthetic generators


def bump(r, a):
    """exp(1 - 1/(1 - (r/a)^2)) for r < a, else 0; equals 1 at r = 0."""
    t = np.asarray(r, dtype=float) / a
    out = np.zeros_like(t)
    m = t < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - t[m] ** 2))
    return out


def bump_dr(r, a):
    """Radial derivative of :func:`bump`."""
    t = np.asarray(r, dtype=float) / a
    out = np.zeros_like(t)
    m = t < 1
    s = 1.0 - t[m] ** 2
    out[m] = np.exp(1.0 - 1.0 / s) * (-2.0 * t[m] / s**2) / a
    return out


def bump_gradient(X, Y, Z, center, a):
    """Cartesian gradient of bump(|x - center|, a), as a (3, ...) array."""
    d = np.stack([X - center[0], Y - center[1], Z - center[2]])
    r = np.sqrt(np.sum(d * d, axis=0))
    br = bump_dr(r, a)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(r > 0, br / np.where(r > 0, r, 1.0), 0.0)
    return d * g


def _check_support(grid, center, a):
    c = np.asarray(center, dtype=float)
    if a <= 0:
        raise ValueError("support radius must be positive")
    if not grid.cs.contains(c[:2]) or grid.cs.distance_to_boundary(c[:2]) < a:
        raise ValueError("support overflow: ball leaves the cross-section")
    if abs(c[2]) + a > grid.L + 1e-12:
        raise ValueError("support overflow: ball leaves |x3| <= L")


def synth_potential(kind, grid, center=(0.0, 0.0, 0.0), radius=0.5, amplitude=1.0, discrete=False):
    """Sample a synthetic compactly supported field on ``grid``.

    kind:
      ``gaussian-bump``   amplitude * bump(|x-c|) (3-vector amplitude gives a
                          VectorPotential, scalar amplitude a ScalarField)
      ``gradient-field``  A = grad(amplitude * bump); ``discrete=True`` uses the
                          centered difference gradient so the discrete curl is 0
      ``curl-carrier``    A = (0, amplitude * bump * x1, 0), curl_3 = amplitude*(bump + x1 d1 bump)
      ``ball-indicator``  amplitude times the indicator of the ball (Lipschitz-singular test field)
    """
    center = np.asarray(center, dtype=float)
    _check_support(grid, center, radius)
    X, Y, Z = grid.coords()
    r = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2)
    amp = np.asarray(amplitude, dtype=float)
    if kind in ("gaussian-bump", "ball-indicator"):
        prof = bump(r, radius) if kind == "gaussian-bump" else (r < radius).astype(float)
        prof = prof * grid.mask
        if amp.ndim == 0:
            return ScalarField(amp * prof.astype(complex), grid)
        return VectorPotential(amp[:, None, None, None] * prof, grid, center, float(radius))
    if kind == "gradient-field":
        if discrete:
            vals = gradient(float(amp) * bump(r, radius), grid.spacing)
        else:
            vals = float(amp) * bump_gradient(X, Y, Z, center, radius)
        return VectorPotential(vals * grid.mask, grid, center, float(radius) + (grid.hp if discrete else 0.0))
    if kind == "curl-carrier":
        vals = np.zeros((3,) + grid.shape)
        vals[1] = float(amp) * bump(r, radius) * X * grid.mask
        return VectorPotential(vals, grid, center, float(radius))
    raise ValueError(f"unknown potential kind {kind!r}")


def curl_carrier_curl(grid, center, radius, amplitude):
    """Analytic d1 a2 - d2 a1 of the curl-carrier field."""
    X, Y, Z = grid.coords()
    center = np.asarray(center, dtype=float)
    r = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2)
    g = bump_gradient(X, Y, Z, center, radius)
    return amplitude * (bump(r, radius) + X * g[0])


# ---------------------------------------------------------------------------
# finite differences and interpolation on the box (zero extension outside)


def _shift(f, axis, s):
    out = np.zeros_like(f)
    src = [slice(None)] * f.ndim
    dst = [slice(None)] * f.ndim
    if s > 0:
        src[axis], dst[axis] = slice(s, None), slice(None, -s)
    else:
        src[axis], dst[axis] = slice(None, s), slice(-s, None)
    out[tuple(dst)] = f[tuple(src)]
    return out


def diff(f, axis, h):
    """Centered first difference along ``axis`` with zero extension."""
    return (_shift(f, axis, 1) - _shift(f, axis, -1)) / (2 * h)


def diff2(f, axis, h):
    return (_shift(f, axis, 1) - 2 * f + _shift(f, axis, -1)) / h**2


def gradient(f, spacing):
    return np.stack([diff(f, k, spacing[k]) for k in range(3)])


def divergence(A, spacing):
    return sum(diff(A[k], k, spacing[k]) for k in range(3))


def laplacian(f, spacing):
    return sum(diff2(f, k, spacing[k]) for k in range(3))


def curl_components(A, spacing):
    """Dict (j, k) -> d_j a_k - d_k a_j by centered differences (0-based indices)."""
    out = {}
    for j, k in ((0, 1), (0, 2), (1, 2)):
        out[(j, k)] = diff(A[k], j, spacing[j]) - diff(A[j], k, spacing[k])
    return out


def interpolate(values, grid, pts):
    """Trilinear interpolation of box values at points (N, 3); zero outside the box."""
    pts = np.asarray(pts, dtype=float)
    coords = np.stack([
        (pts[:, 0] - grid.x[0]) / grid.hp,
        (pts[:, 1] - grid.y[0]) / grid.hp,
        (pts[:, 2] - grid.z[0]) / grid.h3,
    ])
    kw = dict(order=1, mode="constant", cval=0.0)
    if np.iscomplexobj(values):
        return ndimage.map_coordinates(values.real, coords, **kw) + 1j * ndimage.map_coordinates(values.imag, coords, **kw)
    return ndimage.map_coordinates(values, coords, **kw)


def l2_norm(values, grid):
    """Grid L2 norm (sum over all components) with the cell-volume rule."""
    return float(np.sqrt(grid.cell_volume * np.sum(np.abs(values) ** 2)))


# ---------------------------------------------------------------------------
# mollifier


def _raw_bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    m = r < 1
    out[m] = np.exp(-1.0 / (1.0 - r[m] ** 2))
    return out


@lru_cache(maxsize=None)
def bump_normalization():
    """Constant c making c*exp(-1/(1-|x|^2)) a unit-mass density on R^3."""
    mass, _ = integrate.quad(lambda r: 4 * np.pi * r * r * _raw_bump(r), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return 1.0 / mass


@dataclass(frozen=True)
class Mollifier:
    """chi_rho(x) = rho^{3/4} chi(rho^{1/4} x), supported in |x| < rho^{-1/4}."""

    rho: float
    c: float

    @property
    def radius(self):
        return self.rho ** (-0.25)

    def __call__(self, r):
        return self.c * self.rho**0.75 * _raw_bump(self.rho**0.25 * np.asarray(r, dtype=float))

    def mass(self):
        val, _ = integrate.quad(lambda r: 4 * np.pi * r * r * self(r), 0.0, self.radius, epsabs=1e-14, epsrel=1e-12)
        return val

    def kernel(self, spacing):
        """Discrete kernel on grid offsets, renormalized to unit sum."""
        n = [int(np.floor(self.radius / h)) for h in spacing]
        ax = [h * np.arange(-k, k + 1) for h, k in zip(spacing, n)]
        X, Y, Z = np.meshgrid(*ax, indexing="ij")
        w = self(np.sqrt(X**2 + Y**2 + Z**2))
        s = w.sum()
        if s == 0:
            w[n[0], n[1], n[2]] = 1.0
            s = 1.0
        return w / s


def make_mollifier(rho):
    if rho <= 1:
        raise ValueError("mollifier scale rho must exceed 1")
    return Mollifier(rho=float(rho), c=bump_normalization())


def _support_box(values, margin):
    """Index bounding box of the nonzero entries of the last three axes, grown by margin."""
    nz = np.nonzero(np.any(values != 0, axis=tuple(range(values.ndim - 3))) if values.ndim > 3 else values != 0)
    if len(nz[0]) == 0:
        return None
    shape = values.shape[-3:]
    return tuple(slice(max(int(i.min()) - m, 0), min(int(i.max()) + m + 1, s)) for i, m, s in zip(nz, margin, shape))


def mollify(A, M):
    """Componentwise convolution of A (extended by zero) with the discrete kernel of M."""
    grid = A.grid
    if M.radius < max(grid.hp, grid.h3):
        warnings.warn("under-resolved kernel: mollifier support smaller than grid spacing", RuntimeWarning)
    K = M.kernel(grid.spacing)
    half = [s // 2 for s in K.shape]
    out = np.zeros_like(A.values)
    box = _support_box(A.values, half)
    if box is not None:
        for c in range(3):
            out[c][box] = ndimage.convolve(A.values[c][box], K, mode="constant", cval=0.0)
    return VectorPotential(out, grid, A.center, A.radius + M.radius)


# ---------------------------------------------------------------------------
# semiclassical weighted norms


def weighted_norm(f, m, rho, spacing=None):
    """H^m_rho norm: (sum (|k|^2 + rho^2)^m |f^(k)|^2 dk)^{1/2}.

    ``f`` is a ScalarField or an array (optionally with a leading component
    axis) sampled with ``spacing``. The field is cropped to its support and
    zero-padded to a periodic box twice that size before the transform.
    """
    if isinstance(f, ScalarField):
        spacing, vals = f.grid.spacing, f.values
    else:
        vals = np.asarray(f)
    if int(m) != m or not -2 <= m <= 2:
        raise ValueError("m must be an integer in [-2, 2]")
    comps = vals.reshape((-1,) + vals.shape[-3:])
    box = _support_box(comps, (0, 0, 0))
    if box is None:
        return 0.0
    sub = comps[(slice(None),) + box]
    n = [sfft.next_fast_len(2 * s) for s in sub.shape[1:]]
    F = sfft.fftn(sub, s=n, axes=(1, 2, 3))
    k2 = sum(np.meshgrid(*[(2 * np.pi * sfft.fftfreq(nn, h)) ** 2 for nn, h in zip(n, spacing)], indexing="ij"))
    w = (k2 + rho**2) ** m
    vol = spacing[0] * spacing[1] * spacing[2]
    total = vol / np.prod(n) * np.sum(w * np.sum(np.abs(F) ** 2, axis=0))
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# serialization

_HEADER = struct.Struct("<11d")


def write_field(path, values, grid):
    """Binary layout: 11 little-endian float64 header values then node-major data.

    Header: nx, ny, nz, n_components, is_complex, hx, hy, hz, x0, y0, z0.
    Payload: for each node in C order, each component (real, imag if complex).
    """
    vals = np.asarray(values)
    comps = vals.reshape((-1,) + grid.shape)
    cplx = np.iscomplexobj(vals)
    data = np.moveaxis(comps, 0, -1)
    if cplx:
        data = np.stack([data.real, data.imag], axis=-1)
    header = _HEADER.pack(*grid.shape, comps.shape[0], float(cplx), grid.hp, grid.hp, grid.h3, grid.x[0], grid.y[0], grid.z[0])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_field(path):
    """Inverse of :func:`write_field`; returns (values, header dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    h = _HEADER.unpack_from(raw)
    nx, ny, nz, nc, cplx = (int(v) for v in h[:5])
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    shape = (nx, ny, nz, nc) + ((2,) if cplx else ())
    data = data.reshape(shape)
    if cplx:
        data = data[..., 0] + 1j * data[..., 1]
    values = np.moveaxis(data, -1, 0)
    if nc == 1:
        values = values[0]
    meta = dict(shape=(nx, ny, nz), spacing=h[5:8], origin=h[8:11])
    return values, meta


def write_field_csv(path, values, grid):
    """CSV with columns x, y, z and one (or real/imag pair) column per component, omega nodes only."""
    comps = np.asarray(values).reshape((-1,) + grid.shape)
    cplx = np.iscomplexobj(comps)
    X, Y, Z = grid.coords()
    m = grid.mask
    cols = [X[m], Y[m], Z[m]]
    names = ["x", "y", "z"]
    for c in range(comps.shape[0]):
        if cplx:
            cols += [comps[c].real[m], comps[c].imag[m]]
            names += [f"re{c}", f"im{c}"]
        else:
            cols.append(comps[c][m])
            names.append(f"c{c}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
