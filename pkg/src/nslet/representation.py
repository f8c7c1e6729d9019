"""Velocity representations built from the fundamental solutions.

Covers the initial-value convolution, single-layer potentials over
spherinders, force impulses, the Eulerlet continuation step with its
Cauchy-Schwarz bound, and sampled divergence-free initial data.

Grids are cell centred: node ``(a, b, c)`` sits at
``origin + spacing * (a, b, c)`` and represents a cell of volume
``prod(spacing)``, so volume integrals are midpoint sums.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from nslet._parallel import ordered_map
from nslet.geometry import SpherinderSurface, ball_rule, sphere_rule, spherinder_rule, time_rule
from nslet.kernels import (
    eulerlet_tensor,
    nslet_tensor,
    oseenlet_tensor,
    pressure_profile,
    stokeslet_tensor,
)

# relative tail level accepted on the outermost grid layer
TAIL_TOL = 1e-6
_CHUNK = 1 << 16


@dataclass(frozen=True)
class GridSpec:
    origin: tuple
    spacing: tuple
    dims: tuple

    def __post_init__(self):
        o = tuple(float(v) for v in np.broadcast_to(self.origin, 3))
        h = tuple(float(v) for v in np.broadcast_to(self.spacing, 3))
        d = tuple(int(v) for v in np.broadcast_to(self.dims, 3))
        if min(h) <= 0:
            raise ValueError(f"grid spacing must be positive, got {h}")
        if min(d) < 1:
            raise ValueError(f"grid dims must be >= 1, got {d}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "dims", d)

    @classmethod
    def cell_centred(cls, lo, hi, n):
        """Grid of n^3 cells covering the box [lo, hi]^3 (or per-axis arrays)."""
        lo = np.broadcast_to(np.asarray(lo, float), 3)
        hi = np.broadcast_to(np.asarray(hi, float), 3)
        n = np.broadcast_to(np.asarray(n, int), 3)
        h = (hi - lo) / n
        return cls(tuple(lo + h / 2), tuple(h), tuple(n))

    @property
    def size(self):
        return int(np.prod(self.dims))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.dims)]

    def points(self):
        """All nodes as an (N, 3) array, x3 varying fastest."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def lower(self):
        return np.asarray(self.origin)

    def upper(self):
        return np.asarray(self.origin) + np.asarray(self.spacing) * (np.asarray(self.dims) - 1)


@dataclass(frozen=True)
class SampledField:
    """Vector field on a regular grid at a single time."""

    grid: GridSpec
    values: np.ndarray  # dims + (3,)
    time: float = 0.0
    nu: float | None = None
    divergence_free: bool = False
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.dims + (3,):
            raise ValueError(f"values shape {v.shape} does not match grid dims {self.grid.dims}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self):
        return self.values.reshape(-1, 3)

    def points(self):
        return self.grid.points()

    def divergence(self):
        """Central-difference divergence on interior nodes."""
        v = self.values
        h = self.grid.spacing
        return (
            (v[2:, 1:-1, 1:-1, 0] - v[:-2, 1:-1, 1:-1, 0]) / (2 * h[0])
            + (v[1:-1, 2:, 1:-1, 1] - v[1:-1, :-2, 1:-1, 1]) / (2 * h[1])
            + (v[1:-1, 1:-1, 2:, 2] - v[1:-1, 1:-1, :-2, 2]) / (2 * h[2])
        )

    def max_abs(self):
        return float(np.max(np.linalg.norm(self.flat, axis=1)))

    def divergence_ratio(self):
        """max|div u| * h / max|u|, the dimensionless divergence level."""
        m = self.max_abs()
        if m == 0:
            return 0.0
        return float(np.max(np.abs(self.divergence())) * max(self.grid.spacing) / m)

    def boundary_ratio(self):
        """max |u| on the outermost node layer divided by max |u|."""
        m = self.max_abs()
        if m == 0:
            return 0.0
        mag = np.linalg.norm(self.values, axis=-1)
        edge = max(
            np.abs(mag[[0, -1]]).max(),
            np.abs(mag[:, [0, -1]]).max(),
            np.abs(mag[:, :, [0, -1]]).max(),
        )
        return float(edge / m)

    def interpolate(self, points):
        """Trilinear interpolation; raises ValueError outside the grid."""
        if self._interp is None:
            interp = RegularGridInterpolator(self.grid.axes(), self.values, method="linear", bounds_error=True)
            object.__setattr__(self, "_interp", interp)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = self.grid.lower(), self.grid.upper()
        if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
            raise ValueError("interpolation point outside the sampled grid")
        return self._interp(np.clip(pts, lo, hi))


# ---- initial data ----


def gaussian_blob_potential(x, sigma=1.0, amplitude=1.0):
    """Vector potential (0, 0, a exp(-|x|^2 / 2 sigma^2))."""
    a = np.zeros(x.shape)
    a[..., 2] = amplitude * np.exp(-np.sum(x**2, axis=-1) / (2 * sigma**2))
    return a


def gaussian_blob_velocity(x, sigma=1.0, amplitude=1.0, t=0.0, nu=0.0):
    """Closed-form curl of the blob potential, heat-widened to s^2 = sigma^2 + 2 nu t."""
    x = np.asarray(x, float)
    s2 = sigma**2 + 2 * nu * t
    psi = amplitude * (sigma**2 / s2) ** 1.5 * np.exp(-np.sum(x**2, axis=-1) / (2 * s2))
    u = np.zeros(x.shape)
    u[..., 0] = -x[..., 1] * psi / s2
    u[..., 1] = x[..., 0] * psi / s2
    return u


def _discrete_curl(grid, potential):
    """Central-difference curl of a potential sampled with one ghost layer."""
    h = np.asarray(grid.spacing)
    ghost = GridSpec(tuple(np.asarray(grid.origin) - h), grid.spacing, tuple(np.asarray(grid.dims) + 2))
    A = potential(ghost.points()).reshape(ghost.dims + (3,))

    def d(comp, axis):
        f = A[..., comp]
        sl_p = [slice(1, -1)] * 3
        sl_m = [slice(1, -1)] * 3
        sl_p[axis] = slice(2, None)
        sl_m[axis] = slice(None, -2)
        return (f[tuple(sl_p)] - f[tuple(sl_m)]) / (2 * h[axis])

    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)], axis=-1)


def make_divfree_field(kind, grid, sigma=1.0, amplitude=1.0, potential=None, method="discrete", nu=None):
    """Sample u = curl A on ``grid``.

    ``kind`` is "gaussian_blob" (A = (0, 0, a exp(-r^2/2 sigma^2))) or
    "custom" (``potential`` maps (N, 3) points to (N, 3) values).  The
    default ``method="discrete"`` takes the central-difference curl of the
    sampled potential, which is divergence free to rounding under the same
    central-difference divergence.  ``method="analytic"`` samples the
    closed-form curl of the blob instead.
    """
    if kind in ("gaussian_blob", "gaussian-vortex-blob"):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        # at least 6 nodes across the blob core diameter 2 sigma
        if 2 * sigma / max(grid.spacing) < 6:
            raise ValueError(f"grid too coarse for sigma={sigma}: spacing {max(grid.spacing)}")

        def pot(x):
            return gaussian_blob_potential(x, sigma, amplitude)

    elif kind in ("custom", "custom-potential"):
        if potential is None:
            raise ValueError("custom fields need a potential callable")
        if method == "analytic":
            raise ValueError("analytic sampling is only available for the gaussian blob")
        pot = potential
    else:
        raise ValueError(f"unknown field kind {kind!r}")

    if method == "discrete":
        values = _discrete_curl(grid, pot)
    elif method == "analytic":
        values = gaussian_blob_velocity(grid.points(), sigma, amplitude).reshape(grid.dims + (3,))
    else:
        raise ValueError(f"unknown method {method!r}")
    return SampledField(grid, values, time=0.0, nu=nu, divergence_free=True)


# ---- initial-value problem ----


def _queries(query):
    q = np.atleast_2d(np.asarray(query, dtype=float))
    if q.shape[1] != 4:
        raise ValueError("queries are (t, x1, x2, x3) rows")
    return q


def _check_ivp_field(u0, tail_tol, require_divfree):
    if require_divfree and not u0.divergence_free:
        raise ValueError("initial field is not labelled divergence free")
    ratio = u0.boundary_ratio()
    if ratio > tail_tol:
        raise ValueError(f"grid too small: boundary/peak ratio {ratio:.3g} exceeds {tail_tol:.3g}")


def _convolve(u0, x, t, kernel, grad=False):
    """-sum_nodes u0_i(x') K_ki(x - x', t) h^3 over the nonzero nodes of u0."""
    vals = u0.flat
    live = np.flatnonzero(np.any(vals != 0, axis=1))
    out = np.zeros((3, 3)) if grad else np.zeros(3)
    if len(live) == 0:
        return out
    pts = u0.points()
    dV = u0.grid.cell_volume
    for start in range(0, len(live), _CHUNK):
        idx = live[start : start + _CHUNK]
        dx = x - pts[idx]
        if grad:
            _, g = kernel(dx, t, grad=True)
            out -= np.einsum("qk,qkij->ij", vals[idx], g) * dV
        else:
            out -= np.einsum("qk,qki->i", vals[idx], kernel(dx, t)) * dV
    return out


def ivp_velocity(u0, query, nu, order=0, correction=None, workers=None, tail_tol=TAIL_TOL, require_divfree=True):
    """u_k(x, t) = -int u0_i(x') u_ki(x - x', t) dV' by the midpoint rule.

    ``query`` is one (t, x1, x2, x3) row or an array of rows; returns (3,)
    or (n, 3) accordingly.  ``order`` selects the truncated NSlet series.
    """
    q = _queries(query)
    if np.any(q[:, 0] <= 0):
        raise ValueError("query times must be positive")
    if not nu > 0:
        raise ValueError("nu must be positive")
    _check_ivp_field(u0, tail_tol, require_divfree)

    def kernel(dx, t, grad=False):
        return nslet_tensor(dx, t, nu, order=order, correction=correction)

    def one(row):
        return _convolve(u0, row[1:], row[0], kernel)

    out = np.array(ordered_map(one, q, workers))
    return out[0] if np.ndim(query) == 1 else out


def ivp_velocity_gradient(u0, query, nu, workers=None, tail_tol=TAIL_TOL, require_divfree=True):
    """Order-0 gradient u_i,j of the initial-value convolution; (n, 3, 3)."""
    q = _queries(query)
    if np.any(q[:, 0] <= 0):
        raise ValueError("query times must be positive")
    _check_ivp_field(u0, tail_tol, require_divfree)

    def kernel(dx, t, grad=False):
        return stokeslet_tensor(dx, t, nu, grad=grad)

    def one(row):
        return _convolve(u0, row[1:], row[0], kernel, grad=True)

    return np.array(ordered_map(one, q, workers))


def force_impulse_initial(u0):
    """J_i = -int u0_i dV by the midpoint rule."""
    return -u0.flat.sum(axis=0) * u0.grid.cell_volume


def pressure_impulse(u0, x):
    """Weight of the delta(t) pressure pulse of the convolution at points ``x``.

    Pi(x) = -int u0_k(x') (1/4 pi)[1/R]_{,k}(x - x') dV'; it vanishes for
    divergence-free data (up to the tail of the grid).
    """
    x = np.atleast_2d(np.asarray(x, float))
    pts = u0.points()
    vals = u0.flat
    dV = u0.grid.cell_volume
    out = np.zeros(len(x))
    for n, xi in enumerate(x):
        out[n] = -np.einsum("qk,qk->", vals, pressure_profile(xi - pts)) * dV
    return out


def force_impulse_boundary(u0, radius, T, nu, orders=(16, 8), workers=None):
    """Force impulse through the spherinder B(0, radius) x [0, T].

    Momentum balance of the convolution flow over the spherinder: the
    end-cap momentum, the delta(t) pressure pulse on the lateral wall and
    the viscous lateral flux together equal the momentum on the start cap,
    so the returned impulse matches :func:`force_impulse_initial` when the
    ball contains the support of ``u0``.  ``u0`` need not be solenoidal.
    """
    s_order, t_order = orders
    ball = ball_rule(radius, s_order)
    q = np.column_stack([np.full(len(ball), T), ball.x])
    uT = ivp_velocity(u0, q, nu, workers=workers, require_divfree=False)
    end_cap = ball.integrate(uT)

    sph = sphere_rule(radius, s_order)
    n = sph.normals[:, 1:]
    pulse = sph.integrate(pressure_impulse(u0, sph.x)[:, None] * n)

    tn, tw = time_rule(0.0, T, t_order)
    visc = np.zeros(3)
    for tq, wq in zip(tn, tw):
        rows = np.column_stack([np.full(len(sph), tq), sph.x])
        g = ivp_velocity_gradient(u0, rows, nu, workers=workers, require_divfree=False)
        visc += wq * sph.integrate(np.einsum("qij,qj->qi", g, n))
    return -(end_cap + pulse - nu * visc)


# ---- single-layer potentials ----


@dataclass(frozen=True)
class SurfaceDensity:
    """Vector density F_i sampled at the nodes of a spherinder rule."""

    surface: SpherinderSurface
    samples: np.ndarray  # (n, 3)
    spatial_order: int = 12
    time_order: int = 8
    func: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != (len(self.rule), 3):
            raise ValueError(f"expected {len(self.rule)} samples, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("density samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def rule(self):
        return spherinder_rule(self.surface, self.spatial_order, self.time_order)

    @classmethod
    def from_function(cls, surface, F, spatial_order=12, time_order=8):
        rule = spherinder_rule(surface, spatial_order, time_order)
        return cls(surface, np.asarray(F(rule.nodes), float), spatial_order, time_order, F)

    def coarsened(self):
        """The same density on the half-order rule (needs ``func``)."""
        if self.func is None:
            raise ValueError("density has no generating function")
        return SurfaceDensity.from_function(
            self.surface, self.func, max(2, self.spatial_order // 2), max(2, self.time_order // 2)
        )

    def node_spacing(self):
        n_phi = self.spatial_order + 1
        n_t = max(1, (self.time_order + 2) // 2)
        return max(2 * np.pi * self.surface.radius / n_phi, self.surface.duration / n_t)

    def abs_integral(self):
        """int |F| d sigma over the surface."""
        return float(self.rule.integrate(np.linalg.norm(self.samples, axis=1)))


KERNELS = ("eulerlet", "stokeslet", "oseenlet", "nslet")


def _kernel_fn(kernel, nu, U, correction, order):
    if kernel == "eulerlet":
        return lambda dx, tau: eulerlet_tensor(dx, tau)
    if nu is None or not nu > 0:
        raise ValueError(f"kernel {kernel!r} needs nu > 0")
    if kernel == "stokeslet":
        return lambda dx, tau: stokeslet_tensor(dx, tau, nu)
    if kernel == "oseenlet":
        if U is None:
            raise ValueError("oseenlet needs a frame velocity U")
        return lambda dx, tau: oseenlet_tensor(dx, tau, nu, U)
    if kernel == "nslet":
        return lambda dx, tau: nslet_tensor(dx, tau, nu, order=order, correction=correction)
    raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNELS}")


def _cap_point_atoms(density, row):
    """Eulerlet point atom -H(tau) delta(x - x') on the caps: -F(t_cap, x)."""
    s = density.surface
    if np.linalg.norm(row[1:] - s.c) >= s.radius:
        return np.zeros(3)
    out = np.zeros(3)
    for on, tcap in zip(s.caps, (s.t_start, s.t_end)):
        if on and row[0] > tcap:
            if density.func is None:
                raise ValueError("the Eulerlet point atom fires on a cap; the density needs a generating function")
            out -= np.asarray(density.func(np.array([[tcap, *row[1:]]])), float)[0]
    return out


def single_layer_velocity(density, kernel, queries, nu=None, U=None, correction=None, order=0, workers=None):
    """u_k(x, t) = int F_i(x', t') u_ki(x - x', t - t') d sigma'.

    Queries closer than one node spacing to the surface are rejected, so
    no kernel singularity lies on a quadrature node.  For the Eulerlet, the
    point atom fires when the query sits above a cap ball in space and
    after the cap in time; it is evaluated from ``density.func``.
    """
    q = _queries(queries)
    fn = _kernel_fn(kernel, nu, U, correction, order)
    spacing = density.node_spacing()
    for row in q:
        if density.surface.distance(row) < spacing:
            raise ValueError(f"query {row.tolist()} lies within one node spacing of the surface")
    rule = density.rule
    Fw = density.samples * rule.weights[:, None]
    live = np.flatnonzero(np.any(Fw != 0, axis=1))

    def one(row):
        out = np.zeros(3)
        if len(live):
            dx = row[1:] - rule.x[live]
            tau = row[0] - rule.t[live]
            out += np.einsum("qk,qki->i", Fw[live], fn(dx, tau))
        if kernel == "eulerlet":
            out += _cap_point_atoms(density, row)
        return out

    out = np.array(ordered_map(one, q, workers))
    return out[0] if np.ndim(queries) == 1 else out


# ---- Eulerlet continuation ----


def lateral_surface(x, t, eps=0.05, dt=0.05):
    """The curved wall of the spherinder B(x, eps) x [t - dt, t]."""
    return SpherinderSurface(center=tuple(np.asarray(x, float)), radius=eps, t_start=t - dt, t_end=t, caps=(False, False))


def _step(prev, densities, probes, eps, dt):
    out = np.array(prev, dtype=float, copy=True)
    for n, (dens, row) in enumerate(zip(densities, probes)):
        s = dens.surface
        if any(s.caps):
            raise ValueError("continuation densities live on the lateral wall only")
        if not (np.isclose(s.radius, eps) and np.isclose(s.duration, dt)):
            raise ValueError("density surface does not match eps and dt")
        if not (np.allclose(s.c, row[1:]) and np.isclose(s.t_end, row[0])):
            raise ValueError("density surface is not centred on its probe")
        rule = dens.rule
        dx = row[1:] - rule.x
        tau = row[0] - rule.t
        out[n] += np.einsum("q,qk,qki->i", rule.weights, dens.samples, eulerlet_tensor(dx, tau))
    return out


def continuation_step(prev, densities, probes, eps=0.05, dt=0.05, with_error=False):
    """u_k(x, t) = u_k(x, t - dt) + int F_i u^E_ki d sigma' on each probe's wall.

    ``probes`` are (t, x) rows, ``prev`` the (n, 3) velocities at t - dt and
    ``densities`` one lateral-wall :class:`SurfaceDensity` per probe.  With
    ``with_error`` the densities are re-sampled at half order and the
    difference is returned as an error estimate.
    """
    if not (eps > 0 and dt > 0):
        raise ValueError("eps and dt must be positive")
    probes = _queries(probes)
    prev = np.atleast_2d(np.asarray(prev, dtype=float))
    if len(densities) != len(probes) or prev.shape != (len(probes), 3):
        raise ValueError("need one density and one previous velocity per probe")
    out = _step(prev, densities, probes, eps, dt)
    if not with_error:
        return out
    coarse = _step(prev, [d.coarsened() for d in densities], probes, eps, dt)
    return out, np.abs(out - coarse)


def eulerlet_norm_max(eps):
    """max over the lateral wall of the spectral norm of u^E (= 2 / (4 pi eps^3))."""
    return 2.0 / (4.0 * np.pi * eps**3)


def velocity_bound(prev_bound, abs_density_integral, eulerlet_max, f_eps=0.0):
    """Cauchy-Schwarz continuation bound on |u|."""
    for name, v in (
        ("prev_bound", prev_bound),
        ("abs_density_integral", abs_density_integral),
        ("eulerlet_max", eulerlet_max),
        ("f_eps", f_eps),
    ):
        if v < 0:
            raise ValueError(f"{name} must be non-negative, got {v}")
    return prev_bound + abs_density_integral * eulerlet_max * (1.0 + f_eps)


# ---- PDE residual ----


def pde_residual(provider, point, nu, h=1e-3, linearized=False, domain=None):
    """Central-difference Navier-Stokes residual u_,0 + u.grad u + grad p - nu lap u.

    ``provider(points)`` maps (n, 4) space-time rows to ``(u, p)`` with
    shapes (n, 3) and (n,).  ``domain`` is an optional ``(lo, hi)`` pair of
    4-vectors bounding where the provider may be evaluated.
    """
    P = np.asarray(point, dtype=float).reshape(4)
    offsets = [np.zeros(4)]
    for a in range(4):
        for s in (1, -1):
            e = np.zeros(4)
            e[a] = s * h
            offsets.append(e)
    pts = P + np.array(offsets)
    if domain is not None:
        lo, hi = (np.asarray(v, float) for v in domain)
        if np.any(pts < lo) or np.any(pts > hi):
            raise ValueError("finite-difference stencil leaves the provider's domain")
    u, p = provider(pts)
    u = np.asarray(u, float)
    p = np.asarray(p, float)
    u0 = u[0]
    d_u = [(u[1 + 2 * a] - u[2 + 2 * a]) / (2 * h) for a in range(4)]
    d_p = [(p[1 + 2 * a] - p[2 + 2 * a]) / (2 * h) for a in range(1, 4)]
    lap = sum((u[1 + 2 * a] - 2 * u0 + u[2 + 2 * a]) / h**2 for a in range(1, 4))
    res = d_u[0] + np.array(d_p) - nu * lap
    if not linearized:
        grad = np.stack(d_u[1:], axis=-1)  # grad[i, j] = u_i,j
        res = res + grad @ u0
    return res
