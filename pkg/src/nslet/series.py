"""First correction of the NSlet series about the Stokeslet.

The correction u^I solves the forced unsteady Stokes problem

    u^I_{ki,0} + p^I_{k,i} - nu u^I_{ki,jj} = F_ki,   F_ki = -u^S_kj u^S_{ki,j},

with zero initial data, so by Duhamel's principle

    u^I_ki(x, t) = -int_0^t ds int F_kl(x', s) u^S_li(x - x', t - s) dV'

(the Stokeslet answers a forcing of -delta).  The forcing grows like
R^-7 towards the origin and is cut to zero inside a ball of radius r_cut.

The curl of the Stokeslet only sees its heat part, so the curl of the
correction is a heat-kernel integral,

    omega_kn(x, t) = int_0^t ds int F_kl(x', s) eps_nml K_{,m}(x - x', t - s) dV',

and obeys omega_{,0} - nu lap omega = curl F with no pressure.  That
equation is the residual check used here.

Spatial quadrature splits F with a smooth bump chi(|x' - x|) about the
target: chi F is integrated in spherical coordinates about the target,
with a radial panel sized to the heat-kernel width so the kernel peak at
small t - s is resolved, and (1 - chi) F lives on origin-centred shells
starting exactly at r_cut, where F jumps.
"""
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from nslet._parallel import ordered_map
from nslet.geometry import _unit_sphere, graded_time_rule
from nslet.kernels import FOUR_PI, _radial_terms
from nslet.representation import GridSpec, SampledField
from nslet.specialfn import gaussian_exp, heat_kernel

R_CUT = 0.5
_EPS = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS[_a, _b, _c] = 1.0
    _EPS[_a, _c, _b] = -1.0


def _stokeslet_scalars(R, tau, nu):
    """a, b with u^S_ki = a d_ki + b x_k x_i, plus K, C, D; tau > 0."""
    s4 = 4.0 * nu * tau
    A, C, D = _radial_terms(R, np.sqrt(s4))
    K = (np.pi * s4) ** -1.5 * gaussian_exp(-(R**2) / s4)
    return -K - A / FOUR_PI, -C / FOUR_PI, K, C, D


def stokeslet_forcing(y, s, nu, r_cut=R_CUT):
    """F_ki(y, s) = -sum_j u^S_kj u^S_{ki,j}, zero for |y| < r_cut; shape (n, 3, 3).

    With u_kj = a d_kj + b y_k y_j and u_{ki,j} = c d_ki y_j
    + e (d_kj y_i + d_ij y_k) + g y_k y_i y_j this collapses to
    F_ki = -(P d_ki y_k + Q y_i + S y_k^2 y_i).
    """
    y = np.atleast_2d(np.asarray(y, float))
    F = np.zeros((len(y), 3, 3))
    r = np.linalg.norm(y, axis=1)
    live = r >= r_cut
    if s <= 0 or not np.any(live):
        return F
    yl, rl = y[live], r[live]
    a, b, K, C, D = _stokeslet_scalars(rl, s, nu)
    c = K / (2.0 * nu * s) - C / FOUR_PI
    e = -C / FOUR_PI
    g = -D / FOUR_PI
    P = a * (c + e) + b * c * rl**2
    Q = a * e
    S = a * g + 2 * b * e + b * g * rl**2
    Fl = -(Q[:, None, None] + S[:, None, None] * yl[:, :, None] ** 2) * yl[:, None, :]
    Fl[:, np.arange(3), np.arange(3)] -= P[:, None] * yl
    F[live] = Fl
    return F


def _smoothstep(z):
    """C-infinity step: 0 for z <= 0, 1 for z >= 1."""
    z = np.clip(z, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)
        g = np.where(z < 1, np.exp(-1.0 / np.where(z < 1, 1.0 - z, 1.0)), 0.0)
    return f / (f + g)


def _gl(n, a, b):
    x, w = leggauss(n)
    h = 0.5 * (b - a)
    return a + h * (x + 1), h * w


@dataclass(frozen=True)
class DuhamelRule:
    """Space-time quadrature settings for the correction integrals."""

    spatial_order: int = 16
    time_order: int = 16
    r_cut: float = R_CUT
    heat_width: float = 6.0  # inner target panel radius in units of sqrt(4 nu tau)

    @property
    def n_radial(self):
        return self.spatial_order // 2 + 2

    def halved(self):
        return DuhamelRule(max(2, self.spatial_order // 2), max(2, self.time_order // 2), self.r_cut, self.heat_width)


class _Integrator:
    """Duhamel quadrature for a batch of targets sharing one time.

    chi F, with chi(|x' - x|) a smooth bump of radius delta, sits in a ball
    about each target.  (1 - chi) F sits on origin-centred shells with the
    polar axis through the target and the distance d = |x' - x| as polar
    variable, so the bump edges, the kernel and the forcing jump at r_cut
    all fall on panel boundaries:  dV = (r d / rho) dr dd dphi.
    """

    def __init__(self, rule, nu, layout, forcing):
        self.rule = rule
        self.nu = nu
        self.forcing = forcing
        gap = np.min(np.linalg.norm(layout, axis=1)) - rule.r_cut
        if gap <= 0:
            raise ValueError("targets must lie outside the cut ball")
        self.delta = 0.5 * gap
        self.dirs, self.wdir = _unit_sphere(rule.spatial_order)
        n_phi = rule.spatial_order + 1
        self.phi = 2 * np.pi * np.arange(n_phi) / n_phi
        self.wphi = np.full(n_phi, 2 * np.pi / n_phi)

    def _chi(self, dist):
        return 1.0 - _smoothstep((dist - 0.5 * self.delta) / (0.5 * self.delta))

    def _ball(self, x, tau):
        n = self.rule.n_radial
        inner = self.rule.heat_width * np.sqrt(4 * self.nu * tau)
        edges = [0.0] + ([inner] if inner < 0.5 * self.delta else []) + [self.delta]
        pieces = [_lin_gl(n, a, b) for a, b in zip(edges[:-1], edges[1:])]
        r = np.concatenate([p[0] for p in pieces])
        w = np.concatenate([p[1] for p in pieces]) * self._chi(r)
        return x + (r[:, None, None] * self.dirs[None]).reshape(-1, 3), np.outer(w, self.wdir).ravel()

    def _shells(self, x):
        """Nodes and weights of the (1 - chi) region for target ``x``."""
        n = self.rule.n_radial
        rho = float(np.linalg.norm(x))
        e3 = x / rho
        helper = np.eye(3)[np.argmin(np.abs(e3))]
        e1 = np.cross(e3, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(e3, e1)
        d1, d2 = 0.5 * self.delta, self.delta
        far = rho + d2
        r_edges = [self.rule.r_cut, rho - d2, rho - d1, rho + d1, rho + d2, 4 * far]
        pieces = [_log_dr(n, r_edges[0], r_edges[1])]
        pieces += [_gl(n, lo, hi) for lo, hi in zip(r_edges[1:-1], r_edges[2:])]
        pieces.append(_log_dr(n, 4 * far, 64 * far))
        r = np.concatenate([p[0] for p in pieces])
        wr = np.concatenate([p[1] for p in pieces])
        xs, wts = [], []
        cphi, sphi = np.cos(self.phi), np.sin(self.phi)
        for rq, wq in zip(r, wr):
            lo = max(abs(rq - rho), d1)
            hi = rq + rho
            edges = [lo] + ([d2] if lo < d2 < hi else []) + [hi]
            dd = np.concatenate([_gl(n, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
            wd = np.concatenate([_gl(n, a, b)[1] for a, b in zip(edges[:-1], edges[1:])])
            ct = (rq**2 + rho**2 - dd**2) / (2 * rq * rho)
            st = np.sqrt(np.clip(1 - ct**2, 0.0, None))
            radial = rq * (ct[:, None] * e3)[:, None, :]
            ring = (cphi[:, None] * e1 + sphi[:, None] * e2)[None, :, :]
            xs.append((radial + rq * st[:, None, None] * ring).reshape(-1, 3))
            wdd = wq * rq * dd / rho * wd * (1.0 - self._chi(dd))
            wts.append(np.outer(wdd, self.wphi).ravel())
        return np.concatenate(xs), np.concatenate(wts)

    def _kernel_sum(self, x, xp, w, F, tau, curl):
        dx = x - xp
        R = np.linalg.norm(dx, axis=1)
        if curl:
            # eps_nml F_kl K_{,m} = (grad K x F_k)_n
            gK = -(heat_kernel(R, tau, self.nu) / (2 * self.nu * tau))[:, None] * dx
            return np.einsum("q,qkn->kn", w, np.cross(gK[:, None, :], F))
        a, b = _stokeslet_scalars(R, tau, self.nu)[:2]
        Fd = np.einsum("qkl,ql->qk", F, dx)
        return -(np.einsum("q,qki->ki", w * a, F) + np.einsum("q,qk,qi->ki", w * b, Fd, dx))

    def evaluate(self, targets, t, curl=False, workers=None):
        """u^I (or omega when ``curl``) at every target; (n, 3, 3)."""
        targets = np.atleast_2d(targets)
        if t <= 0:
            return np.zeros((len(targets), 3, 3))
        # the forcing near the cut switches on over s ~ r_cut^2 / (4 nu)
        scale = self.rule.r_cut**2 / (4 * self.nu)
        sn, sw = graded_time_rule(0.0, t, self.rule.time_order, scale, resolve=4.0)

        def one(x):
            xo, wo = self._shells(x)
            acc = np.zeros((3, 3))
            for s, ws in zip(sn, sw):
                tau = t - s
                xb, wb = self._ball(x, tau)
                acc += ws * self._kernel_sum(x, xo, wo, self.forcing(xo, s), tau, curl)
                acc += ws * self._kernel_sum(x, xb, wb, self.forcing(xb, s), tau, curl)
            return acc

        return np.array(ordered_map(one, targets, workers))


def _lin_gl(n, a, b):
    r, w = _gl(n, a, b)
    return r, w * r**2


def _log_dr(n, a, b):
    lr, lw = _gl(n, np.log(a), np.log(b))
    r = np.exp(lr)
    return r, lw * r


def _log_gl(n, a, b):
    lr, lw = _gl(n, np.log(a), np.log(b))
    r = np.exp(lr)
    return r, lw * r**3


def _default_forcing(nu, r_cut):
    return lambda y, s: stokeslet_forcing(y, s, nu, r_cut)


def correction_velocity(x, t, nu, rule=None, forcing=None, workers=None):
    """u^I at points ``x`` (n, 3) and time ``t``; returns (n, 3, 3)."""
    rule = rule or DuhamelRule()
    x = np.atleast_2d(np.asarray(x, float))
    forcing = forcing or _default_forcing(nu, rule.r_cut)
    return _Integrator(rule, nu, x, forcing).evaluate(x, t, workers=workers)


def correction_curl(x, t, nu, rule=None, forcing=None, workers=None, layout=None):
    """omega = curl of u^I at points ``x`` and time ``t``; (n, 3, 3) [point, k, n].

    ``layout`` fixes the quadrature geometry from another point set, so
    evaluations on a finite-difference stencil share identical nodes.
    """
    rule = rule or DuhamelRule()
    x = np.atleast_2d(np.asarray(x, float))
    forcing = forcing or _default_forcing(nu, rule.r_cut)
    integ = _Integrator(rule, nu, x if layout is None else np.atleast_2d(layout), forcing)
    return integ.evaluate(x, t, curl=True, workers=workers)


def _forcing_curl(x, t, nu, h, forcing):
    """(curl F)_kn = eps_nml F_kl,m by 4th-order central differences."""
    c = np.array([1.0, -8.0, 8.0, -1.0]) / (12 * h)
    steps = np.array([-2, -1, 1, 2]) * h
    dF = np.zeros((3, 3, 3))  # [k, l, m]
    for m in range(3):
        pts = np.tile(x, (4, 1))
        pts[:, m] += steps
        Fs = forcing(pts, t)
        dF[:, :, m] = np.einsum("s,skl->kl", c, Fs)
    return np.einsum("nml,klm->kn", _EPS, dF)


def curl_residual(x, t, nu, rule=None, h=0.05, forcing=None, workers=None):
    """Residual omega_,0 - nu lap omega - curl F at points ``x``; (n, 3, 3).

    omega is evaluated by quadrature on a 4th-order finite-difference
    stencil of half-width 2h in every space-time direction.
    """
    rule = rule or DuhamelRule()
    x = np.atleast_2d(np.asarray(x, float))
    if t - 2 * h <= 0:
        raise ValueError("time stencil reaches t <= 0; reduce h")
    forcing = forcing or _default_forcing(nu, rule.r_cut)
    c1 = np.array([1.0, -8.0, 8.0, -1.0]) / (12 * h)
    c2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * h**2)
    offs = np.array([-2, -1, 1, 2]) * h
    out = np.zeros((len(x), 3, 3))
    for n, p in enumerate(x):
        space = [p]
        for m in range(3):
            for o in offs:
                q = p.copy()
                q[m] += o
                space.append(q)
        space = np.array(space)
        w_s = correction_curl(space, t, nu, rule, forcing, workers, layout=space)
        w_t = np.array([correction_curl(p[None], t + o, nu, rule, forcing, layout=space)[0] for o in offs])
        dt = np.einsum("s,skn->kn", c1, w_t)
        lap = np.zeros((3, 3))
        for m in range(3):
            ring = w_s[1 + 4 * m : 5 + 4 * m]
            lap += np.einsum("s,skn->kn", c2, np.concatenate([ring[:2], w_s[:1], ring[2:]]))
        out[n] = dt - nu * lap - _forcing_curl(p, t, nu, h, forcing)
    return out


@dataclass(frozen=True)
class CorrectionField:
    """u^I_ki sampled on a grid of separations at a single time."""

    grid: GridSpec
    values: np.ndarray  # dims + (3, 3), [..., k, i]
    time: float
    nu: float
    rule: DuhamelRule
    metadata: dict = field(default_factory=dict)

    def fields(self):
        """One SampledField per force direction k."""
        return [SampledField(self.grid, self.values[..., k, :], self.time, self.nu) for k in range(3)]

    def interpolate(self, dx, tau):
        """Trilinear u^I at separations ``dx`` (n, 3) and lag ``tau``; (n, 3, 3)."""
        dx = np.atleast_2d(np.asarray(dx, float))
        tau = np.broadcast_to(np.asarray(tau, float), (len(dx),))
        past = tau <= 0
        out = np.zeros((len(dx), 3, 3))
        if np.all(past):
            return out
        if not np.allclose(tau[~past], self.time, rtol=1e-12, atol=1e-12):
            raise ValueError(f"correction is stored at t = {self.time} only")
        for k, f in enumerate(self.fields()):
            out[~past, k, :] = f.interpolate(dx[~past])
        return out


def _box_distance(grid):
    lo, hi = grid.lower(), grid.upper()
    nearest = np.clip(0.0, lo, hi)
    return float(np.linalg.norm(nearest))


def nslet_correction(box, nu, t_max, orders=(16, 16), r_cut=R_CUT, forcing=None, residual_probes=None, workers=None):
    """Tabulate the first correction u^I on ``box`` at time ``t_max``.

    ``orders = (spatial, time)``.  The box of separations must stay clear
    of the cut ball.  Unless ``residual_probes`` is an empty list, the curl
    residual is evaluated at the given points (default: the box node
    farthest from the origin) at full and half order; the field is flagged
    non-converged when the residual exceeds 10x their difference.
    """
    if not nu > 0:
        raise ValueError("nu must be positive")
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    if _box_distance(box) <= r_cut:
        raise ValueError(f"grid intersects the cut ball of radius {r_cut}")
    rule = DuhamelRule(int(orders[0]), int(orders[1]), r_cut)
    forcing_fn = forcing or _default_forcing(nu, r_cut)
    pts = box.points()
    if t_max == 0:
        vals = np.zeros((len(pts), 3, 3))
    else:
        vals = correction_velocity(pts, t_max, nu, rule, forcing_fn, workers)
    meta = {"orders": [rule.spatial_order, rule.time_order], "r_cut": r_cut, "t": t_max}
    if t_max > 0 and residual_probes != []:
        probes = residual_probes
        if probes is None:
            probes = pts[[np.argmax(np.linalg.norm(pts, axis=1))]]
        meta.update(residual_report(probes, t_max, nu, rule, forcing_fn, workers=workers))
    return CorrectionField(box, vals.reshape(box.dims + (3, 3)), float(t_max), float(nu), rule, meta)


def residual_report(probes, t, nu, rule, forcing=None, h=None, workers=None):
    """Curl-residual norms at full and half order plus a convergence flag."""
    probes = np.atleast_2d(np.asarray(probes, float))
    h = h if h is not None else min(0.05, t / 4)
    full = curl_residual(probes, t, nu, rule, h, forcing, workers)
    half = curl_residual(probes, t, nu, rule.halved(), h, forcing, workers)
    r_full = float(np.linalg.norm(full))
    r_half = float(np.linalg.norm(half))
    est = abs(r_full - r_half)
    return {
        "residual": r_full,
        "residual_half_order": r_half,
        "estimated_error": est,
        "converged": bool(r_full <= 10 * est) or r_full == 0.0,
    }
