"""Flux identities of the fundamental solutions over spherinder boundaries.

Each evaluator splits the flux into an atom part (closed-form contributions
of the delta-type kernel components) and a smooth part (quadrature).
Normals are outward from the spherinder around the kernel origin; pass
``primed=True`` to get the flux over the reflected surface with primed
normals, which flips the sign of every entry.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from nslet.geometry import (
    END_CAP,
    START_CAP,
    SpherinderSurface,
    ball_rule,
    sphere_rule,
    graded_time_rule,
    time_rule,
)
from nslet.kernels import (
    bernoulli_pressure,
    eulerlet_tensor,
    pressure_profile,
    stokeslet_tensor,
)

_EYE = np.eye(3)


@dataclass
class FluxReport:
    matrix: np.ndarray
    atom_part: np.ndarray
    smooth_part: np.ndarray
    orders: tuple
    estimated_error: float
    components: dict = field(default_factory=dict)

    @property
    def quadrature_orders(self):
        return self.orders

    def as_dict(self):
        d = asdict(self)
        for key in ("matrix", "atom_part", "smooth_part"):
            d[key] = np.asarray(d[key]).tolist()
        d["orders"] = list(self.orders)
        d["components"] = {k: np.asarray(v).tolist() for k, v in self.components.items()}
        return d

    def to_json(self, **kw):
        return json.dumps(self.as_dict(), sort_keys=True, **kw)


def _orders(orders):
    if np.isscalar(orders):
        return int(orders), int(orders)
    s, t = orders
    return int(s), int(t)


def _halve(orders):
    s, t = orders
    return max(2, s // 2), max(2, t // 2)


def _origin(origin):
    o = np.asarray(origin, dtype=float).reshape(4)
    return o[0], o[1:]


def _check_encloses(surface, x0):
    if not isinstance(surface, SpherinderSurface):
        raise TypeError("surface must be a SpherinderSurface")
    if np.linalg.norm(surface.c - x0) >= surface.radius:
        raise ValueError("surface does not enclose the kernel origin")


def _rotate(rule, rotation):
    return rule if rotation is None else rule.rotated(rotation)


def _sphere(surface, order, rotation):
    rule = sphere_rule(surface.radius, order)
    rule = _rotate(rule, rotation)
    return rule.x + surface.c, rule.normals[:, 1:], rule.weights


def _caps(surface):
    out = []
    for on, tcap, sign, label in (
        (surface.caps[0], surface.t_start, -1.0, START_CAP),
        (surface.caps[1], surface.t_end, 1.0, END_CAP),
    ):
        if on:
            out.append((tcap, sign, label))
    return out


def _with_error(evaluate, orders):
    full = evaluate(orders)
    coarse = evaluate(_halve(orders))
    err = float(np.max(np.abs(full[0] + full[1] - coarse[0] - coarse[1])))
    atom, smooth, comps = full
    return FluxReport(
        matrix=atom + smooth,
        atom_part=atom,
        smooth_part=smooth,
        orders=orders,
        estimated_error=err,
        components=comps,
    )


def _sign(report, primed):
    if not primed:
        return report
    return FluxReport(
        -report.matrix,
        -report.atom_part,
        -report.smooth_part,
        report.orders,
        report.estimated_error,
        {k: -v for k, v in report.components.items()},
    )


def euler_momentum_flux(surface, orders=24, origin=(0, 0, 0, 0), rotation=None, primed=False):
    """Flux of (u^E_ki n_0 + p^E_k n_i) through the spherinder.

    The dipole on each cap is a pure gradient, so its (distributional) ball
    integral is taken as the flux of -(1/4pi)[1/R]_{,k} through the cap's
    bounding sphere.  Pointwise sampling of the dipole would miss the
    -(4 pi/3) delta_ki delta(x) part of [1/R]_{,ki}.
    """
    t0, x0 = _origin(origin)
    _check_encloses(surface, x0)
    orders = _orders(orders)

    def evaluate(o):
        x, n, w = _sphere(surface, o[0], rotation)
        y = x - x0
        # flux of (1/4pi)[1/R]_{,k} through the sphere: integral of profile_k n_i
        prof = np.einsum("q,qk,qi->ki", w, pressure_profile(y), n)
        point = np.zeros((3, 3))
        dipole = np.zeros((3, 3))
        for tcap, sign, _ in _caps(surface):
            if tcap > t0:
                point += sign * -_EYE
                dipole += sign * -prof
        pressure = prof if surface.t_start < t0 < surface.t_end else np.zeros((3, 3))
        comps = {"point_delta": point, "cap_smooth": dipole, "lateral_pressure": pressure}
        return point + pressure, dipole, comps

    return _sign(_with_error(evaluate, orders), primed)


def _lateral_nodes(surface, o, t0, rotation, scale=0.0):
    """Lateral nodes restricted to the part of the wall with tau > 0.

    A positive ``scale`` grades the time panels towards tau = 0.
    """
    x, n, w = _sphere(surface, o[0], rotation)
    lo = max(surface.t_start, t0)
    if surface.t_end <= lo:
        return None
    if scale > 0 and lo == t0:
        tn, tw = graded_time_rule(lo, surface.t_end, o[1], scale)
    else:
        tn, tw = time_rule(lo, surface.t_end, o[1])
    return x, n, w, tn, tw


def euler_viscous_flux(surface, orders=24, nu=1.0, origin=(0, 0, 0, 0), rotation=None, primed=False):
    """Flux of nu u^E_{ki,j} n_j through the lateral wall."""
    t0, x0 = _origin(origin)
    _check_encloses(surface, x0)
    orders = _orders(orders)

    def evaluate(o):
        out = np.zeros((3, 3))
        lat = _lateral_nodes(surface, o, t0, rotation)
        if lat is not None:
            x, n, w, tn, tw = lat
            for tq, wq in zip(tn, tw):
                _, g = eulerlet_tensor(x - x0, np.full(len(w), tq - t0), grad=True)
                out += wq * nu * np.einsum("q,qkij,qj->ki", w, g, n)
        return np.zeros((3, 3)), out, {"lateral_viscous": out}

    return _sign(_with_error(evaluate, orders), primed)


def bernoulli_integrand(u, n):
    """Pointwise u_kj u_ki n_j + p^B_k n_i for tensors u (q,3,3), normals n (q,3)."""
    un = np.einsum("qkj,qj->qk", u, n)
    return un[:, :, None] * u + bernoulli_pressure(u)[:, :, None] * n[:, None, :]


def euler_bernoulli_flux(surface, orders=24, origin=(0, 0, 0, 0), rotation=None, primed=False):
    """Flux of (u^E_kj u^E_ki n_j + p^B_k n_i); caps carry no spatial normal."""
    t0, x0 = _origin(origin)
    _check_encloses(surface, x0)
    orders = _orders(orders)

    def evaluate(o):
        out = np.zeros((3, 3))
        lat = _lateral_nodes(surface, o, t0, rotation)
        if lat is not None:
            x, n, w, tn, tw = lat
            for tq, wq in zip(tn, tw):
                u = eulerlet_tensor(x - x0, np.full(len(w), tq - t0))
                out += wq * np.einsum("q,qki->ki", w, bernoulli_integrand(u, n))
        return np.zeros((3, 3)), out, {"lateral_bernoulli": out}

    return _sign(_with_error(evaluate, orders), primed)


def stokeslet_total_flux(surface, orders=32, nu=1.0, origin=(0, 0, 0, 0), rotation=None, primed=False):
    """Flux of (u^S_ki n_0 + p^S_k n_i - nu u^S_{ki,j} n_j); target -delta_ki."""
    t0, x0 = _origin(origin)
    _check_encloses(surface, x0)
    orders = _orders(orders)

    def evaluate(o):
        caps = np.zeros((3, 3))
        for tcap, sign, _ in _caps(surface):
            if tcap > t0:
                ball = _rotate(ball_rule(surface.radius, o[0]), rotation)
                u = stokeslet_tensor(ball.x + surface.c - x0, np.full(len(ball), tcap - t0), nu)
                caps += sign * ball.integrate(u)
        x, n, w = _sphere(surface, o[0], rotation)
        if surface.t_start < t0 < surface.t_end:
            pressure = np.einsum("q,qk,qi->ki", w, pressure_profile(x - x0), n)
        else:
            pressure = np.zeros((3, 3))
        visc = np.zeros((3, 3))
        gap = surface.radius - np.linalg.norm(surface.c - x0)
        lat = _lateral_nodes(surface, o, t0, rotation, scale=gap**2 / (4.0 * nu))
        if lat is not None:
            x, n, w, tn, tw = lat
            for tq, wq in zip(tn, tw):
                _, g = stokeslet_tensor(x - x0, np.full(len(w), tq - t0), nu, grad=True)
                visc -= wq * nu * np.einsum("q,qkij,qj->ki", w, g, n)
        comps = {"caps": caps, "lateral_pressure": pressure, "lateral_viscous": visc}
        return pressure, caps + visc, comps

    return _sign(_with_error(evaluate, orders), primed)


def green_identity_near(u, stress, center, R, T=None, orders=16, nu=1.0):
    """Near-point boundary contribution I_delta over a small spherinder.

    ``u(points)`` returns velocities (q, 3) and ``stress(points)`` returns
    (q, 3, 3) stress tensors at space-time rows ``(t, x1, x2, x3)``.  The
    spherinder is centred on ``center = (t, x)`` with spatial radius ``R``
    and time half-width ``T`` (default ``T = R``).  Returns a 3-vector that
    tends to -u(center) as R, T -> 0.  The non-linear potential is omitted.
    """
    t, x = _origin(center)
    if not R > 0:
        raise ValueError("R must be positive")
    T = R if T is None else T
    if not T > 0:
        raise ValueError("T must be positive")
    s_order, t_order = _orders(orders)
    total = np.zeros(3)

    def st(tt, xx):
        pts = np.empty((len(xx), 4))
        pts[:, 0] = tt
        pts[:, 1:] = xx
        return pts

    # start cap t' = t - T (tau = T > 0, outward n'_0 = -1); the end cap has tau < 0
    ball = ball_rule(R, s_order)
    xs = ball.x + x
    u_c = u(st(t - T, x[None]))[0]
    u_b = u(st(t - T, xs))
    E = eulerlet_tensor(x - xs, np.full(len(ball), T))
    pv = np.einsum("q,qi,qki->k", ball.weights, u_b - u_c, E)
    # point atom -delta_ki at x' = x, and the distributional ball integral +1/3 delta_ki
    total += -1.0 * (-u_c + pv + u_c / 3.0)

    sph = sphere_rule(R, s_order)
    xl, nl, wl = sph.x + x, sph.normals[:, 1:], sph.weights
    # time-slice pressure atom on the lateral wall at t' = t
    u_l = u(st(t, xl))
    total += np.einsum("q,qj,qk,qj->k", wl, u_l, pressure_profile(x - xl), nl)

    tn, tw = time_rule(t - T, t, t_order)
    for tq, wq in zip(tn, tw):
        pts = st(tq, xl)
        uq = u(pts)
        sq = stress(pts)
        Eu, Eg = eulerlet_tensor(x - xl, np.full(len(wl), t - tq), grad=True)
        visc = -nu * np.einsum("q,qi,qkij,qj->k", wl, uq, Eg, nl)
        trac = -np.einsum("q,qki,qij,qj->k", wl, Eu, sq, nl)
        total += wq * (visc + trac)
    return -total
