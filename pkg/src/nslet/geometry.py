"""Quadrature on balls, spheres and spherinders.

Nodes are space-time points stored as rows ``(t, x1, x2, x3)``.  Boundary
rules also carry 4-vector outward normals ``(n0, n1, n2, n3)``.
"""
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

# piece labels for spherinder rules
LATERAL, START_CAP, END_CAP = 0, 1, 2


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray  # (n, 4)
    weights: np.ndarray  # (n,)
    normals: np.ndarray | None = None  # (n, 4)
    order: int = 0
    parts: np.ndarray | None = None  # (n,) piece labels for spherinders

    def __post_init__(self):
        for name in ("nodes", "weights", "normals", "parts"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val)
                val.setflags(write=False)
                object.__setattr__(self, name, val)

    def __len__(self):
        return len(self.weights)

    @property
    def x(self):
        return self.nodes[:, 1:]

    @property
    def t(self):
        return self.nodes[:, 0]

    def integrate(self, values):
        """Weighted sum over the leading axis of ``values``."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def select(self, mask):
        mask = np.asarray(mask)
        return QuadratureRule(
            self.nodes[mask],
            self.weights[mask],
            None if self.normals is None else self.normals[mask],
            self.order,
            None if self.parts is None else self.parts[mask],
        )

    def rotated(self, rot):
        """Rule with spatial nodes and normals rotated about the origin."""
        rot = np.asarray(rot, dtype=float)
        nodes = self.nodes.copy()
        nodes[:, 1:] = nodes[:, 1:] @ rot.T
        normals = None
        if self.normals is not None:
            normals = self.normals.copy()
            normals[:, 1:] = normals[:, 1:] @ rot.T
        return QuadratureRule(nodes, self.weights, normals, self.order, self.parts)


@dataclass(frozen=True)
class SpherinderSurface:
    """Ball of ``radius`` about spatial ``center`` swept over [t_start, t_end]."""

    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    t_start: float = -1.0
    t_end: float = 1.0
    caps: tuple = (True, True)
    _c: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        object.__setattr__(self, "_c", c)
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not self.t_end > self.t_start:
            raise ValueError(
                f"degenerate time interval [{self.t_start}, {self.t_end}]"
            )

    @property
    def c(self):
        return self._c

    @property
    def duration(self):
        return self.t_end - self.t_start

    def lateral_area(self):
        return 4.0 * np.pi * self.radius**2 * self.duration

    def cap_volume(self):
        return 4.0 * np.pi * self.radius**3 / 3.0

    def distance(self, point):
        """Euclidean space-time distance from ``(t, x1, x2, x3)`` to the surface."""
        p = np.asarray(point, dtype=float)
        t, x = p[0], p[1:]
        r = np.linalg.norm(x - self._c)
        tc = min(max(t, self.t_start), self.t_end)
        d = np.hypot(r - self.radius, t - tc)
        rc = min(r, self.radius)
        for on, tcap in zip(self.caps, (self.t_start, self.t_end)):
            if on:
                d = min(d, np.hypot(r - rc, t - tcap))
        return float(d)


def _check_order(order):
    if int(order) != order or order < 2:
        raise ValueError(f"order must be an integer >= 2, got {order}")
    return int(order)


def _gauss(n, a, b):
    x, w = leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _unit_sphere(order):
    """Directions and weights exact for polynomials of degree <= order."""
    n_theta = order // 2 + 1
    n_phi = order + 1
    ct, wt = leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - ct**2)
    dirs = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(ct, n_phi),
        ],
        axis=1,
    )
    w = np.repeat(wt, n_phi) * (2.0 * np.pi / n_phi)
    return dirs, w


def sphere_rule(radius, order, center=(0.0, 0.0, 0.0), time=0.0):
    """Product rule on the sphere |x - center| = radius with outward normals."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    order = _check_order(order)
    dirs, w = _unit_sphere(order)
    n = len(w)
    nodes = np.empty((n, 4))
    nodes[:, 0] = time
    nodes[:, 1:] = np.asarray(center, float) + radius * dirs
    normals = np.zeros((n, 4))
    normals[:, 1:] = dirs
    return QuadratureRule(nodes, w * radius**2, normals, order)


def ball_rule(radius, order, center=(0.0, 0.0, 0.0), time=0.0):
    """Product rule on the ball |x - center| <= radius.

    Radial Gauss-Legendre (with the r^2 Jacobian) times the spherical rule;
    exact for polynomials of total degree <= order.  No node sits at the
    centre.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    order = _check_order(order)
    dirs, wdir = _unit_sphere(order)
    n_r = (order + 4) // 2
    r, wr = _gauss(n_r, 0.0, radius)
    wr = wr * r**2
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    w = np.outer(wr, wdir).ravel()
    nodes = np.empty((len(w), 4))
    nodes[:, 0] = time
    nodes[:, 1:] = np.asarray(center, float) + pts
    return QuadratureRule(nodes, w, None, order)


def time_rule(t0, t1, order):
    """Gauss-Legendre points on [t0, t1] exact to polynomial degree ``order``."""
    return _gauss(max(1, (int(order) + 2) // 2), t0, t1)


def graded_time_rule(t0, t1, order, scale, resolve=64.0):
    """Gauss-Legendre panels on [t0, t1] refined dyadically towards t0.

    Panel breakpoints are t0 + (t1 - t0) 2^-k down to a width below
    ``scale / resolve``, so integrands that change on the time scale
    ``scale`` right after t0 are resolved.  Each panel uses :func:`time_rule`.
    """
    L = t1 - t0
    if not L > 0:
        raise ValueError("empty time interval")
    n_split = 0
    if scale > 0:
        n_split = int(min(60, max(0, np.ceil(np.log2(resolve * L / scale)))))
    edges = [t0] + [t0 + L * 2.0**-k for k in range(n_split, -1, -1)]
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        tn, tw = time_rule(a, b, order)
        nodes.append(tn)
        weights.append(tw)
    return np.concatenate(nodes), np.concatenate(weights)


def spherinder_rule(surface, spatial_order, time_order):
    """Boundary rule for a spherinder: caps (normals -/+ e0) and lateral wall.

    Normals are always outward from the enclosed space-time region.  The
    ``parts`` array labels each node LATERAL, START_CAP or END_CAP.
    """
    if not isinstance(surface, SpherinderSurface):
        raise TypeError("surface must be a SpherinderSurface")
    order = _check_order(spatial_order)
    time_order = _check_order(time_order)
    pieces = []

    sph = sphere_rule(surface.radius, order, center=surface.c)
    tn, tw = time_rule(surface.t_start, surface.t_end, time_order)
    m = len(sph)
    nodes = np.repeat(sph.nodes[None], len(tn), axis=0)
    nodes[:, :, 0] = tn[:, None]
    pieces.append(
        (
            nodes.reshape(-1, 4),
            np.outer(tw, sph.weights).ravel(),
            np.tile(sph.normals, (len(tn), 1)),
            np.full(m * len(tn), LATERAL),
        )
    )
    for on, tcap, sign, label in (
        (surface.caps[0], surface.t_start, -1.0, START_CAP),
        (surface.caps[1], surface.t_end, 1.0, END_CAP),
    ):
        if not on:
            continue
        ball = ball_rule(surface.radius, order, center=surface.c, time=tcap)
        nrm = np.zeros((len(ball), 4))
        nrm[:, 0] = sign
        pieces.append((ball.nodes, ball.weights, nrm, np.full(len(ball), label)))

    return QuadratureRule(
        np.concatenate([p[0] for p in pieces]),
        np.concatenate([p[1] for p in pieces]),
        np.concatenate([p[2] for p in pieces]),
        order,
        np.concatenate([p[3] for p in pieces]),
    )
