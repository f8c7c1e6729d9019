"""Pressure recovery from a velocity field through scalar Helmholtz potentials.

On a box V with surface S and for probes R inside V,

    phi(R) = (1/4pi) int_S u_i n_i / |R - R'| ds'
    h(R)   = -(1/4pi) int_V u_{j,i} u_{i,j} / |R - R'| dV'
             + (1/4pi) int_S u_j u_{i,j} n_i / |R - R'| ds'

and the pressure is p = -phi_{,0} - h.  Face integrals use Gauss-Legendre
panels, one per grid cell side; the volume integral uses the midpoint rule
on the grid cells with the probe's own cell replaced by the exact integral
of 1/|R - R'| over that cell times the integrand at the probe.

Velocity providers map (n, 4) space-time rows ``(t, x1, x2, x3)`` to (n, 3)
velocities.  An optional gradient provider returns ``g[n, i, j] = u_i,j``;
without one the gradient is taken by central differences.
"""
import csv
from dataclasses import dataclass

import numpy as np

from nslet._parallel import ordered_map
from nslet.representation import GridSpec

FOUR_PI = 4.0 * np.pi
_FD_STEP = 1e-5


@dataclass(frozen=True)
class PotentialPair:
    probes: np.ndarray  # (n, 3)
    time: float
    phi: np.ndarray  # (n,)
    h: np.ndarray  # (n,)
    h_volume: np.ndarray  # (n,) volume part of h
    h_surface: np.ndarray  # (n,) surface part of h


def _rows(t, x):
    pts = np.empty((len(x), 4))
    pts[:, 0] = t
    pts[:, 1:] = x
    return pts


def fd_gradient(u, pts, step=_FD_STEP):
    """Central-difference spatial gradient g[n, i, j] = u_i,j of a provider."""
    g = np.zeros((len(pts), 3, 3))
    for j in range(3):
        e = np.zeros(4)
        e[1 + j] = step
        g[:, :, j] = (np.asarray(u(pts + e)) - np.asarray(u(pts - e))) / (2 * step)
    return g


def cell_inverse_distance(lo, hi):
    """Exact int over the box [lo, hi] of 1/|r| dV; the point r = 0 may lie inside."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    total = 0.0
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                x = (lo, hi)[cx][0]
                y = (lo, hi)[cy][1]
                z = (lo, hi)[cz][2]
                sign = (-1) ** (3 - cx - cy - cz)
                total += sign * _corner(x, y, z)
    return total


def _xlog(a, b, c, r):
    """a b log(c + r) with the 0 * log 0 limit taken as 0."""
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b * np.log(c + r)


def _xatan(a, b, c, r):
    """-(a^2 / 2) atan(b c / (a r)) with its a -> 0 limit."""
    if a == 0.0:
        return 0.0
    return -0.5 * a * a * np.arctan(b * c / (a * r))


def _corner(x, y, z):
    """Antiderivative of 1/r in x, y and z (a standard cube-potential primitive)."""
    r = np.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        return 0.0
    return (
        _xlog(x, y, z, r)
        + _xlog(y, z, x, r)
        + _xlog(z, x, y, r)
        + _xatan(x, y, z, r)
        + _xatan(y, z, x, r)
        + _xatan(z, x, y, r)
    )


def _box_bounds(box):
    h = np.asarray(box.spacing)
    return box.lower() - h / 2, box.upper() + h / 2


def _face_rule(box, order):
    """GL nodes, outward normals and weights on the six faces of the box."""
    lo, hi = _box_bounds(box)
    gx, gw = np.polynomial.legendre.leggauss(order)
    xs, ns, ws = [], [], []
    for axis in range(3):
        a, b = [m for m in range(3) if m != axis]
        ca, wa = _panel_nodes(lo[a], box.spacing[a], box.dims[a], gx, gw)
        cb, wb = _panel_nodes(lo[b], box.spacing[b], box.dims[b], gx, gw)
        A, B = np.meshgrid(ca, cb, indexing="ij")
        W = np.outer(wa, wb).ravel()
        for side, val in ((-1.0, lo[axis]), (1.0, hi[axis])):
            pts = np.zeros((A.size, 3))
            pts[:, axis] = val
            pts[:, a] = A.ravel()
            pts[:, b] = B.ravel()
            n = np.zeros((A.size, 3))
            n[:, axis] = side
            xs.append(pts)
            ns.append(n)
            ws.append(W)
    return np.concatenate(xs), np.concatenate(ns), np.concatenate(ws)


def _panel_nodes(start, h, n, gx, gw):
    left = start + h * np.arange(n)
    nodes = (left[:, None] + 0.5 * h * (gx[None, :] + 1)).ravel()
    return nodes, np.tile(0.5 * h * gw, n)


def _check_probes(box, probes):
    lo, hi = _box_bounds(box)
    h = np.asarray(box.spacing)
    clear = np.min(np.minimum(probes - lo, hi - probes) / h, axis=1)
    if np.any(clear < 2.0):
        raise ValueError("probes must lie at least 2 node spacings inside the box surface")
    idx = np.rint((probes - box.lower()) / h)
    off = np.abs(probes - (box.lower() + idx * h)) / h
    if np.any(np.all(off < 1e-9, axis=1)):
        raise ValueError("probe coincides with a volume node")


def helmholtz_potentials(u, box, probes, t, orders=4, grad=None, workers=None):
    """phi and h at ``probes`` (n, 3) for the velocity provider ``u`` at time ``t``.

    ``box`` is a cell-centred :class:`GridSpec`; V is the union of its cells.
    ``orders`` is the Gauss-Legendre order per cell side on the faces.
    """
    if not isinstance(box, GridSpec):
        raise TypeError("box must be a GridSpec")
    probes = np.atleast_2d(np.asarray(probes, float))
    _check_probes(box, probes)
    gradient = grad or (lambda pts: fd_gradient(u, pts))

    xs, ns, ws = _face_rule(box, int(orders))
    rows = _rows(t, xs)
    us = np.asarray(u(rows), float)
    gs = np.asarray(gradient(rows), float)
    un = np.einsum("qi,qi->q", us, ns)
    # u_j u_{i,j} n_i
    adv_n = np.einsum("qj,qij,qi->q", us, gs, ns)

    nodes = box.points()
    gv = np.asarray(gradient(_rows(t, nodes)), float)
    f_nodes = np.einsum("qji,qij->q", gv, gv)
    gp = np.asarray(gradient(_rows(t, probes)), float)
    f_probe = np.einsum("qji,qij->q", gp, gp)
    hcell = np.asarray(box.spacing)
    dV = box.cell_volume
    lo0 = box.lower() - hcell / 2

    def one(k):
        p = probes[k]
        inv_s = 1.0 / np.linalg.norm(xs - p, axis=1)
        phi = np.dot(ws * un, inv_s) / FOUR_PI
        h_s = np.dot(ws * adv_n, inv_s) / FOUR_PI
        cell = np.clip(np.floor((p - lo0) / hcell).astype(int), 0, np.asarray(box.dims) - 1)
        own = np.ravel_multi_index(tuple(cell), box.dims)
        dist = np.linalg.norm(nodes - p, axis=1)
        dist[own] = np.inf
        clo = lo0 + cell * hcell
        vol = dV * np.dot(f_nodes, 1.0 / dist)
        vol += f_probe[k] * cell_inverse_distance(clo - p, clo + hcell - p)
        h_v = -vol / FOUR_PI
        return phi, h_v, h_s

    res = np.array(ordered_map(one, range(len(probes)), workers))
    phi, h_v, h_s = res[:, 0], res[:, 1], res[:, 2]
    return PotentialPair(probes, float(t), phi, h_v + h_s, h_v, h_s)


def recover_pressure(minus, plus, dt, middle=None):
    """p = -(phi(t + dt/2) - phi(t - dt/2)) / dt - h(t).

    h(t) is taken from ``middle`` when given, else as the mean of the two
    stamps (second-order accurate in dt).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    for other in (plus, middle):
        if other is not None and (
            other.probes.shape != minus.probes.shape or not np.array_equal(other.probes, minus.probes)
        ):
            raise ValueError("potential pairs must share one probe set")
    h = middle.h if middle is not None else 0.5 * (minus.h + plus.h)
    return -(plus.phi - minus.phi) / dt - h


def pressure_at(u, box, probes, t, dt=1e-3, orders=4, grad=None, workers=None):
    """Recovered pressure at time ``t``; returns (p, PotentialPair at t)."""
    pm = helmholtz_potentials(u, box, probes, t - dt / 2, orders, grad, workers)
    pp = helmholtz_potentials(u, box, probes, t + dt / 2, orders, grad, workers)
    mid = helmholtz_potentials(u, box, probes, t, orders, grad, workers)
    return recover_pressure(pm, pp, dt, mid), mid


def write_probe_csv(path, pair, p):
    """CSV with columns x1,x2,x3,phi,h,p at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "x3", "phi", "h", "p"])
        for x, a, b, c in zip(pair.probes, pair.phi, pair.h, np.asarray(p)):
            w.writerow([format(float(v), ".17g") for v in (*x, a, b, c)])
    return path
