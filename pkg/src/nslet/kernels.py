"""Fundamental solutions: Eulerlet, unsteady Stokeslet, Oseenlet.

Index convention: ``u[..., k, i]`` is the i-th velocity component of the
solution driven by a unit impulse in direction k; ``grad[..., k, i, j]`` is
its derivative with respect to the field coordinate x_j.  Kernels are
functions of the separation ``dx = x - x'`` and the lag ``tau = t - t'``.

The Stokeslet is assembled from its heat/potential split

    u_ki = u^A delta_ki + u^B_{,ki},   u^A = -heat_kernel,
    u^B = -(1/4 pi) erf(eta)/R,        eta = R / sqrt(4 nu tau).

Spatial derivatives of the radial function g(R) = erf(R/a)/R are written
through the scalars

    A = g'/R,   C = (g'' - g'/R)/R^2,   D = C'/R,

so that g_{,ki} = A d_ki + C x_k x_i and
g_{,kij} = C (d_ki x_j + d_kj x_i + d_ij x_k) + D x_k x_i x_j.
For eta < 1 these are summed from the Maclaurin series of erf, which
avoids the cancellation in the closed forms near R = 0.
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from numpy.polynomial.polynomial import polyval

from nslet.specialfn import erf, gaussian_exp, heaviside

FOUR_PI = 4.0 * np.pi
_SERIES_ETA = 1.0
_NTERMS = 40
_BETA = np.array([(-1.0) ** n / (factorial(n) * (2 * n + 1)) for n in range(_NTERMS)])
_NS = np.arange(_NTERMS, dtype=float)
# series coefficients for A*a^3/c', C*a^5/c', D*a^7/c' with c' = 2/sqrt(pi)
_SA = 2 * _NS * _BETA
_SC = 4 * _NS * (_NS - 1) * _BETA
_SD = 4 * _NS * (_NS - 1) * (2 * _NS - 4) * _BETA
_TWO_RTPI = 2.0 / np.sqrt(np.pi)
_EYE = np.eye(3)


@dataclass(frozen=True)
class DistributionalAtom:
    """A delta-type part of a kernel, handled by closed-form flux rules.

    kind "point_delta": weight * H(tau) * delta(x - x') in the velocity.
    kind "time_slice": delta(tau) * profile in the pressure, with profile
    p_k = (1/4 pi) [1/R]_{,k} = -dx_k / (4 pi R^3).
    """

    kind: str
    weight: np.ndarray | None = None
    profile: str | None = None


@dataclass
class KernelValue:
    u: np.ndarray  # (3, 3) smooth velocity tensor
    p: np.ndarray  # (3,) smooth pressure (Bernoulli part for the Eulerlet)
    atoms: list = field(default_factory=list)
    grad: np.ndarray | None = None  # (3, 3, 3)


TIME_SLICE = DistributionalAtom("time_slice", profile="dipole")


def pressure_profile(dx):
    """Spatial profile of the time-slice pressure atom, (1/4 pi)[1/R]_{,k}."""
    dx = np.asarray(dx, dtype=float)
    R = np.linalg.norm(dx, axis=-1)
    return -dx / (FOUR_PI * R[..., None] ** 3)


def _radial_terms(R, a):
    """Return A, C, D for g = erf(R/a)/R.  ``a`` > 0, arrays broadcast."""
    R, a = np.broadcast_arrays(np.asarray(R, float), np.asarray(a, float))
    A = np.empty(R.shape)
    C = np.empty(R.shape)
    D = np.empty(R.shape)
    eta = R / a
    small = eta < _SERIES_ETA
    if np.any(small):
        e2 = eta[small] ** 2
        asm = a[small]
        A[small] = _TWO_RTPI / asm**3 * polyval(e2, _SA[1:])
        C[small] = _TWO_RTPI / asm**5 * polyval(e2, _SC[2:])
        D[small] = _TWO_RTPI / asm**7 * polyval(e2, _SD[3:])
    big = ~small
    if np.any(big):
        r = R[big]
        ab = a[big]
        E = _TWO_RTPI * gaussian_exp(-((r / ab) ** 2))
        ef = erf(r / ab)
        g1 = E / (ab * r) - ef / r**2
        g2 = -2 * E / ab**3 - 2 * E / (ab * r**2) + 2 * ef / r**3
        g3 = 4 * r * E / ab**5 + 4 * E / (ab**3 * r) + 6 * E / (ab * r**3) - 6 * ef / r**4
        A[big] = g1 / r
        C[big] = (g2 - g1 / r) / r**2
        D[big] = (g3 - 3 * g2 / r + 3 * g1 / r**2) / r**3
    return A, C, D


def _inverse_r_terms(R):
    """A, C, D for g = 1/R (the Eulerlet limit a -> 0)."""
    return -(R**-3.0), 3.0 * R**-5.0, -15.0 * R**-7.0


def _assemble(dx, A, C, D, iso=None, iso_grad=None, with_grad=False):
    """u_ki = iso d_ki - (A d_ki + C x_k x_i)/4pi and its x_j gradient."""
    xx = dx[..., :, None] * dx[..., None, :]
    u = -(A[..., None, None] * _EYE + C[..., None, None] * xx) / FOUR_PI
    if iso is not None:
        u = u + iso[..., None, None] * _EYE
    if not with_grad:
        return u, None
    dxj = dx[..., None, None, :]
    sym = (
        _EYE[:, :, None] * dxj
        + _EYE[:, None, :] * dx[..., None, :, None]
        + _EYE[None, :, :] * dx[..., :, None, None]
    )
    grad = -(C[..., None, None, None] * sym + D[..., None, None, None] * xx[..., None] * dxj) / FOUR_PI
    if iso_grad is not None:
        grad = grad + _EYE[:, :, None] * iso_grad[..., None, None, :]
    return u, grad


def stokeslet_tensor(dx, tau, nu, grad=False):
    """Vectorised smooth Stokeslet velocity (and optionally its gradient).

    ``dx`` has shape (..., 3), ``tau`` broadcasts against dx[..., 0].
    Entries with tau <= 0 are zero.  R = 0 is allowed when tau > 0.
    """
    dx = np.asarray(dx, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), dx.shape[:-1])
    shape = dx.shape[:-1]
    u = np.zeros(shape + (3, 3))
    g = np.zeros(shape + (3, 3, 3)) if grad else None
    live = tau > 0
    if np.any(live):
        d = dx[live]
        t = tau[live]
        R = np.linalg.norm(d, axis=-1)
        s = 4.0 * nu * t
        A, C, D = _radial_terms(R, np.sqrt(s))
        K = (np.pi * s) ** -1.5 * gaussian_exp(-(R**2) / s)
        Kg = (K / (2.0 * nu * t))[:, None] * d if grad else None
        uu, gg = _assemble(d, A, C, D, iso=-K, iso_grad=Kg, with_grad=grad)
        u[live] = uu
        if grad:
            g[live] = gg
    return (u, g) if grad else u


def eulerlet_tensor(dx, tau, grad=False):
    """Vectorised smooth Eulerlet -H(tau)(1/4pi)[1/R]_{,ki} (and gradient)."""
    dx = np.asarray(dx, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), dx.shape[:-1])
    shape = dx.shape[:-1]
    u = np.zeros(shape + (3, 3))
    g = np.zeros(shape + (3, 3, 3)) if grad else None
    live = tau > 0
    if np.any(live):
        d = dx[live]
        R = np.linalg.norm(d, axis=-1)
        if np.any(R == 0):
            raise ValueError("Eulerlet is singular at R = 0")
        uu, gg = _assemble(d, *_inverse_r_terms(R), with_grad=grad)
        u[live] = uu
        if grad:
            g[live] = gg
    return (u, g) if grad else u


def heat_part(R, tau, nu):
    """u^A = -heat_kernel(R, tau, nu)."""
    from nslet.specialfn import heat_kernel

    return -heat_kernel(R, tau, nu)


def potential_part(R, tau, nu):
    """u^B = -(1/4 pi) H(tau) erf(eta)/R."""
    R = np.asarray(R, dtype=float)
    tau = np.asarray(tau, dtype=float)
    R, tau = np.broadcast_arrays(R, tau)
    out = np.zeros(R.shape)
    live = tau > 0
    eta = R[live] / np.sqrt(4 * nu * tau[live])
    out[live] = -erf(eta) / (FOUR_PI * R[live])
    return out if out.ndim else float(out)


def bernoulli_pressure(u):
    """p^B_k = -(1/2) u_kj u_kj (no sum over k)."""
    return -0.5 * np.sum(np.asarray(u) ** 2, axis=-1)


def _as_dx(dx):
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (3,):
        raise ValueError("dx must be a 3-vector")
    return dx


def eulerlet(dx, tau):
    """Eulerlet at a single separation: smooth dipole part plus atoms."""
    dx = _as_dx(dx)
    if np.linalg.norm(dx) == 0:
        raise ValueError("Eulerlet evaluation requires R > 0")
    u, g = eulerlet_tensor(dx[None], np.array([tau]), grad=True)
    u, g = u[0], g[0]
    atoms = [
        DistributionalAtom("point_delta", weight=-heaviside(tau) * _EYE),
        TIME_SLICE,
    ]
    return KernelValue(u=u, p=bernoulli_pressure(u), atoms=atoms, grad=g)


def stokeslet(dx, tau, nu):
    """Unsteady Stokeslet at a single separation."""
    dx = _as_dx(dx)
    if not nu > 0:
        raise ValueError("nu must be positive")
    if np.linalg.norm(dx) == 0 and tau <= 0:
        raise ValueError("Stokeslet is undefined at R = 0, tau <= 0")
    u, g = stokeslet_tensor(dx[None], np.array([tau]), nu, grad=True)
    return KernelValue(u=u[0], p=np.zeros(3), atoms=[TIME_SLICE], grad=g[0])


def oseenlet(dx, tau, nu, U):
    """Stokeslet seen from a frame translating with uniform velocity U."""
    dx = _as_dx(dx)
    U = np.asarray(U, dtype=float).reshape(3)
    return stokeslet(dx - U * tau, tau, nu)


def oseenlet_tensor(dx, tau, nu, U, grad=False):
    dx = np.asarray(dx, dtype=float)
    tau = np.asarray(tau, dtype=float)
    shifted = dx - np.asarray(U, float) * tau[..., None]
    return stokeslet_tensor(shifted, tau, nu, grad=grad)


def nslet_eval(dx, tau, nu, order=0, correction=None):
    """Truncated NSlet series: Stokeslet, plus the first correction at order 1."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    base = stokeslet(dx, tau, nu)
    if order == 0:
        return base
    if correction is None:
        raise ValueError("order 1 requires a correction field")
    extra = correction.interpolate(np.asarray(dx, float)[None], tau)[0]
    return KernelValue(u=base.u + extra, p=base.p, atoms=base.atoms, grad=None)


def nslet_tensor(dx, tau, nu, order=0, correction=None):
    """Vectorised counterpart of :func:`nslet_eval` (smooth velocity only)."""
    u = stokeslet_tensor(dx, tau, nu)
    if order == 1:
        if correction is None:
            raise ValueError("order 1 requires a correction field")
        u = u + correction.interpolate(np.asarray(dx, float), tau)
    elif order != 0:
        raise ValueError("order must be 0 or 1")
    return u
