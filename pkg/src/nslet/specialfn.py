"""Scalar special functions shared by the kernels.

All functions accept scalars or arrays and broadcast like numpy ufuncs.
The Heaviside convention used throughout the package is H(0) = 0.
"""
import numpy as np
from scipy import special

# exp() of anything below this underflows to a subnormal or zero
_EXP_FLOOR = -745.0


def erf(x):
    """Error function, vectorised.

    Backed by the Cephes implementation in scipy, which is accurate to a
    few ulp over the whole real line.
    """
    return special.erf(x)


def heaviside(s):
    """H(s) = 1 for s > 0, else 0 (so H(0) = 0)."""
    return (np.asarray(s) > 0).astype(float)


def gaussian_exp(arg):
    """exp(arg) with arguments below -745 clamped to exactly zero."""
    arg = np.asarray(arg, dtype=float)
    out = np.zeros_like(arg)
    ok = arg > _EXP_FLOOR
    out[ok] = np.exp(arg[ok])
    return out if out.ndim else float(out)


def heat_kernel(R, tau, nu):
    """Free-space heat kernel (4 pi nu tau)^(-3/2) exp(-R^2 / (4 nu tau)).

    Returns 0 for tau <= 0.  ``R`` is the spatial distance from the source.
    """
    R = np.asarray(R, dtype=float)
    tau = np.asarray(tau, dtype=float)
    R, tau = np.broadcast_arrays(R, tau)
    out = np.zeros(R.shape)
    live = tau > 0
    if np.any(live):
        t = tau[live]
        s = 4.0 * nu * t
        out[live] = (np.pi * s) ** -1.5 * gaussian_exp(-(R[live] ** 2) / s)
    return out if out.ndim else float(out)
