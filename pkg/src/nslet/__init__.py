"""Space-time fundamental solutions of incompressible flow and their
boundary-integral velocity representations."""

from nslet.specialfn import erf, heat_kernel
from nslet.geometry import (
    QuadratureRule,
    SpherinderSurface,
    ball_rule,
    sphere_rule,
    spherinder_rule,
)
from nslet.kernels import (
    DistributionalAtom,
    KernelValue,
    eulerlet,
    nslet_eval,
    oseenlet,
    stokeslet,
)
from nslet.representation import GridSpec, SampledField, ivp_velocity
from nslet.series import DuhamelRule, curl_residual, nslet_correction
from nslet.pressure import helmholtz_potentials, pressure_at

__version__ = "0.1.0"
