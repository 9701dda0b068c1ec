"""thermolab: thermostat flows on a hyperbolic surface, numerically.

Library layout (one module per subsystem):

    geometry        Poincare disk, Bolza group, fundamental-domain folding
    differentials   Poincare series for degree-m differentials, co-closed 1-forms
    vortex          periodic FEM solve of 1 + lap(u) = e^{2u} - (m-1) e^{-2(m-1)u} alpha
    fields          compiled smooth flow fields (series + conformal factor jets)
    dynamics        unit tangent bundle, thermostat orbits, curvature quantities
    hyperbolicity   derivative cocycle, Lyapunov exponents, Riccati limits, cones
    diagnostics     global scans, dissipation, L2 identity, flatness functional
    cli             config-driven experiment runner (`thermolab` entry point)
"""

from . import errors
from .geometry import (
    GroupElement,
    FuchsianGroup,
    bolza_group,
    surface_group,
    mobius_apply,
    mobius_derivative,
    hyp_distance,
    group_enumerate,
    fold_to_domain,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "GroupElement",
    "FuchsianGroup",
    "bolza_group",
    "surface_group",
    "mobius_apply",
    "mobius_derivative",
    "hyp_distance",
    "group_enumerate",
    "fold_to_domain",
    "__version__",
]
