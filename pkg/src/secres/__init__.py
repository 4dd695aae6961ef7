"""secres: secular 2g+h-resonance dynamics for a lunisolar MEO model.

Hyperbolic circular periodic orbits, their invariant manifolds and homoclinic
intersections, first-order (in the lunar inclination) inner/outer map
coefficients, and drifting pseudo-orbits on the resonance cylinder.
"""

from .constants import (LUNAR_CAL_BOUNDARY, ModelParams, boundary_params,
                        default_params, nondimensionalize)

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "nondimensionalize", "default_params", "boundary_params",
    "LUNAR_CAL_BOUNDARY", "__version__",
]
