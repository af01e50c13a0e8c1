"""mclab: a pseudo-spectral laboratory for magnetized Couette flow.

The package studies the 3D incompressible MHD equations linearized and
simulated around the Couette shear (y, 0, 0) threaded by a uniform
background magnetic field alpha (sigma, 0, 1), in the sheared coordinate
frame that follows the shear.  Modules:

* ``spectral``: sheared-frame Fourier representation, mode bookkeeping,
  differential operators, projections.
* ``multipliers``: time-dependent Fourier weights (stretching, enhanced
  dissipation, echo damping) in closed form.
* ``linear_modes``: exact and numerically integrated linearized dynamics
  per mode class.
* ``solver``: the nonlinear pseudo-spectral time stepper.
* ``diagnostics``: weighted norms, bootstrap-style energy panels, decay
  bound checks.
* ``config`` / ``storage`` / ``cli``: run configuration, on-disk layout,
  and the command line front end.
"""

from .spectral import (
    GridSpec,
    MhdState,
    ModeIndex,
    PhysParams,
    RationalShearAngle,
    SpectralScalarField,
    SpectralVectorField,
)

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "MhdState",
    "ModeIndex",
    "PhysParams",
    "RationalShearAngle",
    "SpectralScalarField",
    "SpectralVectorField",
    "__version__",
]
