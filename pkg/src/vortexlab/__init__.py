"""Numerical laboratory for strained multi-scale vortex dynamics.

Subpackages and modules:

* torus_kernels   -- periodic Biot-Savart induction (direct image sums and a
                     spectral grid backend) on [-L, L)^2
* quadrupole      -- Lagrangian evolution of an odd-odd vortex quadrupole
                     under a linear strain, with exact-law diagnostics
* characteristics -- 3D characteristic tracing and the linearized evolution
                     of a small-scale vortex vector along the paths
* euler3d         -- 3D pseudo-spectral incompressible Euler with coupled
                     linearized and modified evolutions for scaling studies
* ratefit         -- least-squares exponential / power-law rate fits
* experiments     -- config-driven sweeps, CSV output, SVG plots, CLI
"""

from .ratefit import RateFit, fit_exponential, fit_powerlaw

__all__ = ["RateFit", "fit_exponential", "fit_powerlaw"]
