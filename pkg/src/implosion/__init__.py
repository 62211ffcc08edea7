"""Self-similar imploding flows of a compressible ideal gas.

Submodules: ``exponents`` (blow-up speeds), ``origin_series`` and
``profile_ode`` (the smooth profile), ``tail`` (far-field asymptotics and
barriers), ``fields`` (physical variables), ``spectra`` (linearized mode
blocks), ``evolution`` (perturbed dynamics) and ``cli``.
"""

from .exponents import Exponents, GasParams, compute_exponents, parse_gamma

__all__ = ["Exponents", "GasParams", "compute_exponents", "parse_gamma"]
__version__ = "0.1.0"
