"""pinlab: interface pinning in quenched random media.

Simulators for the discrete (lattice jump process) and continuous
(semilinear parabolic) interface models, constructors for stationary
supersolutions acting as barrier certificates, and exact numerical
verification of every certificate before it is used.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as kernel_backend  # noqa: F401
