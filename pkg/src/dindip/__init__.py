"""dindip: inertial training of two-layer deep inverse priors on linear
inverse problems, with continuous/discrete convergence certificates."""

__version__ = "0.1.0"

from . import dipnet, flow, inertia, linops, theory, xp  # noqa: F401
