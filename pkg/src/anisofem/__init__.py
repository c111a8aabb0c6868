"""P1 finite elements and residual error estimation on anisotropic meshes."""

__version__ = "0.1.0"
