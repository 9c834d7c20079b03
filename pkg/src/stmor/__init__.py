"""Model order reduction for shear-thinning Stokes flow on space-time meshes."""

__version__ = "0.1.0"
