"""Training-free point cloud registration toolkit.

Two correspondence branches (image-derived and geometric descriptors)
are turned into row-stochastic match posteriors and fused
probabilistically (noisy-AND or noisy-OR); mutual nearest neighbors of
the fused matrix feed a compatibility-seeded robust rigid estimator.
Geometry utilities cover depth lifting, pinhole and equidistant
wide-angle projection, and voxel downsampling; a synthetic benchmark
harness evaluates the fusion variants against ground truth.
"""

from . import bench, cli, correspondence, features, fusion, geometry, io, pose, rng

__version__ = "0.1.0"

__all__ = [
    "bench",
    "cli",
    "correspondence",
    "features",
    "fusion",
    "geometry",
    "io",
    "pose",
    "rng",
    "__version__",
]
