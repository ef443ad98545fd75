"""Export adapter: runs feature-extraction backends over generated RGB
frames and raw point clouds, and serializes their outputs into the FIF1
interchange format consumed by the registration toolkit.
"""

from .backends import ModelUnavailableError, get_geo_backend, get_matcher
from .export import ExportManifest, export_geo_features, export_image_features

__version__ = "0.1.0"

__all__ = [
    "ExportManifest",
    "ModelUnavailableError",
    "export_geo_features",
    "export_image_features",
    "get_geo_backend",
    "get_matcher",
    "__version__",
]
