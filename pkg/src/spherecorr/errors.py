"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes (config 2, data 3, numeric 4), so
raise the most specific class that applies.
"""


class ConfigError(Exception):
    """Bad or inconsistent run configuration."""


class DataError(Exception):
    """Input data unusable (e.g. too few visible points after occlusion)."""


class NumericError(Exception):
    """A solve failed for numerical or geometric reasons."""


class DegenerateGeometryError(NumericError):
    """Correspondences collinear or otherwise rank-deficient."""


class RobustFitError(NumericError):
    """RANSAC found no candidate with enough inliers."""
