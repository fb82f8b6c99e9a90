"""Exception hierarchy for graspfit.

Every error raised on a contract violation derives from :class:`GraspfitError`
so callers (and the CLI) can catch library failures in one place.  Input and
file-format problems map to CLI exit code 3, configuration problems to exit
code 2.
"""


class GraspfitError(Exception):
    """Base class for all graspfit errors."""


# --- point cloud / file I/O ------------------------------------------------

class MalformedFileError(GraspfitError):
    """File exists but cannot be parsed in the declared format."""


class MissingNormalsError(GraspfitError):
    """Cloud source had no normals and estimation was not requested."""


class EmptyCloudError(GraspfitError):
    """Point cloud contains zero points."""


class TooFewPointsError(GraspfitError):
    """Operation needs more points than the cloud provides."""


# --- gripper model ----------------------------------------------------------

class XmlError(GraspfitError):
    """Robot description is not valid XML or violates structural rules."""


class CycleDetectedError(GraspfitError):
    """Joint graph is not a tree rooted at a single base link."""


class MissingLimitError(GraspfitError):
    """A non-fixed joint lacks usable position limits."""


class UnsupportedJointTypeError(GraspfitError):
    """Joint type outside the supported revolute/prismatic/fixed subset."""


class MeshLoadError(GraspfitError):
    """Referenced mesh file is missing or unreadable."""


class DegenerateMeshError(GraspfitError):
    """Mesh has zero total surface area (nothing to sample)."""


class NoFingertipsError(GraspfitError):
    """Kinematic model has no leaf links to treat as fingertips."""


class UnknownLinkError(GraspfitError):
    """A named link does not exist in the model."""


class DofMismatchError(GraspfitError):
    """Joint vector length differs from the model's degree of freedom."""


# --- objective / planner ----------------------------------------------------

class EmptyPalmarSetError(GraspfitError):
    """No surface sample carries positive weight; matching is impossible."""


class TooFewCandidatesError(GraspfitError):
    """Contact candidate pool is smaller than the requested contact count."""


class NonFiniteGradientError(GraspfitError):
    """Gradient evaluation produced NaN or infinity."""


class EmptyResultsError(GraspfitError):
    """Statistic requested over an empty result list."""


class EmptyMaskError(GraspfitError):
    """Label mask selects no points."""


# --- quality ------------------------------------------------------------------

class DegenerateContactsError(GraspfitError):
    """Contact set spans no usable wrench space (collinear, equal normals)."""


# --- configuration ------------------------------------------------------------

class ConfigError(GraspfitError):
    """Run configuration is missing, malformed, or inconsistent."""
