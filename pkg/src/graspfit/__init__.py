"""graspfit: batch-parallel differentiable grasp planning on point clouds.

The pipeline: load an object as an oriented point cloud, load a gripper
from URDF with pre-sampled palmar surface points, seed a batch of poses
at surface anchors, and run nested first-order optimization of a summed
fitting energy (point match, normal anti-alignment, force closure,
interpenetration and joint-limit barriers).  Results carry convergence
and collision flags plus grasp-quality metrics.
"""

from .config import GripperSection, RunConfig, config_from_mapping, load_config
from .errors import (
    ConfigError,
    CycleDetectedError,
    DegenerateContactsError,
    DegenerateMeshError,
    DofMismatchError,
    EmptyCloudError,
    EmptyMaskError,
    EmptyPalmarSetError,
    EmptyResultsError,
    GraspfitError,
    MalformedFileError,
    MeshLoadError,
    MissingLimitError,
    MissingNormalsError,
    NoFingertipsError,
    NonFiniteGradientError,
    TooFewCandidatesError,
    TooFewPointsError,
    UnknownLinkError,
    UnsupportedJointTypeError,
    XmlError,
)
from .gripper import Gripper, build_gripper, compute_palmar_mask
from .mesh import TriangleMesh, load_mesh, sample_surface
from .objective import (
    BarrierParams,
    ContactSet,
    CorrespondenceSet,
    FrozenMatch,
    ObjectiveBreakdown,
    PoseState,
    barrier_value,
    finite_difference_gradient,
    frozen_energy,
    gradient,
    match_correspondences,
    select_contacts,
    total_energy,
)
from .planner import (
    GraspResult,
    OptimizerSpec,
    PlannerConfig,
    init_poses,
    optimize_batch,
    plan,
    plan_masked,
    refine_poses,
    select_best,
    valid_results,
)
from .pointcloud import (
    PointCloud,
    add_gaussian_noise,
    estimate_normals,
    fps_sample,
    load_point_cloud,
    nearest_neighbor,
)
from .quality import FrictionModel, bsm_metric, epsilon_metric, valid_proportion
from .urdf import KinematicModel, forward_kinematics, parse_urdf

__version__ = "0.1.0"

__all__ = [
    "BarrierParams",
    "ConfigError",
    "ContactSet",
    "CorrespondenceSet",
    "CycleDetectedError",
    "DegenerateContactsError",
    "DegenerateMeshError",
    "DofMismatchError",
    "EmptyCloudError",
    "EmptyMaskError",
    "EmptyPalmarSetError",
    "EmptyResultsError",
    "FrictionModel",
    "FrozenMatch",
    "GraspResult",
    "Gripper",
    "GripperSection",
    "GraspfitError",
    "KinematicModel",
    "MalformedFileError",
    "MeshLoadError",
    "MissingLimitError",
    "MissingNormalsError",
    "NoFingertipsError",
    "NonFiniteGradientError",
    "ObjectiveBreakdown",
    "OptimizerSpec",
    "PlannerConfig",
    "PointCloud",
    "PoseState",
    "RunConfig",
    "TooFewCandidatesError",
    "TooFewPointsError",
    "TriangleMesh",
    "UnknownLinkError",
    "UnsupportedJointTypeError",
    "XmlError",
    "add_gaussian_noise",
    "barrier_value",
    "bsm_metric",
    "build_gripper",
    "compute_palmar_mask",
    "config_from_mapping",
    "epsilon_metric",
    "estimate_normals",
    "finite_difference_gradient",
    "forward_kinematics",
    "fps_sample",
    "frozen_energy",
    "gradient",
    "init_poses",
    "load_config",
    "load_mesh",
    "load_point_cloud",
    "match_correspondences",
    "nearest_neighbor",
    "optimize_batch",
    "parse_urdf",
    "plan",
    "plan_masked",
    "refine_poses",
    "sample_surface",
    "select_best",
    "select_contacts",
    "total_energy",
    "valid_proportion",
    "valid_results",
]
