import numpy as np
import pytest

from graspfit.gripper import (
    Gripper,
    LinkSurfaces,
    build_gripper,
    link_obbs,
    load_link_meshes,
    sample_link_surfaces,
)
from graspfit.objective import BarrierParams
from graspfit.planner import OptimizerSpec, PlannerConfig
from graspfit.pointcloud import PointCloud
from graspfit.urdf import parse_urdf

from fixture_assets import (
    CHAIN_URDF,
    HAND_URDF,
    MIMIC_URDF,
    PLATE_Q_OPEN,
    fibonacci_sphere_cloud,
    write_plate_gripper,
)


@pytest.fixture(scope="session")
def sphere_cloud() -> PointCloud:
    positions, normals = fibonacci_sphere_cloud(4000, 0.05)
    return PointCloud(positions, normals)


@pytest.fixture(scope="session")
def plate_dir(tmp_path_factory) -> str:
    d = tmp_path_factory.mktemp("plate_gripper")
    write_plate_gripper(str(d))
    return str(d)


@pytest.fixture(scope="session")
def plate_urdf(plate_dir) -> str:
    import os
    return os.path.join(plate_dir, "plate_pair.urdf")


@pytest.fixture(scope="session")
def plate_gripper(plate_urdf) -> Gripper:
    gripper, _ = build_gripper(
        plate_urdf,
        density=50_000.0,
        seed=0,
        q_open=np.asarray(PLATE_Q_OPEN),
        fingertip_boost=1.0,
    )
    return gripper


@pytest.fixture(scope="session")
def hand_gripper() -> Gripper:
    """Three-finger hand with every surface sample active (weight 1).

    Bypasses the visibility analysis: gradient and kinematics tests need a
    many-DOF articulated model with mimics, not a meaningful weight map.
    """
    model = parse_urdf(HAND_URDF)
    meshes = load_link_meshes(model, "")
    surfaces = sample_link_surfaces(model, meshes, density=30_000.0, seed=0)
    surfaces = LinkSurfaces(surfaces.points, surfaces.normals, surfaces.link,
                            np.ones(len(surfaces)),
                            np.ones(len(surfaces), dtype=bool))
    obbs = link_obbs(model, surfaces)
    return Gripper(model, meshes, surfaces, obbs, model.mid_range(),
                   [model.links[i].name for i in model.leaf_links],
                   np.zeros(3), "in-memory")


@pytest.fixture(scope="session")
def chain_model():
    return parse_urdf(CHAIN_URDF)


@pytest.fixture(scope="session")
def mimic_model():
    return parse_urdf(MIMIC_URDF)


@pytest.fixture()
def barrier_params() -> BarrierParams:
    return BarrierParams()


@pytest.fixture()
def plate_config() -> PlannerConfig:
    """Descent settings tuned for the sphere corpus: the plate fixture works
    at millimeter clearances, so steps are far below the library defaults
    and the stopping threshold absorbs re-match energy jitter."""
    return PlannerConfig(
        d_gripper=0.06,
        alpha=2e-6,
        beta=1e-4,
        gamma=1e-4,
        epsilon0=1e-3,
        n_outer=60,
        n_inner=10,
        optimizer=OptimizerSpec(kind="plain"),
        seed=0,
    )
