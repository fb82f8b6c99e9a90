"""Strict YAML run-configuration loading."""

import pytest

from graspfit.config import load_config
from graspfit.errors import ConfigError

MINIMAL = "gripper:\n  urdf: g.urdf\n"


def _load(tmp_path, body):
    (tmp_path / "g.urdf").write_text("<robot name='g'/>\n")
    path = tmp_path / "run.yaml"
    path.write_text(body)
    return load_config(str(path))


class TestDocumentLevel:
    def test_minimal_config_gets_defaults(self, tmp_path):
        cfg = _load(tmp_path, MINIMAL)
        assert cfg.seed == 0
        assert cfg.samples == 64
        assert cfg.jobs == 1
        assert cfg.output is None
        assert cfg.planner.n_outer == 30
        assert cfg.planner.alpha == pytest.approx(0.02)
        assert cfg.barrier.d_hat == pytest.approx(0.05)
        assert cfg.friction.mu == pytest.approx(0.5)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="no such config"):
            load_config(str(tmp_path / "absent.yaml"))

    def test_invalid_yaml(self, tmp_path):
        with pytest.raises(ConfigError, match="parse failure"):
            _load(tmp_path, "gripper: [unclosed\n")

    def test_top_level_must_be_mapping(self, tmp_path):
        with pytest.raises(ConfigError, match="must be a mapping"):
            _load(tmp_path, "- 1\n- 2\n")

    def test_empty_document_lacks_gripper(self, tmp_path):
        with pytest.raises(ConfigError, match="gripper section"):
            _load(tmp_path, "")

    def test_unknown_keys_rejected_everywhere(self, tmp_path):
        bad = [
            "typo: 1\n" + MINIMAL,
            MINIMAL + "  grip_density: 2\n",
            MINIMAL + "planner:\n  learning_rate: 0.1\n",
            MINIMAL + "planner:\n  optimizer: {kind: plain, nesterov: true}\n",
            MINIMAL + "barrier:\n  dhat: 0.1\n",
            MINIMAL + "quality:\n  friction: 0.5\n",
        ]
        for body in bad:
            with pytest.raises(ConfigError, match="unknown key"):
                _load(tmp_path, body)

    def test_booleans_are_not_integers(self, tmp_path):
        with pytest.raises(ConfigError, match="seed must be an integer"):
            _load(tmp_path, "seed: true\n" + MINIMAL)

    def test_counts_validated(self, tmp_path):
        with pytest.raises(ConfigError, match="samples"):
            _load(tmp_path, "samples: 0\n" + MINIMAL)
        with pytest.raises(ConfigError, match="jobs"):
            _load(tmp_path, "jobs: 0\n" + MINIMAL)
        with pytest.raises(ConfigError, match="samples must be an integer"):
            _load(tmp_path, "samples: 3.5\n" + MINIMAL)

    def test_output_kept_verbatim(self, tmp_path):
        cfg = _load(tmp_path, MINIMAL + "output: out/results.jsonl\n")
        assert cfg.output == "out/results.jsonl"
        with pytest.raises(ConfigError, match="output"):
            _load(tmp_path, MINIMAL + "output: 3\n")


class TestGripperSection:
    def test_urdf_resolved_relative_to_config(self, tmp_path):
        cfg = _load(tmp_path, MINIMAL)
        assert cfg.gripper.urdf == str(tmp_path / "g.urdf")

    def test_urdf_must_exist(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("gripper:\n  urdf: nowhere.urdf\n")
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(str(path))

    def test_mesh_root_resolved_and_checked(self, tmp_path):
        (tmp_path / "meshes").mkdir()
        cfg = _load(tmp_path, MINIMAL + "  mesh_root: meshes\n")
        assert cfg.gripper.mesh_root == str(tmp_path / "meshes")
        with pytest.raises(ConfigError, match="mesh_root"):
            _load(tmp_path, MINIMAL + "  mesh_root: no_such_dir\n")

    def test_scalar_bounds(self, tmp_path):
        bad = [
            "  sample_density: 0\n",
            "  fingertip_boost: 0.5\n",
            "  ray_count: 0\n",
            "  obb_padding: -0.1\n",
            "  r_hit_factor: 0\n",
        ]
        for line in bad:
            with pytest.raises(ConfigError):
                _load(tmp_path, MINIMAL + line)
        cfg = _load(tmp_path, MINIMAL + "  sample_density: 9000\n"
                    "  fingertip_boost: 3\n  ray_count: 500\n")
        assert cfg.gripper.sample_density == pytest.approx(9000.0)
        assert cfg.gripper.fingertip_boost == pytest.approx(3.0)
        assert cfg.gripper.ray_count == 500

    def test_fingertip_links(self, tmp_path):
        cfg = _load(tmp_path, MINIMAL + "  fingertip_links: [tip_l, tip_r]\n")
        assert cfg.gripper.fingertip_links == ["tip_l", "tip_r"]
        for value in ("[]", "[1, 2]", "tip_l"):
            with pytest.raises(ConfigError, match="fingertip_links"):
                _load(tmp_path, MINIMAL + f"  fingertip_links: {value}\n")

    def test_vector_fields(self, tmp_path):
        cfg = _load(tmp_path, MINIMAL + "  q_open: [0.01, 0.02]\n"
                    "  light_override: [0, 0, 0.05]\n")
        assert cfg.gripper.q_open == [0.01, 0.02]
        assert cfg.gripper.light_override == [0.0, 0.0, 0.05]
        with pytest.raises(ConfigError, match="3 entries"):
            _load(tmp_path, MINIMAL + "  light_override: [0, 0]\n")
        with pytest.raises(ConfigError, match="q_open"):
            _load(tmp_path, MINIMAL + "  q_open: wide\n")


class TestPlannerSection:
    def test_values_reach_planner_config(self, tmp_path):
        cfg = _load(tmp_path, "seed: 7\n" + MINIMAL + (
            "planner:\n"
            "  epsilon0: 1.0e-4\n"
            "  n_outer: 5\n"
            "  n_inner: 2\n"
            "  alpha: 0.001\n"
            "  d_gripper: 0.08\n"
            "  approach_axis: [0, 0, 1]\n"
            "  keep_trace: true\n"
        ))
        assert cfg.planner.epsilon0 == pytest.approx(1e-4)
        assert cfg.planner.n_outer == 5
        assert cfg.planner.n_inner == 2
        assert cfg.planner.alpha == pytest.approx(0.001)
        assert cfg.planner.d_gripper == pytest.approx(0.08)
        assert cfg.planner.approach_axis == (0.0, 0.0, 1.0)
        assert cfg.planner.keep_trace is True
        assert cfg.planner.seed == 7

    def test_bad_values(self, tmp_path):
        bad = [
            "planner:\n  alpha: -0.1\n",
            "planner:\n  n_outer: 0\n",
            "planner:\n  approach_axis: [0, 0, 0]\n",
            "planner:\n  approach_axis: [1, 0]\n",
            "planner:\n  keep_trace: 1\n",
        ]
        for body in bad:
            with pytest.raises(ConfigError):
                _load(tmp_path, MINIMAL + body)

    def test_optimizer_parsing(self, tmp_path):
        cfg = _load(tmp_path, MINIMAL +
                    "planner:\n  optimizer: {kind: momentum, momentum: 0.8}\n")
        assert cfg.planner.optimizer.kind == "momentum"
        assert cfg.planner.optimizer.momentum == pytest.approx(0.8)
        with pytest.raises(ConfigError, match="unknown optimizer"):
            _load(tmp_path, MINIMAL + "planner:\n  optimizer: {kind: sgd}\n")
        with pytest.raises(ConfigError, match="needs a kind"):
            _load(tmp_path, MINIMAL + "planner:\n  optimizer: {momentum: 0.8}\n")


class TestBarrierAndQuality:
    def test_barrier_values(self, tmp_path):
        cfg = _load(tmp_path, MINIMAL + (
            "barrier:\n"
            "  d_hat: 0.1\n"
            "  squared_distance: false\n"
            "  contact_count: 6\n"
        ))
        assert cfg.barrier.d_hat == pytest.approx(0.1)
        assert cfg.barrier.squared_distance is False
        assert cfg.barrier.contact_count == 6

    def test_barrier_validation(self, tmp_path):
        for body in ("barrier:\n  d_hat: -1\n",
                     "barrier:\n  squared_distance: 1\n",
                     "barrier:\n  contact_count: 0\n"):
            with pytest.raises(ConfigError):
                _load(tmp_path, MINIMAL + body)

    def test_friction_values(self, tmp_path):
        cfg = _load(tmp_path, MINIMAL + "quality:\n  mu: 0.9\n  cone_edges: 6\n")
        assert cfg.friction.mu == pytest.approx(0.9)
        assert cfg.friction.cone_edges == 6

    def test_friction_validation_wrapped(self, tmp_path):
        with pytest.raises(ConfigError):
            _load(tmp_path, MINIMAL + "quality:\n  mu: -0.5\n")
        with pytest.raises(ConfigError):
            _load(tmp_path, MINIMAL + "quality:\n  cone_edges: 2\n")
