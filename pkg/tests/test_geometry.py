import math

import numpy as np
import pytest

from uaswarm.geometry import (FORWARD_CAMERA, NADIR_CAMERA, CameraIntrinsics, Pose2, Pose3, apply,
                              compose, inverse, wrap_angle)


def test_compose_identity():
    P = Pose2(0.3, -1.2, 0.7)
    assert compose(Pose2.identity(), P).isclose(P)
    assert compose(P, Pose2.identity()).isclose(P)


def test_compose_translations():
    assert compose(Pose2(1, 0, 0), Pose2(0, 1, 0)).isclose(Pose2(1, 1, 0))


def test_compose_rotated_translation():
    assert compose(Pose2(0, 0, math.pi / 2), Pose2(1, 0, 0)).isclose(Pose2(0, 1, math.pi / 2))


def test_compose_matches_matrix_product(rng):
    for _ in range(50):
        a = Pose2(*rng.normal(size=2), rng.uniform(-4, 4))
        b = Pose2(*rng.normal(size=2), rng.uniform(-4, 4))
        M = a.as_matrix() @ b.as_matrix()
        assert np.allclose(compose(a, b).as_matrix(), M, atol=1e-12)


def test_apply_examples():
    assert np.allclose(apply(Pose2.identity(), (3, 4)), (3, 4))
    assert np.allclose(apply(Pose2(0, 0, math.pi), (1, 0)), (-1, 0), atol=1e-12)
    assert np.allclose(apply(Pose2(2, 0, math.pi / 2), (1, 0)), (2, 1), atol=1e-12)


def test_inverse_roundtrip(rng):
    for _ in range(20):
        a = Pose2(*rng.normal(size=2), rng.uniform(-4, 4))
        assert compose(a, inverse(a)).isclose(Pose2.identity())
        A = Pose3.from_xyz_yaw(*rng.normal(size=3), rng.uniform(-3, 3))
        assert compose(A, inverse(A)).isclose(Pose3.identity())


def test_pose3_matches_homogeneous_matrices(rng):
    from scipy.spatial.transform import Rotation
    for _ in range(20):
        Ra, Rb = Rotation.random(2, random_state=int(rng.integers(1 << 30))).as_matrix()
        a = Pose3.from_rotation_matrix(Ra, rng.normal(size=3))
        b = Pose3.from_rotation_matrix(Rb, rng.normal(size=3))
        assert np.allclose(compose(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)
        p = rng.normal(size=3)
        assert np.allclose(apply(a, p), Ra @ p + a.translation, atol=1e-12)


def test_mixed_dimensions_rejected():
    with pytest.raises(TypeError):
        compose(Pose2.identity(), Pose3.identity())


def test_wrap_angle_range():
    a = wrap_angle(np.linspace(-20, 20, 401))
    assert np.all(a > -math.pi) and np.all(a <= math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_camera_mounts_point_the_optical_axis():
    assert np.allclose(FORWARD_CAMERA.rotation @ [0, 0, 1], [1, 0, 0])
    assert np.allclose(NADIR_CAMERA.rotation @ [0, 0, 1], [0, 0, -1])


def test_pinhole_roundtrip(rng):
    K = CameraIntrinsics(300.0, 310.0, 320.0, 240.0)
    for _ in range(20):
        p = np.array([*rng.normal(size=2), rng.uniform(1, 10)])
        u, v = K.project(p)
        assert u == pytest.approx(300 * p[0] / p[2] + 320)
        ray = K.backproject(u, v)
        assert np.allclose(ray / ray[2] * p[2], p)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 0.0, 0.0)
