import itertools
import math

import numpy as np
import pytest

from uaswarm.exceptions import NoIntersectionError
from uaswarm.geometry import NADIR_CAMERA, Pose3
from uaswarm.mapping import (DEFAULT_INTRINSICS, Association, Detection, GroundObject,
                             LandmarkMapper, LocalMap, SyntheticDetector, associate_gnn, detect,
                             hungarian, kalman_fuse, project_to_ground,
                             range_stretched_covariance, tilted_camera, update_map)

K = DEFAULT_INTRINSICS


def exact_detector(mount=NADIR_CAMERA):
    return SyntheticDetector(mount=mount, pixel_sigma=0.0, detection_probability=1.0,
                             min_size_px=0.0, max_size_px=1e9, max_range=100.0)


def test_detect_skips_objects_behind():
    body = Pose3.from_xyz_yaw(0, 0, 3, 0)
    dets = detect([GroundObject(0, [0, 0, 5])], body, exact_detector(), np.random.default_rng(0))
    assert dets == []


def test_detect_on_axis_hits_principal_point():
    body = Pose3.from_xyz_yaw(1, 2, 3, 0.4)
    d, = detect([GroundObject(0, [1, 2, 0])], body, exact_detector(), np.random.default_rng(0))
    assert (d.u, d.v) == pytest.approx((K.cx, K.cy), abs=1e-9)


def test_detect_matches_hand_pinhole(rng):
    mount = tilted_camera(math.radians(40))
    body = Pose3.from_xyz_yaw(0.5, -1.0, 3.0, 0.3)
    cam = body.compose(mount)
    obj = GroundObject(7, [4.0, 0.5, 0.0])
    d, = detect([obj], body, exact_detector(mount), rng)
    R, c = cam.rotation, cam.translation
    pc = R.T @ (obj.centroid - c)
    assert d.u == pytest.approx(K.fx * pc[0] / pc[2] + K.cx)
    assert d.v == pytest.approx(K.fy * pc[1] / pc[2] + K.cy)
    assert d.object_id == 7


def test_tilted_mount_looks_forward_and_down():
    axis = tilted_camera(math.radians(40)).rotation @ [0, 0, 1]
    assert axis[0] > 0 and axis[2] < 0
    assert math.degrees(math.atan2(-axis[2], axis[0])) == pytest.approx(40.0)


def test_nadir_ground_projection():
    cam = Pose3.from_xyz_yaw(0, 0, 2, 0).compose(NADIR_CAMERA)
    assert np.allclose(project_to_ground(Detection(K.cx, K.cy, 0), cam, K), (0, 0), atol=1e-12)
    p = project_to_ground(Detection(K.cx + K.fx, K.cy, 0), cam, K)
    # image x maps onto some ground axis; the offset length is height * (u - cx) / fx
    assert np.linalg.norm(p) == pytest.approx(2.0 * 1.0)
    cam_x = cam.rotation[:, 0]
    assert np.allclose(p, 2.0 * cam_x[:2])


def test_parallel_ray_has_no_intersection():
    level = Pose3.from_xyz_yaw(0, 0, 2, 0).compose(tilted_camera(0.0))
    with pytest.raises(NoIntersectionError):
        project_to_ground(Detection(K.cx, K.cy, 0), level, K)


def test_range_stretched_covariance_examples(rng):
    assert np.allclose(range_stretched_covariance([3, 4], [0, 0, 2], 0.1, 1.0), 0.01 * np.eye(2))
    assert np.allclose(range_stretched_covariance([5, 0], [0, 0, 2], 0.1, 3.0),
                       np.diag([0.09, 0.01]))
    for _ in range(50):
        s = rng.uniform(1, 6)
        C = range_stretched_covariance(rng.normal(size=2) * 5, [0, 0, 3], 0.2, s)
        lo, hi = np.linalg.eigvalsh(C)
        assert hi / lo == pytest.approx(s * s)


def test_hungarian_examples():
    assert sorted(hungarian(np.eye(3) * -1 + 2)) == [(0, 0), (1, 1), (2, 2)]
    pairs = hungarian([[1, 2], [2, 1]])
    assert sorted(pairs) == [(0, 0), (1, 1)]


def test_hungarian_matches_brute_force(rng):
    for _ in range(30):
        C = rng.uniform(0, 10, size=(7, 7))
        best = min(sum(C[i, p[i]] for i in range(7)) for p in itertools.permutations(range(7)))
        got = sum(C[i, j] for i, j in hungarian(C))
        assert got == pytest.approx(best)


def test_hungarian_sentinel_leaves_rows_free():
    C = np.array([[1.0, np.inf], [np.inf, np.inf]])
    assert hungarian(C) == [(0, 0)]


def _map_with(points, cov=0.01):
    m = LocalMap(0)
    for p in points:
        m.add(p, cov * np.eye(2), 0.0)
    return m


def test_gnn_examples():
    empty = associate_gnn([[0, 0], [1, 1]], [np.eye(2) * 0.01] * 2, LocalMap(0))
    assert empty.new == [0, 1] and empty.matches == []
    m = _map_with([[2.0, 3.0]])
    a = associate_gnn([[2.0, 3.0]], [np.eye(2) * 0.01], m)
    assert a.matches == [(0, 0, 0.0)]
    # 10 sigma of the combined covariance is well past the 9.21 gate
    sigma = math.sqrt(0.02)
    far = associate_gnn([[2.0 + 10 * sigma, 3.0]], [np.eye(2) * 0.01], m)
    assert far.new == [0] and far.missed == [0]


def test_update_map_kappa_one_deletes():
    m = _map_with([[0, 0]])
    update_map(m, Association([], [], [0]), np.zeros((0, 2)), np.zeros((0, 2, 2)), 1, 1.0)
    assert len(m) == 0


def test_repeated_observations_shrink_covariance():
    m = _map_with([[0, 0]], cov=0.5)
    traces = [np.trace(m.landmarks[0].covariance)]
    for k in range(10):
        a = associate_gnn([[0.0, 0.0]], [0.5 * np.eye(2)], m)
        update_map(m, a, [[0.0, 0.0]], [0.5 * np.eye(2)], 20, float(k + 1))
        traces.append(np.trace(m.landmarks[0].covariance))
    assert np.all(np.diff(traces) < 0)


def test_equal_covariances_halve():
    x, P = kalman_fuse(np.zeros(2), np.eye(2), np.array([1.0, 1.0]), np.eye(2))
    assert np.allclose(P, 0.5 * np.eye(2)) and np.allclose(x, 0.5)


def test_process_noise_inflates_before_fusing():
    m = _map_with([[0, 0]], cov=0.1)
    a = Association([(0, 0, 0.0)], [], [])
    update_map(m, a, [[1.0, 0.0]], [0.1 * np.eye(2)], 20, 4.0, process_noise=0.1)
    # prior grows to 0.1 + 0.01 * 4 = 0.14, gain 0.14 / 0.24
    assert m.landmarks[0].position[0] == pytest.approx(0.14 / 0.24)


def test_new_ids_are_never_reused():
    m = _map_with([[0, 0], [5, 5]])
    update_map(m, Association([], [0], [1]), [[9.0, 9.0]], [np.eye(2)], 1, 1.0)
    assert sorted(m.landmarks) == [0, 2]


def test_map_json_roundtrip():
    m = _map_with([[1, 2], [3, 4]])
    back = LocalMap.from_json(m.to_json())
    assert np.allclose(back.positions(), m.positions()) and back.next_id == 2


def test_mapper_converges_on_static_scene():
    objects = [GroundObject(i, [x, y, 0.0]) for i, (x, y) in
               enumerate([(4, 0), (5, 1.5), (6, -1), (7, 0.5)])]
    det = SyntheticDetector(pixel_sigma=1.0)
    rng = np.random.default_rng(3)
    mapper = LandmarkMapper(kappa=50)
    body = Pose3.from_xyz_yaw(0, 0, 3, 0)
    for k in range(60):
        mapper.partial_fit(detect(objects, body, det, rng, k * 0.2),
                           body.compose(det.mount), k * 0.2)
    P = mapper.transform()
    assert len(P) == 4
    truth = np.array([o.centroid[:2] for o in objects])
    d = np.linalg.norm(P[:, None] - truth[None], axis=-1).min(axis=1)
    assert np.all(d < 0.1)
    assert mapper.get_params()["kappa"] == 50
