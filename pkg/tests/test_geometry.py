import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groupfield.geometry import Camera, camera_extent, look_at


def _camera(eye=(0.0, -5.0, 0.0), target=(0.0, 0.0, 0.0)):
    rot, trans = look_at(np.array(eye), np.array(target))
    return Camera(fx=100.0, fy=100.0, cx=32.0, cy=32.0, width=64, height=64,
                  rotation=rot, translation=trans)


def test_point_on_optical_axis_hits_principal_point():
    # independent pinhole check: a point straight ahead lands on (cx, cy)
    cam = _camera()
    uv, z = cam.project(np.array([[0.0, 0.0, 0.0]]))
    assert z[0] == pytest.approx(5.0)
    assert uv[0] == pytest.approx([32.0, 32.0])


def test_project_matches_manual_formula():
    cam = _camera()
    pts = np.random.default_rng(0).normal(0, 0.5, (50, 3))
    uv, z = cam.project(pts)
    cam_pts = pts @ cam.rotation.T + cam.translation
    assert np.allclose(uv[:, 0], 100.0 * cam_pts[:, 0] / cam_pts[:, 2] + 32.0)
    assert np.allclose(uv[:, 1], 100.0 * cam_pts[:, 1] / cam_pts[:, 2] + 32.0)
    assert np.allclose(z, cam_pts[:, 2])


def test_deproject_inverts_project():
    cam = _camera(eye=(1.0, -4.0, 2.0), target=(0.2, 0.1, -0.3))
    pts = np.random.default_rng(1).normal(0, 0.5, (100, 3))
    uv, z = cam.project(pts)
    back = cam.deproject(uv[:, 0], uv[:, 1], z)
    assert np.allclose(back, pts, atol=1e-9)


def test_camera_center():
    cam = _camera(eye=(3.0, -2.0, 1.0))
    assert np.allclose(cam.center, [3.0, -2.0, 1.0])


def test_look_at_rotation_is_special_orthogonal():
    rot, _ = look_at(np.array([1.0, 2.0, 3.0]), np.zeros(3))
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(rot) == pytest.approx(1.0)


def test_look_at_straight_down_does_not_degenerate():
    rot, trans = look_at(np.array([0.0, 0.0, 5.0]), np.zeros(3))
    assert np.isfinite(rot).all()
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)


def test_invalid_rotation_rejected():
    with pytest.raises(ValueError):
        Camera(fx=1, fy=1, cx=0, cy=0, width=8, height=8,
               rotation=np.eye(3) * 2.0, translation=np.zeros(3))
    with pytest.raises(ValueError):
        Camera(fx=1, fy=1, cx=0, cy=0, width=8, height=8,
               rotation=np.diag([1.0, 1.0, -1.0]), translation=np.zeros(3))


def test_nonpositive_focal_rejected():
    with pytest.raises(ValueError):
        Camera(fx=0.0, fy=1, cx=0, cy=0, width=8, height=8,
               rotation=np.eye(3), translation=np.zeros(3))


def test_camera_extent_is_max_pairwise_distance():
    cams = [_camera(eye=e) for e in [(0, -5, 0), (3, -5, 0), (0, -5, 4)]]
    assert camera_extent(cams) == pytest.approx(5.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.floats(0.5, 10.0))
def test_deproject_depth_scales_along_ray(pix, depth):
    cam = _camera()
    u, v = abs(pix[0]) * 10, abs(pix[1]) * 10
    p1 = cam.deproject(np.array([u]), np.array([v]), np.array([depth]))
    p2 = cam.deproject(np.array([u]), np.array([v]), np.array([2 * depth]))
    # both lie on the ray through the camera center
    d1 = p1[0] - cam.center
    d2 = p2[0] - cam.center
    assert np.allclose(np.cross(d1, d2), 0.0, atol=1e-8)
