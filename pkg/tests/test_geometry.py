import numpy as np
import pytest
from hypothesis import given, strategies as st

from liodom.geometry import (FrameMismatchError, NonPrincipalBranchError,
                             Pose, compose, exp, is_rotation, log,
                             quat_to_rot, rot_to_quat, rot_x, rot_y, rot_z,
                             skew, so3_exp, so3_log, so3_right_jacobian,
                             so3_right_jacobian_inv)

unit_angles = st.floats(-3.0, 3.0, allow_nan=False)
small = st.floats(-1.0, 1.0, allow_nan=False)


def random_rotation(rng):
    return so3_exp(rng.uniform(-2.0, 2.0, 3))


def test_skew_matches_cross_product():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v, w = rng.normal(size=3), rng.normal(size=3)
        assert np.allclose(skew(v) @ w, np.cross(v, w))


def test_skew_is_antisymmetric():
    K = skew([1.0, -2.0, 3.0])
    assert np.allclose(K, -K.T)


@given(st.lists(small, min_size=3, max_size=3))
def test_exp_produces_rotation(phi):
    assert is_rotation(so3_exp(np.array(phi)), tol=1e-9)


@given(st.lists(small, min_size=3, max_size=3))
def test_exp_log_roundtrip(phi):
    phi = np.array(phi)
    assert np.allclose(so3_log(so3_exp(phi)), phi, atol=1e-9)


def test_exp_against_rodrigues_oracle():
    # independent oracle: scipy's rotation vector convention
    from scipy.spatial.transform import Rotation
    rng = np.random.default_rng(1)
    for _ in range(30):
        phi = rng.uniform(-3.0, 3.0, 3)
        assert np.allclose(so3_exp(phi), Rotation.from_rotvec(phi).as_matrix(),
                           atol=1e-12)


def test_exp_small_angle_branch():
    phi = np.array([1e-10, -2e-10, 3e-11])
    assert np.allclose(so3_exp(phi), np.eye(3) + skew(phi), atol=1e-18)
    assert np.allclose(so3_log(so3_exp(phi)), phi, atol=1e-15)


def test_log_rejects_angle_pi():
    with pytest.raises(NonPrincipalBranchError):
        so3_log(rot_z(np.pi))


def test_elementary_rotations():
    a = 0.7
    assert np.allclose(rot_x(a), so3_exp([a, 0, 0]))
    assert np.allclose(rot_y(a), so3_exp([0, a, 0]))
    assert np.allclose(rot_z(a), so3_exp([0, 0, a]))


def test_right_jacobian_first_order_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        phi = rng.uniform(-2.0, 2.0, 3)
        d = rng.normal(size=3) * 1e-6
        lhs = so3_exp(phi + d)
        rhs = so3_exp(phi) @ so3_exp(so3_right_jacobian(phi) @ d)
        assert np.allclose(lhs, rhs, atol=1e-10)


def test_right_jacobian_inverse_consistency():
    rng = np.random.default_rng(3)
    for _ in range(20):
        phi = rng.uniform(-2.0, 2.0, 3)
        J = so3_right_jacobian(phi) @ so3_right_jacobian_inv(phi)
        assert np.allclose(J, np.eye(3), atol=1e-9)


def test_quaternion_roundtrip():
    rng = np.random.default_rng(4)
    for _ in range(30):
        R = random_rotation(rng)
        assert np.allclose(quat_to_rot(rot_to_quat(R)), R, atol=1e-12)


def test_quaternion_against_scipy():
    from scipy.spatial.transform import Rotation
    rng = np.random.default_rng(5)
    for _ in range(30):
        R = random_rotation(rng)
        q = rot_to_quat(R)
        q_ref = Rotation.from_matrix(R).as_quat()
        if q_ref[3] < 0:
            q_ref = -q_ref
        assert np.allclose(q, q_ref, atol=1e-9)


def test_pose_inverse_and_compose():
    rng = np.random.default_rng(6)
    for _ in range(20):
        T = Pose(random_rotation(rng), rng.normal(size=3))
        I = compose(T, T.inverse())
        assert np.allclose(I.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(I.translation, 0.0, atol=1e-12)


def test_pose_transform_matches_matrix():
    rng = np.random.default_rng(7)
    T = Pose(random_rotation(rng), rng.normal(size=3))
    pts = rng.normal(size=(10, 3))
    hom = np.hstack([pts, np.ones((10, 1))])
    assert np.allclose(T.transform(pts), (T.matrix() @ hom.T).T[:, :3])


def test_frame_checking():
    a = Pose(np.eye(3), np.zeros(3), "W", "B")
    b = Pose(np.eye(3), np.zeros(3), "B", "L")
    assert compose(a, b).frame_parent == "W"
    assert compose(a, b).frame_child == "L"
    with pytest.raises(FrameMismatchError):
        compose(b, a)


def test_se3_exp_log_roundtrip():
    rng = np.random.default_rng(8)
    for _ in range(30):
        xi = rng.uniform(-2.0, 2.0, 6)
        assert np.allclose(log(exp(xi)), xi, atol=1e-9)


def test_se3_exp_against_matrix_exponential():
    from scipy.linalg import expm
    rng = np.random.default_rng(9)
    for _ in range(20):
        xi = rng.uniform(-2.0, 2.0, 6)
        M = np.zeros((4, 4))
        M[:3, :3] = skew(xi[:3])
        M[:3, 3] = xi[3:]
        assert np.allclose(exp(xi).matrix(), expm(M), atol=1e-9)
