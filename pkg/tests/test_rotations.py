import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from mofblock.rotations import (
    AxisAngle,
    EulerAngles,
    apply_rotation,
    axis_angle_to_matrix,
    euler_to_matrix,
    is_rotation,
    matrix_to_axis_angle,
    matrix_to_euler,
    random_rotation,
    random_rotations,
    rot_x,
    rot_y,
    rot_z,
    rotvec_to_matrix,
)

HALF_PI = math.pi / 2


def _explicit(phi, omega, psi):
    """Three elementary matrices multiplied out, written independently."""
    def rx(t):
        return np.array([[1, 0, 0], [0, math.cos(t), -math.sin(t)], [0, math.sin(t), math.cos(t)]])

    def ry(t):
        return np.array([[math.cos(t), 0, math.sin(t)], [0, 1, 0], [-math.sin(t), 0, math.cos(t)]])

    def rz(t):
        return np.array([[math.cos(t), -math.sin(t), 0], [math.sin(t), math.cos(t), 0], [0, 0, 1]])

    return rz(psi) @ ry(omega) @ rx(phi)


euler_in_range = st.tuples(
    st.floats(-math.pi, math.pi),
    st.floats(-HALF_PI + 1e-6, HALF_PI - 1e-6),
    st.floats(-math.pi, math.pi),
)


class TestEuler:
    def test_identity(self):
        assert_allclose(euler_to_matrix((0, 0, 0)), np.eye(3))
        assert matrix_to_euler(np.eye(3)) == (0.0, 0.0, 0.0)

    def test_yaw_quarter_turn(self):
        assert_allclose(euler_to_matrix((0, 0, HALF_PI)), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)

    def test_known_triplet(self):
        e = matrix_to_euler(euler_to_matrix((0.3, 0.4, 0.5)))
        assert_allclose(e, (0.3, 0.4, 0.5), atol=1e-9)

    @settings(max_examples=300, deadline=None)
    @given(st.tuples(*[st.floats(-10, 10)] * 3))
    def test_matches_explicit_product(self, e):
        assert_allclose(euler_to_matrix(e), _explicit(*e), atol=1e-12)
        assert_allclose(euler_to_matrix(e), rot_z(e[2]) @ rot_y(e[1]) @ rot_x(e[0]), atol=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(euler_in_range)
    def test_angles_recovered(self, e):
        assert_allclose(matrix_to_euler(euler_to_matrix(e)), e, atol=1e-9)

    @pytest.mark.parametrize("omega", [HALF_PI, -HALF_PI])
    @pytest.mark.parametrize("phi, psi", [(0.3, -1.2), (2.0, 2.5), (-3.0, 0.1)])
    def test_gimbal_lock_recomposes(self, phi, omega, psi):
        R = euler_to_matrix((phi, omega, psi))
        e = matrix_to_euler(R)
        assert e.phi == 0.0
        assert_allclose(euler_to_matrix(e), R, atol=1e-9)

    def test_near_gimbal_recomposes(self):
        for delta in [1e-5, 1e-8, 1e-10, 1e-13]:
            R = euler_to_matrix((0.7, HALF_PI - delta, -0.4))
            assert_allclose(euler_to_matrix(matrix_to_euler(R)), R, atol=1e-9)

    def test_output_ranges(self):
        for R in random_rotations(500, seed=1):
            e = matrix_to_euler(R)
            assert -math.pi <= e.phi <= math.pi and -math.pi <= e.psi <= math.pi
            assert -HALF_PI <= e.omega <= HALF_PI


class TestAxisAngle:
    def test_zero_angle(self):
        assert_allclose(axis_angle_to_matrix(AxisAngle(np.array([0.3, 0.4, 0.5]), 0.0)), np.eye(3))
        aa = matrix_to_axis_angle(np.eye(3))
        assert aa.angle == 0.0
        assert_allclose(aa.axis, [1, 0, 0])

    def test_agrees_with_euler(self):
        assert_allclose(
            axis_angle_to_matrix(AxisAngle(np.array([0.0, 0, 1]), HALF_PI)),
            euler_to_matrix((0, 0, HALF_PI)),
            atol=1e-15,
        )

    def test_rotvec_of_z_quarter_turn(self):
        aa = matrix_to_axis_angle(euler_to_matrix((0, 0, HALF_PI)))
        assert_allclose(aa.rotvec, [0, 0, HALF_PI], atol=1e-12)

    def test_half_turn_fallback(self):
        R = np.diag([1.0, -1.0, -1.0])
        aa = matrix_to_axis_angle(R)
        assert aa.angle == pytest.approx(math.pi)
        assert_allclose(np.abs(aa.axis), [1, 0, 0], atol=1e-12)
        assert_allclose(axis_angle_to_matrix(aa), R, atol=1e-8)

    def test_half_turn_general_axis(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            a = rng.normal(size=3)
            a /= np.linalg.norm(a)
            for angle in (math.pi, math.pi - 1e-9, math.pi - 1e-4):
                R = axis_angle_to_matrix(AxisAngle(a, angle))
                assert_allclose(axis_angle_to_matrix(matrix_to_axis_angle(R)), R, atol=1e-8)

    @settings(max_examples=300, deadline=None)
    @given(
        st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3),
        st.floats(0, math.pi),
    )
    def test_trace(self, axis, angle):
        axis = np.asarray(axis) / np.linalg.norm(axis)
        R = axis_angle_to_matrix(AxisAngle(axis, angle))
        assert np.trace(R) == pytest.approx(1 + 2 * math.cos(angle), abs=1e-12)
        assert is_rotation(R)

    @settings(max_examples=300, deadline=None)
    @given(
        st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3),
        st.floats(1e-6, math.pi - 1e-6),
    )
    def test_round_trip_interior(self, axis, angle):
        axis = np.asarray(axis) / np.linalg.norm(axis)
        aa = matrix_to_axis_angle(axis_angle_to_matrix(AxisAngle(axis, angle)))
        assert aa.angle == pytest.approx(angle, abs=1e-8)
        assert_allclose(aa.axis, axis, atol=1e-8)

    def test_rotvec(self):
        m = np.array([0.1, -0.2, 0.3])
        assert_allclose(matrix_to_axis_angle(rotvec_to_matrix(m)).rotvec, m, atol=1e-12)
        assert_allclose(rotvec_to_matrix(np.zeros(3)), np.eye(3))


class TestHelpers:
    def test_is_rotation(self):
        assert is_rotation(np.eye(3), 1e-9)
        assert not is_rotation(np.diag([1, 1, -1]), 1e-9)
        assert not is_rotation(2 * np.eye(3))
        assert not is_rotation(np.full((3, 3), np.nan))

    def test_random_rotation_deterministic(self):
        assert_allclose(random_rotation(5), random_rotation(5))
        assert not np.allclose(random_rotation(5), random_rotation(6))
        assert is_rotation(random_rotation(5))

    def test_uniformity(self):
        Rs = random_rotations(10_000, seed=0)
        assert np.all(np.abs(Rs.mean(axis=0)) < 0.05)

    def test_apply_rotation_preserves_geometry(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(10, 3))
        R = random_rotation(rng)
        out = apply_rotation(pts, R)
        d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        d1 = np.linalg.norm(out[:, None] - out[None], axis=-1)
        assert_allclose(d0, d1, atol=1e-12)
        assert np.linalg.norm(out.mean(0)) == pytest.approx(np.linalg.norm(pts.mean(0)))
        assert_allclose(out[0], R @ pts[0])

    def test_euler_namedtuple(self):
        e = EulerAngles(1.0, 0.5, -0.5)
        assert (e.phi, e.omega, e.psi) == (1.0, 0.5, -0.5)
