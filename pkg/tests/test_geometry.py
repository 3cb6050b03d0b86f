import numpy as np
import pytest

from ism.geometry import (cross, displacement_arc, dot, norm, omega_matrix,
                          rotate_about, tangent_project, vec3)


def rk4_rotation(v, omega, t_end, steps=20000):
    """Independent oracle: RK4 on dv/dt = omega ^ v."""
    h = t_end / steps
    v = v.astype(float).copy()
    for _ in range(steps):
        k1 = np.cross(omega, v)
        k2 = np.cross(omega, v + 0.5 * h * k1)
        k3 = np.cross(omega, v + 0.5 * h * k2)
        k4 = np.cross(omega, v + h * k3)
        v = v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return v


class TestCross:
    def test_canonical_basis(self):
        assert np.array_equal(cross(vec3(1, 0, 0), vec3(0, 1, 0)), vec3(0, 0, 1))

    def test_self_is_zero(self):
        a = vec3(0.3, -1.2, 2.5)
        assert np.array_equal(cross(a, a), np.zeros(3))

    def test_hand_expansion(self):
        # determinant formula worked by hand
        assert np.array_equal(cross(vec3(1, 2, 3), vec3(4, 5, 6)), vec3(-3, 6, -3))

    def test_antisymmetry_and_orthogonality(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a, b = rng.standard_normal(3), rng.standard_normal(3)
            c = cross(a, b)
            assert np.allclose(c, -cross(b, a))
            assert abs(c @ a) < 1e-12 * (norm(a) * norm(b) + 1)
            assert abs(c @ b) < 1e-12 * (norm(a) * norm(b) + 1)

    def test_batched(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((17, 3))
        b = rng.standard_normal((17, 3))
        assert np.array_equal(cross(a, b), np.cross(a, b))


class TestOmegaMatrix:
    def test_zero(self):
        assert np.array_equal(omega_matrix(np.zeros(3)), np.zeros((3, 3)))

    def test_sign_convention(self):
        # Omega(u) b = b ^ u, pinned: u = z-hat sends x-hat to (0, -1, 0)
        u, b = vec3(0, 0, 1), vec3(1, 0, 0)
        out = omega_matrix(u) @ b
        assert np.array_equal(out, vec3(0, -1, 0))
        assert np.array_equal(out, cross(b, u))

    def test_matches_cross_for_all_inputs(self):
        # matmul may fuse multiply-adds, so equality is at ulp scale
        rng = np.random.default_rng(3)
        for _ in range(200):
            u, b = rng.standard_normal(3), rng.standard_normal(3)
            tol = 4 * np.finfo(float).eps * norm(u) * norm(b)
            assert np.max(np.abs(omega_matrix(u) @ b - cross(b, u))) <= tol

    def test_skew_and_trace(self):
        u = vec3(1, 2, 3)
        om = omega_matrix(u)
        assert np.array_equal(om, -om.T)
        # Tr(Omega^T Omega) = 2 |u|^2 = 28
        assert np.trace(om.T @ om) == pytest.approx(28.0, abs=0)


class TestTangentProject:
    def test_parallel_kill(self):
        assert np.array_equal(tangent_project(vec3(0, 0, 1), vec3(0, 0, 5)), np.zeros(3))

    def test_coordinate_projection(self):
        assert np.array_equal(tangent_project(vec3(0, 0, 1), vec3(1, 2, 3)), vec3(1, 2, 0))

    def test_zero_velocity_raises(self):
        with pytest.raises(ValueError, match="degenerate velocity"):
            tangent_project(np.zeros(3), vec3(1, 2, 3))

    def test_idempotent_and_orthogonal(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            v = rng.standard_normal(3)
            a = rng.standard_normal(3) * rng.uniform(0.1, 10)
            once = tangent_project(v, a)
            twice = tangent_project(v, once)
            assert np.allclose(twice, once, rtol=0, atol=1e-13 * norm(a))
            assert abs(once @ v) <= 1e-13 * norm(a) * norm(v)


class TestRotateAbout:
    def test_zero_omega_identity(self):
        v = vec3(0.3, 1.0, -2.0)
        assert np.array_equal(rotate_about(v, np.zeros(3), 0.7), v)

    def test_quarter_turn_sign(self):
        # dv/dt = omega ^ v with omega = +z pi/(2 dt) turns x-hat into +y-hat
        dt = 0.25
        out = rotate_about(vec3(1, 0, 0), vec3(0, 0, np.pi / (2 * dt)), dt)
        assert np.allclose(out, vec3(0, 1, 0), atol=1e-14)

    def test_matches_rk4_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            v = rng.standard_normal(3)
            omega = rng.standard_normal(3)
            dt = rng.uniform(0.1, 1.0)
            ours = rotate_about(v, omega, dt)
            oracle = rk4_rotation(v, omega, dt)
            assert np.allclose(ours, oracle, rtol=0, atol=1e-10)

    def test_invariants_per_call(self):
        rng = np.random.default_rng(6)
        for _ in range(300):
            v = rng.standard_normal(3) * rng.uniform(0.5, 3)
            omega = rng.standard_normal(3) * 10 ** rng.uniform(-6, 1)
            dt = 10 ** rng.uniform(-4, 0)
            out = rotate_about(v, omega, dt)
            assert abs(norm(out) - norm(v)) <= 1e-13 * norm(v)
            assert abs(out @ omega - v @ omega) <= 1e-12 * norm(v) * norm(omega) + 1e-15

    def test_norm_over_1e6_composed_rotations(self):
        # 100 vectors, 10^4 sequential compositions each = 10^6 rotations
        rng = np.random.default_rng(7)
        v = rng.standard_normal((100, 3))
        n0 = norm(v)
        for _ in range(10_000):
            omega = rng.standard_normal((100, 3))
            v = rotate_about(v, omega, 0.01)
        assert np.max(np.abs(norm(v) - n0) / n0) < 1e-12

    def test_small_angle_branch_continuity(self):
        v = vec3(1.0, -0.5, 0.2)
        omega = vec3(0.3, 0.1, -0.2)
        lo = rotate_about(v, omega, 0.99e-4 / norm(omega))
        hi = rotate_about(v, omega, 1.01e-4 / norm(omega))
        assert np.allclose(lo, hi, atol=1e-8)


class TestDisplacementArc:
    def test_zero_omega_is_chord(self):
        v = vec3(1.0, 2.0, 3.0)
        assert np.array_equal(displacement_arc(v, np.zeros(3), 0.3), 0.3 * v)

    def test_full_period_closes(self):
        # rotating in a circle for a full period returns to the start
        out = displacement_arc(vec3(1, 0, 0), vec3(0, 0, 2 * np.pi), 1.0)
        assert np.allclose(out, np.zeros(3), atol=1e-14)

    def test_matches_quadrature(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            v = rng.standard_normal(3)
            omega = rng.standard_normal(3)
            dt = rng.uniform(0.05, 0.8)
            taus = np.linspace(0, dt, 20001)
            vals = np.array([rotate_about(v, omega, t) for t in taus])
            oracle = np.trapezoid(vals, taus, axis=0)
            assert np.allclose(displacement_arc(v, omega, dt), oracle, atol=1e-9)
