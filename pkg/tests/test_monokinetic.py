import numpy as np
import pytest

from ism.geometry import cross, norm
from ism.initializers import polynomial_bump, uniform_field_perturbed
from ism.interactions import IndicatorProfile, SmoothBumpProfile, TableProfile
from ism.monokinetic import (EXPECTED_SLOPE, LineChain, MonokineticField1D,
                             circle_curve, coeff_bK, coeff_line, coeff_rank,
                             expansion_check, expansion_slope, helix_curve,
                             line_curve, line_rhs, line_step, max_stable_dt,
                             pde_rhs_1d, pde_step_1d, polar_residual,
                             polar_rotating_state, traveling_curve)


class TestCoefficients:
    def test_bK_indicator(self):
        assert coeff_bK(IndicatorProfile(1.0)) == pytest.approx(4 * np.pi / 15,
                                                                rel=1e-10)

    def test_bK_scaling_R5(self):
        b1 = coeff_bK(IndicatorProfile(1.0))
        b2 = coeff_bK(IndicatorProfile(2.0))
        assert b2 == pytest.approx(32 * b1, rel=1e-9)

    def test_bK_zero_profile(self):
        assert coeff_bK(IndicatorProfile(1.0, height=0.0)) == 0.0

    def test_line_indicator(self):
        b0, b2 = coeff_line(IndicatorProfile(1.0))
        assert b0 == pytest.approx(2.0, rel=1e-12)
        assert b2 == pytest.approx(2.0 / 3.0, rel=1e-10)

    def test_line_scaling(self):
        b0a, b2a = coeff_line(IndicatorProfile(1.0))
        b0b, b2b = coeff_line(IndicatorProfile(3.0))
        assert b0b == pytest.approx(3 * b0a, rel=1e-10)
        assert b2b == pytest.approx(27 * b2a, rel=1e-10)

    def test_rank_indicator(self):
        bT, b_line = coeff_rank(IndicatorProfile(1.0))
        expect_bT = 4 * np.pi / 3 * (1 / 5) * (4 * np.pi) ** (-5 / 3)
        assert bT == pytest.approx(expect_bT, rel=1e-9)
        assert b_line == pytest.approx(1.0 / 3.0, rel=1e-10)

    def test_rank_zero_profile(self):
        bT, b_line = coeff_rank(IndicatorProfile(1.0, height=0.0))
        assert bT == 0.0 and b_line == 0.0


def generic_curve(z):
    z = np.asarray(z, dtype=float)
    return np.stack([z + 0.3 * z ** 2, 0.4 * z ** 2 + 0.1 * z ** 3, 0.2 * z],
                    axis=-1)


def generic_phi1(z):
    return np.sin(z) + 0.4 * z ** 2


class TestExpansionChecks:
    def test_constant_phi_space_both_zero(self):
        prof = IndicatorProfile(1.0)
        rho = lambda y: np.ones(np.asarray(y).shape[:-1])
        phi = lambda y: np.full(np.asarray(y).shape[:-1], 3.7)
        c = expansion_check("space", 0.1, prof, rho=rho, phi=phi)
        assert abs(c.exact) < 1e-14 and c.asymptotic == pytest.approx(0.0, abs=1e-12)

    def test_line_straight_curve_formula(self):
        # x(z) = (z, 0, 0), phi = sin z: asymptotic = (eps^3 b2/2) phi''(0) = 0
        # so use phi with phi''(0) != 0: phi = sin z + z^2 -> phi'' = 2 - sin
        prof = IndicatorProfile(1.0)
        curve = line_curve([1.0, 0.0, 0.0]).point
        phi1 = lambda z: np.sin(z) + z ** 2
        eps = 0.05
        c = expansion_check("line", eps, prof, curve=curve, phi1=phi1)
        _, b2 = coeff_line(prof)
        assert c.asymptotic == pytest.approx(0.5 * eps ** 3 * b2 * 2.0, rel=1e-6)
        assert c.rel_error < 5e-3

    def test_space_slope(self):
        prof = IndicatorProfile(1.0)
        rho = lambda y: np.exp(-0.5 * np.sum((np.asarray(y) - 0.2) ** 2, axis=-1))
        phi = lambda y: (np.sin(np.asarray(y)[..., 0])
                         + 0.5 * np.asarray(y)[..., 1] ** 2)
        slope, _ = expansion_slope("space", [0.2, 0.1, 0.05], profile=prof,
                                   rho=rho, phi=phi, x0=np.array([0.1, -0.2, 0.3]))
        assert abs(slope - EXPECTED_SLOPE["space"]) < 0.3

    def test_line_slope(self):
        slope, _ = expansion_slope("line", [0.2, 0.1, 0.05],
                                   profile=IndicatorProfile(1.0),
                                   curve=generic_curve, phi1=generic_phi1)
        assert abs(slope - EXPECTED_SLOPE["line"]) < 0.3

    def test_line_rank_slope_and_bound(self):
        eps_list = [0.2, 0.1, 0.05]
        slope, checks = expansion_slope("line_rank", eps_list,
                                        profile=IndicatorProfile(1.0),
                                        curve=generic_curve, phi1=generic_phi1,
                                        lam=1.0)
        assert abs(slope - EXPECTED_SLOPE["line_rank"]) < 0.3
        # the lemma's remainder bound O(eps) relative must hold regardless
        ratios = [c.rel_error / e for c, e in zip(checks, eps_list)]
        assert max(ratios) < 1.0


def uniform_field(cells=64, rho=1.0, j=1.0, q=0.0, v=1.0, length=2 * np.pi):
    u = np.zeros((cells, 3))
    u[:, 1] = v
    return MonokineticField1D(np.full(cells, rho), u, np.zeros((cells, 3)),
                              length, j, q, v)


class TestPde1D:
    def test_uniform_state_zero_rhs(self):
        f = uniform_field()
        drho, du, dsig = pde_rhs_1d(f.rho, f.u, f.sigma, f)
        assert np.max(np.abs(drho)) == 0.0
        assert np.max(np.abs(du)) == 0.0
        assert np.max(np.abs(dsig)) == 0.0

    def test_laplacian_product_identity(self):
        # rho lap(u) + 2 grad rho . grad u == lap(rho u) - (lap rho) u,
        # discretely to second order
        cells = 256
        L = 2 * np.pi
        x = (np.arange(cells) + 0.5) * (L / cells)
        rho = 1.5 + 0.3 * np.sin(x)
        g = np.cos(2 * x)
        dx = L / cells

        def d1(f):
            return (np.roll(f, -1) - np.roll(f, 1)) / (2 * dx)

        def d2(f):
            return (np.roll(f, -1) - 2 * f + np.roll(f, 1)) / dx ** 2

        lhs = rho * d2(g) + 2 * d1(rho) * d1(g)
        rhs = d2(rho * g) - d2(rho) * g
        assert np.max(np.abs(lhs - rhs)) < 5e-3  # both O(dx^2) forms agree

    def test_divergence_form_spin_integral(self):
        # smooth small-amplitude field: discrete d/dt int rho sigma ~ 0 at q=0
        cells = 256
        f = uniform_field(cells=cells)
        x = f.cell_centers
        amp = 1e-3
        u = np.zeros((cells, 3))
        u[:, 1] = 1.0
        u[:, 2] = amp * np.sin(2 * np.pi * x / f.length)
        u = u / norm(u)[:, None]
        rho = 1.0 + amp * np.cos(2 * np.pi * x / f.length)
        sig = np.zeros((cells, 3))
        sig[:, 0] = amp * np.sin(4 * np.pi * x / f.length)
        fld = MonokineticField1D(rho, u, sig, f.length, 1.0, 0.0, 1.0)
        drho, du, dsig = pde_rhs_1d(fld.rho, fld.u, fld.sigma, fld)
        ddt = np.sum(drho[:, None] * fld.sigma + fld.rho[:, None] * dsig,
                     axis=0) * fld.dx
        assert np.max(np.abs(ddt)) < 1e-8

    def test_stationary_step_unchanged(self):
        f = uniform_field()
        f2 = pde_step_1d(f, 0.5 * max_stable_dt(f))
        assert np.max(np.abs(f2.rho - f.rho)) < 1e-12
        assert np.max(np.abs(f2.u - f.u)) < 1e-12
        assert np.max(np.abs(f2.sigma - f.sigma)) < 1e-12

    def test_cfl_violation_names_admissible_dt(self):
        f = uniform_field()
        dt_max = max_stable_dt(f)
        with pytest.raises(ValueError, match="admissible"):
            pde_step_1d(f, 2 * dt_max)

    def test_mass_and_speed_preserved(self):
        f = uniform_field_perturbed(128, 2 * np.pi, 1.3, 1.0, 1.0, 0.5,
                                    amplitude=1e-2)
        mass0 = f.mass()
        dt = 0.8 * max_stable_dt(f)
        for _ in range(50):
            f = pde_step_1d(f, dt)
        assert abs(f.mass() - mass0) / mass0 < 1e-10
        assert np.max(np.abs(norm(f.u) - 1.0)) < 1e-15

    def test_wave_speed_single_case(self):
        # transverse perturbation travels at sqrt(j rho^(1-q))/v (2% band)
        j, q, rho_bar, v = 1.5, 0.5, 1.2, 1.0
        cells = 256
        f = uniform_field_perturbed(cells, 2 * np.pi, rho_bar, v, j, q)
        k = 1.0
        c_theory = np.sqrt(j * rho_bar ** (1 - q)) / v
        period = 2 * np.pi / (k * c_theory)
        dt = 0.8 * max_stable_dt(f)
        steps = int(np.ceil(1.5 * period / dt))
        x = f.cell_centers
        amps, times = [], []
        for step in range(steps):
            amps.append(2 * np.mean(f.u[:, 2] * np.sin(k * x)))
            times.append(step * dt)
            f = pde_step_1d(f, dt)
        from scipy.optimize import curve_fit
        popt, _ = curve_fit(lambda t, a, om: a * np.cos(om * t),
                            np.asarray(times), np.asarray(amps),
                            p0=[1e-4, 0.9 * k * c_theory])
        assert abs(abs(popt[1]) / k - c_theory) / c_theory < 0.02


class TestPolar:
    def test_sigma_value_at_r2(self):
        g = polynomial_bump(2.0, 0.5)
        field, _ = polar_rotating_state(g, 96, 3.0, j=1.0, q=0.0, v_speed=1.0)
        xx, yy = field.grid()
        r = np.hypot(xx, yy)
        cell = np.unravel_index(np.argmin(np.abs(r - 2.0) + np.abs(yy)), r.shape)
        assert field.sigma[cell] == pytest.approx(1.0 / (1.0 * r[cell]), rel=1e-12)
        assert field.sigma[cell] == pytest.approx(0.5, rel=2e-2)

    def test_zero_profile_zero_residual(self):
        field, res = polar_rotating_state(lambda r: np.zeros_like(np.asarray(r)),
                                          64, 3.0, j=1.0, q=0.0, v_speed=1.0)
        assert res["total"] == 0.0

    def test_support_touching_origin_raises(self):
        with pytest.raises(ValueError, match="touches r = 0"):
            polar_rotating_state(polynomial_bump(0.3, 0.4), 64, 2.0,
                                 j=1.0, q=0.0, v_speed=1.0)

    def test_residual_second_order(self):
        g = polynomial_bump(1.5, 0.5)
        res = []
        for n in (96, 192, 384):
            _, r = polar_rotating_state(g, n, 3.0, j=1.0, q=0.0, v_speed=1.0,
                                        mask_radii=(1.15, 1.85))
            res.append(r["total"])
        slopes = np.log2(np.asarray(res[:-1]) / np.asarray(res[1:]))
        assert np.all(np.abs(slopes - 2.0) < 0.4)


class TestLineChain:
    def test_straight_chain_zero_rhs(self):
        n = 64
        z = np.arange(n) * 0.1
        x = np.stack([z, np.zeros(n), np.zeros(n)], axis=-1)
        v = np.tile([1.0, 0.0, 0.0], (n, 1))
        s = np.zeros((n, 3))
        chain = LineChain(x, v, s, 0.1, 1.0, 1.0, 0.0, 1.0, closed=False)
        dx, dv, ds = line_rhs(chain)
        assert np.array_equal(dx, v)
        assert np.max(np.abs(dv)) == 0.0
        assert np.max(np.abs(ds)) < 1e-12

    def test_circle_sdot_matches_analytic_zero(self):
        # on a circle Gamma' ^ Gamma''' = 0, so ds/dt = 0 up to O(dz^2)
        chain = traveling_curve(circle_curve(2.0), 1.0, 0.0, 256, 1.0, 1.0, 0.0, 1.0)
        _, _, ds = line_rhs(chain)
        assert np.max(norm(ds)) < 1e-4

    def test_lambda_scaling_q0(self):
        chain = traveling_curve(circle_curve(1.0), 1.0, 0.0, 128, 2.0, 0.5, 0.0, 1.0)
        _, _, ds1 = line_rhs(chain)
        chain2 = chain.copy()
        chain2.lam = 2 * chain.lam
        _, _, ds2 = line_rhs(chain2)
        assert np.allclose(ds2, 2 * ds1, rtol=1e-12)

    def test_traveling_circle_spin(self):
        # s = v Gamma' ^ Gamma'' = (v/R) binormal, constant along the chain
        R, v = 2.0, 1.3
        with pytest.warns(UserWarning):
            chain = traveling_curve(circle_curve(R), 1.0, 0.0, 64, 1.0, 1.0, 0.0, v)
        expect = np.array([0.0, 0.0, v / R])
        assert np.allclose(chain.s, expect, atol=1e-12)
        assert np.max(np.abs(norm(chain.v) - v)) < 1e-12
        assert np.max(np.abs(np.sum(chain.v * chain.s, axis=1))) < 1e-12

    def test_straight_line_pure_translation(self):
        curve = line_curve([0.0, 1.0, 0.0])
        chain = traveling_curve(curve, 1.0, 0.0, 32, 1.0, 1.0, 0.0, 1.0,
                                z_span=3.0)
        assert np.max(np.abs(chain.s)) == 0.0
        later = traveling_curve(curve, 1.0, 2.0, 32, 1.0, 1.0, 0.0, 1.0,
                                z_span=3.0)
        assert np.allclose(later.x - chain.x, np.array([0.0, 2.0, 0.0]))

    def test_condition_warning(self):
        with pytest.warns(UserWarning, match="condition"):
            chain = traveling_curve(circle_curve(1.0), 1.0, 0.0, 64, 1.0, 3.0,
                                    0.0, 1.0)
        assert not chain.condition_ok

    def test_helix_chain_tracks_analytic(self):
        curve = helix_curve(1.0, 0.3)
        j, q, gamma, v = 0.5, 0.0, 1.0, 1.0
        lam = gamma * v ** 2 / j
        chain = traveling_curve(curve, gamma, 0.0, 256, lam, j, q, v)
        assert chain.condition_ok
        t_end = 1.0
        dt = 2e-3
        for _ in range(int(round(t_end / dt))):
            chain = line_step(chain, dt)
        analytic = traveling_curve(curve, gamma, t_end, 256, lam, j, q, v)
        assert np.max(norm(chain.x - analytic.x)) < 5e-4
