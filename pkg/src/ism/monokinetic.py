"""Zero-range continuum limits: coefficients, expansions, and the PDE models.

Contents:
  * the zero-range coefficients b_K, (b0, b2), (bT, b_line) by quadrature;
  * expansion_check, which compares the exact kernel integral against its
    leading zero-range form over a dyadic epsilon sweep (the log-log error
    slope is the per-lemma remainder order);
  * the 1D periodic mono-kinetic system (method of lines, RK4, |u|
    renormalized per stage);
  * the exact 2D rotating state and its discrete residual;
  * Lagrangian line chains with the traveling-curve solutions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .geometry import Vec3, cross, norm
from .interactions import RadialProfile


# ---------------------------------------------------------------------------
# zero-range coefficients

def _quad_profile(f: Callable, lo: float, hi: float) -> float:
    val, err = quad(f, lo, hi, limit=400)
    if not np.isfinite(val) or err > 1e-9 * (abs(val) + 1.0):
        raise ValueError("profile integral did not converge")
    return val


def coeff_bK(profile: RadialProfile) -> float:
    """b_K = (1/3) int |z|^2 K(|z|) d^3z = (4 pi / 3) int_0^S r^4 K(r) dr."""
    s = profile.support
    return 4.0 * np.pi / 3.0 * _quad_profile(lambda r: r ** 4 * float(profile(r)), 0.0, s)


def coeff_line(profile: RadialProfile) -> tuple[float, float]:
    """(b0, b2) = (int_R K(|z|) dz, int_R K(|z|) z^2 dz), full-line integrals."""
    s = profile.support
    b0 = 2.0 * _quad_profile(lambda r: float(profile(r)), 0.0, s)
    b2 = 2.0 * _quad_profile(lambda r: r * r * float(profile(r)), 0.0, s)
    return b0, b2


def coeff_rank(profile: RadialProfile) -> tuple[float, float]:
    """(bT, b_line) for a rank profile T on [0, 1].

    bT = (1/3) int |zeta|^2 T(4 pi |zeta|^3) d^3zeta (radial quadrature up to
    (S/4pi)^(1/3)); b_line = int_0^S T(z) z^2 dz (half line, so the indicator
    on [0, 1] gives exactly 1/3).
    """
    s = profile.support
    r_max = (s / (4.0 * np.pi)) ** (1.0 / 3.0)
    bT = 4.0 * np.pi / 3.0 * _quad_profile(
        lambda r: r ** 4 * float(profile(4.0 * np.pi * r ** 3)), 0.0, r_max)
    b_line = _quad_profile(lambda z: z * z * float(profile(z)), 0.0, s)
    return bT, b_line


# ---------------------------------------------------------------------------
# expansion checks

@dataclass(frozen=True)
class ExpansionCheck:
    exact: float
    asymptotic: float
    rel_error: float


#: expected log-log slope of |exact - asymptotic|/|asymptotic| vs eps per
#: expansion kind.  space and line carry remainders two orders above their
#: leading terms.  The rank-line remainder is stated one order above the
#: leading term (an O(eps^4) bound), but that bound is not saturated for
#: regular curves: the candidate eps^4 contributions cancel by the parity of
#: the enclosed-mass expansion (M is odd in the radius), so the measured
#: sharp order is 2; the stated bound is asserted separately in the tests.
EXPECTED_SLOPE = {"space": 2.0, "line": 2.0, "line_rank": 2.0}


def _grad3(f: Callable, x0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.empty(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        g[i] = (float(f(x0 + e)) - float(f(x0 - e))) / (2.0 * h)
    return g


def _laplacian3(f: Callable, x0: np.ndarray, h: float = 1e-4) -> float:
    out = 0.0
    f0 = float(f(x0))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out += (float(f(x0 + e)) - 2.0 * f0 + float(f(x0 - e))) / (h * h)
    return out


def _sphere_nodes(n_r: int, n_theta: int, n_phi: int, r_max: float):
    """Product quadrature nodes/weights on the ball of radius r_max."""
    r_x, r_w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * r_max * (r_x + 1.0)
    r_w = 0.5 * r_max * r_w
    c_x, c_w = np.polynomial.legendre.leggauss(n_theta)
    phi = np.arange(n_phi) * 2.0 * np.pi / n_phi
    phi_w = 2.0 * np.pi / n_phi
    sin_t = np.sqrt(1.0 - c_x ** 2)
    nx = sin_t[:, None] * np.cos(phi)[None, :]
    ny = sin_t[:, None] * np.sin(phi)[None, :]
    nz = np.broadcast_to(c_x[:, None], nx.shape)
    dirs = np.stack([nx, ny, nz], axis=-1).reshape(-1, 3)
    ang_w = (c_w[:, None] * phi_w * np.ones(n_phi)[None, :]).reshape(-1)
    nodes = r[:, None, None] * dirs[None, :, :]
    weights = (r * r * r_w)[:, None] * ang_w[None, :]
    return nodes.reshape(-1, 3), weights.reshape(-1), r, dirs

def _line_window(radius_of_u: Callable, target: float, u_guess: float) -> tuple[float, float]:
    """Roots of radius_of_u(u) = target on each side of 0 (monotone in |u|)."""
    edges = []
    for sign in (1.0, -1.0):
        hi = sign * u_guess
        f = lambda u: radius_of_u(u) - target
        grow = 0
        while f(hi) < 0:
            hi *= 1.6
            grow += 1
            if grow > 60:
                raise ValueError("kernel support does not fit the evaluation domain")
        edges.append(brentq(f, 0.0 if sign > 0 else hi, hi if sign > 0 else 0.0,
                            xtol=1e-15, rtol=8.9e-16))
    lo, hi = min(edges), max(edges)
    return lo, hi


def _gl_integral(f: Callable, lo: float, hi: float, n: int = 400) -> float:
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    return 0.5 * (hi - lo) * float(np.sum(w * f(u)))


def expansion_check(kind: str, eps: float, profile: RadialProfile,
                    rho: Callable = None, phi: Callable = None,
                    curve: Callable = None, phi1: Callable = None,
                    x0: Optional[np.ndarray] = None,
                    lam: float = 1.0) -> ExpansionCheck:
    """Exact kernel integral vs the leading zero-range asymptotic form.

    kind = "space": int K(|x0-y|/eps) rho(y) (phi(y)-phi(x0)) dy against
      eps^5 b_K (rho laplacian(phi)/2 + grad rho . grad phi)(x0); rho and phi
      take (..., 3) arrays.
    kind = "line": int K(|x(z)|/eps) phi1(z) dz against
      (eps^3 b2/2) d/dz(phi1'/|x'|^3)(0); the curve and phi1 are callables of
      the scalar parameter with x(0) = 0, phi1(0) = 0.
    kind = "line_rank": int T(M(|x(z)|)/eps) phi1(z) dz with
      M(g) = lam * |{z : |x(z)| < g}| against
      eps^3 (2 b_line / 16 lam^3) |x'(0)|^3 d/dz(phi1'/|x'|^3)(0).
    """
    if kind == "space":
        if rho is None or phi is None:
            raise ValueError("space kind needs rho and phi callables")
        x0 = np.zeros(3) if x0 is None else np.asarray(x0, dtype=float)
        s = profile.support
        nodes, wts, _, _ = _sphere_nodes(48, 40, 80, s)
        y = x0[None, :] + eps * nodes
        k = profile(norm(nodes))
        phi0 = float(phi(x0))
        exact = eps ** 3 * float(np.sum(wts * k * rho(y) * (phi(y) - phi0)))
        bk = coeff_bK(profile)
        lead = (0.5 * float(rho(x0)) * _laplacian3(phi, x0)
                + float(_grad3(rho, x0) @ _grad3(phi, x0)))
        asym = eps ** 5 * bk * lead
    elif kind in ("line", "line_rank"):
        if curve is None or phi1 is None:
            raise ValueError("line kinds need curve and phi1 callables")
        h = 1e-4

        def xprime(z):
            return (np.asarray(curve(z + h)) - np.asarray(curve(z - h))) / (2.0 * h)

        def big_f(z):
            d_phi = (phi1(z + h) - phi1(z - h)) / (2.0 * h)
            return d_phi / norm(xprime(z)) ** 3

        h2 = 1e-3
        f_prime = (big_f(h2) - big_f(-h2)) / (2.0 * h2)
        speed0 = float(norm(xprime(0.0)))

        def radius(u):
            return float(norm(np.asarray(curve(eps * u))))

        if kind == "line":
            s = profile.support
            lo, hi = _line_window(radius, eps * s, 1.5 * s / speed0 + 1.0)

            def integrand(u):
                pts = np.asarray([curve(eps * ui) for ui in np.atleast_1d(u)])
                return profile(norm(pts) / eps) * np.asarray(
                    [phi1(eps * ui) for ui in np.atleast_1d(u)])

            exact = eps * _gl_integral(integrand, lo, hi, n=500)
            _, b2 = coeff_line(profile)
            asym = 0.5 * eps ** 3 * b2 * f_prime
        else:
            s = profile.support

            def mass_of_radius(g):
                if g <= 0.0:
                    return 0.0
                lo_r, hi_r = _line_window(lambda u: float(norm(np.asarray(curve(u)))),
                                          g, 1.5 * g / speed0 + 1e-6)
                return lam * (hi_r - lo_r)

            def mass_u(u):
                return mass_of_radius(radius(u))

            lo, hi = _line_window(lambda u: mass_u(u), eps * s,
                                  0.75 * s / (lam) + 1.0)

            def integrand(u):
                u = np.atleast_1d(u)
                vals = np.array([float(profile(mass_u(ui) / eps)) * phi1(eps * ui)
                                 for ui in u])
                return vals

            exact = eps * _gl_integral(integrand, lo, hi, n=300)
            _, b_line = coeff_rank(profile)
            asym = eps ** 3 * (2.0 * b_line / 16.0) / lam ** 3 * speed0 ** 3 * f_prime
    else:
        raise ValueError(f"unknown expansion kind {kind!r}")
    denom = abs(asym) if asym != 0.0 else 1.0
    return ExpansionCheck(exact, asym, abs(exact - asym) / denom)


def expansion_slope(kind: str, eps_list, **kwargs) -> tuple[float, list[ExpansionCheck]]:
    """Least-squares slope of log rel_error vs log eps over the sweep."""
    checks = [expansion_check(kind, e, **kwargs) for e in eps_list]
    x = np.log(np.asarray(eps_list, dtype=float))
    y = np.log(np.asarray([c.rel_error for c in checks]))
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, checks


# ---------------------------------------------------------------------------
# 1D mono-kinetic system (periodic method of lines)

@dataclass
class MonokineticField1D:
    """Periodic (rho, u, sigma) fields on M cells over [0, length).

    u rows keep |u| = v_speed; rho >= 0.  j is the zero-range interaction
    coefficient (J b_K / 2 for distance kernels), q the density exponent.
    """

    rho: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    length: float
    j: float
    q: float
    v_speed: float
    rho_floor_frac: float = 1e-8

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        m = len(self.rho)
        if self.u.shape != (m, 3) or self.sigma.shape != (m, 3):
            raise ValueError("u and sigma must have shape (M, 3)")
        if np.any(self.rho < 0):
            raise ValueError("rho must be nonnegative")
        if np.max(np.abs(norm(self.u) - self.v_speed)) > 1e-10 * self.v_speed:
            raise ValueError("|u| must equal v_speed on every cell")

    @property
    def n_cells(self) -> int:
        return len(self.rho)

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def mass(self) -> float:
        return float(np.sum(self.rho)) * self.dx

    def spin_density_integral(self) -> np.ndarray:
        """int rho sigma dx (conserved on periodic domains at q = 0)."""
        return np.sum(self.rho[:, None] * self.sigma, axis=0) * self.dx

    def copy(self) -> "MonokineticField1D":
        return MonokineticField1D(self.rho.copy(), self.u.copy(), self.sigma.copy(),
                                  self.length, self.j, self.q, self.v_speed,
                                  self.rho_floor_frac)


def _d1(f: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * dx)


def _d2(f: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(f, -1, axis=0) - 2.0 * f + np.roll(f, 1, axis=0)) / (dx * dx)


def pde_rhs_1d(rho: np.ndarray, u: np.ndarray, sigma: np.ndarray,
               field: MonokineticField1D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centered second-order RHS of the zero-range mono-kinetic system.

    d_t rho  = -d_x (rho u_x)
    d_t u    = -u_x d_x u + sigma ^ u
    d_t sigma= -u_x d_x sigma + (j / (v^2 max(rho, floor)^q)) u ^ d_x^2(rho u)
    """
    dx = field.dx
    v2 = field.v_speed ** 2
    ux = u[:, 0]
    drho = -_d1(rho * ux, dx)
    du = -ux[:, None] * _d1(u, dx) + cross(sigma, u)
    rho_eff = np.maximum(rho, field.rho_floor_frac * float(np.mean(rho)))
    inter = (field.j / (v2 * rho_eff ** field.q))[:, None] * cross(u, _d2(rho[:, None] * u, dx))
    dsig = -ux[:, None] * _d1(sigma, dx) + inter
    return drho, du, dsig


def max_stable_dt(field: MonokineticField1D, cfl: float = 0.9) -> float:
    """CFL bound dt <= cfl dx / (v + sqrt(j max(rho)^(1-q)) / v)."""
    rho_max = float(np.max(field.rho))
    wave = np.sqrt(field.j * rho_max ** (1.0 - field.q)) / field.v_speed
    return cfl * field.dx / (field.v_speed + wave)


def _renorm_u(u: np.ndarray, v_speed: float) -> np.ndarray:
    return u * (v_speed / norm(u))[:, None]


def pde_step_1d(field: MonokineticField1D, dt: float, cfl: float = 0.9) -> MonokineticField1D:
    """One RK4 step; |u| is renormalized to v after every stage.

    Mass is conserved to rounding (the density flux difference telescopes on
    the periodic grid).  Raises naming the admissible dt on a CFL violation.
    """
    dt_max = max_stable_dt(field, cfl)
    if dt > dt_max:
        raise ValueError(f"CFL violation: dt = {dt:g} exceeds admissible {dt_max:g}")

    def rhs(state):
        return pde_rhs_1d(state[0], state[1], state[2], field)

    v = field.v_speed
    y0 = (field.rho, field.u, field.sigma)
    k1 = rhs(y0)
    y1 = (y0[0] + 0.5 * dt * k1[0], _renorm_u(y0[1] + 0.5 * dt * k1[1], v),
          y0[2] + 0.5 * dt * k1[2])
    k2 = rhs(y1)
    y2 = (y0[0] + 0.5 * dt * k2[0], _renorm_u(y0[1] + 0.5 * dt * k2[1], v),
          y0[2] + 0.5 * dt * k2[2])
    k3 = rhs(y2)
    y3 = (y0[0] + dt * k3[0], _renorm_u(y0[1] + dt * k3[1], v), y0[2] + dt * k3[2])
    k4 = rhs(y3)
    rho = y0[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    u = y0[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    sig = y0[2] + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return MonokineticField1D(rho, _renorm_u(u, v), sig, field.length, field.j,
                              field.q, field.v_speed, field.rho_floor_frac)


# ---------------------------------------------------------------------------
# 2D polar rotating state

@dataclass
class PolarField2D:
    """Cartesian grid over [-half, half]^2 holding (rho, theta, sigma scalar)."""

    rho: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray
    half_extent: float
    j: float
    q: float
    v_speed: float

    @property
    def n_side(self) -> int:
        return self.rho.shape[0]

    @property
    def dx(self) -> float:
        return 2.0 * self.half_extent / self.n_side

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        c = (np.arange(self.n_side) + 0.5) * self.dx - self.half_extent
        return np.meshgrid(c, c, indexing="ij")


def _wrap_diff(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _grad2(f: np.ndarray, dx: float, wrap: bool = False):
    dxp = np.roll(f, -1, axis=0)
    dxm = np.roll(f, 1, axis=0)
    dyp = np.roll(f, -1, axis=1)
    dym = np.roll(f, 1, axis=1)
    if wrap:
        gx = _wrap_diff(dxp - dxm) / (2.0 * dx)
        gy = _wrap_diff(dyp - dym) / (2.0 * dx)
    else:
        gx = (dxp - dxm) / (2.0 * dx)
        gy = (dyp - dym) / (2.0 * dx)
    return gx, gy


def _div2(fx: np.ndarray, fy: np.ndarray, dx: float) -> np.ndarray:
    return ((np.roll(fx, -1, axis=0) - np.roll(fx, 1, axis=0))
            + (np.roll(fy, -1, axis=1) - np.roll(fy, 1, axis=1))) / (2.0 * dx)


def polar_rotating_state(g: Callable, n_side: int, half_extent: float,
                         j: float, q: float, v_speed: float,
                         mask_fraction: float = 0.1,
                         mask_radii: Optional[tuple] = None) -> tuple[PolarField2D, dict]:
    """Fill the rotating state (rho, theta, sigma) = (g(r), phi, 1/(v r)).

    Returns the field plus the max-norm discrete residuals of the three
    polar-system equations over cells where rho exceeds mask_fraction of its
    maximum (with a one-stencil margin, so the mask never touches vacuum).
    The residual converges at second order under refinement; the state is
    exactly stationary at v_speed = 1 (the paper's normalization).
    Raises if the support of g touches r = 0.
    """
    field = PolarField2D(np.empty((n_side, n_side)), np.empty((n_side, n_side)),
                         np.empty((n_side, n_side)), half_extent, j, q, v_speed)
    xx, yy = field.grid()
    r = np.hypot(xx, yy)
    rho = np.asarray(g(r), dtype=float)
    if np.any(rho[r < 2.0 * field.dx] > 0):
        raise ValueError("profile support touches r = 0; the rotating state is singular there")
    theta = np.arctan2(yy, xx)
    with np.errstate(divide="ignore"):
        sigma = np.where(r > 0, 1.0 / (v_speed * r), 0.0)
    field.rho, field.theta, field.sigma = rho, theta, sigma

    res = polar_residual(field, mask_fraction, mask_radii)
    return field, res


def polar_residual(field: PolarField2D, mask_fraction: float = 0.1,
                   mask_radii: Optional[tuple] = None) -> dict:
    """Discrete residuals of the polar system at the current field.

    The max norm is taken over cells with rho above mask_fraction of its
    peak, or, when mask_radii = (r_lo, r_hi) is given, over the fixed
    annulus - the grid-independent region a refinement study needs.
    """
    dx = field.dx
    v = field.v_speed
    rho, theta, sigma = field.rho, field.theta, field.sigma
    u1 = -np.sin(theta)
    u2 = np.cos(theta)
    r1 = -v * _div2(rho * u1, rho * u2, dx)
    tx, ty = _grad2(theta, dx, wrap=True)
    r2 = -v * (u1 * tx + u2 * ty) + sigma
    sx, sy = _grad2(sigma, dx)
    div_r2t = _div2(rho * rho * tx, rho * rho * ty, dx)
    with np.errstate(divide="ignore", invalid="ignore"):
        inter = np.where(rho > 0, field.j / rho ** (1.0 + field.q) * div_r2t, 0.0)
    r3 = -v * (u1 * sx + u2 * sy) + inter

    if mask_radii is not None:
        xx, yy = field.grid()
        r = np.hypot(xx, yy)
        mask = (r >= mask_radii[0]) & (r <= mask_radii[1])
    elif np.max(rho) == 0.0:
        mask = np.zeros_like(rho, dtype=bool)
    else:
        core = rho >= mask_fraction * np.max(rho)
        # shrink by one stencil so wrapped/one-sided cells never enter
        mask = core.copy()
        for ax in (0, 1):
            mask &= np.roll(core, 1, axis=ax) & np.roll(core, -1, axis=ax)

    def mx(a):
        return float(np.max(np.abs(a[mask]))) if mask.any() else 0.0

    return {"rho": mx(r1), "theta": mx(r2), "sigma": mx(r3),
            "total": max(mx(r1), mx(r2), mx(r3)), "cells": int(mask.sum())}


# ---------------------------------------------------------------------------
# Lagrangian line chains

@dataclass
class LineChain:
    """Discretized curve of agents: samples (x, v, s) over parameter z.

    closed chains wrap around; a quasi-periodic chain (e.g. one helix turn)
    carries the per-period translation in seam_offset, so x-derivatives wrap
    correctly while v and s are genuinely periodic.  Open chains use
    one-sided second-order stencils at the ends.
    """

    x: np.ndarray
    v: np.ndarray
    s: np.ndarray
    dz: float
    lam: float
    j: float
    q: float
    v_speed: float
    closed: bool = True
    seam_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    condition_ok: bool = True

    @property
    def n_samples(self) -> int:
        return len(self.x)

    def copy(self) -> "LineChain":
        return LineChain(self.x.copy(), self.v.copy(), self.s.copy(), self.dz,
                         self.lam, self.j, self.q, self.v_speed, self.closed,
                         self.seam_offset.copy(), self.condition_ok)


def _dz_samples(arr: np.ndarray, dz: float, closed: bool,
                offset: Optional[np.ndarray] = None) -> np.ndarray:
    if closed:
        plus = np.roll(arr, -1, axis=0)
        minus = np.roll(arr, 1, axis=0)
        if offset is not None:
            plus[-1] = plus[-1] + offset
            minus[0] = minus[0] - offset
        return (plus - minus) / (2.0 * dz)
    out = np.empty_like(arr)
    out[1:-1] = (arr[2:] - arr[:-2]) / (2.0 * dz)
    out[0] = (-3.0 * arr[0] + 4.0 * arr[1] - arr[2]) / (2.0 * dz)
    out[-1] = (3.0 * arr[-1] - 4.0 * arr[-2] + arr[-3]) / (2.0 * dz)
    return out


def line_rhs(chain: LineChain, speed_floor: float = 1e-10
             ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time derivatives of the zero-range line system.

    dx/dt = v;  dv/dt = s ^ v;
    ds/dt = (j lam^(1-q) |x'|^q / v^2) v ^ d/dz (v' / |x'|^3).
    """
    xp = _dz_samples(chain.x, chain.dz, chain.closed, chain.seam_offset)
    speed = norm(xp)
    if np.min(speed) < speed_floor:
        raise ValueError("degenerate chain: |x'| below floor (curve not immersed)")
    vp = _dz_samples(chain.v, chain.dz, chain.closed)
    wz = vp / (speed ** 3)[:, None]
    dw = _dz_samples(wz, chain.dz, chain.closed)
    coef = chain.j * chain.lam ** (1.0 - chain.q) * speed ** chain.q / chain.v_speed ** 2
    return chain.v.copy(), cross(chain.s, chain.v), coef[:, None] * cross(chain.v, dw)


def line_step(chain: LineChain, dt: float) -> LineChain:
    """RK4 step of the chain; |v| renormalized to v_speed after the update."""
    y0 = (chain.x, chain.v, chain.s)
    work = chain.copy()

    def rhs(y):
        work.x, work.v, work.s = y
        return line_rhs(work)

    k1 = rhs(y0)
    k2 = rhs(tuple(y0[i] + 0.5 * dt * k1[i] for i in range(3)))
    k3 = rhs(tuple(y0[i] + 0.5 * dt * k2[i] for i in range(3)))
    k4 = rhs(tuple(y0[i] + dt * k3[i] for i in range(3)))
    out = chain.copy()
    out.x, out.v, out.s = (y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                           for i in range(3))
    out.v = out.v * (chain.v_speed / norm(out.v))[:, None]
    return out


@dataclass(frozen=True)
class ArcLengthCurve:
    """Arc-length parametrized curve with exact first three derivatives."""

    point: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    period: Optional[float] = None       # arc length of one closed/quasi period
    period_offset: Optional[np.ndarray] = None


def circle_curve(radius: float) -> ArcLengthCurve:
    r = float(radius)
    return ArcLengthCurve(
        point=lambda a: np.stack([r * np.cos(np.asarray(a) / r),
                                  r * np.sin(np.asarray(a) / r),
                                  np.zeros_like(np.asarray(a, dtype=float))], axis=-1),
        d1=lambda a: np.stack([-np.sin(np.asarray(a) / r), np.cos(np.asarray(a) / r),
                               np.zeros_like(np.asarray(a, dtype=float))], axis=-1),
        d2=lambda a: np.stack([-np.cos(np.asarray(a) / r) / r,
                               -np.sin(np.asarray(a) / r) / r,
                               np.zeros_like(np.asarray(a, dtype=float))], axis=-1),
        d3=lambda a: np.stack([np.sin(np.asarray(a) / r) / r ** 2,
                               -np.cos(np.asarray(a) / r) / r ** 2,
                               np.zeros_like(np.asarray(a, dtype=float))], axis=-1),
        period=2.0 * np.pi * r,
        period_offset=np.zeros(3))


def helix_curve(radius: float, pitch: float) -> ArcLengthCurve:
    """Helix of radius R and pitch parameter p (height 2 pi p per turn)."""
    r, p = float(radius), float(pitch)
    c = np.hypot(r, p)

    def pt(a):
        a = np.asarray(a, dtype=float)
        return np.stack([r * np.cos(a / c), r * np.sin(a / c), p * a / c], axis=-1)

    def d1(a):
        a = np.asarray(a, dtype=float)
        return np.stack([-r / c * np.sin(a / c), r / c * np.cos(a / c),
                         np.full_like(a, p / c)], axis=-1)

    def d2(a):
        a = np.asarray(a, dtype=float)
        return np.stack([-r / c ** 2 * np.cos(a / c), -r / c ** 2 * np.sin(a / c),
                         np.zeros_like(a)], axis=-1)

    def d3(a):
        a = np.asarray(a, dtype=float)
        return np.stack([r / c ** 3 * np.sin(a / c), -r / c ** 3 * np.cos(a / c),
                         np.zeros_like(a)], axis=-1)

    return ArcLengthCurve(pt, d1, d2, d3, period=2.0 * np.pi * c,
                          period_offset=np.array([0.0, 0.0, 2.0 * np.pi * p]))


def line_curve(direction: np.ndarray) -> ArcLengthCurve:
    d = np.asarray(direction, dtype=float)
    d = d / norm(d)

    def pt(a):
        return np.multiply.outer(np.asarray(a, dtype=float), d)

    zero = lambda a: np.zeros(np.shape(np.asarray(a, dtype=float)) + (3,))
    return ArcLengthCurve(pt, lambda a: np.broadcast_to(
        d, np.shape(np.asarray(a, dtype=float)) + (3,)).copy(), zero, zero)


def traveling_curve(curve: ArcLengthCurve, gamma: float, t: float,
                    n_samples: int, lam: float, j: float, q: float,
                    v_speed: float, z_span: Optional[float] = None) -> LineChain:
    """Sample the traveling solution x = Gamma(gamma z + v t), v = v Gamma',
    s = v Gamma' ^ Gamma''.

    Valid as a solution of the line system when v^2/j = (lam/gamma)^(1-q);
    a violated condition attaches a warning (condition_ok = False) but the
    chain is still returned for residual studies.  For closed or
    quasi-periodic curves z_span defaults to one period of the parameter.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if z_span is None:
        if curve.period is None:
            raise ValueError("open curves need an explicit z_span")
        z_span = curve.period / gamma
    dz = z_span / n_samples
    z = np.arange(n_samples) * dz
    a = gamma * z + v_speed * t
    x = curve.point(a)
    v = v_speed * curve.d1(a)
    s = v_speed * cross(curve.d1(a), curve.d2(a))
    closed = curve.period is not None
    offset = curve.period_offset if curve.period_offset is not None else np.zeros(3)
    ok = True
    target = (lam / gamma) ** (1.0 - q)
    if not np.isclose(v_speed ** 2 / j, target, rtol=1e-12, atol=0.0):
        warnings.warn("traveling-curve parameter condition v^2/j = (lam/gamma)^(1-q) "
                      f"violated: v^2/j = {v_speed ** 2 / j:g}, (lam/gamma)^(1-q) = {target:g}",
                      stacklevel=2)
        ok = False
    return LineChain(x, v, s, dz, lam, j, q, v_speed, closed=closed,
                     seam_offset=offset, condition_ok=ok)
