"""Equilibrium theory of the constant-kernel mean-field limit.

The stationary mean velocity w = gamma v e solves the scalar fixed point
xi = betaJ h(xi) with h(x) = coth x - 1/x and xi = betaJ gamma.  Existence
of a nonzero root is decided numerically (the solver scans for sign
changes); nothing about the critical coupling is hard-coded, and the
acceptance suite pins it against the series oracle 1/h'(0+) = 3 and the
particle system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Ensemble, ModelParams
from .geometry import Vec3, norm

# switch to the Laurent series below this argument (coth cancels badly at 0)
_H_SERIES_CUTOFF = 1e-2


def h(x):
    """h(x) = 1/tanh(x) - 1/x on x >= 0, h(0) = 0; increasing, concave, -> 1.

    Series x/3 - x^3/45 + 2x^5/945 below the cutoff.  Raises on negative x.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("h is defined for x >= 0")
    small = x < _H_SERIES_CUTOFF
    xs = np.where(small, x, 1.0)
    series = xs / 3.0 - xs ** 3 / 45.0 + 2.0 * xs ** 5 / 945.0
    xl = np.where(small, 1.0, x)
    direct = 1.0 / np.tanh(xl) - 1.0 / xl
    out = np.where(small, series, direct)
    if out.ndim == 0:
        return float(out)
    return out


def h_prime_at_zero() -> float:
    """Series-oracle slope h'(0+) = 1/3 (the x/3 term of the Laurent series)."""
    return 1.0 / 3.0


@dataclass(frozen=True)
class EquilibriumSolution:
    """Solution of the self-consistency relation.

    beta_J   : coupling-to-temperature ratio beta*J
    xi       : largest root of xi = beta_J h(xi) (0 when none positive)
    gamma    : |w|/v = xi/beta_J (0 at beta_J = 0)
    direction: unit vector e; the relation fixes only |w|, the caller breaks
               the symmetry (default +z)
    """

    beta_J: float
    xi: float
    gamma: float
    direction: np.ndarray

    def mean_velocity(self, v_speed: float) -> Vec3:
        return self.gamma * v_speed * self.direction


def _gap(xi: float, beta_J: float) -> float:
    return beta_J * h(xi) - xi


def solve_selfconsistency(beta_J: float, direction=None,
                          tol: float = 1e-12) -> EquilibriumSolution:
    """Largest root xi >= 0 of xi = beta_J h(xi), by scan + bisection.

    Returns xi = 0 when no positive root exists.  The residual
    |xi - beta_J h(xi)| is driven below tol.
    """
    if beta_J < 0:
        raise ValueError("beta_J must be nonnegative")
    e = np.array([0.0, 0.0, 1.0]) if direction is None else \
        np.asarray(direction, dtype=float) / norm(np.asarray(direction, dtype=float))
    if beta_J == 0.0:
        return EquilibriumSolution(0.0, 0.0, 0.0, e)
    # h < 1, so any root lies in (0, beta_J); scan a log grid for a sign change
    grid = np.geomspace(1e-9, beta_J, 600)
    vals = beta_J * h(grid) - grid
    pos = np.flatnonzero(vals > 0)
    if pos.size == 0:
        return EquilibriumSolution(beta_J, 0.0, 0.0, e)
    # rightmost positive value, bracket to the right of it
    lo = grid[pos[-1]]
    hi = beta_J
    if pos[-1] + 1 < len(grid):
        hi = grid[pos[-1] + 1]
    f_lo = _gap(lo, beta_J)
    while _gap(hi, beta_J) > 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = _gap(mid, beta_J)
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < 0.25 * tol:
            break
    xi = 0.5 * (lo + hi)
    if abs(_gap(xi, beta_J)) > tol:
        # polish by a few Newton-free secant steps on the bracket
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if _gap(mid, beta_J) > 0:
                lo = mid
            else:
                hi = mid
            xi = 0.5 * (lo + hi)
            if abs(_gap(xi, beta_J)) <= tol:
                break
    return EquilibriumSolution(beta_J, xi, xi / beta_J, e)


def count_positive_roots(beta_J: float, x_max: float = 50.0,
                         n_points: int = 100_000) -> int:
    """Sign-scan oracle: number of downward crossings of beta_J h(x) - x."""
    x = np.linspace(1e-6, x_max, n_points)
    f = beta_J * h(x) - x
    sign = np.sign(f)
    return int(np.sum((sign[:-1] > 0) & (sign[1:] <= 0)))


def critical_coupling(lo: float = 1.0, hi: float = 10.0, tol: float = 1e-8,
                      threshold: float = 1e-7) -> float:
    """Onset of the nonzero branch, located by bisection on beta_J.

    No closed form is assumed: existence at each beta_J is what the solver
    reports (xi > threshold).
    """
    def has_root(bj: float) -> bool:
        return solve_selfconsistency(bj).xi > threshold

    if has_root(lo) or not has_root(hi):
        raise ValueError("critical point not bracketed by [lo, hi]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if has_root(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def selfconsistency_residual(w: Vec3, beta_J: float, v_speed: float) -> Vec3:
    """w minus the sphere average of v under the tilted density e^(betaJ w.v/v^2).

    The spherical integrals collapse to v h(betaJ |w|/v) w-hat (closed form);
    the residual vanishes exactly at the solver's output.
    """
    w = np.asarray(w, dtype=float)
    wn = float(norm(w))
    if wn == 0.0:
        return np.zeros(3)
    return w - v_speed * h(beta_J * wn / v_speed) * (w / wn)


def sample_equilibrium(solution: EquilibriumSolution, beta: float,
                       params: ModelParams, n_agents: int = None,
                       rng: np.random.Generator = None,
                       box_size: float = 1.0) -> Ensemble:
    """Draw an i.i.d. equilibrium ensemble.

    Velocities follow the density proportional to e^(kappa cos theta) around
    the solution direction (kappa = xi), sampled by the exact inverse CDF in
    cos theta with uniform azimuth.  Spins are isotropic 2D Gaussians of
    variance 1/beta in each tangent plane, so v . s = 0 holds by
    construction.  Positions are uniform in a box (the constant kernel never
    reads them).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if rng is None:
        raise ValueError("an explicit rng is required (seeds are mandatory)")
    n = params.N if n_agents is None else int(n_agents)
    v_speed = params.v_speed
    kappa = solution.xi
    u = rng.random(n)
    if kappa < 1e-12:
        cos_t = 2.0 * u - 1.0
    else:
        # inverse CDF of density ~ e^(kappa c) on c in [-1, 1], stable form
        cos_t = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
        cos_t = np.clip(cos_t, -1.0, 1.0)
    phi = rng.random(n) * 2.0 * np.pi
    sin_t = np.sqrt(np.clip(1.0 - cos_t ** 2, 0.0, None))
    local = np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])
    basis = _frame(solution.direction)
    v = v_speed * local @ basis
    # tangential Gaussian spins
    g = rng.standard_normal((n, 2)) / np.sqrt(beta)
    e1, e2 = _tangent_basis(v)
    s = g[:, 0:1] * e1 + g[:, 1:2] * e2
    x = (rng.random((n, 3)) - 0.5) * box_size
    p = ModelParams(v_speed, params.J, params.eta, params.nu, n)
    return Ensemble(x, v, s, p, kernel=None, alpha=np.zeros(n))


def _frame(e3: np.ndarray) -> np.ndarray:
    """Rows: an orthonormal frame whose third row is e3."""
    e3 = np.asarray(e3, dtype=float)
    e3 = e3 / norm(e3)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(e3[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(helper, e3)
    e1 /= norm(e1)
    e2 = np.cross(e3, e1)
    return np.vstack([e1, e2, e3])


def _tangent_basis(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row orthonormal bases of the planes orthogonal to v."""
    vhat = v / norm(v)[:, None]
    helper = np.zeros_like(vhat)
    main = np.abs(vhat).argmax(axis=1)
    helper[np.arange(len(v)), (main + 1) % 3] = 1.0
    e1 = np.cross(helper, vhat)
    e1 /= norm(e1)[:, None]
    e2 = np.cross(vhat, e1)
    return e1, e2


def _log_sinhc(x: float) -> float:
    """log(sinh(x)/x), stable for tiny and large x."""
    if x < 1e-6:
        return x * x / 6.0
    if x > 30.0:
        return x - np.log(2.0 * x) + np.log1p(-np.exp(-2.0 * x))
    return float(np.log(np.sinh(x) / x))


def free_energy_product(kappa: float, beta: float, J: float,
                        v_speed: float) -> float:
    """Free energy on the product family f = (tilted sphere) x (tangent Gaussian).

    The velocity marginal is proportional to e^(kappa cos theta) on the
    sphere of radius v; the spin marginal is the tangential Gaussian at
    temperature 1/beta.  All terms are closed-form.  The reference measure
    is dSigma_v ds restricted to the tangent bundle, so only differences
    within this family are meaningful (the delta(v.s) restriction shifts
    every member by the same constant).
    """
    if beta <= 0 or v_speed <= 0:
        raise ValueError("beta and v_speed must be positive")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    beta_J = beta * J
    # velocity entropy: E[log h_kappa] = kappa h(kappa) - log(4 pi v^2 sinh(k)/k)
    ent_v = kappa * h(kappa) - (np.log(4.0 * np.pi * v_speed ** 2) + _log_sinhc(kappa))
    # spin entropy of the 2D Gaussian + (beta/2) E|s|^2 = log(beta/2pi) - 1 + 1
    ent_s = np.log(beta / (2.0 * np.pi))
    # interaction: -(betaJ/2v^2) |w|^2 + betaJ v^2 / 2 with |w| = v h(kappa)
    inter = -0.5 * beta_J * h(kappa) ** 2 + 0.5 * beta_J * v_speed ** 2
    return float(ent_v + ent_s + inter)
