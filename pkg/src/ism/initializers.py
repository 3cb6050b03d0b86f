"""Named initial-state builders shared by the CLI and the test suite."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import Ensemble, ModelParams
from .geometry import cross, norm
from .meanfield import sample_equilibrium, solve_selfconsistency, _tangent_basis
from .monokinetic import (LineChain, MonokineticField1D, circle_curve,
                          helix_curve, traveling_curve)


def random_unit_vectors(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / norm(v)[:, None]


def tangential_gaussian(v: np.ndarray, scale: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Spins ~ N(0, scale^2) per tangent direction, exactly orthogonal to v."""
    if scale == 0.0:
        return np.zeros_like(v)
    g = rng.standard_normal((len(v), 2)) * scale
    e1, e2 = _tangent_basis(v)
    return g[:, 0:1] * e1 + g[:, 1:2] * e2


def uniform_sphere(params: ModelParams, rng: np.random.Generator,
                   spin_sigma: float = 1.0, box: float = 1.0,
                   kernel=None, n_weights=None) -> Ensemble:
    """Velocities uniform on the speed sphere, tangential Gaussian spins."""
    n = params.N
    v = params.v_speed * random_unit_vectors(n, rng)
    s = tangential_gaussian(v, spin_sigma, rng)
    x = (rng.random((n, 3)) - 0.5) * box
    return Ensemble(x, v, s, params, kernel=kernel, n_weights=n_weights)


def aligned_perturbed(params: ModelParams, rng: np.random.Generator,
                      delta: float = 0.1, box: float = 1.0,
                      kernel=None, n_weights=None) -> Ensemble:
    """Flocking stationary data tilted by O(delta); delta = 0 is the exact flock."""
    n = params.N
    axis = np.array([0.0, 0.0, 1.0])
    v = np.tile(axis, (n, 1))
    if delta > 0.0:
        v = v + delta * rng.standard_normal((n, 3))
    v = params.v_speed * v / norm(v)[:, None]
    s = tangential_gaussian(v, delta, rng)
    x = (rng.random((n, 3)) - 0.5) * box
    return Ensemble(x, v, s, params, kernel=kernel, n_weights=n_weights)


def two_groups(params: ModelParams, rng: np.random.Generator, box: float = 1.0,
               kernel=None, n_weights=None) -> Ensemble:
    """Antipodal half-and-half split with zero spins (w = 0 for even N)."""
    n = params.N
    v = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    v[n // 2:] *= -1.0
    v *= params.v_speed
    s = np.zeros((n, 3))
    x = (rng.random((n, 3)) - 0.5) * box
    return Ensemble(x, v, s, params, kernel=kernel, n_weights=n_weights)


def equilibrium(params: ModelParams, rng: np.random.Generator,
                beta_j: float, beta: Optional[float] = None, box: float = 1.0,
                kernel=None) -> Ensemble:
    """Draw from the mean-field equilibrium at coupling beta_j.

    beta defaults to eta/nu (the model's own temperature); it must be given
    when nu = 0.
    """
    if beta is None:
        if params.nu <= 0:
            raise ValueError("equilibrium init needs beta when nu = 0")
        beta = params.eta / params.nu
    sol = solve_selfconsistency(beta_j)
    ens = sample_equilibrium(sol, beta, params, rng=rng, box_size=box)
    ens.kernel = kernel
    return ens


def uniform_field_perturbed(cells: int, length: float, rho: float,
                            v_speed: float, j: float, q: float,
                            amplitude: float = 1e-4, wavenumber: int = 1
                            ) -> MonokineticField1D:
    """Uniform (rho, u, 0) plus a transverse velocity wave.

    The base velocity points along +y (orthogonal to the grid axis), the
    perturbation along +z with the requested integer wavenumber, so the
    density stays exactly uniform and waves travel at the zero-range speed.
    """
    x = (np.arange(cells) + 0.5) * (length / cells)
    u = np.zeros((cells, 3))
    u[:, 1] = 1.0
    u[:, 2] = amplitude * np.sin(2.0 * np.pi * wavenumber * x / length)
    u = v_speed * u / norm(u)[:, None]
    return MonokineticField1D(np.full(cells, rho), u, np.zeros((cells, 3)),
                              length, j, q, v_speed)


def polynomial_bump(r_center: float, r_width: float):
    """(1 - t^2)^4 profile on |r - r_center| < r_width (bounded derivatives)."""
    def g(r):
        t = (np.asarray(r, dtype=float) - r_center) / r_width
        return np.where(np.abs(t) < 1.0, (1.0 - np.minimum(t * t, 1.0)) ** 4, 0.0)
    return g


def circle_chain(radius: float, gamma: float, samples: int, lam: float,
                 j: float, q: float, v_speed: float, t: float = 0.0) -> LineChain:
    return traveling_curve(circle_curve(radius), gamma, t, samples, lam, j, q, v_speed)


def helix_chain(radius: float, pitch: float, gamma: float, samples: int,
                lam: float, j: float, q: float, v_speed: float,
                t: float = 0.0) -> LineChain:
    return traveling_curve(helix_curve(radius, pitch), gamma, t, samples, lam,
                           j, q, v_speed)


def init_library(name: str, params: ModelParams, rng: Optional[np.random.Generator],
                 **kwargs):
    """Dispatch by initializer name (unknown names raise)."""
    builders = {
        "uniform_sphere": uniform_sphere,
        "aligned_perturbed": aligned_perturbed,
        "two_groups": two_groups,
        "equilibrium": equilibrium,
    }
    if name in builders:
        return builders[name](params, rng, **kwargs)
    if name == "uniform_field_perturbed":
        return uniform_field_perturbed(v_speed=params.v_speed, **kwargs)
    if name == "circle_chain":
        return circle_chain(v_speed=params.v_speed, **kwargs)
    if name == "helix_chain":
        return helix_chain(v_speed=params.v_speed, **kwargs)
    raise ValueError(f"unknown initializer {name!r}")
