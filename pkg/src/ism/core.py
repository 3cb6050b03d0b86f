"""Model parameters, ensemble state, and the monitored scalar functionals.

An Ensemble stores the phase point of N birds as (N, 3) arrays together
with the model constants.  The constraints |v_i| = v and v_i . s_i = alpha_i
are constants of the continuous motion; alpha_i is frozen at construction
and used as the ground truth when monitoring constraint drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Vec3, cross, dot, norm

#: default tolerance for the |v| = v check (relative)
SPEED_TOL = 1e-10
#: default tolerance for the v.s = alpha check (absolute, in units of v^2)
SPIN_DOT_TOL = 1e-8


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the inertial spin model.

    v_speed : common speed scale v (> 0)
    J       : alignment coupling (>= 0)
    eta     : spin friction (>= 0)
    nu      : spin diffusion (>= 0); beta = eta/nu is derived, never stored
    N       : number of agents (>= 1)
    """

    v_speed: float
    J: float
    eta: float
    nu: float
    N: int

    def __post_init__(self):
        if not (self.v_speed > 0):
            raise ValueError("v_speed must be positive")
        if self.J < 0 or self.eta < 0 or self.nu < 0:
            raise ValueError("J, eta, nu must be nonnegative")
        if self.N < 1:
            raise ValueError("N must be at least 1")


@dataclass(frozen=True)
class AgentState:
    """Single-agent view: position, velocity, spin."""

    x: Vec3
    v: Vec3
    s: Vec3


@dataclass
class Ensemble:
    """Phase point of the N-agent system plus model constants.

    x, v, s are (N, 3) float arrays.  kernel is any KernelSpec from
    ism.interactions (or None for scenarios that never evaluate weights).
    n_weights are the per-agent multiplicative rates n_i of the free-space
    system; None means n_i = 1.
    """

    x: np.ndarray
    v: np.ndarray
    s: np.ndarray
    params: ModelParams
    kernel: object = None
    n_weights: Optional[np.ndarray] = None
    alpha: np.ndarray = field(default=None)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.v = np.ascontiguousarray(self.v, dtype=float)
        self.s = np.ascontiguousarray(self.s, dtype=float)
        n = self.params.N
        for name, arr in (("x", self.x), ("v", self.v), ("s", self.s)):
            if arr.shape != (n, 3):
                raise ValueError(f"{name} must have shape ({n}, 3), got {arr.shape}")
        if self.n_weights is not None:
            self.n_weights = np.asarray(self.n_weights, dtype=float)
            if self.n_weights.shape != (n,):
                raise ValueError("n_weights must have shape (N,)")
        if self.alpha is None:
            self.alpha = dot(self.v, self.s)
        else:
            self.alpha = np.asarray(self.alpha, dtype=float)

    @property
    def n(self) -> int:
        return self.params.N

    def agent(self, i: int) -> AgentState:
        return AgentState(self.x[i].copy(), self.v[i].copy(), self.s[i].copy())

    def weights(self) -> np.ndarray:
        """Per-agent rates n_i, defaulting to ones."""
        if self.n_weights is None:
            return np.ones(self.n)
        return self.n_weights

    def copy(self) -> "Ensemble":
        return Ensemble(self.x.copy(), self.v.copy(), self.s.copy(), self.params,
                        kernel=self.kernel,
                        n_weights=None if self.n_weights is None else self.n_weights.copy(),
                        alpha=self.alpha.copy())

    def speed_drift(self) -> float:
        """max_i | |v_i| - v | / v"""
        v = self.params.v_speed
        return float(np.max(np.abs(norm(self.v) - v)) / v)

    def spin_dot_drift(self) -> float:
        """max_i | v_i . s_i - alpha_i |"""
        return float(np.max(np.abs(dot(self.v, self.s) - self.alpha)))

    def check_constraints(self, speed_tol: float = SPEED_TOL,
                          spin_dot_tol: float = SPIN_DOT_TOL) -> None:
        v = self.params.v_speed
        if self.speed_drift() > speed_tol:
            raise ValueError(f"|v| constraint violated: drift {self.speed_drift():.3e}")
        if self.spin_dot_drift() > spin_dot_tol * v * v:
            raise ValueError(f"v.s constraint violated: drift {self.spin_dot_drift():.3e}")


@dataclass(frozen=True)
class SigmaView:
    """Tangential spins sigma_i = s_i - alpha_i v_i / v^2."""

    sigma: np.ndarray


def sigma_of(ensemble: Ensemble) -> SigmaView:
    """Tangential spin components (orthogonal to each v_i).

    Uses the stored alpha_i, so s_i = sigma_i + alpha_i v_i / v^2 round-trips
    exactly.  Raises on a zero velocity.
    """
    if np.any(norm(ensemble.v) == 0.0):
        raise ValueError("zero velocity: sigma undefined")
    v2 = ensemble.params.v_speed ** 2
    sig = ensemble.s - (ensemble.alpha / v2)[:, None] * ensemble.v
    return SigmaView(sig)


def mean_velocity(ensemble: Ensemble) -> Vec3:
    """w = (1/N) sum_j n_j v_j (unweighted when n_weights is absent)."""
    n = ensemble.weights()
    return np.sum(n[:, None] * ensemble.v, axis=0) / ensemble.n


def potential_energy(ensemble: Ensemble) -> float:
    """Alignment potential U = (J / 4Nv^2) sum_ij n_i n_j (v_i - v_j)^2.

    Evaluated through the algebraically identical closed form
    (J / 2Nv^2) (m S - |W|^2) with m = sum n_i, S = sum n_i |v_i|^2,
    W = sum n_i v_i; the O(N^2) double sum is kept as a test oracle.
    """
    p = ensemble.params
    n = ensemble.weights()
    m = float(np.sum(n))
    S = float(np.sum(n * np.sum(ensemble.v * ensemble.v, axis=-1)))
    W = np.sum(n[:, None] * ensemble.v, axis=0)
    val = p.J / (2.0 * p.N * p.v_speed ** 2) * (m * S - float(W @ W))
    # clamp the rounding residue; U is a sum of squares
    return max(val, 0.0)


def total_energy(ensemble: Ensemble) -> float:
    """E = 1/2 sum |sigma_i|^2 + U (nonnegative)."""
    sig = sigma_of(ensemble).sigma
    return 0.5 * float(np.sum(sig * sig)) + potential_energy(ensemble)


def total_spin(ensemble: Ensemble) -> Vec3:
    """sum_i s_i, conserved for distance weights with q = 0 and eta = nu = 0."""
    return np.sum(ensemble.s, axis=0)


def spin_energy(ensemble: Ensemble) -> float:
    """1/2 sum |s_i|^2 + U: the energy in the raw spin variables (paper's E)."""
    return 0.5 * float(np.sum(ensemble.s * ensemble.s)) + potential_energy(ensemble)
