"""Flocking diagnostics: trajectory records and asymptotic-state classification.

The classifier follows the stationary-solution taxonomy: flocking (all
velocities equal), aligned (velocities split between +/- a common axis),
incoherent (mean velocity zero, spins parallel to velocities).  It is
advisory: convergence statements are asymptotic, so Undecided is a valid
verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Ensemble, ModelParams


@dataclass
class Trajectory:
    """Snapshot times plus per-snapshot diagnostics (and optional full states)."""

    times: list = field(default_factory=list)
    E: list = field(default_factory=list)
    U: list = field(default_factory=list)
    w_norm: list = field(default_factory=list)
    w: list = field(default_factory=list)
    max_sigma: list = field(default_factory=list)
    total_spin: list = field(default_factory=list)
    alignment: list = field(default_factory=list)
    speed_drift: list = field(default_factory=list)
    spin_dot_drift: list = field(default_factory=list)
    states: Optional[list] = None
    n_agents: int = 0

    @classmethod
    def empty(cls, n_agents: int, store_states: bool = False) -> "Trajectory":
        return cls(states=[] if store_states else None, n_agents=n_agents)

    def record(self, t: float, diag: dict, ensemble: Optional[Ensemble] = None) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("snapshot times must be strictly increasing")
        self.times.append(t)
        self.E.append(diag["E"])
        self.U.append(diag["U"])
        self.w_norm.append(diag["w_norm"])
        self.w.append(diag["w"])
        self.max_sigma.append(diag["max_sigma"])
        self.total_spin.append(diag["total_spin"])
        self.alignment.append(diag["alignment"])
        self.speed_drift.append(diag["speed_drift"])
        self.spin_dot_drift.append(diag["spin_dot_drift"])
        if self.states is not None and ensemble is not None:
            self.states.append((ensemble.x.copy(), ensemble.v.copy(), ensemble.s.copy()))

    def __len__(self) -> int:
        return len(self.times)

    def asarrays(self) -> dict:
        return {
            "times": np.asarray(self.times),
            "E": np.asarray(self.E),
            "U": np.asarray(self.U),
            "w_norm": np.asarray(self.w_norm),
            "w": np.asarray(self.w),
            "max_sigma": np.asarray(self.max_sigma),
            "total_spin": np.asarray(self.total_spin),
            "alignment": np.asarray(self.alignment),
            "speed_drift": np.asarray(self.speed_drift),
            "spin_dot_drift": np.asarray(self.spin_dot_drift),
        }


@dataclass
class AsymptoticVerdict:
    """Classification of the trailing-window state.

    tag is one of "Flocking", "Aligned", "Incoherent", "Undecided".  For
    aligned states plus_set/minus_set partition all agents by the sign of
    v_i . w-hat; Flocking means minus_set is empty.
    """

    tag: str
    plus_set: np.ndarray
    minus_set: np.ndarray
    w_inf_estimate: float
    residuals: dict


def _window_slice(n_snapshots: int, window) -> slice:
    if isinstance(window, float):
        if not (0.0 < window <= 1.0):
            raise ValueError("window fraction must lie in (0, 1]")
        count = max(1, int(round(window * n_snapshots)))
    else:
        count = int(window)
    if count < 1 or count > n_snapshots:
        raise ValueError("empty or oversized classification window")
    return slice(n_snapshots - count, n_snapshots)


def classify_asymptotic(trajectory: Trajectory, window=0.1,
                        tol: float = 1e-6) -> AsymptoticVerdict:
    """Classify the trailing window of a trajectory.

    Incoherent: spins tangentially at rest (max |sigma_i| < tol) and |w| < tol
    throughout the window.  Aligned: spins at rest and every agent's
    |cos(v_i, w-hat)| > 1 - tol throughout; the final snapshot's signs split
    I+/I- and Flocking means I- is empty.  Anything else is Undecided.
    Tolerances are absolute (the acceptance scale is v = 1, n_i = O(1)).
    """
    n = len(trajectory)
    if n == 0:
        raise ValueError("empty trajectory")
    sl = _window_slice(n, window)
    max_sigma = np.asarray(trajectory.max_sigma[sl])
    w_norms = np.asarray(trajectory.w_norm[sl])
    align = np.asarray(trajectory.alignment[sl])
    w_inf = float(np.mean(w_norms))
    residuals = {
        "max_sigma": float(np.max(max_sigma)),
        "max_w_norm": float(np.max(w_norms)),
        "min_abs_alignment": float(np.min(np.abs(align))) if align.size else 0.0,
    }
    all_ids = np.arange(trajectory.n_agents)
    empty = np.empty(0, dtype=int)
    if np.max(max_sigma) < tol:
        if np.max(w_norms) < tol:
            return AsymptoticVerdict("Incoherent", empty, empty, w_inf, residuals)
        if np.all(np.abs(align) > 1.0 - tol):
            final_sign = np.sign(align[-1])
            plus = all_ids[final_sign > 0]
            minus = all_ids[final_sign < 0]
            tag = "Flocking" if minus.size == 0 else "Aligned"
            return AsymptoticVerdict(tag, plus, minus, w_inf, residuals)
    return AsymptoticVerdict("Undecided", empty, empty, w_inf, residuals)


def corollary_thresholds(params: ModelParams, n: np.ndarray) -> tuple[float, float]:
    """Energy thresholds (aligned_bound, flocking_bound).

    aligned_bound = J m^2 / (2N) with m = sum n_i: initial energies below it
    converge to an aligned state.  flocking_bound = 2 J n_min (m - n_min)/N:
    below it the limit is a full flock.
    """
    n = np.asarray(n, dtype=float)
    if np.any(n <= 0):
        raise ValueError("rates must be positive")
    m = float(np.sum(n))
    n_min = float(np.min(n))
    aligned = params.J * m * m / (2.0 * params.N)
    flocking = 2.0 * params.J * n_min * (m - n_min) / params.N
    return aligned, flocking


@dataclass
class WInfinityEstimate:
    value: float
    std: float
    lo: float
    hi: float


def w_infinity(trajectory: Trajectory, window=0.1) -> WInfinityEstimate:
    """Trailing-window average of |w(t)| with its fluctuation band."""
    n = len(trajectory)
    if n == 0:
        raise ValueError("empty trajectory")
    sl = _window_slice(n, window)
    w_norms = np.asarray(trajectory.w_norm[sl])
    return WInfinityEstimate(float(np.mean(w_norms)), float(np.std(w_norms)),
                             float(np.min(w_norms)), float(np.max(w_norms)))
