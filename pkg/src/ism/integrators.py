"""Time steppers preserving the constraints |v_i| = v and v_i . s_i = alpha_i.

The deterministic step is a Strang splitting: half kick of the spins under
the frozen-configuration torque, exact rotation of each velocity about its
spin (plus the position update), half kick.  The friction part of the kick
is integrated exactly (exponential factor on the tangential spin), so the
free-space stepper dissipates like the continuum up to O(dt^3) per step.
Because every spin increment is orthogonal to the agent's velocity and the
velocity update is a rotation about the spin, both constraints hold
structurally; reported drifts sit at the rounding floor.

The stochastic step is the same splitting plus an exponential
Euler-Maruyama noise increment (sqrt(2 nu)/v) Omega(v0) dB evaluated at the
start-of-step velocity, followed by a logged re-projection of v . s onto
its stored constant.  With nu = 0 it runs literally the free-space
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import analysis
from .core import Ensemble, sigma_of
from .geometry import cross, displacement_arc, dot, norm, rotate_about
from .interactions import (ConstantKernel, MultiplicativeKernel,
                           interaction_field, pairwise_potential)
from .core import potential_energy

_YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_YOSHIDA_W0 = 1.0 - 2.0 * _YOSHIDA_W1


class NumericalBlowup(RuntimeError):
    """State turned non-finite during stepping."""

    def __init__(self, time: float, agent: int):
        self.time = time
        self.agent = agent
        super().__init__(f"blow-up at t = {time:.6g}, agent {agent}")


@dataclass
class StepReport:
    """Per-step audit record."""

    dt: float
    speed_drift: float
    spin_dot_drift: float
    kernel_evals: int
    projection_correction: float = 0.0


class RngStream:
    """Counter-based Gaussian block source (Philox).

    Each step index owns a disjoint 2^128-wide counter range, and agent i
    consumes row i of the per-step block, so draws depend only on
    (seed, step, agent) - never on thread count or evaluation order.
    """

    def __init__(self, seed: int, n_agents: int):
        self.seed = int(seed)
        self.n_agents = int(n_agents)

    def normals(self, step_index: int, cols: int = 3) -> np.ndarray:
        counter = [0, 0, int(step_index) & 0xFFFFFFFFFFFFFFFF, int(step_index) >> 64]
        bitgen = np.random.Philox(key=self.seed, counter=counter)
        return np.random.Generator(bitgen).standard_normal((self.n_agents, cols))


def _kick(v: np.ndarray, s: np.ndarray, w_field: np.ndarray,
          J: float, eta: float, v_speed: float, h: float) -> np.ndarray:
    """Exact sub-flow of ds/dt = (J/v^2) v ^ w - eta * Pperp s over h (v frozen)."""
    c = (J / v_speed ** 2) * cross(v, w_field)
    v2 = np.sum(v * v, axis=-1)
    par = (np.sum(v * s, axis=-1) / v2)[:, None] * v
    perp = s - par
    if eta > 0.0:
        decay = np.exp(-eta * h)
        gain = -np.expm1(-eta * h) / eta
        perp = decay * perp + gain * c
    else:
        perp = perp + h * c
    return par + perp


def _drift(ensemble: Ensemble, h: float, move_x: bool, x_update: str) -> None:
    """Exact rotation of v about s; position update by midpoint chord or arc."""
    v, s = ensemble.v, ensemble.s
    if move_x:
        if x_update == "arc":
            ensemble.x = ensemble.x + displacement_arc(v, s, h)
            ensemble.v = rotate_about(v, s, h)
        elif x_update == "chord":
            v_half = rotate_about(v, s, 0.5 * h)
            ensemble.x = ensemble.x + h * v_half
            ensemble.v = rotate_about(v_half, s, 0.5 * h)
        else:
            raise ValueError(f"unknown x_update {x_update!r}")
    else:
        ensemble.v = rotate_about(v, s, h)


def _check_finite(ensemble: Ensemble, time: float) -> None:
    bad = ~(np.isfinite(ensemble.v).all(axis=1) & np.isfinite(ensemble.s).all(axis=1)
            & np.isfinite(ensemble.x).all(axis=1))
    if bad.any():
        raise NumericalBlowup(time, int(np.argmax(bad)))


def _strang_step(ensemble: Ensemble, dt: float, move_x: bool, x_update: str,
                 method: str) -> int:
    p = ensemble.params
    w = interaction_field(ensemble, method=method)
    ensemble.s = _kick(ensemble.v, ensemble.s, w, p.J, p.eta, p.v_speed, 0.5 * dt)
    _drift(ensemble, dt, move_x, x_update)
    w = interaction_field(ensemble, method=method)
    ensemble.s = _kick(ensemble.v, ensemble.s, w, p.J, p.eta, p.v_speed, 0.5 * dt)
    return 2


def _composed_step(ensemble: Ensemble, dt: float, move_x: bool, x_update: str,
                   method: str, order: int) -> int:
    if order == 2:
        return _strang_step(ensemble, dt, move_x, x_update, method)
    if order == 4:
        evals = 0
        for g in (_YOSHIDA_W1, _YOSHIDA_W0, _YOSHIDA_W1):
            evals += _strang_step(ensemble, g * dt, move_x, x_update, method)
        return evals
    raise ValueError("order must be 2 or 4")


def step_deterministic(ensemble: Ensemble, dt: float, x_update: str = "chord",
                       method: str = "auto", order: int = 2,
                       time: float = 0.0) -> StepReport:
    """One step of the full deterministic system (positions move)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_finite(ensemble, time)  # attribute a blow-up before coupling spreads it
    evals = _composed_step(ensemble, dt, True, x_update, method, order)
    _check_finite(ensemble, time + dt)
    return StepReport(dt, ensemble.speed_drift(), ensemble.spin_dot_drift(), evals)


def step_free_space(ensemble: Ensemble, dt: float, order: int = 2,
                    time: float = 0.0) -> StepReport:
    """One step of the free-space system (positions ignored).

    The kernel must be constant or multiplicative (position-independent).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not isinstance(ensemble.kernel, (ConstantKernel, MultiplicativeKernel)):
        raise ValueError("free-space stepping needs a constant or multiplicative kernel")
    _check_finite(ensemble, time)
    evals = _composed_step(ensemble, dt, False, "chord", "auto", order)
    _check_finite(ensemble, time + dt)
    return StepReport(dt, ensemble.speed_drift(), ensemble.spin_dot_drift(), evals)


def step_stochastic(ensemble: Ensemble, dt: float, rng: RngStream,
                    step_index: int = 0, time: float = 0.0) -> StepReport:
    """Free-space step plus spin noise (sqrt(2 nu)/v) Omega(v0) dB.

    Omega is evaluated at the start-of-step velocity; v . s is re-projected
    onto its stored alpha afterwards and the correction magnitude reported.
    With nu = 0 the noise and projection are skipped, so the arithmetic is
    exactly step_free_space's.
    """
    p = ensemble.params
    if dt <= 0:
        raise ValueError("dt must be positive")
    if p.nu < 0:
        raise ValueError("nu must be nonnegative")
    _check_finite(ensemble, time)
    v0 = ensemble.v.copy() if p.nu > 0.0 else None
    evals = _composed_step(ensemble, dt, False, "chord", "auto", 2)
    correction = 0.0
    if p.nu > 0.0:
        dB = rng.normals(step_index) * np.sqrt(dt)
        ensemble.s = ensemble.s + (np.sqrt(2.0 * p.nu) / p.v_speed) * cross(dB, v0)
        # re-project v.s onto the stored constant; log the drift removed
        v2 = np.sum(ensemble.v * ensemble.v, axis=-1)
        miss = ensemble.alpha - dot(ensemble.v, ensemble.s)
        correction = float(np.max(np.abs(miss)))
        ensemble.s = ensemble.s + (miss / v2)[:, None] * ensemble.v
    _check_finite(ensemble, time + dt)
    return StepReport(dt, ensemble.speed_drift(), ensemble.spin_dot_drift(),
                      evals, correction)


def snapshot_diagnostics(ensemble: Ensemble) -> dict:
    """Scalar diagnostics recorded along a trajectory."""
    kernel = ensemble.kernel
    if kernel is None or isinstance(kernel, (ConstantKernel, MultiplicativeKernel)):
        if isinstance(kernel, ConstantKernel) and kernel.c != 1.0:
            U = pairwise_potential(ensemble)
        else:
            U = potential_energy(ensemble)
    else:
        U = pairwise_potential(ensemble)
    sig = sigma_of(ensemble).sigma
    E = 0.5 * float(np.sum(sig * sig)) + U
    n = ensemble.weights()
    w = np.sum(n[:, None] * ensemble.v, axis=0) / ensemble.n
    w_norm = float(np.sqrt(w @ w))
    if w_norm > 0.0:
        align = (ensemble.v @ w) / (norm(ensemble.v) * w_norm)
    else:
        align = np.zeros(ensemble.n)
    return {
        "E": E,
        "U": U,
        "w": w,
        "w_norm": w_norm,
        "max_sigma": float(np.max(norm(sig))),
        "total_spin": np.sum(ensemble.s, axis=0),
        "alignment": align,
        "speed_drift": ensemble.speed_drift(),
        "spin_dot_drift": ensemble.spin_dot_drift(),
    }


def run(ensemble: Ensemble, t_end: float, dt: float, observer_stride: int = 100,
        mode: str = "deterministic", rng: Optional[RngStream] = None,
        x_update: str = "chord", method: str = "auto", order: int = 2,
        store_states: bool = False) -> "analysis.Trajectory":
    """Advance the ensemble to t_end, sampling diagnostics every stride steps.

    Mutates the ensemble in place and returns the trajectory.  Deterministic
    given (ensemble, arguments, seed): reruns are bitwise identical.  The
    deterministic/free-space loop fuses adjacent half kicks between
    snapshots, so it costs about one kernel evaluation per step.
    """
    if t_end < 0 or dt <= 0:
        raise ValueError("t_end must be >= 0 and dt > 0")
    if observer_stride < 1:
        raise ValueError("observer_stride must be >= 1")
    if mode == "stochastic":
        if ensemble.params.nu > 0 and rng is None:
            raise ValueError("stochastic runs require an RngStream (seeds are mandatory)")
        if not isinstance(ensemble.kernel, ConstantKernel):
            raise ValueError("the stochastic system uses constant communication rates")
    elif mode == "free_space":
        if not isinstance(ensemble.kernel, (ConstantKernel, MultiplicativeKernel)):
            raise ValueError("free-space runs need a constant or multiplicative kernel")
    elif mode != "deterministic":
        raise ValueError(f"unknown mode {mode!r}")

    n_steps = int(round(t_end / dt))
    traj = analysis.Trajectory.empty(ensemble.n, store_states)
    traj.record(0.0, snapshot_diagnostics(ensemble), ensemble if store_states else None)
    if n_steps == 0:
        return traj

    p = ensemble.params
    move_x = mode == "deterministic"

    if mode == "stochastic" and p.nu > 0.0:
        for k in range(1, n_steps + 1):
            step_stochastic(ensemble, dt, rng, step_index=k - 1, time=(k - 1) * dt)
            if k % observer_stride == 0 or k == n_steps:
                traj.record(k * dt, snapshot_diagnostics(ensemble),
                            ensemble if store_states else None)
        return traj

    if order == 4:
        for k in range(1, n_steps + 1):
            _composed_step(ensemble, dt, move_x, x_update, method, 4)
            _check_finite(ensemble, k * dt)
            if k % observer_stride == 0 or k == n_steps:
                traj.record(k * dt, snapshot_diagnostics(ensemble),
                            ensemble if store_states else None)
        return traj

    # fused Strang loop: between snapshots the trailing and leading half
    # kicks share one kernel evaluation (the kick only changes s, so the
    # field at the synchronized state equals the field after the half kick)
    w = interaction_field(ensemble, method=method)
    ensemble.s = _kick(ensemble.v, ensemble.s, w, p.J, p.eta, p.v_speed, 0.5 * dt)
    for k in range(1, n_steps + 1):
        _drift(ensemble, dt, move_x, x_update)
        w = interaction_field(ensemble, method=method)
        at_snapshot = k % observer_stride == 0 or k == n_steps
        if at_snapshot:
            ensemble.s = _kick(ensemble.v, ensemble.s, w, p.J, p.eta, p.v_speed, 0.5 * dt)
            _check_finite(ensemble, k * dt)
            traj.record(k * dt, snapshot_diagnostics(ensemble),
                        ensemble if store_states else None)
            if k < n_steps:
                ensemble.s = _kick(ensemble.v, ensemble.s, w, p.J, p.eta,
                                   p.v_speed, 0.5 * dt)
        else:
            ensemble.s = _kick(ensemble.v, ensemble.s, w, p.J, p.eta, p.v_speed, dt)
            _check_finite(ensemble, k * dt)
    return traj
