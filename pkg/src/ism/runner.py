"""Scenario execution: build, run, and persist CSV/JSON outputs.

Every float is written with 17 significant digits so reruns with the same
config and seed are byte-identical; JSON keys are sorted for the same
reason.  Output schemas:

  snapshots.csv    t, agent_id, x1..x3, v1..v3, s1..s3
  diagnostics.csv  t, E, U, w_norm, w1..w3, max_sigma, spin1..spin3
  field.csv        grid models: t, cell, rho, u1..u3, sigma1..sigma3
                   polar model: cell, x1, x2, rho, theta, sigma
                   line chains: t, sample, x1..x3, v1..v3, s1..s3
  bifurcation.csv  beta_J, xi, gamma
  summary.json     verdict, w_infinity, thresholds, drifts, seed, config echo
"""

from __future__ import annotations

import json
import os
from typing import Optional

import numpy as np

from . import __version__
from .analysis import classify_asymptotic, corollary_thresholds, w_infinity
from .config import ScenarioConfig
from .core import Ensemble, ModelParams
from .initializers import init_library, polynomial_bump
from .integrators import NumericalBlowup, RngStream, run
from .interactions import (ConstantKernel, DistanceKernel, IndicatorProfile,
                           MultiplicativeKernel, RankKernel, SmoothBumpProfile,
                           TableProfile)
from .meanfield import critical_coupling, solve_selfconsistency
from .monokinetic import (coeff_bK, coeff_line, coeff_rank, line_step,
                          max_stable_dt, pde_step_1d, polar_rotating_state,
                          traveling_curve, circle_curve, helix_curve)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(x) for x in row) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_summary(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def build_profile(kernel_cfg: dict):
    name = kernel_cfg["profile"]
    if name == "indicator":
        return IndicatorProfile(kernel_cfg["radius"], kernel_cfg["height"])
    if name == "smooth_bump":
        return SmoothBumpProfile(kernel_cfg["radius"], kernel_cfg["height"])
    if name == "table":
        return TableProfile(tuple(kernel_cfg["table_r"]), tuple(kernel_cfg["table_v"]))
    raise ValueError(f"unknown profile {name!r}")


def build_kernel(kernel_cfg: dict, n_agents: int):
    tag = kernel_cfg["tag"]
    if tag == "constant":
        return ConstantKernel(kernel_cfg["c"])
    if tag == "multiplicative":
        rates = kernel_cfg.get("rates")
        if rates is None:
            rates = tuple(1.0 for _ in range(n_agents))
        return MultiplicativeKernel(tuple(rates))
    if tag == "distance":
        return DistanceKernel(build_profile(kernel_cfg), kernel_cfg["q"],
                              include_self=kernel_cfg.get("include_self", "true") == "true")
    if tag == "rank":
        return RankKernel(build_profile(kernel_cfg))
    raise ValueError(f"unknown kernel tag {tag!r}")


def zero_range_j(config: ScenarioConfig) -> tuple[float, float]:
    """(j, q) of the zero-range limit implied by the kernel block.

    Distance kernels: j = J b_K / 2 with the configured q (grid models) or
    j = J b2 / (2 b0) for line chains.  Rank kernels: j = J bT / 2 with
    q = 5/3 (grid) or j = J b_line / 8 with q = 3 (line chains).
    """
    J = config.params["j"]
    profile = build_profile(config.kernel)
    line = config.model == "line_chain"
    if config.kernel["tag"] == "distance":
        if line:
            b0, b2 = coeff_line(profile)
            return J * b2 / (2.0 * b0), config.kernel["q"]
        return J * coeff_bK(profile) / 2.0, config.kernel["q"]
    if config.kernel["tag"] == "rank":
        bT, b_line = coeff_rank(profile)
        if line:
            return J * b_line / 8.0, 3.0
        return J * bT / 2.0, 5.0 / 3.0
    raise ValueError("zero-range coefficient needs a distance or rank kernel")


def model_params(config: ScenarioConfig) -> ModelParams:
    p = config.params
    return ModelParams(p["v"], p["j"], p["eta"], p["nu"], p["n"])


def _build_particle_ensemble(config: ScenarioConfig, rng) -> Ensemble:
    params = model_params(config)
    kernel = build_kernel(config.kernel, params.N)
    name = config.init["name"]
    kwargs = {"box": config.init["box"]}
    if name == "uniform_sphere":
        kwargs["spin_sigma"] = config.init["spin_sigma"]
    elif name == "aligned_perturbed":
        kwargs["delta"] = config.init["delta"]
    elif name == "equilibrium":
        kwargs["beta_j"] = config.init["beta_j"]
        if config.init["beta"] is not None:
            kwargs["beta"] = config.init["beta"]
    elif name != "two_groups":
        raise ValueError(f"initializer {name!r} does not build a particle ensemble")
    ens = init_library(name, params, rng, kernel=kernel, **kwargs)
    if isinstance(kernel, MultiplicativeKernel):
        ens.n_weights = kernel.rates()
    return ens


def _particle_rows(t: float, ens_state: tuple) -> list:
    x, v, s = ens_state
    rows = []
    for i in range(len(x)):
        rows.append((t, i, x[i, 0], x[i, 1], x[i, 2], v[i, 0], v[i, 1], v[i, 2],
                     s[i, 0], s[i, 1], s[i, 2]))
    return rows


def run_scenario(config: ScenarioConfig, out_dir: Optional[str] = None) -> dict:
    """Execute the configured scenario and write its outputs.

    Returns the summary dict (also persisted as summary.json).
    """
    out_dir = out_dir or config.output["directory"]
    os.makedirs(out_dir, exist_ok=True)
    seed = config.integration["seed"]
    summary: dict = {
        "model": config.model,
        "seed": seed,
        "version": __version__,
        "config": config.echo(),
        "output_directory": out_dir,
    }

    if config.model in ("deterministic", "free_space", "stochastic"):
        _run_particles(config, out_dir, summary)
    elif config.model == "monokinetic_1d":
        _run_monokinetic(config, out_dir, summary)
    elif config.model == "polar_2d":
        _run_polar(config, out_dir, summary)
    elif config.model == "line_chain":
        _run_line_chain(config, out_dir, summary)
    elif config.model == "equilibrium_scan":
        _run_scan(config, out_dir, summary)
    else:
        raise ValueError(f"unknown model {config.model!r}")

    write_summary(os.path.join(out_dir, "summary.json"), summary)
    return summary


def _run_particles(config: ScenarioConfig, out_dir: str, summary: dict) -> None:
    seed = config.integration["seed"]
    rng = np.random.default_rng(0 if seed is None else seed)
    ens = _build_particle_ensemble(config, rng)
    stream = None
    if config.model == "stochastic" and ens.params.nu > 0:
        stream = RngStream(seed, ens.params.N)
    store = config.integration["store_states"] == "true"
    traj = run(ens, config.integration["t_end"], config.integration["dt"],
               observer_stride=config.integration["stride"], mode=config.model,
               rng=stream, x_update=config.integration["x_update"],
               order=config.integration["order"], store_states=store)
    arrays = traj.asarrays()
    if store:
        rows = []
        for t, state in zip(traj.times, traj.states):
            rows.extend(_particle_rows(t, state))
        write_csv(os.path.join(out_dir, "snapshots.csv"),
                  ["t", "agent_id", "x1", "x2", "x3", "v1", "v2", "v3",
                   "s1", "s2", "s3"], rows)
    diag_rows = []
    for k, t in enumerate(traj.times):
        w = arrays["w"][k]
        spin = arrays["total_spin"][k]
        diag_rows.append((t, arrays["E"][k], arrays["U"][k], arrays["w_norm"][k],
                          w[0], w[1], w[2], arrays["max_sigma"][k],
                          spin[0], spin[1], spin[2]))
    write_csv(os.path.join(out_dir, "diagnostics.csv"),
              ["t", "E", "U", "w_norm", "w1", "w2", "w3", "max_sigma",
               "spin1", "spin2", "spin3"], diag_rows)
    verdict = classify_asymptotic(traj)
    west = w_infinity(traj)
    aligned_bound = flocking_bound = None
    if config.kernel["tag"] in ("constant", "multiplicative"):
        aligned_bound, flocking_bound = corollary_thresholds(ens.params, ens.weights())
    summary.update({
        "verdict": verdict.tag,
        "verdict_residuals": verdict.residuals,
        "plus_set_size": int(len(verdict.plus_set)),
        "minus_set_size": int(len(verdict.minus_set)),
        "w_infinity": west.value,
        "w_infinity_band": {"std": west.std, "lo": west.lo, "hi": west.hi},
        "thresholds": {"aligned": aligned_bound, "flocking": flocking_bound},
        "E0": float(arrays["E"][0]),
        "drifts": {
            "speed": float(np.max(arrays["speed_drift"])),
            "spin_dot": float(np.max(arrays["spin_dot_drift"])),
        },
        "alpha": ens.alpha,
    })


def _run_monokinetic(config: ScenarioConfig, out_dir: str, summary: dict) -> None:
    j, q = zero_range_j(config)
    params = model_params(config)
    if config.init["name"] != "uniform_field_perturbed":
        raise ValueError("monokinetic_1d supports the uniform_field_perturbed init")
    field = init_library("uniform_field_perturbed", params, None,
                         cells=config.init["cells"], length=config.init["length"],
                         rho=config.init["rho"], j=j, q=q,
                         amplitude=config.init["amplitude"],
                         wavenumber=config.init["wavenumber"])
    dt = config.integration["dt"]
    t_end = config.integration["t_end"]
    stride = config.integration["stride"]
    n_steps = int(round(t_end / dt))
    rows = []

    def emit(t, fld):
        for c in range(fld.n_cells):
            rows.append((t, c, fld.rho[c], fld.u[c, 0], fld.u[c, 1], fld.u[c, 2],
                         fld.sigma[c, 0], fld.sigma[c, 1], fld.sigma[c, 2]))

    emit(0.0, field)
    mass0 = field.mass()
    rs0 = field.spin_density_integral()
    for k in range(1, n_steps + 1):
        field = pde_step_1d(field, dt)
        if k % stride == 0 or k == n_steps:
            emit(k * dt, field)
    write_csv(os.path.join(out_dir, "field.csv"),
              ["t", "cell", "rho", "u1", "u2", "u3", "sigma1", "sigma2", "sigma3"],
              rows)
    summary.update({
        "j": j, "q": q,
        "mass_drift": abs(field.mass() - mass0) / mass0,
        "spin_integral_drift": float(np.max(np.abs(field.spin_density_integral() - rs0))),
        "admissible_dt": max_stable_dt(field),
        "wave_speed_theory": float(np.sqrt(j * config.init["rho"] ** (1.0 - q))
                                   / params.v_speed),
    })


def _run_polar(config: ScenarioConfig, out_dir: str, summary: dict) -> None:
    j, q = zero_range_j(config)
    params = model_params(config)
    g = polynomial_bump(config.init["r_center"], config.init["r_width"])
    field, res = polar_rotating_state(g, config.init["cells"],
                                      config.init["half_extent"], j, q,
                                      params.v_speed)
    xx, yy = field.grid()
    rows = []
    n = field.n_side
    for a in range(n):
        for b in range(n):
            rows.append((a * n + b, xx[a, b], yy[a, b], field.rho[a, b],
                         field.theta[a, b], field.sigma[a, b]))
    write_csv(os.path.join(out_dir, "field.csv"),
              ["cell", "x1", "x2", "rho", "theta", "sigma"], rows)
    summary.update({"j": j, "q": q, "residuals": res})


def _run_line_chain(config: ScenarioConfig, out_dir: str, summary: dict) -> None:
    j, q = zero_range_j(config)
    params = model_params(config)
    gamma = config.init["gamma"]
    lam = config.init["lam"]
    if lam is None:
        # choose lam so the traveling-curve condition holds exactly
        if q == 1.0:
            lam = 1.0
        else:
            lam = gamma * (params.v_speed ** 2 / j) ** (1.0 / (1.0 - q))
    name = config.init["name"]
    if name == "circle_chain":
        curve = circle_curve(config.init["radius"])
    elif name == "helix_chain":
        curve = helix_curve(config.init["radius"], config.init["pitch"])
    else:
        raise ValueError("line_chain supports circle_chain and helix_chain inits")
    chain = traveling_curve(curve, gamma, 0.0, config.init["samples"], lam, j, q,
                            params.v_speed)
    dt = config.integration["dt"]
    t_end = config.integration["t_end"]
    stride = config.integration["stride"]
    n_steps = int(round(t_end / dt))
    rows = []

    def emit(t, ch):
        for m in range(ch.n_samples):
            rows.append((t, m, ch.x[m, 0], ch.x[m, 1], ch.x[m, 2],
                         ch.v[m, 0], ch.v[m, 1], ch.v[m, 2],
                         ch.s[m, 0], ch.s[m, 1], ch.s[m, 2]))

    emit(0.0, chain)
    for k in range(1, n_steps + 1):
        chain = line_step(chain, dt)
        if k % stride == 0 or k == n_steps:
            emit(k * dt, chain)
    write_csv(os.path.join(out_dir, "field.csv"),
              ["t", "sample", "x1", "x2", "x3", "v1", "v2", "v3",
               "s1", "s2", "s3"], rows)
    analytic = traveling_curve(curve, gamma, n_steps * dt, config.init["samples"],
                               lam, j, q, params.v_speed)
    summary.update({
        "j": j, "q": q, "lam": lam, "gamma": gamma,
        "condition_ok": chain.condition_ok,
        "final_departure": float(np.max(np.linalg.norm(chain.x - analytic.x, axis=1))),
    })


def _run_scan(config: ScenarioConfig, out_dir: str, summary: dict) -> None:
    lo, hi = config.init["min"], config.init["max"]
    steps = config.init["steps"]
    rows = []
    for bj in np.linspace(lo, hi, steps):
        sol = solve_selfconsistency(float(bj))
        rows.append((bj, sol.xi, sol.gamma))
    write_csv(os.path.join(out_dir, "bifurcation.csv"),
              ["beta_J", "xi", "gamma"], rows)
    crit = None
    if lo < 3.0 < hi:
        crit = critical_coupling(max(lo, 1e-3), hi)
    summary.update({"scan": {"min": lo, "max": hi, "steps": steps},
                    "critical_coupling": crit})


def verify_outputs(summary_path: str) -> list:
    """Re-check invariants from a run's persisted outputs.

    Returns a list of failure strings (empty = all good).
    """
    with open(summary_path, encoding="utf-8") as f:
        summary = json.load(f)
    out_dir = summary.get("output_directory", os.path.dirname(summary_path))
    model = summary["model"]
    cfg = summary["config"]
    failures: list = []

    def load_csv(name):
        path = os.path.join(out_dir, name)
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return header, data

    if model in ("deterministic", "free_space", "stochastic"):
        v_speed = cfg["params"]["v"]
        header, snap = load_csv("snapshots.csv")
        v = snap[:, 5:8]
        s = snap[:, 8:11]
        speeds = np.linalg.norm(v, axis=1)
        drift = np.max(np.abs(speeds - v_speed)) / v_speed
        if drift > 1e-9:
            failures.append(f"|v| drift {drift:.3e} exceeds 1e-9")
        alpha = np.asarray(summary["alpha"])
        n = cfg["params"]["n"]
        ids = snap[:, 1].astype(int)
        vs = np.sum(v * s, axis=1) - alpha[ids]
        if np.max(np.abs(vs)) > 1e-7 * v_speed ** 2:
            failures.append(f"v.s drift {np.max(np.abs(vs)):.3e} exceeds 1e-7 v^2")
        _, diag = load_csv("diagnostics.csv")
        if cfg["params"]["eta"] > 0 and cfg["params"]["nu"] == 0:
            dE = np.diff(diag[:, 1])
            if np.any(dE > 1e-9):
                failures.append(f"E increased by {np.max(dE):.3e} despite eta > 0")
        # recompute w from the final snapshot against diagnostics
        last_t = snap[-1, 0]
        sel = snap[:, 0] == last_t
        w = np.mean(v[sel], axis=0) if cfg["kernel"]["tag"] == "constant" else None
        if w is not None:
            w_file = diag[-1, 4:7]
            if np.max(np.abs(w - w_file)) > 1e-12 + 1e-9 * np.linalg.norm(w_file):
                failures.append("diagnostics w does not match snapshot recomputation")
    elif model == "monokinetic_1d":
        _, data = load_csv("field.csv")
        v_speed = cfg["params"]["v"]
        times = np.unique(data[:, 0])
        masses = []
        for t in times:
            sel = data[:, 0] == t
            rho = data[sel, 2]
            u = data[sel, 3:6]
            if np.max(np.abs(np.linalg.norm(u, axis=1) - v_speed)) > 1e-9 * v_speed:
                failures.append(f"|u| != v at t = {t}")
            masses.append(np.sum(rho))
        masses = np.asarray(masses)
        if np.max(np.abs(masses - masses[0])) > 1e-8 * abs(masses[0]):
            failures.append("mass not conserved across snapshots")
    elif model == "line_chain":
        _, data = load_csv("field.csv")
        v_speed = cfg["params"]["v"]
        v = data[:, 5:8]
        s = data[:, 8:11]
        if np.max(np.abs(np.linalg.norm(v, axis=1) - v_speed)) > 1e-9 * v_speed:
            failures.append("|v| != v along the chain")
        if np.max(np.abs(np.sum(v * s, axis=1))) > 1e-6 * v_speed ** 2:
            failures.append("v.s deviates from 0 along the chain")
    elif model == "equilibrium_scan":
        from .meanfield import h as h_fn
        _, data = load_csv("bifurcation.csv")
        resid = np.abs(data[:, 1] - data[:, 0] * h_fn(data[:, 1]))
        if np.max(resid) > 1e-10:
            failures.append(f"self-consistency residual {np.max(resid):.3e} > 1e-10")
        if np.any(np.diff(data[:, 2]) < -1e-12):
            failures.append("gamma not monotone along the scan")
    elif model == "polar_2d":
        pass  # residuals already recorded in the summary
    else:
        failures.append(f"unknown model {model!r} in summary")
    return failures
