"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
ISM_THREADS (optional) caps worker parallelism; execution is serial numpy
at desk scale, so any cap >= 1 is honored trivially (invalid values are a
configuration error).
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, parse_config
from .integrators import NumericalBlowup
from .interactions import IndicatorProfile, IsolatedAgentError
from .monokinetic import EXPECTED_SLOPE, expansion_slope
from .runner import run_scenario, verify_outputs, write_csv, write_summary


def _read_threads_cap() -> int:
    raw = os.environ.get("ISM_THREADS")
    if raw is None:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError([(0, f"ISM_THREADS must be a positive integer, got {raw!r}")])
    if val < 1:
        raise ConfigError([(0, f"ISM_THREADS must be >= 1, got {val}")])
    return val


def _cmd_run(args) -> int:
    with open(args.config, encoding="utf-8") as f:
        text = f.read()
    config = parse_config(text)
    summary = run_scenario(config, out_dir=args.out)
    print(f"wrote {summary['output_directory']}/summary.json"
          + (f" (verdict: {summary['verdict']})" if "verdict" in summary else ""))
    return 0


def _cmd_scan(args) -> int:
    from .config import ScenarioConfig, _SCHEMA  # defaults
    text = (f"[model]\nkind = equilibrium_scan\n[init]\nname = beta_j_scan\n"
            f"min = {args.min}\nmax = {args.max}\nsteps = {args.steps}\n"
            f"[output]\ndirectory = {args.out}\n")
    config = parse_config(text)
    summary = run_scenario(config)
    crit = summary.get("critical_coupling")
    print(f"wrote {args.out}/bifurcation.csv"
          + (f" (critical coupling ~ {crit:.8f})" if crit else ""))
    return 0


def _default_expansion_inputs(kind: str):
    import numpy as np
    profile = IndicatorProfile(1.0)
    if kind == "space":
        rho = lambda y: np.exp(-0.5 * np.sum((np.asarray(y) - 0.2) ** 2, axis=-1))
        phi = lambda y: (np.sin(np.asarray(y)[..., 0])
                         + 0.5 * np.asarray(y)[..., 1] ** 2
                         + 0.3 * np.asarray(y)[..., 0] * np.asarray(y)[..., 2])
        return {"profile": profile, "rho": rho, "phi": phi,
                "x0": np.array([0.1, -0.2, 0.3])}
    def curve(z):
        z = np.asarray(z, dtype=float)
        return np.stack([z + 0.3 * z ** 2, 0.4 * z ** 2 + 0.1 * z ** 3, 0.2 * z],
                        axis=-1)
    phi1 = lambda z: np.sin(z) + 0.4 * z ** 2
    out = {"profile": profile, "curve": curve, "phi1": phi1}
    if kind == "line_rank":
        out["lam"] = 1.0
    return out


def _cmd_check_expansion(args) -> int:
    eps = [float(tok) for tok in args.eps_list.split(",")]
    if len(eps) < 2:
        raise ConfigError([(0, "--eps-list needs at least two epsilons")])
    slope, checks = expansion_slope(args.kind, eps, **_default_expansion_inputs(args.kind))
    print(f"kind = {args.kind} (expected slope {EXPECTED_SLOPE[args.kind]:.1f})")
    for e, c in zip(eps, checks):
        print(f"  eps = {e:<8g} exact = {c.exact: .9e}  asymptotic = "
              f"{c.asymptotic: .9e}  rel_error = {c.rel_error:.3e}")
    print(f"measured slope = {slope:.3f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "expansion.csv"),
                  ["eps", "exact", "asymptotic", "rel_error"],
                  [(e, c.exact, c.asymptotic, c.rel_error) for e, c in zip(eps, checks)])
        write_summary(os.path.join(args.out, "summary.json"),
                      {"model": "check_expansion", "kind": args.kind,
                       "slope": slope, "expected": EXPECTED_SLOPE[args.kind]})
    return 0


def _cmd_verify(args) -> int:
    failures = verify_outputs(args.summary)
    if failures:
        for f in failures:
            print(f"FAIL: {f}", file=sys.stderr)
        return 3
    print("all invariants verified")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ism",
                                     description="inertial spin model toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="override output directory")
    p_run.set_defaults(func=_cmd_run)

    p_scan = sub.add_parser("scan-bifurcation", help="solve the self-consistency scan")
    p_scan.add_argument("--min", type=float, required=True)
    p_scan.add_argument("--max", type=float, required=True)
    p_scan.add_argument("--steps", type=int, required=True)
    p_scan.add_argument("--out", default="runs/bifurcation")
    p_scan.set_defaults(func=_cmd_scan)

    p_exp = sub.add_parser("check-expansion", help="zero-range expansion sweep")
    p_exp.add_argument("--kind", choices=("space", "line", "line_rank"), required=True)
    p_exp.add_argument("--eps-list", required=True,
                       help="comma-separated epsilons, e.g. 0.2,0.1,0.05,0.025")
    p_exp.add_argument("--out", default=None)
    p_exp.set_defaults(func=_cmd_check_expansion)

    p_ver = sub.add_parser("verify", help="re-check invariants from run outputs")
    p_ver.add_argument("summary")
    p_ver.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        _read_threads_cap()
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalBlowup, IsolatedAgentError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
