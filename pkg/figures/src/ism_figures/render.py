"""Deterministic figure rendering from run-output files.

Input schemas (produced by the `ism` CLI):
  diagnostics.csv  t, E, U, w_norm, w1..w3, max_sigma, spin1..spin3
  snapshots.csv    t, agent_id, x1..x3, v1..v3, s1..s3
  field.csv        1D grids: t, cell, rho, u1..u3, sigma1..sigma3
                   line chains: t, sample, x1..x3, v1..v3, s1..s3
  bifurcation.csv  beta_J, xi, gamma
  summary.json     config echo + w_infinity (bifurcation overlay points)

Rendering never mutates inputs; a rerun on identical inputs produces an
identical image byte stream (fixed size, Agg backend, scrubbed metadata).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_KINDS = ("energy_series", "w_series", "bifurcation", "sphere_snapshot",
                "dispersion", "chain_3d")

_FIGSIZE = (6.4, 4.8)
_DPI = 110


class MissingColumnError(ValueError):
    def __init__(self, path: str, column: str):
        self.column = column
        super().__init__(f"{path}: missing column {column!r}")


@dataclass(frozen=True)
class FigureJob:
    kind: str
    inputs: tuple
    output: str

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {FIGURE_KINDS}")
        if not self.inputs:
            raise ValueError("at least one input file is required")


def load_table(path: str, required: tuple) -> dict:
    """Read a CSV into named columns, checking the required names."""
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    for col in required:
        if col not in header:
            raise MissingColumnError(path, col)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(header)}


def _save(fig, path: str) -> None:
    kwargs = {"dpi": _DPI}
    if path.endswith(".png"):
        kwargs["metadata"] = {"Software": "ism-fig"}
    elif path.endswith(".svg"):
        plt.rcParams["svg.hashsalt"] = "ism-fig"
        kwargs["metadata"] = {"Date": None}
    fig.savefig(path, **kwargs)
    plt.close(fig)


def _energy_series(job: FigureJob):
    tab = load_table(job.inputs[0], ("t", "E", "U"))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(tab["t"], tab["E"], label="E", color="tab:blue")
    ax.plot(tab["t"], tab["U"], label="U", color="tab:orange")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend()
    return fig


def _w_series(job: FigureJob):
    tab = load_table(job.inputs[0], ("t", "w_norm"))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(tab["t"], tab["w_norm"], color="tab:green")
    ax.set_xlabel("t")
    ax.set_ylabel("w_norm")
    return fig


def _bifurcation(job: FigureJob):
    tab = load_table(job.inputs[0], ("beta_J", "gamma"))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(tab["beta_J"], tab["gamma"], color="tab:blue",
            label="self-consistency curve")
    for path in job.inputs[1:]:
        with open(path, encoding="utf-8") as f:
            summary = json.load(f)
        params = summary["config"]["params"]
        if params["nu"] <= 0:
            raise ValueError(f"{path}: summary lacks a finite temperature "
                             "(nu = 0); cannot place it on the beta_J axis")
        beta_j = params["eta"] / params["nu"] * params["j"]
        point = summary["w_infinity"] / params["v"]
        ax.plot([beta_j], [point], marker="o", color="tab:red", linestyle="none",
                label="particle system")
    handles, labels = ax.get_legend_handles_labels()
    seen = dict(zip(labels, handles))
    ax.legend(seen.values(), seen.keys())
    ax.set_xlabel("beta_J")
    ax.set_ylabel("gamma")
    return fig


def _sphere_snapshot(job: FigureJob):
    tab = load_table(job.inputs[0], ("t", "v1", "v2", "v3"))
    t_last = tab["t"].max()
    sel = tab["t"] == t_last
    v = np.column_stack([tab["v1"][sel], tab["v2"][sel], tab["v3"][sel]])
    vhat = v / np.linalg.norm(v, axis=1)[:, None]
    fig = plt.figure(figsize=(6.4, 6.4))
    ax = fig.add_subplot(projection="3d")
    theta = np.linspace(0, 2 * np.pi, 25)
    phi = np.linspace(0, np.pi, 13)
    tt, pp = np.meshgrid(theta, phi)
    ax.plot_wireframe(np.cos(tt) * np.sin(pp), np.sin(tt) * np.sin(pp),
                      np.cos(pp), color="0.85", linewidth=0.4)
    ax.scatter(vhat[:, 0], vhat[:, 1], vhat[:, 2], s=12, color="tab:blue",
               depthshade=False)
    ax.set_box_aspect((1, 1, 1))
    ax.set_title(f"velocity directions at t = {t_last:g}")
    return fig


def _dispersion(job: FigureJob):
    tab = load_table(job.inputs[0], ("t", "cell", "u3"))
    times = np.unique(tab["t"])
    cells = np.unique(tab["cell"]).astype(int)
    grid = np.empty((len(times), len(cells)))
    for k, t in enumerate(times):
        sel = tab["t"] == t
        order = np.argsort(tab["cell"][sel])
        grid[k] = tab["u3"][sel][order]
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    im = ax.imshow(grid, aspect="auto", origin="lower",
                   extent=(cells[0], cells[-1], times[0], times[-1]),
                   cmap="RdBu_r")
    fig.colorbar(im, ax=ax, label="u3")
    ax.set_xlabel("cell")
    ax.set_ylabel("t")
    return fig


def _chain_3d(job: FigureJob):
    tab = load_table(job.inputs[0], ("t", "sample", "x1", "x2", "x3"))
    fig = plt.figure(figsize=(6.4, 6.4))
    ax = fig.add_subplot(projection="3d")
    for t, color, label in ((tab["t"].min(), "0.6", "initial"),
                            (tab["t"].max(), "tab:blue", "final")):
        sel = tab["t"] == t
        order = np.argsort(tab["sample"][sel])
        ax.plot(tab["x1"][sel][order], tab["x2"][sel][order],
                tab["x3"][sel][order], color=color, label=label)
    ax.legend()
    ax.set_title("chain positions")
    return fig


_RENDERERS = {
    "energy_series": _energy_series,
    "w_series": _w_series,
    "bifurcation": _bifurcation,
    "sphere_snapshot": _sphere_snapshot,
    "dispersion": _dispersion,
    "chain_3d": _chain_3d,
}


def render(job: FigureJob) -> str:
    """Render the job and return the output path."""
    fig = _RENDERERS[job.kind](job)
    _save(fig, job.output)
    return job.output
