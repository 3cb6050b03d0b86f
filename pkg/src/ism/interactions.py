"""Communication-weight kernels and the per-agent interaction fields w_i.

Four weight classes are supported: constant rates, multiplicative rates
n_ij = n_i n_j, distance weights n_ij = K(|x_i - x_j|)/n_i^q, and rank
(topological) weights n_ij = T(M_ij) with M_ij the mass fraction closer to
agent i than agent j is.

Determinism contract: for a fixed summation order (ascending agent id) the
indexed evaluators produce bit-for-bit the same field as their brute-force
O(N^2) oracles.  Both paths therefore build the identical filtered,
id-sorted contribution array and reduce it with the same call.

Self-term conventions (the paper's sums are ambiguous at j = i):
  * distance: K(0) is included in the numerator sum over j but excluded
    from the normalization n_i = (1/N) sum_{j != i} K_ij; switch the
    numerator part off with include_self=False.
  * rank: M_ii = 0 (agent i is its own closest point), which the strict
    "<" count produces automatically.
Ties in rank counting are broken by strict "<" exactly as written:
equidistant agents share the same count.

A single profile K (or T) is shared by all pairs; pair-dependent profiles
K_ij are an extension point the paper never exercises.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import Ensemble
from .geometry import norm


# ---------------------------------------------------------------------------
# radial profiles

@dataclass(frozen=True)
class IndicatorProfile:
    """Top-hat profile: height on [0, radius], zero beyond (closed support)."""

    radius: float
    height: float = 1.0

    def __post_init__(self):
        if self.radius <= 0 or self.height < 0:
            raise ValueError("indicator profile needs radius > 0 and height >= 0")

    @property
    def support(self) -> float:
        return self.radius

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.radius, self.height, 0.0)


@dataclass(frozen=True)
class SmoothBumpProfile:
    """C-infinity bump height*exp(1 - 1/(1 - (r/radius)^2)) on [0, radius)."""

    radius: float
    height: float = 1.0

    def __post_init__(self):
        if self.radius <= 0 or self.height < 0:
            raise ValueError("bump profile needs radius > 0 and height >= 0")

    @property
    def support(self) -> float:
        return self.radius

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        x = r / self.radius
        inside = x < 1.0
        x2 = np.where(inside, x * x, 0.0)
        val = np.exp(1.0 - 1.0 / (1.0 - x2)) * self.height
        return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class TableProfile:
    """Piecewise-linear profile from (r, value) knots; zero beyond the last knot.

    Knots must start at r = 0 with nonnegative, nonincreasing values.
    """

    knots_r: tuple
    knots_val: tuple

    def __post_init__(self):
        r = np.asarray(self.knots_r, dtype=float)
        v = np.asarray(self.knots_val, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise ValueError("table profile needs matching 1D knot arrays (>= 2 knots)")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("knot radii must start at 0 and increase")
        if np.any(v < 0) or np.any(np.diff(v) > 0):
            raise ValueError("knot values must be nonnegative and nonincreasing")
        object.__setattr__(self, "knots_r", tuple(float(x) for x in r))
        object.__setattr__(self, "knots_val", tuple(float(x) for x in v))

    @property
    def support(self) -> float:
        return self.knots_r[-1]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.knots_r, self.knots_val, right=0.0)


RadialProfile = Union[IndicatorProfile, SmoothBumpProfile, TableProfile]


# ---------------------------------------------------------------------------
# kernel descriptors

@dataclass(frozen=True)
class ConstantKernel:
    """n_ij = c for all pairs."""

    c: float = 1.0


@dataclass(frozen=True)
class MultiplicativeKernel:
    """n_ij = n_i n_j with positive per-agent rates (held by the ensemble)."""

    n: tuple

    def __post_init__(self):
        arr = np.asarray(self.n, dtype=float)
        if np.any(arr <= 0):
            raise ValueError("multiplicative rates must be positive")
        object.__setattr__(self, "n", tuple(float(x) for x in arr))

    def rates(self) -> np.ndarray:
        return np.asarray(self.n, dtype=float)


@dataclass(frozen=True)
class DistanceKernel:
    """n_ij = K(|x_i - x_j|) / n_i^q with q in [0, 1]."""

    profile: RadialProfile
    q: float = 0.0
    include_self: bool = True

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0):
            raise ValueError("distance kernel exponent q must lie in [0, 1]")


@dataclass(frozen=True)
class RankKernel:
    """n_ij = T(M_ij), T nonincreasing on [0, 1]."""

    profile: RadialProfile


KernelSpec = Union[ConstantKernel, MultiplicativeKernel, DistanceKernel, RankKernel]


class IsolatedAgentError(ValueError):
    """Raised when q > 0 normalization hits an agent with no neighbor in support."""

    def __init__(self, agent: int):
        self.agent = agent
        super().__init__(f"isolated agent under q-normalization: agent {agent} "
                         "has no neighbor inside the kernel support")


# ---------------------------------------------------------------------------
# spatial index

class SpatialIndex:
    """Uniform cell grid over agent positions (open space, dict-backed).

    cell_size must be at least the query radius for 27-cell gathering to be
    exhaustive.  query() returns exactly the ids within the closed ball.
    """

    def __init__(self, positions: np.ndarray, cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.positions = np.asarray(positions, dtype=float)
        self.cell_size = float(cell_size)
        keys = np.floor(self.positions / self.cell_size).astype(np.int64)
        cells: dict = {}
        for i, key in enumerate(map(tuple, keys)):
            cells.setdefault(key, []).append(i)
        self._cells = {k: np.array(v, dtype=np.intp) for k, v in cells.items()}
        self._keys = keys

    def candidates(self, point: np.ndarray) -> np.ndarray:
        """Sorted ids of all agents in the 27 cells around the point."""
        key = tuple(np.floor(np.asarray(point) / self.cell_size).astype(np.int64))
        found = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    ids = self._cells.get((key[0] + dx, key[1] + dy, key[2] + dz))
                    if ids is not None:
                        found.append(ids)
        if not found:
            return np.empty(0, dtype=np.intp)
        return np.sort(np.concatenate(found))

    def query(self, point: np.ndarray, radius: float) -> np.ndarray:
        """Exactly the agent ids with |x_j - point| <= radius, ascending."""
        if radius > self.cell_size:
            raise ValueError("query radius exceeds cell size; rebuild the index")
        cand = self.candidates(point)
        if cand.size == 0:
            return cand
        d = norm(self.positions[cand] - np.asarray(point, dtype=float))
        return cand[d <= radius]


# ---------------------------------------------------------------------------
# field evaluation helpers

def _reduce_contribs(weights: np.ndarray, vels: np.ndarray) -> np.ndarray:
    """The one reduction both oracle and indexed paths share (bitwise contract)."""
    return np.add.reduce(weights[:, None] * vels, axis=0)


def _segment_field(i_idx: np.ndarray, j_idx: np.ndarray, k_val: np.ndarray,
                   v: np.ndarray, n_agents: int):
    """Per-agent weighted sums from a filtered (i, j, K) contribution stream.

    The stream must be sorted by (i, j); np.bincount accumulates in element
    order, so any two paths that build the identical stream produce
    bit-identical fields.  Returns (numerator sums (N, 3), per-agent K sums,
    per-agent self K values).
    """
    num = np.empty((n_agents, 3))
    vj = v[j_idx]
    for comp in range(3):
        num[:, comp] = np.bincount(i_idx, weights=k_val * vj[:, comp],
                                   minlength=n_agents)
    ksum = np.bincount(i_idx, weights=k_val, minlength=n_agents)
    kself = np.zeros(n_agents)
    self_rows = i_idx == j_idx
    kself[i_idx[self_rows]] = k_val[self_rows]
    return num, ksum, kself


def w_constant(ensemble: Ensemble, c: float = 1.0) -> np.ndarray:
    """w_i = c * (1/N) sum_j v_j, identical for every agent."""
    w = c * np.add.reduce(ensemble.v, axis=0) / ensemble.n
    return np.broadcast_to(w, (ensemble.n, 3)).copy()


def w_multiplicative(ensemble: Ensemble, n: np.ndarray) -> np.ndarray:
    """w_i = n_i * (1/N) sum_j n_j v_j; rates must be positive."""
    n = np.asarray(n, dtype=float)
    if np.any(n <= 0):
        raise ValueError("multiplicative rates must be positive")
    w = np.add.reduce(n[:, None] * ensemble.v, axis=0) / ensemble.n
    return n[:, None] * w


def w_distance(ensemble: Ensemble, profile: RadialProfile, q: float = 0.0,
               include_self: bool = True, method: str = "auto") -> np.ndarray:
    """Distance-kernel field w_i = (1/N) sum_j K(|x_i-x_j|) v_j / n_i^q.

    n_i = (1/N) sum_{j != i} K(|x_i - x_j|).  With q > 0 an agent whose n_i
    vanishes raises IsolatedAgentError.  Methods: "brute" loops over all
    pairs, "cell" gathers candidates from a uniform grid, "auto" picks by N;
    brute and cell are bit-for-bit identical by construction.
    """
    if not (0.0 <= q <= 1.0):
        raise ValueError("q must lie in [0, 1]")
    n_agents = ensemble.n
    x, v = ensemble.x, ensemble.v
    if method == "auto":
        method = "brute" if n_agents <= 400 else "cell"

    # build the filtered contribution stream sorted by (i, j); both methods
    # produce the identical stream, so the fields agree bit for bit
    if method == "brute":
        d = norm(x[:, None, :] - x[None, :, :])
        k = profile(d)
        keep = k > 0.0
        i_idx, j_idx = np.nonzero(keep)
        k_val = k[keep]
    elif method == "cell":
        index = SpatialIndex(x, profile.support)
        i_parts, j_parts, k_parts = [], [], []
        for i in range(n_agents):
            ids = index.candidates(x[i])
            kc = profile(norm(x[ids] - x[i]))
            keep = kc > 0.0
            kept = ids[keep]
            i_parts.append(np.full(kept.shape, i, dtype=np.intp))
            j_parts.append(kept)
            k_parts.append(kc[keep])
        i_idx = np.concatenate(i_parts)
        j_idx = np.concatenate(j_parts)
        k_val = np.concatenate(k_parts)
    else:
        raise ValueError(f"unknown method {method!r}")

    if not include_self:
        others = i_idx != j_idx
        i_idx, j_idx, k_val = i_idx[others], j_idx[others], k_val[others]
        num, ksum, _ = _segment_field(i_idx, j_idx, k_val, v, n_agents)
        n_i = ksum / n_agents
    else:
        num, ksum, kself = _segment_field(i_idx, j_idx, k_val, v, n_agents)
        n_i = (ksum - kself) / n_agents
    out = num / n_agents
    if q > 0.0:
        if np.any(n_i <= 0.0):
            raise IsolatedAgentError(int(np.argmax(n_i <= 0.0)))
        out = out / (n_i ** q)[:, None]
    return out


def w_rank(ensemble: Ensemble, profile: RadialProfile, method: str = "sort") -> np.ndarray:
    """Rank-kernel field w_i = (1/N) sum_j T(M_ij) v_j.

    M_ij = (1/N) #{k : |x_k - x_i| < |x_i - x_j|} (strict), so M_ii = 0 and
    k = i counts for every j != i.  "sort" counts via a per-agent distance
    sort; "brute" counts every pair directly.  Both produce identical counts
    and reduce identically (bitwise).
    """
    n_agents = ensemble.n
    x, v = ensemble.x, ensemble.v
    d = norm(x[:, None, :] - x[None, :, :])
    if method == "sort":
        d_sorted = np.sort(d, axis=1, kind="stable")
        counts = np.empty((n_agents, n_agents), dtype=np.intp)
        for i in range(n_agents):
            counts[i] = np.searchsorted(d_sorted[i], d[i], side="left")
    elif method == "brute":
        counts = np.add.reduce(d[:, None, :] < d[:, :, None], axis=2)
    else:
        raise ValueError(f"unknown method {method!r}")
    t = profile(counts / n_agents)
    # both methods hand the identical weight matrix to the same reduction
    return np.add.reduce(t[:, :, None] * v[None, :, :], axis=1) / n_agents


def interaction_field(ensemble: Ensemble, method: str = "auto") -> np.ndarray:
    """Dispatch w_i on the ensemble's kernel descriptor."""
    kernel = ensemble.kernel
    if isinstance(kernel, ConstantKernel):
        return w_constant(ensemble, kernel.c)
    if isinstance(kernel, MultiplicativeKernel):
        return w_multiplicative(ensemble, kernel.rates())
    if isinstance(kernel, DistanceKernel):
        return w_distance(ensemble, kernel.profile, kernel.q,
                          include_self=kernel.include_self, method=method)
    if isinstance(kernel, RankKernel):
        return w_rank(ensemble, kernel.profile)
    raise TypeError(f"ensemble carries no usable kernel: {kernel!r}")


def rates_matrix(ensemble: Ensemble) -> np.ndarray:
    """Dense communication rates n_ij at the current configuration.

    Used by diagnostics (pairwise potential); O(N^2).
    """
    kernel = ensemble.kernel
    n_agents = ensemble.n
    if isinstance(kernel, ConstantKernel):
        return np.full((n_agents, n_agents), kernel.c)
    if isinstance(kernel, MultiplicativeKernel):
        n = kernel.rates()
        return np.outer(n, n)
    if isinstance(kernel, DistanceKernel):
        d = norm(ensemble.x[:, None, :] - ensemble.x[None, :, :])
        k = kernel.profile(d)
        if kernel.q == 0.0:
            return k
        n_i = (np.add.reduce(k, axis=1) - np.diagonal(k)) / n_agents
        if np.any(n_i <= 0.0):
            raise IsolatedAgentError(int(np.argmax(n_i <= 0.0)))
        return k / (n_i[:, None] ** kernel.q)
    if isinstance(kernel, RankKernel):
        d = norm(ensemble.x[:, None, :] - ensemble.x[None, :, :])
        counts = np.add.reduce(d[:, None, :] < d[:, :, None], axis=2)
        return kernel.profile(counts / n_agents)
    raise TypeError(f"ensemble carries no usable kernel: {kernel!r}")


def pairwise_potential(ensemble: Ensemble) -> float:
    """U = (J / 4Nv^2) sum_ij nbar_ij (v_i - v_j)^2, nbar the symmetrized rates.

    Equals the Lagrangian potential whenever the rates are symmetric
    (constant, multiplicative, distance with q = 0); for rank or q > 0 it is
    a monitoring functional only.
    """
    p = ensemble.params
    rates = rates_matrix(ensemble)
    rates = 0.5 * (rates + rates.T)
    diff2 = np.add.reduce((ensemble.v[:, None, :] - ensemble.v[None, :, :]) ** 2, axis=2)
    return float(p.J / (4.0 * p.N * p.v_speed ** 2) * np.add.reduce(rates * diff2, axis=None))


# ---------------------------------------------------------------------------
# continuum evaluators (used by the mono-kinetic validation)

def continuum_w(points: np.ndarray, nodes: np.ndarray, node_mass: np.ndarray,
                u: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    """Quadrature evaluation of the mean-field interaction on gridded data.

    points     : (P, 3) evaluation locations
    nodes      : (M, 3) quadrature nodes of the density support
    node_mass  : (M,) rho * cell_volume at each node (>= 0)
    u          : (M, 3) velocity field at the nodes
    kernel     : DistanceKernel (w^q) or RankKernel (w^rank)

    Distance: w(x) = int K(|x-y|) u rho dy / (int K rho dy)^q; a vanishing
    denominator with q > 0 raises.  Rank: w(x) = int T(M(x,|x-y|)) u rho dy
    with M(x,R) the mass inside the open ball of radius R.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    nodes = np.asarray(nodes, dtype=float)
    node_mass = np.asarray(node_mass, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(node_mass < 0):
        raise ValueError("node masses must be nonnegative")
    out = np.empty((len(points), 3))
    if isinstance(kernel, DistanceKernel):
        for p_idx, xp in enumerate(points):
            k = kernel.profile(norm(nodes - xp))
            num = np.add.reduce((k * node_mass)[:, None] * u, axis=0)
            if kernel.q > 0.0:
                den = float(np.add.reduce(k * node_mass))
                if den <= 0.0:
                    raise ValueError(f"zero q-normalization denominator at point {xp}")
                num = num / den ** kernel.q
            out[p_idx] = num
        return out
    if isinstance(kernel, RankKernel):
        for p_idx, xp in enumerate(points):
            d = norm(nodes - xp)
            order = np.argsort(d, kind="stable")
            csum = np.concatenate(([0.0], np.cumsum(node_mass[order])))
            mass_closer = csum[np.searchsorted(d[order], d, side="left")]
            t = kernel.profile(mass_closer)
            out[p_idx] = np.add.reduce((t * node_mass)[:, None] * u, axis=0)
        return out
    raise TypeError("continuum_w needs a DistanceKernel or RankKernel")
