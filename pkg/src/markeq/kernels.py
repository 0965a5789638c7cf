"""Transition kernels: specification, grid discretization, and diagnostics.

Two kernel families are supported.  ``AdditiveNoise`` describes
``x' = mu(t, x, u) + sigma(t, x, u) * W`` with scalar noise W; it is
discretized onto the state grids by assigning, for each (time, state
node, control node), the probability mass of the landing distribution to
the two bracketing next-grid nodes (linear mass interpolation, mass
beyond the grid clamped to the edge node).  ``DiscreteChain`` carries
explicit row-stochastic matrices and passes through unchanged.

The module also houses the continuity diagnostics: a numeric total
variation distance between one-step laws at two controls, and a probe
checking |E_u[V] - E_u'[V]| <= M * TV for bounded measurable V.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy import special

from .errors import InfeasibleControlError, KernelError
from .noise import DISCRETIZE_TAIL_MASS, TV_TAIL_MASS, GaussianNoise, Noise

ROW_SUM_TOL = 1e-10
CHAIN_ROW_TOL = 1e-12
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class AdditiveNoise:
    """Kernel x' = drift(t, x, u) + scale(t, x, u) * W.

    drift and scale must broadcast over numpy arrays in (x, u).
    ``sigma_floor`` is the lower bound required of scale; rows violating
    it are rejected at discretization time.  A zero floor admits
    degenerate (point-mass) kernels: those are usable only with the
    exact-expectation and continuity-probe paths, never for solving.
    """

    drift: Callable
    scale: Callable
    noise: Noise
    sigma_floor: float = 1e-8

    def __post_init__(self):
        if self.sigma_floor < 0:
            raise KernelError("sigma_floor must be >= 0")

    def landing_params(self, t, x, u):
        """Mean and std of x' given (t, x, u), folding in the noise moments."""
        mu = np.asarray(self.drift(t, x, u), dtype=float)
        sc = np.asarray(self.scale(t, x, u), dtype=float)
        if np.any(sc < self.sigma_floor) or np.any(sc <= 0):
            raise KernelError("scale fell below sigma_floor")
        return mu, sc


@dataclass(frozen=True)
class DiscreteChain:
    """Explicit per-(t, state-node, control-node) stochastic matrices.

    matrices[t] has shape (n_t, M_u, n_{t+1}); control_values[t] are the
    M_u control node values shared by all states at time t.
    """

    matrices: Sequence[np.ndarray]
    control_values: Sequence[np.ndarray]

    def __post_init__(self):
        for t, P in enumerate(self.matrices):
            P = np.asarray(P, dtype=float)
            if P.ndim != 3:
                raise KernelError(f"chain matrix at t={t} must be 3-d")
            if np.any(P < 0):
                raise KernelError(f"negative transition weight at t={t}")
            rows = P.sum(axis=-1)
            if np.any(np.abs(rows - 1.0) > CHAIN_ROW_TOL):
                raise KernelError(f"non-stochastic row at t={t}")
            u = np.asarray(self.control_values[t], dtype=float)
            if u.ndim != 1 or u.size != P.shape[1]:
                raise KernelError(f"control values at t={t} do not match matrix")
            if u.size > 1 and np.any(np.diff(u) <= 0):
                raise KernelError(f"control values at t={t} must be strictly increasing")


KernelSpec = Union[AdditiveNoise, DiscreteChain]


@dataclass
class DiscretizedKernel:
    """Per-time weight tensors W[t][i, j, m] and control node values U[t][i, j].

    When built from an additive-noise kernel, the kernel and build method
    are retained so that rows at off-node controls can be re-discretized
    exactly instead of blended (control blending is only piecewise linear
    in u, which misplaces interior minima of curved objectives).
    """

    weights: List[np.ndarray]
    controls: List[np.ndarray]
    grids: List[np.ndarray]
    clamped: List[np.ndarray] = field(default_factory=list)  # clamp mass per (i, j)
    spec: Optional["KernelSpec"] = None
    build_method: str = "blend"      # "exact" | "quadrature" | "blend"
    quad_order: int = 41

    @property
    def horizon(self) -> int:
        return len(self.weights) + 1

    def check_rows(self, tol: float = ROW_SUM_TOL):
        for t, W in enumerate(self.weights):
            rows = W.sum(axis=-1)
            if np.any(np.abs(rows - 1.0) > tol) or np.any(W < -tol):
                raise KernelError(f"discretized rows at t={t} are not stochastic")

    def _check_feasible(self, t: int, i: int, u: float) -> float:
        U = self.controls[t][i]
        if u < U[0] - FEAS_TOL or u > U[-1] + FEAS_TOL:
            raise InfeasibleControlError(
                f"control {u} outside [{U[0]}, {U[-1]}] at t={t}, node {i}")
        return min(max(u, U[0]), U[-1])

    def blended_row(self, t: int, i: int, u: float) -> np.ndarray:
        """Row of landing weights at (t, node i, control value u).

        The control is snapped to its two bracketing control nodes and the
        rows blended linearly; exact at control nodes.
        """
        u = self._check_feasible(t, i, u)
        U = self.controls[t][i]
        j = int(np.searchsorted(U, u))
        if j == 0 or U[j] == u:
            return self.weights[t][i, j]
        theta = (u - U[j - 1]) / (U[j] - U[j - 1])
        return (1.0 - theta) * self.weights[t][i, j - 1] + theta * self.weights[t][i, j]

    def row(self, t: int, i: int, u: float) -> np.ndarray:
        """Landing weights at an arbitrary feasible control.

        Additive-noise kernels re-discretize at u exactly (same rule that
        built the node tensors, so node controls reproduce W[t][i, j]);
        discrete chains blend between bracketing control nodes.
        """
        if self.spec is None or isinstance(self.spec, DiscreteChain):
            return self.blended_row(t, i, u)
        u = self._check_feasible(t, i, u)
        x = float(self.grids[t][i])
        mu, sc = self.spec.landing_params(t, x, u)
        mu, sc = float(mu), float(sc)
        if self.build_method == "exact":
            nz = self.spec.noise
            W, _ = _gaussian_tent_masses(self.grids[t + 1],
                                         np.array([mu + sc * nz.mean]),
                                         np.array([sc * nz.std]))
            row = W[0]
        else:
            wq, omega = self.spec.noise.quadrature(self.quad_order)
            row = spread_mass(self.grids[t + 1], mu + sc * wq, omega)
        row = np.maximum(row, 0.0)
        return row / row.sum()

    def row_block(self, t: int, U: np.ndarray) -> np.ndarray:
        """row() vectorized over a (n, P) array of controls -> (n, P, nn)."""
        U = np.asarray(U, dtype=float)
        n, P = U.shape
        lo = self.controls[t][:, :1]
        hi = self.controls[t][:, -1:]
        if np.any(U < lo - FEAS_TOL) or np.any(U > hi + FEAS_TOL):
            raise InfeasibleControlError(f"control outside feasible interval at t={t}")
        U = np.clip(U, lo, hi)
        if self.spec is None or isinstance(self.spec, DiscreteChain):
            out = np.empty((n, P, self.grids[t + 1].size))
            for i in range(n):
                for p in range(P):
                    out[i, p] = self.blended_row(t, i, U[i, p])
            return out
        x = self.grids[t][:, None]
        mu, sc = self.spec.landing_params(t, x, U)
        mu = np.broadcast_to(np.asarray(mu, dtype=float), U.shape)
        sc = np.broadcast_to(np.asarray(sc, dtype=float), U.shape)
        nz = self.spec.noise
        nn = self.grids[t + 1].size
        if self.build_method == "exact":
            W = np.empty((n, P, nn))
            chunk = max(1, int(4e6 // (P * nn)))
            for i0 in range(0, n, chunk):
                sl = slice(i0, i0 + chunk)
                W[sl], _ = _gaussian_tent_masses(
                    self.grids[t + 1], mu[sl] + sc[sl] * nz.mean, sc[sl] * nz.std)
        else:
            wq, omega = nz.quadrature(self.quad_order)
            W = spread_mass(self.grids[t + 1], mu[..., None] + sc[..., None] * wq, omega)
        W = np.maximum(W, 0.0)
        return W / W.sum(axis=-1, keepdims=True)

    def rows(self, t: int, controls: np.ndarray) -> np.ndarray:
        """row() per state node; controls has one value per node."""
        controls = np.asarray(controls, dtype=float)
        return self.row_block(t, controls[:, None])[:, 0, :]


def spread_mass(grid: np.ndarray, points: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Distribute point masses onto bracketing grid nodes (clamped at edges).

    points/masses share shape (..., Q); returns (..., len(grid)).
    """
    points = np.asarray(points, dtype=float)
    masses = np.asarray(masses, dtype=float)
    n = grid.size
    out = np.zeros(points.shape[:-1] + (n,))
    clipped = np.clip(points, grid[0], grid[-1])
    j = np.clip(np.searchsorted(grid, clipped, side="right"), 1, n - 1)
    left = grid[j - 1]
    right = grid[j]
    theta = (clipped - left) / (right - left)
    flat_out = out.reshape(-1, n)
    flat_j = j.reshape(-1, points.shape[-1])
    flat_theta = theta.reshape(-1, points.shape[-1])
    flat_m = np.broadcast_to(masses, points.shape).reshape(-1, points.shape[-1])
    rows = np.repeat(np.arange(flat_out.shape[0]), points.shape[-1])
    np.add.at(flat_out, (rows, (flat_j - 1).ravel()), ((1 - flat_theta) * flat_m).ravel())
    np.add.at(flat_out, (rows, flat_j.ravel()), (flat_theta * flat_m).ravel())
    return out


def _gaussian_tent_masses(grid: np.ndarray, mean: np.ndarray, std: np.ndarray):
    """Exact integrals of the piecewise-linear hat functions against N(mean, std^2).

    mean/std have shape (..., 1)-broadcastable; returns weights of shape
    (..., len(grid)) plus the clamped tail mass (...,).  Mass below the
    first node goes to it untransformed (clamp), same above the last.
    """
    mean = np.asarray(mean, dtype=float)[..., None]
    std = np.asarray(std, dtype=float)[..., None]
    z = (grid - mean) / std
    Phi = special.ndtr(z)
    phi = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    # Per cell [x_k, x_{k+1}]: mass P_k and first moment M1_k of the landing law.
    P = Phi[..., 1:] - Phi[..., :-1]
    M1 = mean * P - std * (phi[..., 1:] - phi[..., :-1])
    h = np.diff(grid)
    w_left = (grid[1:] * P - M1) / h
    w_right = (M1 - grid[:-1] * P) / h
    out = np.zeros(mean.shape[:-1] + (grid.size,))
    out[..., :-1] += w_left
    out[..., 1:] += w_right
    lo_tail = Phi[..., 0]
    hi_tail = 1.0 - Phi[..., -1]
    out[..., 0] += lo_tail
    out[..., -1] += hi_tail
    return out, lo_tail + hi_tail


def discretize(kernel: KernelSpec, grids: Sequence[np.ndarray], constraints,
               quad_order: int = 41, method: str = "auto") -> DiscretizedKernel:
    """Tabulate landing weights for every (time, state node, control node).

    ``method``: "auto" uses closed-form hat-function masses for Gaussian
    noise (zero quadrature error) and noise quadrature otherwise;
    "quadrature" forces node spreading from the declared quadrature rule.
    DiscreteChain specs pass through (rows re-verified).
    """
    grids = [np.asarray(g, dtype=float) for g in grids]
    T = len(grids)
    if isinstance(kernel, DiscreteChain):
        weights, controls, clamped = [], [], []
        for t in range(T - 1):
            P = np.asarray(kernel.matrices[t], dtype=float)
            if P.shape[0] != grids[t].size or P.shape[2] != grids[t + 1].size:
                raise KernelError(f"chain matrix shape mismatch at t={t}")
            weights.append(P.copy())
            uvals = np.asarray(kernel.control_values[t], dtype=float)
            controls.append(np.tile(uvals, (grids[t].size, 1)))
            clamped.append(np.zeros(P.shape[:2]))
        dk = DiscretizedKernel(weights, controls, grids, clamped, spec=kernel)
        dk.check_rows(CHAIN_ROW_TOL)
        return dk

    if quad_order < 2:
        raise KernelError("quad_order must be >= 2")
    use_exact = method == "auto" and isinstance(kernel.noise, GaussianNoise)
    if method not in ("auto", "quadrature"):
        raise KernelError(f"unknown discretization method {method!r}")

    weights, controls, clamped = [], [], []
    for t in range(T - 1):
        x = grids[t]
        U = constraints[t].nodes(x)  # (n, M)
        mu, sc = kernel.landing_params(t, x[:, None], U)
        mu = np.broadcast_to(mu, U.shape)
        sc = np.broadcast_to(sc, U.shape)
        if use_exact:
            nz = kernel.noise
            mean = mu + sc * nz.mean
            std = sc * nz.std
            # Chunk over state nodes to bound temporary allocations.
            nn = grids[t + 1].size
            W = np.empty(U.shape + (nn,))
            clamp = np.empty(U.shape)
            chunk = max(1, int(4e6 // (U.shape[1] * nn)) or 1)
            for i0 in range(0, U.shape[0], chunk):
                sl = slice(i0, i0 + chunk)
                W[sl], clamp[sl] = _gaussian_tent_masses(grids[t + 1], mean[sl], std[sl])
        else:
            wq, omega = kernel.noise.quadrature(quad_order)
            if not (np.all(np.isfinite(wq)) and np.all(np.isfinite(omega))):
                raise KernelError("non-finite quadrature rule")
            landing = mu[..., None] + sc[..., None] * wq
            inside = (landing >= grids[t + 1][0]) & (landing <= grids[t + 1][-1])
            clamp = np.sum(np.where(inside, 0.0, omega), axis=-1)
            W = spread_mass(grids[t + 1], landing, omega)
        W = np.maximum(W, 0.0)
        W /= W.sum(axis=-1, keepdims=True)
        weights.append(W)
        controls.append(U)
        clamped.append(clamp)
    dk = DiscretizedKernel(weights, controls, grids, clamped, spec=kernel,
                           build_method="exact" if use_exact else "quadrature",
                           quad_order=quad_order)
    dk.check_rows()
    return dk


def policy_matrix(dk: DiscretizedKernel, t: int, controls: np.ndarray) -> np.ndarray:
    """One-step transition matrix under the per-node control values at time t."""
    controls = np.asarray(controls, dtype=float)
    n = dk.grids[t].size
    if controls.shape != (n,):
        raise InfeasibleControlError(f"policy at t={t} must give one control per node")
    return dk.rows(t, controls)


def expectation(dk: DiscretizedKernel, t: int, i: int, u: float, g) -> float:
    """E[g(x_{t+1}) | x_t = node i, control u] under discrete landing weights."""
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("g must be finite on the next grid")
    return float(dk.row(t, i, u) @ g)


# ---------------------------------------------------------------------------
# Continuity diagnostics (additive-noise kernels only)
# ---------------------------------------------------------------------------

def _one_step_density_params(kernel: AdditiveNoise, t, x, u):
    mu = float(np.asarray(kernel.drift(t, x, u), dtype=float))
    sc = float(np.asarray(kernel.scale(t, x, u), dtype=float))
    if sc < kernel.sigma_floor or sc <= 0:
        raise KernelError("scale fell below sigma_floor")
    return mu, sc


def tv_distance(kernel: AdditiveNoise, t: int, x: float, u1: float, u2: float,
                panels: int = 4096) -> float:
    """Numeric total variation distance between the laws of x' at u1 and u2.

    Integrates |rho_1 - rho_2| over a truncated support carrying at least
    1 - 1e-8 of both masses, with composite trapezoid panels.
    """
    if isinstance(kernel, DiscreteChain):
        raise KernelError("tv_distance requires an additive-noise kernel")
    mu1, s1 = _one_step_density_params(kernel, t, x, u1)
    mu2, s2 = _one_step_density_params(kernel, t, x, u2)
    r = kernel.noise.support_radius(TV_TAIL_MASS)
    lo = min(mu1 - s1 * r, mu2 - s2 * r)
    hi = max(mu1 + s1 * r, mu2 + s2 * r)
    z = np.linspace(lo, hi, panels + 1)
    d1 = kernel.noise.pdf((z - mu1) / s1) / s1
    d2 = kernel.noise.pdf((z - mu2) / s2) / s2
    val = 0.5 * np.trapezoid(np.abs(d1 - d2), z)
    tv = float(2.0 * val)  # L1 convention: integral of |rho1 - rho2|, range [0, 2]
    return min(max(tv, 0.0), 2.0)


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function: value levels[k] on [breaks[k-1], breaks[k])."""

    breaks: np.ndarray   # strictly increasing, length L-1
    levels: np.ndarray   # length L

    def __post_init__(self):
        object.__setattr__(self, "breaks", np.asarray(self.breaks, dtype=float))
        object.__setattr__(self, "levels", np.asarray(self.levels, dtype=float))
        if self.levels.size != self.breaks.size + 1:
            raise ValueError("need one more level than breakpoints")
        if self.breaks.size and np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def bound(self) -> float:
        return float(np.max(np.abs(self.levels)))

    def __call__(self, z):
        idx = np.searchsorted(self.breaks, np.asarray(z, dtype=float), side="right")
        return self.levels[idx]


@dataclass(frozen=True)
class PointIndicator:
    """Indicator of a single point; nonzero expectation only under a point mass."""

    point: float = 0.0

    @property
    def bound(self) -> float:
        return 1.0

    def __call__(self, z):
        return (np.asarray(z, dtype=float) == self.point).astype(float)


def exact_expectation(kernel: AdditiveNoise, t: int, x: float, u: float, V) -> float:
    """E[V(x')] against the true (not discretized) one-step law.

    StepFunction integrands use the noise CDF when available;
    other bounded integrands fall back to dense quadrature.  A zero scale
    (degenerate kernel) is admitted here, as a point mass at the drift;
    this bypass exists only for the continuity probe.
    """
    mu = float(np.asarray(kernel.drift(t, x, u), dtype=float))
    sc = float(np.asarray(kernel.scale(t, x, u), dtype=float))
    if sc == 0.0:
        return float(np.asarray(V(mu), dtype=float))
    if sc < 0:
        raise KernelError("negative scale")
    if isinstance(V, PointIndicator):
        return 0.0  # point sets are null under a density
    if isinstance(V, StepFunction):
        w_breaks = (V.breaks - mu) / sc
        cdf = np.concatenate(([0.0], kernel.noise.cdf(w_breaks), [1.0]))
        probs = np.diff(cdf)
        return float(V.levels @ probs)
    nodes, omega = kernel.noise.quadrature(2001)
    return float(np.asarray(V(mu + sc * nodes), dtype=float) @ omega)


@dataclass
class ProbeReport:
    """Outcome of a setwise-continuity probe along a control sequence u_k -> u."""

    gaps: np.ndarray          # (len(u_seq), len(V_family)) |E_{u_k}[V] - E_u[V]|
    tv_bounds: np.ndarray     # (len(u_seq),) M * TV(u_k, u); NaN when sigma = 0
    bound_violated: bool
    converged: bool
    limit_values: np.ndarray  # E_u[V] per member of the family


def setwise_continuity_probe(kernel: AdditiveNoise, t: int, x: float, u: float,
                             u_seq: Sequence[float], V_family, M: float,
                             samples: int = 4096,
                             seed: int = 0) -> ProbeReport:
    """Check |E_{u_k}[V] - E_u[V]| <= M * TV(u_k, u) and gap decay along u_k -> u.

    Members of V_family must satisfy |V| <= M (spot-checked by sampling).
    Degenerate (zero-scale) controls are admitted: TV bounds are skipped
    there and only the gap decay is judged.
    """
    rng = np.random.default_rng(seed)
    probe_pts = rng.uniform(-1e3, 1e3, size=samples)
    for V in V_family:
        vals = np.asarray(V(probe_pts), dtype=float)
        if np.any(np.abs(vals) > M + 1e-12):
            raise ValueError("V family member exceeds the stated bound M")

    u_seq = np.asarray(u_seq, dtype=float)
    limit = np.array([exact_expectation(kernel, t, x, u, V) for V in V_family])
    gaps = np.empty((u_seq.size, len(V_family)))
    tvb = np.full(u_seq.size, np.nan)
    for k, uk in enumerate(u_seq):
        gaps[k] = [abs(exact_expectation(kernel, t, x, uk, V) - limit[j])
                   for j, V in enumerate(V_family)]
        sc_k = float(np.asarray(kernel.scale(t, x, uk), dtype=float))
        sc_0 = float(np.asarray(kernel.scale(t, x, u), dtype=float))
        if min(sc_k, sc_0) > 0.0 and min(sc_k, sc_0) >= kernel.sigma_floor:
            tvb[k] = M * tv_distance(kernel, t, x, uk, u)

    with_bound = ~np.isnan(tvb)
    violated = bool(np.any(gaps[with_bound].max(axis=1, initial=0.0)
                           > tvb[with_bound] + 1e-6)) if with_bound.any() else False

    # Shrinkage heuristic: as |u_k - u| halves, the worst gap must not grow
    # by more than 10%, and the final gap must approach 0.
    dist = np.abs(u_seq - u)
    worst = gaps.max(axis=1)
    order = np.argsort(dist)[::-1]  # far to near
    converged = True
    for a, b in zip(order[:-1], order[1:]):
        if dist[a] > 0 and dist[b] <= 0.5 * dist[a] + 1e-15:
            if worst[b] > 1.1 * worst[a] + 1e-12:
                converged = False
    if worst[order[-1]] > max(0.05 * worst[order[0]], 1e-9):
        converged = False
    return ProbeReport(gaps=gaps, tv_bounds=tvb, bound_violated=violated,
                       converged=converged, limit_values=limit)


# ---------------------------------------------------------------------------
# Binary cache
# ---------------------------------------------------------------------------
#
# Layout (little-endian):
#   magic b"MKEQDK01"
#   uint32 T
#   per t in 0..T-2:
#     uint32 n_t, uint32 M_u, uint32 n_next
#     float64[n_t]                 state grid at t
#     float64[n_t * M_u]           control nodes, row-major
#     float64[n_t * M_u * n_next]  weights, row-major
#     float64[n_t * M_u]           clamped mass, row-major
#   float64[n_T]                   terminal state grid

_MAGIC = b"MKEQDK01"


def save_kernel_cache(dk: DiscretizedKernel, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", dk.horizon))
        for t in range(dk.horizon - 1):
            W = np.ascontiguousarray(dk.weights[t], dtype="<f8")
            U = np.ascontiguousarray(dk.controls[t], dtype="<f8")
            C = np.ascontiguousarray(dk.clamped[t], dtype="<f8")
            n, M, nn = W.shape
            fh.write(struct.pack("<III", n, M, nn))
            fh.write(np.ascontiguousarray(dk.grids[t], dtype="<f8").tobytes())
            fh.write(U.tobytes())
            fh.write(W.tobytes())
            fh.write(C.tobytes())
        fh.write(np.ascontiguousarray(dk.grids[-1], dtype="<f8").tobytes())


def load_kernel_cache(path, spec: Optional[KernelSpec] = None,
                      build_method: str = "blend",
                      quad_order: int = 41) -> DiscretizedKernel:
    """Load a cached kernel; pass the original spec to restore exact rows."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise KernelError("not a kernel cache file")
        (T,) = struct.unpack("<I", fh.read(4))
        weights, controls, grids, clamped = [], [], [], []
        nn = None
        for _ in range(T - 1):
            n, M, nn = struct.unpack("<III", fh.read(12))
            grids.append(np.frombuffer(fh.read(8 * n), dtype="<f8").copy())
            controls.append(np.frombuffer(fh.read(8 * n * M), dtype="<f8").reshape(n, M).copy())
            weights.append(np.frombuffer(fh.read(8 * n * M * nn), dtype="<f8")
                           .reshape(n, M, nn).copy())
            clamped.append(np.frombuffer(fh.read(8 * n * M), dtype="<f8").reshape(n, M).copy())
        grids.append(np.frombuffer(fh.read(8 * nn), dtype="<f8").copy())
    dk = DiscretizedKernel(weights, controls, grids, clamped, spec=spec,
                           build_method=build_method, quad_order=quad_order)
    dk.check_rows()
    return dk
