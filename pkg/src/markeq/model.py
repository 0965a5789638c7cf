"""Problem data: horizon, grids, control constraints, kernel, and costs.

Time indexing is 0-based throughout the package: states live on grids at
times 0..T-1 and controls are chosen at times 0..T-2.  The objective at
time t from state y is

    J_t(y) = E[ sum_k C_k(t, y, x_k, u_k) + F(t, y, x_T) ]
             + G(t, y, E[H(x_T)]),

where the first two (s, y) arguments of the running and terminal costs
are frozen at the evaluation point -- the source of time inconsistency,
together with the nonlinear mixer G.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, ModelError
from .kernels import AdditiveNoise, DiscreteChain, KernelSpec


@dataclass(frozen=True)
class ControlConstraint:
    """Feasible control interval [lo(x), hi(x)] discretized to n_nodes values."""

    lo: Callable
    hi: Callable
    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ModelError("control grid needs at least 2 nodes")

    @classmethod
    def interval(cls, lo: float, hi: float, n_nodes: int) -> "ControlConstraint":
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
            raise ModelError(f"empty or unbounded control interval [{lo}, {hi}]")
        return cls(lo=lambda x: np.full_like(np.asarray(x, dtype=float), lo),
                   hi=lambda x: np.full_like(np.asarray(x, dtype=float), hi),
                   n_nodes=n_nodes)

    def bounds(self, x):
        lo = np.asarray(self.lo(np.asarray(x, dtype=float)), dtype=float)
        hi = np.asarray(self.hi(np.asarray(x, dtype=float)), dtype=float)
        if np.any(lo > hi):
            raise ModelError("empty control interval: lo > hi")
        return lo, hi

    def nodes(self, x) -> np.ndarray:
        """Control node values per state: shape (len(x), n_nodes)."""
        lo, hi = self.bounds(x)
        frac = np.linspace(0.0, 1.0, self.n_nodes)
        return lo[..., None] + (hi - lo)[..., None] * frac


@dataclass(frozen=True)
class Costs:
    """The four cost components.

    running(t, s, y, x, u) -> C_t at (s, y) evaluated at state x, control u
    terminal(s, y, x_T)    -> F
    terminal_stat(x_T)     -> H
    mixer(s, y, h)         -> G
    All callables must broadcast over numpy arrays.
    """

    running: Callable
    terminal: Callable
    terminal_stat: Callable
    mixer: Callable
    assume_nonneg: bool = True
    mixer_nondecreasing: Optional[bool] = None


@dataclass
class Policy:
    """Nonrandomized Markov policy: one control value per state node per time.

    Entries may be None for times before the policy's starting epoch.
    """

    controls: List[Optional[np.ndarray]]

    def start_time(self) -> int:
        for t, c in enumerate(self.controls):
            if c is not None:
                return t
        raise ModelError("empty policy")

    def check_feasible(self, model: "Model", t_from: int = 0):
        for t, c in enumerate(self.controls):
            if c is None:
                if t >= t_from and t >= self.start_time():
                    raise ModelError(f"policy missing controls at t={t}")
                continue
            lo, hi = model.constraints[t].bounds(model.grids[t])
            if c.shape != model.grids[t].shape:
                raise ModelError(f"policy shape mismatch at t={t}")
            if np.any(c < lo - 1e-9) or np.any(c > hi + 1e-9):
                raise ModelError(f"infeasible policy control at t={t}")


@dataclass
class Model:
    """Full problem specification; immutable after construction."""

    T: int
    grids: List[np.ndarray]
    constraints: List[ControlConstraint]
    kernel: KernelSpec
    costs: Costs

    def __post_init__(self):
        if self.T < 2:
            raise ModelError("horizon must be >= 2")
        if len(self.grids) != self.T or len(self.constraints) != self.T - 1:
            raise ModelError("grids/constraints length must match horizon")
        grids = []
        for t, g in enumerate(self.grids):
            g = np.asarray(g, dtype=float)
            if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
                raise ModelError(f"state grid at t={t} must be strictly increasing, >= 2 nodes")
            grids.append(g)
        self.grids = grids
        for t, c in enumerate(self.constraints):
            c.bounds(self.grids[t])  # raises on empty intervals

    def control_grid(self, t: int) -> np.ndarray:
        return self.constraints[t].nodes(self.grids[t])

    def clamp_diagnostic(self, dk, interior_frac: float = 0.25,
                         mid_frac: float = 0.25) -> float:
        """Worst clamped kernel mass over grid-interior states and mid-range controls."""
        worst = 0.0
        for t in range(self.T - 1):
            n, M = dk.clamped[t].shape
            i0, i1 = int(n * interior_frac), max(int(n * (1 - interior_frac)), int(n * interior_frac) + 1)
            j0, j1 = int(M * mid_frac), max(int(M * (1 - mid_frac)), int(M * mid_frac) + 1)
            worst = max(worst, float(dk.clamped[t][i0:i1, j0:j1].max()))
        return worst


@dataclass
class AssumptionReport:
    """Sampled verdicts for the sufficient-condition clauses; report only."""

    nonnegativity: str           # pass / fail / unknown
    mixer_monotone: str
    sigma_floor: str
    compact_controls: str
    notes: List[str] = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return all(v == "pass" for v in
                   (self.nonnegativity, self.mixer_monotone,
                    self.sigma_floor, self.compact_controls))


def validate_assumptions(model: Model, samples: int = 10_000,
                         seed: int = 0) -> AssumptionReport:
    """Sampled check of nonnegative costs, monotone mixer, sigma floor, compact controls.

    Sampling can refute a clause but never prove it; un-refuted clauses
    report "pass" (or "unknown" when not applicable).
    """
    rng = np.random.default_rng(seed)
    notes: List[str] = []
    T = model.T

    ts = rng.integers(0, T - 1, size=samples)
    ss = (rng.random(samples) * (ts + 1)).astype(int)
    def draw_states(times):
        lo = np.array([model.grids[t][0] for t in times])
        hi = np.array([model.grids[t][-1] for t in times])
        return lo + rng.random(times.size) * (hi - lo)

    ys = draw_states(ss)
    xs = draw_states(ts)
    ulo = np.array([model.constraints[t].bounds(x)[0] for t, x in zip(ts, xs)]).ravel()
    uhi = np.array([model.constraints[t].bounds(x)[1] for t, x in zip(ts, xs)]).ravel()
    us = ulo + rng.random(samples) * (uhi - ulo)
    xT = draw_states(np.full(samples, T - 1))
    hprobe = np.asarray(model.costs.terminal_stat(xT), dtype=float)
    h_lo, h_hi = float(hprobe.min()), float(hprobe.max())
    if h_hi <= h_lo:
        h_hi = h_lo + 1.0
    hs = h_lo + rng.random(samples) * (h_hi - h_lo)

    cvals = np.asarray(model.costs.running(ts, ss, ys, xs, us), dtype=float)
    fvals = np.asarray(model.costs.terminal(ss, ys, xT), dtype=float)
    gvals = np.asarray(model.costs.mixer(ss, ys, hs), dtype=float)
    if not np.all(np.isfinite(cvals)) or not np.all(np.isfinite(fvals)) \
            or not np.all(np.isfinite(gvals)) or not np.all(np.isfinite(hprobe)):
        raise ModelError("cost components returned non-finite values")

    neg = (cvals.min() < 0) or (fvals.min() < 0) or (gvals.min() < 0) or (hprobe.min() < 0)
    if model.costs.assume_nonneg:
        nonnegativity = "fail" if neg else "pass"
    else:
        nonnegativity = "fail" if neg else "unknown"
    if neg:
        notes.append("nonnegativity not satisfied; solver proceeds via "
                     "direct inf-compactness check")

    dh = 1e-4 * max(1.0, h_hi - h_lo)
    g_up = np.asarray(model.costs.mixer(ss, ys, hs + dh), dtype=float)
    mixer_monotone = "pass" if np.all(g_up >= gvals - 1e-12) else "fail"
    if mixer_monotone == "fail":
        notes.append("mixer G is not nondecreasing in h on sampled range")

    if isinstance(model.kernel, AdditiveNoise):
        sc = np.asarray(model.kernel.scale(ts, xs, us), dtype=float)
        sc = np.broadcast_to(sc, xs.shape)
        sigma_floor = "pass" if np.all(sc >= model.kernel.sigma_floor) else "fail"
    else:
        sigma_floor = "unknown"

    compact = np.all(np.isfinite(ulo)) and np.all(np.isfinite(uhi)) and np.all(ulo <= uhi)
    compact_controls = "pass" if compact else "fail"

    return AssumptionReport(nonnegativity=nonnegativity,
                            mixer_monotone=mixer_monotone,
                            sigma_floor=sigma_floor,
                            compact_controls=compact_controls,
                            notes=notes)


# ---------------------------------------------------------------------------
# Config-document construction
# ---------------------------------------------------------------------------

_FAMILIES = ("lq", "nonlinear_lq", "mean_variance", "mean_variance_chain",
             "exp_utility", "discrete_chain", "tabulated")


def config_hash(config: dict) -> str:
    """Hash of the config document, stable under key reordering."""
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def build_model(config: dict) -> Model:
    """Build a validated Model from a structured config document.

    Recognized top-level keys: family, params, horizon, state_grid,
    control, kernel, costs.  Family-specific builders consume params and
    the grid/control windows; see the README for the schema.
    """
    if not isinstance(config, dict):
        raise ConfigError("config must be a mapping")
    family = config.get("family")
    if family not in _FAMILIES:
        raise ConfigError(f"unknown or missing family {family!r}; "
                          f"expected one of {_FAMILIES}")
    horizon = config.get("horizon")
    if horizon is not None and (not isinstance(horizon, int) or horizon < 2):
        raise ConfigError("horizon must be >= 2")

    from . import families  # deferred: families builds Model instances

    params = dict(config.get("params", {}))
    if horizon is not None:
        params.setdefault("T", horizon)
    try:
        if family == "lq":
            return families.lq_model(families.LQParams(**_pick(params, "a", "b", "sigma", "T")),
                                     **_windows(config))
        if family == "nonlinear_lq":
            return families.nonlinear_lq_variant(
                families.LQParams(**_pick(params, "a", "b", "sigma", "T")), **_windows(config))
        if family == "mean_variance":
            return families.mv_model(_mv_params(families, params), **_windows(config))
        if family == "mean_variance_chain":
            return families.mv_chain_model(_mv_params(families, params), **_windows(config))
        if family == "exp_utility":
            return families.exp_utility_model(
                families.ExpUtilityParams(**_pick(params, "gamma", "beta", "R", "mu",
                                                  "sigma", "u_lo", "u_hi", "T")),
                **_windows(config))
        if family == "discrete_chain":
            return _chain_from_config(config)
        return _tabulated_from_config(config)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad parameters for family {family!r}: {exc}") from exc


def _pick(params: dict, *names) -> dict:
    return {k: params[k] for k in names if k in params}


def _mv_params(families, params):
    return families.MeanVarianceParams(
        **_pick(params, "R", "mu", "sigma2", "gamma", "T"))


def _windows(config: dict) -> dict:
    out = {}
    sg = config.get("state_grid")
    if sg:
        out["x_lo"] = float(sg["lo"])
        out["x_hi"] = float(sg["hi"])
        out["n_x"] = int(sg["nodes"])
    ctl = config.get("control")
    if ctl:
        out["u_lo"] = float(ctl["lo"])
        out["u_hi"] = float(ctl["hi"])
        out["n_u"] = int(ctl["nodes"])
    return out


def _chain_from_config(config: dict) -> Model:
    kernel_doc = config.get("kernel")
    if not kernel_doc or "matrices" not in kernel_doc:
        raise ConfigError("discrete_chain config needs kernel.matrices")
    grids = [np.asarray(g, dtype=float) for g in kernel_doc["state_grids"]]
    matrices = [np.asarray(P, dtype=float) for P in kernel_doc["matrices"]]
    control_values = [np.asarray(u, dtype=float) for u in kernel_doc["control_values"]]
    chain = DiscreteChain(matrices=matrices, control_values=control_values)
    constraints = [ControlConstraint.interval(float(u[0]), float(u[-1]), u.size)
                   for u in control_values]
    costs = _tabulated_costs(config.get("costs", {}), grids, control_values)
    return Model(T=len(grids), grids=grids, constraints=constraints,
                 kernel=chain, costs=costs)


def _tabulated_from_config(config: dict) -> Model:
    # Tabulated costs over a discrete chain; (s, y)-independent by construction.
    return _chain_from_config(config)


def _tabulated_costs(doc: dict, grids, control_values) -> Costs:
    """Costs interpolated from tables over (state node, control node).

    running tables: one (n_t, M_u) array per decision time; terminal /
    terminal_stat: arrays over the last grid.  mixer: name from
    {zero, square, neg_square}.  All tables are (s, y)-independent.
    """
    T = len(grids)
    running_tabs = [np.asarray(a, dtype=float) for a in
                    doc.get("running", [np.zeros((g.size, u.size))
                                        for g, u in zip(grids[:-1], control_values)])]
    term_tab = np.asarray(doc.get("terminal", np.zeros(grids[-1].size)), dtype=float)
    stat_tab = np.asarray(doc.get("terminal_stat", np.zeros(grids[-1].size)), dtype=float)
    mixer_name = doc.get("mixer", "zero")
    mixers = {"zero": (lambda s, y, h: np.zeros_like(np.asarray(h, dtype=float)), True),
              "square": (lambda s, y, h: np.square(np.asarray(h, dtype=float)), None),
              "neg_square": (lambda s, y, h: -np.square(np.asarray(h, dtype=float)), False)}
    if mixer_name not in mixers:
        raise ConfigError(f"unknown mixer {mixer_name!r}")
    mixer, mono = mixers[mixer_name]

    def running(t, s, y, x, u):
        t_arr = np.asarray(t)
        if t_arr.ndim == 0:
            tab = running_tabs[int(t_arr)]
            gi = _nearest(grids[int(t_arr)], x)
            uj = _nearest(control_values[int(t_arr)], u)
            return tab[gi, uj]
        x_b, u_b = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(u, dtype=float))
        t_b = np.broadcast_to(t_arr, x_b.shape)
        out = np.empty(x_b.shape)
        for ti in np.unique(t_b):
            m = t_b == ti
            out[m] = running_tabs[int(ti)][_nearest(grids[int(ti)], x_b[m]),
                                           _nearest(control_values[int(ti)], u_b[m])]
        return out

    def terminal(s, y, xT):
        vals = term_tab[_nearest(grids[-1], xT)]
        return np.broadcast_to(vals, np.broadcast(np.asarray(s), np.asarray(y),
                                                  np.asarray(xT)).shape).copy()

    def terminal_stat(xT):
        return stat_tab[_nearest(grids[-1], xT)]

    nonneg = (all(tab.min() >= 0 for tab in running_tabs)
              and term_tab.min() >= 0 and mixer_name != "neg_square")
    return Costs(running=running, terminal=terminal, terminal_stat=terminal_stat,
                 mixer=mixer, assume_nonneg=nonneg, mixer_nondecreasing=mono)


def _nearest(grid: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    j = np.clip(np.searchsorted(grid, x), 0, grid.size - 1)
    jm = np.clip(j - 1, 0, grid.size - 1)
    pick_lower = np.abs(x - grid[jm]) <= np.abs(grid[j] - x)
    return np.where(pick_lower, jm, j)
