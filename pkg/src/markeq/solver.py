"""Backward induction on the reduced equilibrium recursion.

At each decision time t, with the continuation policy for t+1..T-2
already fixed, the per-node objective is

    L(t, i, u) = C_t(t, x_i, x_i, u)
                 + E_u[ sum_k b_k(t, x_i, .) + f(t, x_i, .) ]
                 + G(t, x_i, E_u[h(.)])

where b_k, f, h are conditional expectations of the running cost at k,
the terminal cost, and the terminal statistic under the frozen tail.
They are evaluated through flow matrices (multi-step transition
matrices under the tail policy), so a change of evaluation point (s, y)
is a cheap re-contraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import InfeasibleControlError, SolverError
from .kernels import DiscreteChain, DiscretizedKernel, policy_matrix
from .model import Model, Policy

GOLDEN = 0.5 * (3.0 - np.sqrt(5.0))  # interior fraction of golden-section search


def golden_section(f, lo: float, hi: float, tol: float = 1e-9,
                   max_iter: int = 200):
    """Minimize f on [lo, hi]; returns (argmin, min).  Deterministic."""
    a, b = float(lo), float(hi)
    x1 = a + GOLDEN * (b - a)
    x2 = b - GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > tol and it < max_iter:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = a + GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = b - GOLDEN * (b - a)
            f2 = f(x2)
        it += 1
    x0, f0 = (x1, f1) if f1 <= f2 else (x2, f2)
    # Parabolic polish: near the minimum the objective differences sit at
    # the floating-point noise floor, so golden section alone wanders by
    # ~sqrt(eps/curvature).  A least-squares parabola over the whole
    # bracket averages that noise out and is exact for quadratic
    # objectives; its vertex is kept only if it does not raise the value.
    xs = np.linspace(float(lo), float(hi), 9)
    fs = np.array([f(x) for x in xs])
    coef = np.polyfit(xs - xs[4], fs, 2)
    c2, c1 = coef[0], coef[1]
    if c2 > 0.0:
        xv = min(max(xs[4] - 0.5 * c1 / c2, float(lo)), float(hi))
        fv = f(xv)
        # Golden's value can sit spuriously below the true minimum by the
        # evaluation noise floor; allow the vertex that much slack, and
        # always return the value actually evaluated at the returned point.
        slack = 64.0 * np.finfo(float).eps * (float(np.max(np.abs(fs))) + 1.0)
        if fv <= f0 + slack:
            return xv, fv
    return x0, f0


@dataclass
class FlowMatrices:
    """M[t+1 -> k] for k = t+1..T-1: law of x_k given x_{t+1}, under the tail."""

    t: int
    mats: List[np.ndarray]  # mats[0] = identity at time t+1

    def to_time(self, k: int) -> np.ndarray:
        return self.mats[k - (self.t + 1)]


@dataclass
class AuxiliaryBundle:
    """Grid tabulations of the auxiliary functions under a frozen tail.

    ``btot[i, n]`` holds sum_k b_k(s, y_i, x_n) + f(s, y_i, x_n) on the
    time-(t+1) grid, for evaluation states y_i (defaults: the time-s grid
    with s = t).  ``h_next[n]`` is h on the time-(t+1) grid.
    """

    t: int
    eval_time: int
    eval_states: np.ndarray
    flows: FlowMatrices
    h_next: np.ndarray
    btot: np.ndarray
    model: Model
    tail_policy: Optional[Policy]

    def bk_eval(self, k: int, y: float, n: int) -> float:
        """b_k(eval_time, y, x_n) for a single evaluation state y and next-node n."""
        Mk = self.flows.to_time(k)
        xk = self.model.grids[k]
        uk = self.tail_policy.controls[k]
        ck = np.asarray(self.model.costs.running(k, self.eval_time, y, xk, uk), dtype=float)
        return float(Mk[n] @ ck)

    def f_eval(self, y: float, n: int) -> float:
        MT = self.flows.to_time(self.model.T - 1)
        xT = self.model.grids[-1]
        fv = np.asarray(self.model.costs.terminal(self.eval_time, y, xT), dtype=float)
        return float(MT[n] @ fv)


def build_aux(model: Model, dk: DiscretizedKernel, tail_policy: Optional[Policy],
              t: int, eval_time: Optional[int] = None,
              eval_states: Optional[np.ndarray] = None,
              flows: Optional[FlowMatrices] = None) -> AuxiliaryBundle:
    """Tabulate the auxiliary functions for decision time t.

    ``tail_policy`` must be feasible at times t+1..T-2 (None allowed when
    t = T-2, where the bundle degenerates to terminal costs).  Flow
    matrices are built by successive left multiplication of the
    policy-conditioned one-step matrices unless supplied.
    """
    T = model.T
    if not 0 <= t <= T - 2:
        raise SolverError(f"decision time {t} out of range")
    s = t if eval_time is None else eval_time
    ys = model.grids[s] if eval_states is None else np.asarray(eval_states, dtype=float)

    if flows is None:
        mats = [np.eye(model.grids[t + 1].size)]
        for k in range(t + 1, T - 1):
            if tail_policy is None or tail_policy.controls[k] is None:
                raise SolverError(f"tail policy missing controls at time {k}")
            mats.append(mats[-1] @ policy_matrix(dk, k, tail_policy.controls[k]))
        flows = FlowMatrices(t=t, mats=mats)

    MT = flows.to_time(T - 1)
    xT = model.grids[-1]
    h_next = MT @ np.asarray(model.costs.terminal_stat(xT), dtype=float)

    fmat = np.asarray(model.costs.terminal(s, ys[:, None], xT[None, :]), dtype=float)
    btot = fmat @ MT.T
    for k in range(t + 1, T - 1):
        Mk = flows.to_time(k)
        xk = model.grids[k]
        uk = tail_policy.controls[k]
        cmat = np.asarray(model.costs.running(k, s, ys[:, None], xk[None, :],
                                              uk[None, :]), dtype=float)
        btot += cmat @ Mk.T
    if not np.all(np.isfinite(btot)) or not np.all(np.isfinite(h_next)):
        raise SolverError("auxiliary tabulation is non-finite")
    return AuxiliaryBundle(t=t, eval_time=s, eval_states=ys, flows=flows,
                           h_next=h_next, btot=btot, model=model,
                           tail_policy=tail_policy)


def objective_grid(model: Model, dk: DiscretizedKernel, aux: AuxiliaryBundle,
                   t: int) -> np.ndarray:
    """L on the full control grid: shape (n_t, M_u).

    Requires aux built with eval_states = the time-t grid (the Bellman case).
    """
    x = model.grids[t]
    W = dk.weights[t]
    U = dk.controls[t]
    c = np.asarray(model.costs.running(t, t, x[:, None], x[:, None], U), dtype=float)
    e_b = np.einsum("ijm,im->ij", W, aux.btot)
    e_h = W @ aux.h_next
    g = np.asarray(model.costs.mixer(t, x[:, None], e_h), dtype=float)
    return c + e_b + g


def objective_L(model: Model, dk: DiscretizedKernel, aux: AuxiliaryBundle,
                t: int, i: int, u: float) -> float:
    """L(t, x_i, x_i, u) for one node and a (possibly off-grid) control value."""
    x = model.grids[t][i]
    row = dk.row(t, i, u)
    y_idx = i if aux.eval_states.size == model.grids[t].size else 0
    c = float(np.asarray(model.costs.running(t, aux.eval_time, x, x, u), dtype=float))
    e_b = float(row @ aux.btot[y_idx])
    e_h = float(row @ aux.h_next)
    g = float(np.asarray(model.costs.mixer(aux.eval_time, x, e_h), dtype=float))
    val = c + e_b + g
    if not np.isfinite(val):
        raise SolverError(f"non-finite objective at t={t}, node {i}, u={u}")
    return val


@dataclass
class RefinementPolicy:
    """Golden-section refinement of the grid argmin inside its bracket.

    Applied only when the three-point pattern L[j-1] > L[j] < L[j+1]
    suggests local unimodality; otherwise the grid minimizer stands.
    """

    enabled: bool = True
    u_tol: float = 1e-9


@dataclass
class StepDiagnostics:
    boundary_nodes: List[int] = field(default_factory=list)
    refined_nodes: List[int] = field(default_factory=list)


def bellman_step(model: Model, dk: DiscretizedKernel, aux: AuxiliaryBundle,
                 t: int, refine: Optional[RefinementPolicy] = None):
    """Minimize L per node over the control grid (tie-break: smallest control).

    Returns (controls, values, StepDiagnostics).
    """
    L = objective_grid(model, dk, aux, t)
    if np.any(np.all(~np.isfinite(L), axis=1)):
        raise SolverError(f"objective non-finite at every control for some node, t={t}")
    L = np.where(np.isfinite(L), L, np.inf)
    jstar = np.argmin(L, axis=1)  # first minimum = smallest control value
    n, M = L.shape
    controls = dk.controls[t][np.arange(n), jstar].astype(float)
    values = L[np.arange(n), jstar].astype(float)
    diag = StepDiagnostics()
    if refine is None:
        refine = RefinementPolicy(enabled=not isinstance(model.kernel, DiscreteChain))
    for i in range(n):
        j = int(jstar[i])
        if j == 0 or j == M - 1:
            diag.boundary_nodes.append(i)
            continue
        if not refine.enabled:
            continue
        if not (L[i, j - 1] > L[i, j] < L[i, j + 1]):
            continue
        u_lo, u_hi = dk.controls[t][i, j - 1], dk.controls[t][i, j + 1]
        u_ref, v_ref = golden_section(
            lambda u: objective_L(model, dk, aux, t, i, u), u_lo, u_hi,
            tol=refine.u_tol)
        if v_ref <= values[i]:
            controls[i] = u_ref
            values[i] = v_ref
            diag.refined_nodes.append(i)
    return controls, values, diag


@dataclass
class Diagnostics:
    boundary_hits: List[tuple] = field(default_factory=list)   # (t, node)
    refined: List[tuple] = field(default_factory=list)
    levelset_flags: dict = field(default_factory=dict)
    deviation_gap: Optional[float] = None
    clamped_mass: Optional[float] = None


@dataclass
class EquilibriumSolution:
    policy: Policy
    values: List[np.ndarray]      # V_t on the time-t grid, t = 0..T-2
    h_tabs: List[np.ndarray]      # h on the time-t grid, t = 0..T-1
    diagnostics: Diagnostics


@dataclass
class SolveOptions:
    refine: Optional[bool] = None     # None: refine unless DiscreteChain
    u_tol: float = 1e-9


def solve(model: Model, dk: DiscretizedKernel,
          options: Optional[SolveOptions] = None) -> EquilibriumSolution:
    """Equilibrium policy by backward induction, t = T-2 down to 0."""
    options = options or SolveOptions()
    refine_enabled = (not isinstance(model.kernel, DiscreteChain)
                      if options.refine is None else options.refine)
    refine = RefinementPolicy(enabled=refine_enabled, u_tol=options.u_tol)
    T = model.T
    policy = Policy(controls=[None] * (T - 1))
    values: List[Optional[np.ndarray]] = [None] * (T - 1)
    diag = Diagnostics()
    for t in range(T - 2, -1, -1):
        aux = build_aux(model, dk, policy if t < T - 2 else None, t)
        controls, vals, step_diag = bellman_step(model, dk, aux, t, refine)
        policy.controls[t] = controls
        values[t] = vals
        diag.boundary_hits.extend((t, i) for i in step_diag.boundary_nodes)
        diag.refined.extend((t, i) for i in step_diag.refined_nodes)
    h_tabs: List[Optional[np.ndarray]] = [None] * T
    h_tabs[T - 1] = np.asarray(model.costs.terminal_stat(model.grids[-1]), dtype=float)
    for t in range(T - 2, -1, -1):
        Q = policy_matrix(dk, t, policy.controls[t])
        h_tabs[t] = Q @ h_tabs[t + 1]
    if dk.clamped:
        diag.clamped_mass = model.clamp_diagnostic(dk)
    return EquilibriumSolution(policy=policy, values=values, h_tabs=h_tabs,
                               diagnostics=diag)


def value_identity_check(model: Model, dk: DiscretizedKernel,
                         solution: EquilibriumSolution, t: int) -> float:
    """Max-abs residual of the value identity at time t+1.

    V_{t+1}(x) must equal sum_k b_k(t+1, x, x) + f(t+1, x, x)
    + G(t+1, x, h(x)), with the auxiliaries rebuilt at evaluation points
    (s, y) = (t+1, x).
    """
    T = model.T
    if not 0 <= t <= T - 3:
        raise SolverError("value identity is defined for t <= T-3")
    xs = model.grids[t + 1]
    # Aux for decision time t tabulates b_k, f, h on the time-(t+1) grid;
    # rebuilding it at (s, y) = (t+1, x) makes the identity a diagonal read.
    aux = build_aux(model, dk, solution.policy, t, eval_time=t + 1, eval_states=xs)
    rhs = np.diag(aux.btot) \
        + np.asarray(model.costs.mixer(t + 1, xs, aux.h_next), dtype=float)
    # btot includes b_{t+1}(t+1, x, x_n) = C_{t+1} at the chosen control via the
    # identity flow matrix -- except the tail control at t+1 may be off-node
    # (refined), in which case the tabulated running cost already used it.
    lhs = solution.values[t + 1]
    return float(np.max(np.abs(lhs - rhs)))


@dataclass
class LevelSetReport:
    r: float
    probe_window: tuple
    intervals: List[tuple]        # (u_lo, u_hi) components of the sublevel set
    touches_boundary: bool
    min_value: float
    suspect_non_inf_compact: bool


def levelset_probe(model: Model, dk: DiscretizedKernel, aux: AuxiliaryBundle,
                   t: int, i: int, r: float, window: Optional[tuple] = None,
                   num: int = 2001) -> LevelSetReport:
    """Sublevel set {u : L(t, i, u) <= r} on a fine probe grid.

    ``window`` may extend past the modeled control interval; the kernel
    part of L then clamps to the nearest control node while costs are
    evaluated at the raw u, which is exactly what exposes objectives whose
    minimum escapes the modeled window.
    """
    x = model.grids[t][i]
    U = dk.controls[t][i]
    lo, hi = (float(U[0]), float(U[-1])) if window is None else (float(window[0]),
                                                                 float(window[1]))
    us = np.linspace(lo, hi, num)
    row_u = np.clip(us, U[0], U[-1])
    vals = np.empty(num)
    for q, (u_raw, u_row) in enumerate(zip(us, row_u)):
        row = dk.row(t, i, u_row)
        c = float(np.asarray(model.costs.running(t, aux.eval_time, x, x, u_raw),
                             dtype=float))
        e_h = float(row @ aux.h_next)
        vals[q] = c + float(row @ aux.btot[i]) \
            + float(np.asarray(model.costs.mixer(aux.eval_time, x, e_h), dtype=float))
    inside = vals <= r
    intervals: List[tuple] = []
    start = None
    for q in range(num):
        if inside[q] and start is None:
            start = q
        if start is not None and (not inside[q] or q == num - 1):
            end = q if inside[q] else q - 1
            intervals.append((float(us[start]), float(us[end])))
            start = None
    touches = bool(inside[0] or inside[-1])
    return LevelSetReport(r=r, probe_window=(lo, hi), intervals=intervals,
                          touches_boundary=touches, min_value=float(vals.min()),
                          suspect_non_inf_compact=touches)
