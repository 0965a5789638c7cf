"""Independent reference computations used by the tests.

Everything here is written with plain loops and explicit path
enumeration, deliberately avoiding the library's vectorized code paths,
so agreement is meaningful.
"""

import numpy as np

from markeq import Policy


def chain_config(rng, T, n_states, n_controls, mixer="zero"):
    """Random discrete-chain config document with nonnegative cost tables."""
    grids = []
    for _ in range(T):
        steps = rng.uniform(0.2, 1.0, n_states)
        grids.append((np.cumsum(steps) - 2.0).tolist())
    matrices, control_values = [], []
    for _ in range(T - 1):
        P = rng.uniform(0.05, 1.0, (n_states, n_controls, n_states))
        P /= P.sum(axis=-1, keepdims=True)
        matrices.append(P.tolist())
        control_values.append(np.sort(rng.uniform(-1.0, 1.0, n_controls)).tolist())
    costs = {
        "running": [rng.uniform(0.0, 1.0, (n_states, n_controls)).tolist()
                    for _ in range(T - 1)],
        "terminal": rng.uniform(0.0, 1.0, n_states).tolist(),
        "terminal_stat": rng.uniform(0.0, 1.0, n_states).tolist(),
        "mixer": mixer,
    }
    return {"family": "discrete_chain",
            "kernel": {"state_grids": grids, "matrices": matrices,
                       "control_values": control_values},
            "costs": costs}


def path_objective(model, dk, t, i, j0, tail_jidx):
    """J_t(x_i; (u_j0, tail)) by explicit enumeration of all state paths.

    The (s, y) cost arguments stay frozen at (t, x_i); ``tail_jidx[k][m]``
    gives the tail's control-node index at (time k, state node m).
    """
    T = model.T
    y = float(model.grids[t][i])
    total = 0.0
    hmean = 0.0

    def rec(k, m, prob, acc):
        nonlocal total, hmean
        if k == T - 1:
            F = float(model.costs.terminal(t, y, float(model.grids[-1][m])))
            H = float(model.costs.terminal_stat(float(model.grids[-1][m])))
            total += prob * (acc + F)
            hmean += prob * H
            return
        j = j0 if k == t else int(tail_jidx[k][m])
        u = float(dk.controls[k][m, j])
        c = float(model.costs.running(k, t, y, float(model.grids[k][m]), u))
        row = dk.weights[k][m, j]
        for m2 in range(row.size):
            if row[m2] > 0.0:
                rec(k + 1, m2, prob * row[m2], acc + c)

    rec(t, i, 1.0, 0.0)
    return total + float(model.costs.mixer(t, y, hmean))


def brute_force_equilibrium(model, dk):
    """Exhaustive backward best response on a discrete chain.

    Scores every control node at every (t, node) against the
    already-solved tail by path enumeration; ties break toward the
    smaller control value.  Returns (Policy, per-time control-node
    index arrays).
    """
    T = model.T
    jidx = [None] * (T - 1)
    controls = [None] * (T - 1)
    for t in range(T - 2, -1, -1):
        n = model.grids[t].size
        jt = np.zeros(n, dtype=int)
        ut = np.zeros(n)
        for i in range(n):
            best_j, best_v = 0, np.inf
            for j in range(dk.controls[t].shape[1]):
                v = path_objective(model, dk, t, i, j, jidx)
                if v < best_v:
                    best_j, best_v = j, v
            jt[i] = best_j
            ut[i] = dk.controls[t][i, best_j]
        jidx[t] = jt
        controls[t] = ut
    return Policy(controls=controls), jidx
