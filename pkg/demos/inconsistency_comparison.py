"""Why the Bellman optimality principle fails, in one table.

The naive planner re-solves the precommitment problem at every step and
keeps only the first action.  On a time-inconsistent instance this
realized policy is not an equilibrium: some one-step deviation improves
the objective, and the deviation test locates it.  On a time-consistent
instance (no nonlinear mixer, costs independent of the evaluation point)
equilibrium, precommitment, and naive all collapse to the same policy.

Run:  python3 demos/inconsistency_comparison.py
"""

import numpy as np

from markeq import (LQParams, build_model, deviation_report, discretize,
                    lq_model, solve, solve_naive, solve_precommitment)


def compare(model, dk, label):
    solution = solve(model, dk)
    i0 = model.grids[0].size // 2 + model.grids[0].size // 6
    pre, _ = solve_precommitment(model, dk, 0, i0)
    naive = solve_naive(model, dk)
    print(f"\n=== {label} ===")
    for name, policy in (("equilibrium vs precommitment", pre),
                         ("equilibrium vs naive", naive)):
        worst = max(float(np.max(np.abs(policy.controls[t]
                                        - solution.policy.controls[t])))
                    for t in range(model.T - 1))
        print(f"  {name}: max control difference {worst:.3e}")
    report = deviation_report(model, dk, naive, tol=1e-9)
    if report.certified:
        print(f"  naive policy certifies as an equilibrium "
              f"(gap {report.worst_gap:.3e})")
    else:
        t, i, u = report.argmax
        print(f"  naive policy FAILS the deviation test: gap "
              f"{report.worst_gap:.3e} at (t={t}, node={i}), "
              f"better control u={u:.4f}")


def main():
    model = lq_model(LQParams(T=3, a=0.5), n_x=121, n_u=81)
    dk = discretize(model.kernel, model.grids, model.constraints)
    compare(model, dk, "anchored-terminal LQ (time-inconsistent)")

    # small chain with no mixer and evaluation-independent costs
    config = {
        "family": "discrete_chain",
        "kernel": {
            "state_grids": [[0.0, 1.0, 2.0]] * 3,
            "matrices": [[[[0.7, 0.2, 0.1], [0.2, 0.5, 0.3]],
                          [[0.4, 0.4, 0.2], [0.1, 0.3, 0.6]],
                          [[0.3, 0.3, 0.4], [0.5, 0.4, 0.1]]]] * 2,
            "control_values": [[-1.0, 1.0]] * 2,
        },
        "costs": {
            "running": [[[0.4, 0.1], [0.3, 0.2], [0.8, 0.5]]] * 2,
            "terminal": [1.0, 2.0, 0.5],
            "terminal_stat": [0.0, 0.0, 0.0],
            "mixer": "zero",
        },
    }
    cmodel = build_model(config)
    cdk = discretize(cmodel.kernel, cmodel.grids, cmodel.constraints)
    compare(cmodel, cdk, "plain additive-cost chain (time-consistent)")


if __name__ == "__main__":
    main()
