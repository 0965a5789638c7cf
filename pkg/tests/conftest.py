import numpy as np
import pytest

from markeq import (LQParams, build_model, discretize, lq_model, solve)

# One line per acceptance criterion, echoed after the test summary so the
# verdicts survive pytest's output capture (see test_acceptance.py).
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def lq_small():
    """Small LQ instance: model, discretized kernel, solved equilibrium."""
    model = lq_model(LQParams(T=3), n_x=61, n_u=41)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    return model, dk, solution


@pytest.fixture(scope="session")
def chain_small():
    """Deterministic 2-state, 2-control chain (T=3) with known tables."""
    P = [[[0.7, 0.3], [0.2, 0.8]],
         [[0.5, 0.5], [0.9, 0.1]]]
    config = {
        "family": "discrete_chain",
        "kernel": {"state_grids": [[0.0, 1.0]] * 3,
                   "matrices": [P, P],
                   "control_values": [[-1.0, 1.0], [-1.0, 1.0]]},
        "costs": {"running": [[[0.4, 0.1], [0.3, 0.2]],
                              [[0.6, 0.5], [0.1, 0.9]]],
                  "terminal": [1.0, 2.0],
                  "terminal_stat": [0.0, 1.0],
                  "mixer": "square"},
    }
    model = build_model(config)
    dk = discretize(model.kernel, model.grids, model.constraints)
    return model, dk, config


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260826)
