"""Shared fixtures and randomized instance generators."""

from __future__ import annotations

import numpy as np
import pytest

import pollctl as pc


@pytest.fixture
def symmetric_params() -> pc.SystemParameters:
    """Two symmetric queues, cyclic table, unit switchovers (load 1/2)."""
    return pc.SystemParameters((1.0, 1.0), (4.0, 4.0), (0, 1), (1.0, 1.0))


@pytest.fixture
def revisit_params() -> pc.SystemParameters:
    """Three queues on the 5-stage table with two revisits (load 3/4)."""
    return pc.SystemParameters(
        (2.0, 2.0, 2.0), (8.0, 8.0, 8.0), (0, 1, 2, 1, 2), (2.0,) * 5
    )


def random_instance(
    gen: np.random.Generator,
    max_queues: int = 6,
    max_repetitions: int = 2,
    min_ratio: float = 0.02,
) -> tuple[pc.SystemParameters, pc.ControlParams]:
    """A feasible system plus an admissible control, both randomized.

    Tables may revisit queues; every queue keeps a positive total ratio
    (``min_ratio`` floor) so the control stays admissible.
    """
    queues = int(gen.integers(2, max_queues + 1))
    table = [int(q) for q in gen.permutation(queues)]
    for q in gen.integers(0, queues, int(gen.integers(0, 4))):
        table.insert(int(gen.integers(0, len(table) + 1)), int(q))
    lam = gen.uniform(0.2, 1.2, queues)
    rho = float(gen.uniform(0.35, 0.9))
    shares = gen.dirichlet(np.ones(queues))
    mu = lam / (rho * shares)
    s = gen.uniform(0.1, 1.5, len(table))
    if len(table) > 1 and gen.random() < 0.25:
        s[int(gen.integers(0, len(table)))] = 0.0
    params = pc.SystemParameters(tuple(lam), tuple(mu), tuple(table), tuple(s))
    reps = int(gen.integers(1, max_repetitions + 1))
    ratios = gen.uniform(min_ratio, 1.0, len(table) * reps)
    return params, pc.ControlParams(reps, tuple(ratios))


def random_cyclic_params(
    gen: np.random.Generator, max_queues: int = 4
) -> pc.SystemParameters:
    """A feasible system whose table visits every queue exactly once."""
    queues = int(gen.integers(2, max_queues + 1))
    table = tuple(int(q) for q in gen.permutation(queues))
    lam = gen.uniform(0.2, 1.2, queues)
    rho = float(gen.uniform(0.35, 0.85))
    shares = gen.dirichlet(np.ones(queues))
    mu = lam / (rho * shares)
    s = gen.uniform(0.2, 1.5, queues)
    return pc.SystemParameters(tuple(lam), tuple(mu), table, tuple(s))


def random_pwl_cost(
    gen: np.random.Generator, queues: int, single_piece: bool
) -> pc.SeparableCost:
    """Separable threshold-linear cost, one or several pieces per queue."""
    if single_piece:
        return pc.linear_cost(gen.uniform(0.2, 3.0, queues))
    thresholds = []
    slopes = []
    for _ in range(queues):
        pieces = int(gen.integers(2, 4))
        thresholds.append([0.0] + sorted(gen.uniform(0.5, 6.0, pieces - 1)))
        slopes.append(np.cumsum(gen.uniform(0.2, 2.0, pieces)).tolist())
    return pc.piecewise_linear_cost(thresholds, slopes)
