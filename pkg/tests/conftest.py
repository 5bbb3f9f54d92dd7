"""Shared builders for the test suite."""

import numpy as np
import pytest

from parareg import operators, solver


def make_grid(d=1, rho=1.0, Nx=33, Lam=1.0, safety=0.9):
    return solver.Grid.for_problem(d, rho, Nx, Lam, safety=safety)


def solve_exact(sol, spec, grid, g=0.0):
    """Solve the problem whose data come from a closed-form solution."""
    problem = solver.problem_from_exact(sol, spec, grid, g=g)
    return solver.solve(problem), problem


def heat_setup(d=1, rho=1.0, Nx=33, amp=1.0, k=1):
    sol = solver.heat_mode(d, rho, k=k, amp=amp)
    spec = operators.linear_spec(np.eye(d))
    grid = make_grid(d, rho, Nx, Lam=1.0)
    u, problem = solve_exact(sol, spec, grid)
    return sol, u, problem


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
