# test_elliptic.py

import numpy as np
import pytest

from analysis import observed_order
from elliptic import pcg, solve_poisson_dirichlet, solve_poisson_neumann_meanzero
from errors import CompatibilityError, ContractError
from grid import GridSpec, ScalarField, dirichlet_matrix, laplacian_dirichlet0, laplacian_neumann


def test_pcg_solves_small_spd_system():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    m = a @ a.T + 6 * np.eye(6)
    b = rng.standard_normal(6)
    x, applications, residual = pcg(lambda y: m @ y, b, np.diag(m).copy(), 1e-12, 100)
    np.testing.assert_allclose(m @ x, b, atol=1e-10)
    assert residual <= 1e-12
    assert applications <= 100


def test_dirichlet_matches_dense_oracle():
    grid = GridSpec(nx=8, ny=8)
    rng = np.random.default_rng(1)
    rhs = ScalarField(grid, rng.standard_normal(grid.shape))
    phi = solve_poisson_dirichlet(rhs, tol=1e-12)
    dense = np.linalg.solve(dirichlet_matrix(grid).toarray(), rhs.values.ravel()).reshape(grid.shape)
    np.testing.assert_allclose(phi.values, dense, atol=1e-10)


def test_dirichlet_recovers_discrete_solution():
    grid = GridSpec(nx=20, ny=14, lx=2.0, ly=1.0)
    rng = np.random.default_rng(2)
    exact = ScalarField(grid, rng.standard_normal(grid.shape))
    rhs = laplacian_dirichlet0(exact)
    phi = solve_poisson_dirichlet(rhs, tol=1e-12)
    np.testing.assert_allclose(phi.values, exact.values, atol=1e-8)


def test_dirichlet_zero_rhs_and_warm_start():
    grid = GridSpec(nx=10, ny=10)
    assert not np.any(solve_poisson_dirichlet(ScalarField.zeros(grid)).values)
    rng = np.random.default_rng(3)
    rhs = ScalarField(grid, rng.standard_normal(grid.shape))
    phi = solve_poisson_dirichlet(rhs)
    again = solve_poisson_dirichlet(rhs, guess=phi)
    assert np.max(np.abs(laplacian_dirichlet0(again).values - rhs.values)) <= 1e-10 * max(1.0, np.max(np.abs(rhs.values)))


def test_manufactured_solution_is_second_order():
    errors, spacings = [], []
    for n in (16, 32, 64):
        grid = GridSpec(nx=n, ny=n)
        x, y = grid.cell_centers()
        exact = np.sin(np.pi * x) * np.sin(np.pi * y)
        phi = solve_poisson_dirichlet(ScalarField(grid, -2 * np.pi ** 2 * exact))
        errors.append(np.max(np.abs(phi.values - exact)))
        spacings.append(grid.hx)
    orders = observed_order(errors, spacings)
    assert np.all(np.abs(orders - 2.0) <= 0.1)


def test_neumann_recovers_mean_zero_solution():
    grid = GridSpec(nx=12, ny=16, lx=1.0, ly=1.5)
    rng = np.random.default_rng(4)
    exact = rng.standard_normal(grid.shape)
    exact -= exact.mean()
    rhs = laplacian_neumann(ScalarField(grid, exact))
    p = solve_poisson_neumann_meanzero(rhs, tol=1e-12)
    np.testing.assert_allclose(p.values, exact, atol=1e-8)
    assert abs(p.values.mean()) < 1e-12


def test_neumann_rejects_incompatible_rhs():
    grid = GridSpec(nx=8, ny=8)
    with pytest.raises(CompatibilityError):
        solve_poisson_neumann_meanzero(ScalarField.constant(grid, 1.0))


def test_nonpositive_tolerance_is_a_contract_error():
    grid = GridSpec(nx=8, ny=8)
    with pytest.raises(ContractError):
        solve_poisson_dirichlet(ScalarField.zeros(grid), tol=0.0)


def test_dirichlet_solution_obeys_maximum_principle():
    grid = GridSpec(nx=14, ny=10, lx=1.4, ly=1.0)
    rng = np.random.default_rng(5)
    phi = solve_poisson_dirichlet(ScalarField(grid, -rng.uniform(0.1, 1.0, grid.shape)), tol=1e-12)
    assert np.all(phi.values > 0.0)
    flipped = solve_poisson_dirichlet(ScalarField(grid, rng.uniform(0.1, 1.0, grid.shape)), tol=1e-12)
    assert np.all(flipped.values < 0.0)


def test_neumann_cosine_mode_is_an_exact_eigenpair():
    grid = GridSpec(nx=16, ny=8, lx=2.0, ly=1.0)
    x, _ = grid.cell_centers()
    mode = ScalarField(grid, np.cos(np.pi * x / grid.lx))
    eig = -(4.0 / grid.hx ** 2) * np.sin(np.pi * grid.hx / (2.0 * grid.lx)) ** 2
    np.testing.assert_allclose(laplacian_neumann(mode).values, eig * mode.values, atol=1e-11)
    p = solve_poisson_neumann_meanzero(mode.scale(eig), tol=1e-12)
    np.testing.assert_allclose(p.values, mode.values, atol=1e-9)
