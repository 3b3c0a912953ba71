# elliptic.py - Poisson solves for the potential (Dirichlet) and the projection pressure (Neumann)

from typing import Callable, Optional
import logging

import numpy as np

from errors import CompatibilityError, ContractError, ConvergenceError
from grid import (
    ScalarField,
    dirichlet_matrix,
    laplacian_dirichlet0,
    laplacian_neumann,
    neumann_matrix,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
# Restarts from the current iterate when the recursive residual has drifted
# from the true one.
MAX_RESTARTS = 3


def pcg(
    apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    diagonal: np.ndarray,
    atol: float,
    maxiter: int,
    x0: Optional[np.ndarray] = None,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
):
    """
    Jacobi-preconditioned conjugate gradients for a symmetric positive
    (semi-)definite operator. Stops when the max-norm of the recursively
    updated residual is below atol.

    Returns (x, matrix_applications, residual_inf).
    """
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
        applications = 0
    else:
        x = x0.copy()
        r = b - apply(x)
        applications = 1
    if project is not None:
        x = project(x)
        r = project(r)

    res = float(np.max(np.abs(r))) if r.size else 0.0
    if res <= atol:
        return x, applications, res

    z = r / diagonal
    if project is not None:
        z = project(z)
    p = z.copy()
    rz = float(np.dot(r, z))

    while applications < maxiter:
        q = apply(p)
        applications += 1
        pq = float(np.dot(p, q))
        if pq <= 0.0:
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        if project is not None:
            r = project(r)
        res = float(np.max(np.abs(r)))
        if res <= atol:
            break
        z = r / diagonal
        if project is not None:
            z = project(z)
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new

    if project is not None:
        x = project(x)
    return x, applications, res


def _remove_mean(a: np.ndarray) -> np.ndarray:
    return a - np.mean(a)


def _check_tol(tol: float):
    if not tol > 0:
        raise ContractError(f"tolerance must be positive, got {tol}")


def solve_poisson_dirichlet(rhs: ScalarField, tol: float = DEFAULT_TOL, guess: Optional[ScalarField] = None) -> ScalarField:
    """Solve laplacian_dirichlet0(phi) = rhs, phi = 0 on the boundary."""
    _check_tol(tol)
    grid = rhs.grid
    target = tol * max(1.0, float(np.max(np.abs(rhs.values))))
    if not np.any(rhs.values):
        return ScalarField.zeros(grid)

    matrix = dirichlet_matrix(grid)
    diagonal = -matrix.diagonal()
    b = -rhs.values.ravel()
    x0 = guess.values.ravel() if guess is not None else None
    cap = 10 * grid.nx * grid.ny

    used = 0
    residual = float('inf')
    for attempt in range(MAX_RESTARTS + 1):
        x, applications, _ = pcg(lambda y: -(matrix @ y), b, diagonal, 0.5 * target, cap - used, x0=x0)
        used += applications
        phi = ScalarField(grid, x.reshape(grid.shape))
        residual = float(np.max(np.abs(laplacian_dirichlet0(phi).values - rhs.values)))
        if residual <= target:
            logger.debug(f"Dirichlet Poisson solve: {used} applications, residual {residual:.3e}")
            return phi
        if used >= cap:
            break
        x0 = x
    raise ConvergenceError(
        f"Dirichlet Poisson solve did not reach {target:.3e} within {cap} applications",
        residual=residual,
        iterations=used,
    )


def solve_poisson_neumann_meanzero(rhs: ScalarField, tol: float = DEFAULT_TOL) -> ScalarField:
    """Solve laplacian_neumann(p) = rhs for the zero-mean p; rhs must integrate to zero."""
    _check_tol(tol)
    grid = rhs.grid
    total = float(np.sum(rhs.values) * grid.cell_area)
    l1 = float(np.sum(np.abs(rhs.values)) * grid.cell_area)
    if abs(total) > 1e-10 * l1:
        raise CompatibilityError(f"Neumann right-hand side integrates to {total:.3e} (L1 norm {l1:.3e})")
    if l1 == 0.0:
        return ScalarField.zeros(grid)

    compatible = _remove_mean(rhs.values)
    target = tol * max(1.0, float(np.max(np.abs(rhs.values))))
    matrix = neumann_matrix(grid)
    diagonal = -matrix.diagonal()
    b = -compatible.ravel()
    cap = 10 * grid.nx * grid.ny

    used = 0
    x0 = None
    residual = float('inf')
    for attempt in range(MAX_RESTARTS + 1):
        x, applications, _ = pcg(lambda y: -(matrix @ y), b, diagonal, 0.5 * target, cap - used,
                                 x0=x0, project=_remove_mean)
        used += applications
        p = ScalarField(grid, x.reshape(grid.shape))
        residual = float(np.max(np.abs(laplacian_neumann(p).values - compatible)))
        if residual <= target:
            logger.debug(f"Neumann Poisson solve: {used} applications, residual {residual:.3e}")
            return p
        if used >= cap:
            break
        x0 = x
    raise ConvergenceError(
        f"Neumann Poisson solve did not reach {target:.3e} within {cap} applications",
        residual=residual,
        iterations=used,
    )
