# steady.py - Boltzmann steady state as the minimizer of the convex functional J

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple
import logging

import numpy as np

from elliptic import pcg
from errors import ContractError, ConvergenceError, DomainError
from functionals import j_difference, j_functional
from grid import GridSpec, ScalarField, dirichlet_matrix, laplacian_dirichlet0

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
ARMIJO = 1e-4
MIN_STEP = 1e-12


@dataclass(frozen=True)
class SteadyState:
    phi: ScalarField
    v: ScalarField
    w: ScalarField
    mu_v: float
    mu_w: float
    residual: float
    iterations: int

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid

    def summary(self) -> Dict[str, float]:
        return {
            'mu_v': self.mu_v,
            'mu_w': self.mu_w,
            'residual': self.residual,
            'iterations': self.iterations,
            'j_value': j_functional(self.phi, self.mu_v, self.mu_w),
            'min_v': float(self.v.values.min()),
            'max_v': float(self.v.values.max()),
            'min_w': float(self.w.values.min()),
            'max_w': float(self.w.values.max()),
            'pressure_identity_residual': pressure_identity_residual(self),
        }


def _normalized_exp(a: np.ndarray, mass: float, area: float) -> np.ndarray:
    if mass == 0:
        return np.zeros_like(a)
    e = np.exp(a - np.max(a))
    return mass * e / (np.sum(e) * area)


def boltzmann_densities(phi: ScalarField, mu_v: float, mu_w: float) -> Tuple[ScalarField, ScalarField]:
    """V = mu_v e^phi / int e^phi and W = mu_w e^-phi / int e^-phi."""
    if mu_v < 0 or mu_w < 0:
        raise DomainError("masses must be nonnegative")
    area = phi.grid.cell_area
    V = _normalized_exp(phi.values, mu_v, area)
    W = _normalized_exp(-phi.values, mu_w, area)
    return ScalarField(phi.grid, V), ScalarField(phi.grid, W)


def euler_lagrange_residual(phi: ScalarField, V: ScalarField, W: ScalarField) -> float:
    return float(np.max(np.abs(laplacian_dirichlet0(phi).values - (V.values - W.values))))


def _hessian(grid: GridSpec, V: np.ndarray, W: np.ndarray, mu_v: float, mu_w: float):
    """Hessian of J (divided by the cell area) as a matrix-free product and its diagonal."""
    neg_lap = -dirichlet_matrix(grid)
    area = grid.cell_area
    v = V.ravel()
    w = W.ravel()
    local = v + w
    diagonal = neg_lap.diagonal() + local
    if mu_v > 0:
        diagonal = diagonal - area * v * v / mu_v
    if mu_w > 0:
        diagonal = diagonal - area * w * w / mu_w

    def apply(d):
        out = neg_lap @ d + local * d
        if mu_v > 0:
            out -= (area / mu_v) * np.dot(v, d) * v
        if mu_w > 0:
            out -= (area / mu_w) * np.dot(w, d) * w
        return out

    return apply, diagonal


def solve_steady(grid: GridSpec, mu_v: float, mu_w: float, tol: float = DEFAULT_TOL,
                 initial: Optional[ScalarField] = None, max_iter: int = 50,
                 callback: Optional[Callable[[int, ScalarField], None]] = None) -> SteadyState:
    """
    Damped Newton on lap(Phi) = V(Phi) - W(Phi), with a backtracking line
    search on J so every accepted iterate lowers J. The decrease is measured
    with j_difference, which stays accurate after J is flat to rounding.
    ``callback(k, phi)`` sees every accepted iterate.
    """
    if mu_v < 0 or mu_w < 0:
        raise DomainError("masses must be nonnegative")
    if not tol > 0:
        raise ContractError(f"tolerance must be positive, got {tol}")

    phi = initial if initial is not None else ScalarField.zeros(grid)
    if phi.grid != grid:
        raise ContractError("initial guess lives on a different grid")
    area = grid.cell_area
    j_value = j_functional(phi, mu_v, mu_w)

    def make(phi_, V_, W_, residual_, iterations_):
        return SteadyState(phi_, V_, W_, float(mu_v), float(mu_w), residual_, iterations_)

    for iteration in range(max_iter + 1):
        V, W = boltzmann_densities(phi, mu_v, mu_w)
        F = laplacian_dirichlet0(phi).values - (V.values - W.values)
        residual = float(np.max(np.abs(F)))
        logger.debug(f"Newton iteration {iteration}: J = {j_value:.15e}, residual = {residual:.3e}")
        if residual <= tol:
            logger.info(f"Steady state converged in {iteration} Newton iterations (residual {residual:.3e})")
            return make(phi, V, W, residual, iteration)
        if iteration == max_iter:
            break

        apply, diagonal = _hessian(grid, V.values, W.values, mu_v, mu_w)
        f = F.ravel()
        inner_tol = max(min(0.1, residual) * residual, 0.05 * tol)
        d, _, inner_res = pcg(apply, f, diagonal, inner_tol, 10 * f.size)
        slope = -area * float(np.dot(f, d))
        if not slope < 0:
            raise ConvergenceError("Newton direction is not a descent direction",
                                   residual=residual, iterations=iteration, best=make(phi, V, W, residual, iteration))

        step = 1.0
        direction = d.reshape(grid.shape)
        while step >= MIN_STEP:
            trial = ScalarField(grid, phi.values + step * direction)
            change = j_difference(phi, trial - phi, mu_v, mu_w)
            if change < 0.0 and change <= ARMIJO * step * slope:
                break
            step *= 0.5
        else:
            raise ConvergenceError(f"line search stalled at iteration {iteration}",
                                   residual=residual, iterations=iteration, best=make(phi, V, W, residual, iteration))
        phi = trial
        j_value += change
        if callback is not None:
            callback(iteration + 1, phi)

    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations",
                           residual=residual, iterations=max_iter, best=make(phi, V, W, residual, max_iter))


def pressure_identity_residual(steady: SteadyState) -> float:
    """Max over interior faces of |(V - W) grad Phi - grad(V + W)|, the charge averaged to faces."""
    grid = steady.grid
    q = steady.v.values - steady.w.values
    s = steady.v.values + steady.w.values
    phi = steady.phi.values
    worst = 0.0
    for axis, h in ((0, grid.hx), (1, grid.hy)):
        if axis == 0:
            qf = 0.5 * (q[1:, :] + q[:-1, :])
        else:
            qf = 0.5 * (q[:, 1:] + q[:, :-1])
        gap = qf * np.diff(phi, axis=axis) / h - np.diff(s, axis=axis) / h
        worst = max(worst, float(np.max(np.abs(gap))))
    return worst


def boltzmann_ratios(v: ScalarField, w: ScalarField, steady: SteadyState) -> Tuple[ScalarField, ScalarField]:
    """g = v / V and h = w / W; both are identically one at the steady state."""
    if np.any(steady.v.values <= 0) or np.any(steady.w.values <= 0):
        raise DomainError("ratios need strictly positive steady densities")
    return ScalarField(v.grid, v.values / steady.v.values), ScalarField(w.grid, w.values / steady.w.values)


def theorem_constant(steady: SteadyState, lyapunov_sup: float) -> float:
    """max(1, 1/min V, 1/min W) times the supremum of the Lyapunov functional."""
    if np.any(steady.v.values <= 0) or np.any(steady.w.values <= 0):
        raise DomainError("constant needs strictly positive steady densities")
    return max(1.0, 1.0 / float(steady.v.values.min()), 1.0 / float(steady.w.values.min())) * lyapunov_sup
