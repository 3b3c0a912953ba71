# fluid.py - projection step for incompressible flow driven by the charge force

from dataclasses import dataclass
from functools import lru_cache
import logging

import numpy as np
import scipy.sparse as sp

from elliptic import pcg, solve_poisson_neumann_meanzero
from errors import ContractError, ConvergenceError, InvariantError
from grid import (
    GridSpec,
    ScalarField,
    VectorField,
    divergence,
    gradient_dirichlet0,
    gradient_neumann,
    kron_sum,
    second_difference_cells,
    second_difference_nodes,
)

logger = logging.getLogger(__name__)

ADVECTION_SCHEMES = ("centered", "upwind")


@dataclass(frozen=True)
class VelocityState:
    """Face velocity u and the (diagnostic) projection pressure p."""

    u: VectorField
    p: ScalarField

    @classmethod
    def rest(cls, grid: GridSpec) -> "VelocityState":
        return cls(VectorField.zeros(grid), ScalarField.zeros(grid))

    def max_divergence(self) -> float:
        return float(np.max(np.abs(divergence(self.u).values)))

    def validate(self, tol: float) -> "VelocityState":
        u = self.u
        if np.any(u.xcomp[0, :]) or np.any(u.xcomp[-1, :]) or np.any(u.ycomp[:, 0]) or np.any(u.ycomp[:, -1]):
            raise InvariantError("velocity has nonzero boundary-normal components")
        div = self.max_divergence()
        if div > tol:
            raise InvariantError(f"velocity divergence {div:.3e} above projection tolerance {tol:.3e}")
        return self


def _log_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a - b) / (log a - log b), falling back to the arithmetic mean where it degenerates."""
    out = 0.5 * (a + b)
    ok = (a > 0) & (b > 0) & (a != b)
    d = a[ok] - b[ok]
    out[ok] = d / np.log1p(d / b[ok])
    return out


def lorentz_force(v: ScalarField, w: ScalarField, phi: ScalarField) -> VectorField:
    """
    Body force (v - w) grad(phi) on faces; wall-normal faces are zero.

    Each density is carried to faces by its logarithmic mean. For Boltzmann
    densities V ~ e^phi, W ~ e^-phi this makes (V_f - W_f) grad(phi) the exact
    face gradient of V + W, so the equilibrium force is a pure pressure.
    """
    grid = phi.grid
    if v.grid != grid or w.grid != grid:
        raise ContractError("force inputs must share a grid")
    a, b = v.values, w.values
    g = gradient_dirichlet0(phi)
    fx = np.zeros_like(g.xcomp)
    fy = np.zeros_like(g.ycomp)
    fx[1:-1, :] = (_log_mean(a[1:, :], a[:-1, :]) - _log_mean(b[1:, :], b[:-1, :])) * g.xcomp[1:-1, :]
    fy[:, 1:-1] = (_log_mean(a[:, 1:], a[:, :-1]) - _log_mean(b[:, 1:], b[:, :-1])) * g.ycomp[:, 1:-1]
    return VectorField(grid, fx, fy)


@lru_cache(maxsize=8)
def _diffusion_operators(grid: GridSpec):
    """Velocity Laplacians on interior x-faces and y-faces with no-slip walls."""
    lap_x = kron_sum(second_difference_nodes(grid.nx - 1, grid.hx),
                     second_difference_cells(grid.ny, grid.hy, 'dirichlet'))
    lap_y = kron_sum(second_difference_cells(grid.nx, grid.hx, 'dirichlet'),
                     second_difference_nodes(grid.ny - 1, grid.hy))
    return lap_x, lap_y


def velocity_laplacian(u: VectorField) -> VectorField:
    """No-slip vector Laplacian of the interior face components; wall-normal faces stay zero."""
    grid = u.grid
    lap_x, lap_y = _diffusion_operators(grid)
    lx = np.zeros_like(u.xcomp)
    ly = np.zeros_like(u.ycomp)
    lx[1:-1, :] = (lap_x @ u.xcomp[1:-1, :].ravel()).reshape(grid.nx - 1, grid.ny)
    ly[:, 1:-1] = (lap_y @ u.ycomp[:, 1:-1].ravel()).reshape(grid.nx, grid.ny - 1)
    return VectorField(grid, lx, ly)


def _pad_ghost_y(a: np.ndarray) -> np.ndarray:
    # no-slip ghost rows mirror with opposite sign across the wall
    return np.concatenate([-a[:, :1], a, -a[:, -1:]], axis=1)


def _pad_ghost_x(a: np.ndarray) -> np.ndarray:
    return np.concatenate([-a[:1, :], a, -a[-1:, :]], axis=0)


def _derivative(values: np.ndarray, speed: np.ndarray, h: float, axis: int, scheme: str) -> np.ndarray:
    """Derivative of a ghost-padded array at its interior points along axis."""
    if axis == 0:
        back = values[1:-1, :] - values[:-2, :]
        fwd = values[2:, :] - values[1:-1, :]
    else:
        back = values[:, 1:-1] - values[:, :-2]
        fwd = values[:, 2:] - values[:, 1:-1]
    if scheme == "centered":
        return (back + fwd) / (2.0 * h)
    return np.where(speed > 0, back, fwd) / h


def advection_term(u: VectorField, scheme: str = "centered") -> VectorField:
    """-(u . grad) u at interior faces."""
    if scheme not in ADVECTION_SCHEMES:
        raise ContractError(f"unknown advection scheme {scheme!r}")
    grid = u.grid
    U, V = u.xcomp, u.ycomp

    # x-momentum on interior vertical faces
    vbar = 0.25 * (V[:-1, :-1] + V[1:, :-1] + V[:-1, 1:] + V[1:, 1:])
    uc = U[1:-1, :]
    dudx = _derivative(U, uc, grid.hx, 0, scheme)
    dudy = _derivative(_pad_ghost_y(U)[1:-1, :], vbar, grid.hy, 1, scheme)
    ax = np.zeros_like(U)
    ax[1:-1, :] = -(uc * dudx + vbar * dudy)

    # y-momentum on interior horizontal faces
    ubar = 0.25 * (U[:-1, :-1] + U[1:, :-1] + U[:-1, 1:] + U[1:, 1:])
    vc = V[:, 1:-1]
    dvdy = _derivative(V, vc, grid.hy, 1, scheme)
    dvdx = _derivative(_pad_ghost_x(V)[:, 1:-1], ubar, grid.hx, 0, scheme)
    ay = np.zeros_like(V)
    ay[:, 1:-1] = -(ubar * dvdx + vc * dvdy)
    return VectorField(grid, ax, ay)


def _solve_diffusion(lap: sp.csr_matrix, rhs: np.ndarray, dt: float, tol: float, label: str) -> np.ndarray:
    flat = rhs.ravel()
    diagonal = 1.0 - dt * lap.diagonal()
    atol = tol * max(1.0, float(np.max(np.abs(flat))))
    cap = 10 * flat.size
    x, applications, residual = pcg(lambda y: y - dt * (lap @ y), flat, diagonal, atol, cap)
    if residual > atol:
        raise ConvergenceError(f"{label} diffusion solve stalled at residual {residual:.3e}",
                               residual=residual, iterations=applications)
    return x.reshape(rhs.shape)


def _project(ustar: VectorField, dt: float, tol: float):
    """Returns the projected field, the pressure and the divergence bound the solve guarantees."""
    grid = ustar.grid
    div = divergence(ustar).values / dt
    # zero normal flow makes the divergence integrate to zero; only rounding is removed here
    mean = float(np.mean(div))
    rhs = ScalarField(grid, div - mean)
    p = solve_poisson_neumann_meanzero(rhs, tol)
    u = ustar - gradient_neumann(p).scale(dt)
    target = tol * max(1.0, float(np.max(np.abs(rhs.values))))
    rounding = 64 * np.finfo(float).eps * ustar.max_abs() / min(grid.hx, grid.hy)
    return u, p, 2.0 * dt * (target + abs(mean)) + rounding


def project(u: VectorField, tol: float = 1e-10) -> VectorField:
    """Discrete Hodge projection onto divergence-free fields with zero normal wall flow."""
    projected, _, _ = _project(u.with_zero_normal(), 1.0, tol)
    return projected


def advance_velocity(state: VelocityState, force: VectorField, dt: float, tol: float = 1e-10,
                     advection: str = "centered") -> VelocityState:
    """
    Explicit advection, implicit no-slip diffusion, then pressure projection.

    The gradient part of the force goes straight into a pressure predictor;
    only its solenoidal part enters the diffusion solve. No-slip diffusion
    does not map gradients to gradients, so a balanced force (a pure
    pressure) would otherwise leave a spurious wall flow behind.
    """
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    grid = state.u.grid
    if force.grid != grid:
        raise ContractError("force and velocity must share a grid")

    u = state.u
    courant = u.max_abs() * dt / min(grid.hx, grid.hy)
    if courant > 1.0:
        logger.warning(f"Advective CFL number {courant:.3f} exceeds 1 (dt={dt})")

    solenoidal, predictor, _ = _project(force.with_zero_normal(), 1.0, tol)
    adv = advection_term(u, advection)
    lap_x, lap_y = _diffusion_operators(grid)

    rhs_x = u.xcomp[1:-1, :] + dt * (adv.xcomp[1:-1, :] + solenoidal.xcomp[1:-1, :])
    rhs_y = u.ycomp[:, 1:-1] + dt * (adv.ycomp[:, 1:-1] + solenoidal.ycomp[:, 1:-1])

    sx = np.zeros_like(u.xcomp)
    sy = np.zeros_like(u.ycomp)
    sx[1:-1, :] = _solve_diffusion(lap_x, rhs_x, dt, tol, 'x-velocity')
    sy[:, 1:-1] = _solve_diffusion(lap_y, rhs_y, dt, tol, 'y-velocity')
    ustar = VectorField(grid, sx, sy)

    unew, correction, bound = _project(ustar, dt, tol)
    return VelocityState(unew, predictor + correction).validate(bound)
