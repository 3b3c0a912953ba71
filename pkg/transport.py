# transport.py - implicit Nernst-Planck step with Scharfetter-Gummel fluxes

from dataclasses import dataclass
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from errors import ContractError, ConvergenceError, DomainError, InvariantError
from grid import GridSpec, ScalarField, VectorField

logger = logging.getLogger(__name__)

SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class ChargePair:
    """Negative (v) and positive (w) species densities."""

    v: ScalarField
    w: ScalarField

    def __post_init__(self):
        if self.v.grid != self.w.grid:
            raise ContractError("species densities live on different grids")

    @property
    def grid(self) -> GridSpec:
        return self.v.grid

    def masses(self):
        return self.v.total(), self.w.total()

    def validate(self):
        if np.any(self.v.values < 0) or np.any(self.w.values < 0):
            raise DomainError(
                f"negative density (min v {self.v.values.min():.3e}, min w {self.w.values.min():.3e})"
            )
        return self

    def swapped(self) -> "ChargePair":
        return ChargePair(self.w, self.v)


def bernoulli(x):
    """B(x) = x / (exp(x) - 1), with B(0) = 1. Accepts scalars or arrays."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x_arr)
    small = np.abs(x_arr) < SERIES_CUTOFF
    xs = x_arr[small]
    out[small] = 1.0 - xs / 2.0 + xs * xs / 12.0 - xs ** 4 / 720.0
    xl = x_arr[~small]
    with np.errstate(over='ignore'):
        out[~small] = xl / np.expm1(xl)
    if np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(np.shape(x))


def sg_face_flux(nL, nR, s, h):
    """Discrete flux of grad(n) - n grad(phi) from left to right cell, s = phi_R - phi_L."""
    return (bernoulli(s) * nR - bernoulli(-s) * nL) / h


def _face_coefficients(potential: np.ndarray, velocity: np.ndarray, h: float, axis: int):
    """
    Coefficients of the particle flux P = aL*nL - aR*nR through interior faces
    normal to ``axis``: diffusion-drift from the SG flux (P = -J) plus upwinded
    advection u*n.
    """
    if axis == 0:
        s = potential[1:, :] - potential[:-1, :]
        u = velocity[1:-1, :]
    else:
        s = potential[:, 1:] - potential[:, :-1]
        u = velocity[:, 1:-1]
    a_left = bernoulli(-s) / h + np.maximum(u, 0.0)
    a_right = bernoulli(s) / h - np.minimum(u, 0.0)
    return a_left, a_right


def assemble_species_matrix(grid: GridSpec, u: VectorField, potential: np.ndarray, dt: float) -> sp.csr_matrix:
    """
    Backward Euler matrix I + dt*D for one species, where the species drifts
    down ``potential`` (phi for v, -phi for w). Boundary faces carry no flux.
    Columns sum to one, off-diagonals are nonpositive.
    """
    nx, ny = grid.shape
    index = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []

    for axis, h, vel in ((0, grid.hx, u.xcomp), (1, grid.hy, u.ycomp)):
        a_left, a_right = _face_coefficients(potential, vel, h, axis)
        if axis == 0:
            left, right = index[:-1, :].ravel(), index[1:, :].ravel()
        else:
            left, right = index[:, :-1].ravel(), index[:, 1:].ravel()
        c = dt / h
        aL = c * a_left.ravel()
        aR = c * a_right.ravel()
        # left cell loses P, right cell gains P
        rows += [left, left, right, right]
        cols += [left, right, right, left]
        vals += [aL, -aR, aR, -aL]

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    operator = sp.coo_matrix((vals, (rows, cols)), shape=(nx * ny, nx * ny)).tocsr()
    return (sp.identity(nx * ny, format='csr') + operator).tocsc()


def _solve_species(n: ScalarField, u: VectorField, potential: np.ndarray, dt: float, tol: float, name: str) -> ScalarField:
    grid = n.grid
    matrix = assemble_species_matrix(grid, u, potential, dt)
    b = n.values.ravel()
    x = spla.spsolve(matrix, b)
    if not np.all(np.isfinite(x)):
        raise ConvergenceError(f"{name} transport solve produced non-finite values")
    residual = float(np.max(np.abs(matrix @ x - b)))
    if residual > tol * max(1.0, float(np.max(np.abs(b)))):
        raise ConvergenceError(f"{name} transport solve residual {residual:.3e} above tolerance", residual=residual)
    if np.any(x < 0):
        raise InvariantError(f"{name} density became negative ({x.min():.3e}) in the implicit step")
    return ScalarField(grid, x.reshape(grid.shape))


def advance_charges(pair: ChargePair, u: VectorField, phi: ScalarField, dt: float, tol: float = 1e-10) -> ChargePair:
    """
    One backward Euler step of both species against the frozen potential phi
    and velocity u. The species are solved one after the other.
    """
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    if u.grid != pair.grid or phi.grid != pair.grid:
        raise ContractError("velocity, potential and densities must share a grid")
    pair.validate()

    v_new = _solve_species(pair.v, u, phi.values, dt, tol, 'v')
    w_new = _solve_species(pair.w, u, -phi.values, dt, tol, 'w')
    return ChargePair(v_new, w_new)
