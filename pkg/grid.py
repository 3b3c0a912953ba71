# grid.py - staggered (MAC) rectangular grid and its discrete operators

from dataclasses import dataclass
from functools import lru_cache
import logging

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, field_validator

from errors import ContractError

logger = logging.getLogger(__name__)


class GridSpec(BaseModel):
    """Uniform rectangle (0, lx) x (0, ly) split into nx x ny cells."""

    model_config = ConfigDict(frozen=True)

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    @field_validator('nx', 'ny')
    @classmethod
    def validate_counts(cls, v):
        if v < 3:
            raise ValueError('cell count must be at least 3')
        return v

    @field_validator('lx', 'ly')
    @classmethod
    def validate_lengths(cls, v):
        if not np.isfinite(v) or v <= 0:
            raise ValueError('domain lengths must be finite and positive')
        return float(v)

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def shape(self):
        return (self.nx, self.ny)

    def cell_centers(self):
        """Meshgrid (indexing='ij') of cell-center coordinates."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing='ij')

    def xface_centers(self):
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing='ij')

    def yface_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing='ij')


@dataclass(frozen=True)
class ScalarField:
    """Cell-centered values, shape (nx, ny), index [i, j] with i along x."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ContractError(f"scalar field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ContractError("scalar field has non-finite values")
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def total(self) -> float:
        """Midpoint-rule integral over the domain."""
        return float(np.sum(self.values) * self.grid.cell_area)

    def __add__(self, other):
        _check_same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values - other.values)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def scale(self, factor: float) -> "ScalarField":
        return ScalarField(self.grid, factor * self.values)


@dataclass(frozen=True)
class VectorField:
    """Face-centered components: xcomp on vertical faces (nx+1, ny), ycomp on horizontal faces (nx, ny+1)."""

    grid: GridSpec
    xcomp: np.ndarray
    ycomp: np.ndarray

    def __post_init__(self):
        xcomp = np.asarray(self.xcomp, dtype=float)
        ycomp = np.asarray(self.ycomp, dtype=float)
        nx, ny = self.grid.shape
        if xcomp.shape != (nx + 1, ny) or ycomp.shape != (nx, ny + 1):
            raise ContractError(
                f"vector field shapes {xcomp.shape}, {ycomp.shape} do not match grid {self.grid.shape}"
            )
        if not (np.all(np.isfinite(xcomp)) and np.all(np.isfinite(ycomp))):
            raise ContractError("vector field has non-finite values")
        object.__setattr__(self, 'xcomp', xcomp)
        object.__setattr__(self, 'ycomp', ycomp)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        nx, ny = grid.shape
        return cls(grid, np.zeros((nx + 1, ny)), np.zeros((nx, ny + 1)))

    def __add__(self, other):
        _check_same_grid(self.grid, other.grid)
        return VectorField(self.grid, self.xcomp + other.xcomp, self.ycomp + other.ycomp)

    def __sub__(self, other):
        _check_same_grid(self.grid, other.grid)
        return VectorField(self.grid, self.xcomp - other.xcomp, self.ycomp - other.ycomp)

    def scale(self, factor: float) -> "VectorField":
        return VectorField(self.grid, factor * self.xcomp, factor * self.ycomp)

    def with_zero_normal(self) -> "VectorField":
        """Copy with the boundary-normal face components set to zero."""
        xcomp = self.xcomp.copy()
        ycomp = self.ycomp.copy()
        xcomp[0, :] = 0.0
        xcomp[-1, :] = 0.0
        ycomp[:, 0] = 0.0
        ycomp[:, -1] = 0.0
        return VectorField(self.grid, xcomp, ycomp)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.xcomp)), np.max(np.abs(self.ycomp))))

    def cell_average(self):
        """Face components averaged to cell centers, returned as two (nx, ny) arrays."""
        return 0.5 * (self.xcomp[:-1, :] + self.xcomp[1:, :]), 0.5 * (self.ycomp[:, :-1] + self.ycomp[:, 1:])


def _check_same_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise ContractError(f"grid mismatch: {a} vs {b}")


def _require_scalar(s) -> ScalarField:
    if not isinstance(s, ScalarField):
        raise ContractError(f"expected ScalarField, got {type(s).__name__}")
    return s


def _require_vector(f) -> VectorField:
    if not isinstance(f, VectorField):
        raise ContractError(f"expected VectorField, got {type(f).__name__}")
    return f


# Inner products. Interior faces carry a full cell area, boundary-normal faces
# half of it; with this weighting divergence is minus the adjoint of
# gradient_dirichlet0 on all of face space.

def inner_cells(a: ScalarField, b: ScalarField) -> float:
    _check_same_grid(a.grid, b.grid)
    return float(np.sum(a.values * b.values) * a.grid.cell_area)


@lru_cache(maxsize=32)
def face_weights(grid: GridSpec):
    nx, ny = grid.shape
    wx = np.full((nx + 1, ny), grid.cell_area)
    wx[0, :] *= 0.5
    wx[-1, :] *= 0.5
    wy = np.full((nx, ny + 1), grid.cell_area)
    wy[:, 0] *= 0.5
    wy[:, -1] *= 0.5
    wx.setflags(write=False)
    wy.setflags(write=False)
    return wx, wy


def inner_faces(f: VectorField, g: VectorField) -> float:
    _check_same_grid(f.grid, g.grid)
    wx, wy = face_weights(f.grid)
    return float(np.sum(wx * f.xcomp * g.xcomp) + np.sum(wy * f.ycomp * g.ycomp))


def norm_faces_sq(f: VectorField) -> float:
    return inner_faces(f, f)


# Operators

def gradient_dirichlet0(s: ScalarField) -> VectorField:
    """Face gradient of a cell field extended by ghost = -interior (zero on the boundary)."""
    s = _require_scalar(s)
    grid = s.grid
    nx, ny = grid.shape
    a = s.values
    gx = np.empty((nx + 1, ny))
    gx[1:-1, :] = (a[1:, :] - a[:-1, :]) / grid.hx
    gx[0, :] = (a[0, :] + a[0, :]) / grid.hx
    gx[-1, :] = (-a[-1, :] - a[-1, :]) / grid.hx
    gy = np.empty((nx, ny + 1))
    gy[:, 1:-1] = (a[:, 1:] - a[:, :-1]) / grid.hy
    gy[:, 0] = (a[:, 0] + a[:, 0]) / grid.hy
    gy[:, -1] = (-a[:, -1] - a[:, -1]) / grid.hy
    return VectorField(grid, gx, gy)


def gradient_neumann(s: ScalarField) -> VectorField:
    """Face gradient with homogeneous Neumann ghosts: boundary faces are zero."""
    s = _require_scalar(s)
    grid = s.grid
    nx, ny = grid.shape
    a = s.values
    gx = np.zeros((nx + 1, ny))
    gx[1:-1, :] = (a[1:, :] - a[:-1, :]) / grid.hx
    gy = np.zeros((nx, ny + 1))
    gy[:, 1:-1] = (a[:, 1:] - a[:, :-1]) / grid.hy
    return VectorField(grid, gx, gy)


def divergence(f: VectorField) -> ScalarField:
    """Net outflow per cell divided by cell area, boundary faces included."""
    f = _require_vector(f)
    grid = f.grid
    d = (f.xcomp[1:, :] - f.xcomp[:-1, :]) / grid.hx + (f.ycomp[:, 1:] - f.ycomp[:, :-1]) / grid.hy
    return ScalarField(grid, d)


def laplacian_dirichlet0(s: ScalarField) -> ScalarField:
    return divergence(gradient_dirichlet0(s))


def laplacian_neumann(s: ScalarField) -> ScalarField:
    return divergence(gradient_neumann(s))


# Sparse assembly, cell index k = i * ny + j (C order of an (nx, ny) array).

def second_difference_cells(n: int, h: float, boundary: str) -> sp.csr_matrix:
    """1D cell-centered second difference; 'dirichlet' uses ghost = -interior, 'neumann' ghost = interior."""
    end = {'dirichlet': -3.0, 'neumann': -1.0}[boundary]
    main = np.full(n, -2.0)
    main[0] = end
    main[-1] = end
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format='csr') / (h * h)


def second_difference_nodes(n: int, h: float) -> sp.csr_matrix:
    """1D second difference on n interior nodes with zero values at both end nodes."""
    off = np.ones(n - 1)
    return sp.diags([off, np.full(n, -2.0), off], [-1, 0, 1], format='csr') / (h * h)


def kron_sum(ax: sp.spmatrix, ay: sp.spmatrix) -> sp.csr_matrix:
    ix = sp.identity(ax.shape[0], format='csr')
    iy = sp.identity(ay.shape[0], format='csr')
    return (sp.kron(ax, iy) + sp.kron(ix, ay)).tocsr()


@lru_cache(maxsize=16)
def dirichlet_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Sparse form of laplacian_dirichlet0 acting on flattened cell vectors."""
    return kron_sum(second_difference_cells(grid.nx, grid.hx, 'dirichlet'),
                    second_difference_cells(grid.ny, grid.hy, 'dirichlet'))


@lru_cache(maxsize=16)
def neumann_matrix(grid: GridSpec) -> sp.csr_matrix:
    return kron_sum(second_difference_cells(grid.nx, grid.hx, 'neumann'),
                    second_difference_cells(grid.ny, grid.hy, 'neumann'))


def discrete_eigenvalue(grid: GridSpec, kx: int = 1, ky: int = 1) -> float:
    """Eigenvalue of the 5-point stencil for the sin (Dirichlet) or cos (Neumann) mode (kx, ky)."""
    return (-(4.0 / grid.hx ** 2) * np.sin(kx * np.pi * grid.hx / (2 * grid.lx)) ** 2
            - (4.0 / grid.hy ** 2) * np.sin(ky * np.pi * grid.hy / (2 * grid.ly)) ** 2)
