# functionals.py - entropy, energies and Lyapunov functionals on the staggered grid

from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Dict
import logging
import math

import numpy as np
from scipy.special import logsumexp, xlogy

from elliptic import solve_poisson_dirichlet
from errors import ContractError, DomainError
from fluid import velocity_laplacian
from grid import ScalarField, VectorField, gradient_dirichlet0, inner_faces, norm_faces_sq

if TYPE_CHECKING:
    from sim import SimState
    from steady import SteadyState

logger = logging.getLogger(__name__)

# densities below this are treated as exact zeros in x log x
DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class FunctionalReport:
    entropy: float
    kinetic: float
    electrostatic: float
    k_total: float
    lyapunov: float
    dissipation: float
    relative_entropy: float
    theta: float

    def __post_init__(self):
        for name in ('electrostatic', 'kinetic', 'dissipation', 'lyapunov'):
            value = getattr(self, name)
            if value < 0:
                raise DomainError(f"{name} must be nonnegative, got {value}")

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _xlogx(a: np.ndarray, name: str) -> np.ndarray:
    if np.any(a < 0):
        raise DomainError(f"{name} has negative values (min {a.min():.3e})")
    a = np.where(a < DENSITY_FLOOR, 0.0, a)
    return xlogy(a, a)


def entropy(v: ScalarField, w: ScalarField) -> float:
    """Sum of v log v + w log w over cells, with 0 log 0 = 0."""
    area = v.grid.cell_area
    return float((np.sum(_xlogx(v.values, 'v')) + np.sum(_xlogx(w.values, 'w'))) * area)


def electrostatic_energy(phi: ScalarField) -> float:
    """1/2 |grad phi|^2 with the face gradient; squared face values are averaged to cells."""
    return 0.5 * norm_faces_sq(gradient_dirichlet0(phi))


def kinetic_energy(u: VectorField) -> float:
    return 0.5 * norm_faces_sq(u)


def k_functional(state: "SimState") -> float:
    """Entropy plus electrostatic plus kinetic energy."""
    return (entropy(state.charges.v, state.charges.w)
            + electrostatic_energy(state.phi)
            + kinetic_energy(state.u.u))


def _require_positive(field: ScalarField, name: str):
    if np.any(field.values <= 0):
        raise DomainError(f"{name} must be strictly positive everywhere")


def lyapunov(state: "SimState", steady: "SteadyState", theta: float = 1.0, half_potential: bool = False) -> float:
    """
    Weighted distance to the steady state:
    theta/2 |u|^2 + (v-V)^2/(2V) + (w-W)^2/(2W) + c |grad(phi - Phi)|^2, c = 1 (or 1/2 with half_potential).
    """
    if not theta > 0:
        raise ContractError(f"theta must be positive, got {theta}")
    _require_positive(steady.v, 'V')
    _require_positive(steady.w, 'W')
    area = state.phi.grid.cell_area
    v, w = state.charges.v.values, state.charges.w.values
    V, W = steady.v.values, steady.w.values
    densities = 0.5 * np.sum((v - V) ** 2 / V + (w - W) ** 2 / W) * area
    potential = norm_faces_sq(gradient_dirichlet0(state.phi - steady.phi))
    weight = 0.5 if half_potential else 1.0
    return float(0.5 * theta * norm_faces_sq(state.u.u) + densities + weight * potential)


def j_functional(phi: ScalarField, mu_v: float, mu_w: float) -> float:
    """1/2 |grad phi|^2 + mu_v log(int e^phi) + mu_w log(int e^-phi)."""
    if mu_v < 0 or mu_w < 0:
        raise DomainError("masses must be nonnegative")
    log_area = math.log(phi.grid.cell_area)
    value = electrostatic_energy(phi)
    if mu_v > 0:
        value += mu_v * (float(logsumexp(phi.values)) + log_area)
    if mu_w > 0:
        value += mu_w * (float(logsumexp(-phi.values)) + log_area)
    return value


def j_difference(phi: ScalarField, delta: ScalarField, mu_v: float, mu_w: float) -> float:
    """
    J(phi + delta) - J(phi) assembled from differences, so it keeps its
    relative accuracy when delta is tiny and J itself is flat to rounding.
    """
    if mu_v < 0 or mu_w < 0:
        raise DomainError("masses must be nonnegative")
    gd = gradient_dirichlet0(delta)
    value = inner_faces(gradient_dirichlet0(phi), gd) + 0.5 * norm_faces_sq(gd)
    for mass, sign in ((mu_v, 1.0), (mu_w, -1.0)):
        if mass > 0:
            s = sign * phi.values
            weights = np.exp(s - np.max(s))
            weights /= np.sum(weights)
            with np.errstate(over='ignore', invalid='ignore'):
                ratio = float(np.sum(weights * np.expm1(sign * delta.values)))
            if not np.isfinite(ratio) or ratio <= -1.0:
                # the trial left the range where the exponentials are representable
                return math.inf
            value += mass * math.log1p(ratio)
    return float(value)


def _species_production(n: np.ndarray, phi: np.ndarray, sign: float, hx: float, hy: float) -> float:
    """Sum over interior faces of (2 grad sqrt(n) - sign sqrt(n) grad phi)^2 with sqrt(n) averaged to faces."""
    root = np.sqrt(n)
    total = 0.0
    for axis, h in ((0, hx), (1, hy)):
        dr = np.diff(root, axis=axis)
        dp = np.diff(phi, axis=axis)
        if axis == 0:
            mean = 0.5 * (root[1:, :] + root[:-1, :])
        else:
            mean = 0.5 * (root[:, 1:] + root[:, :-1])
        total += float(np.sum((2.0 * dr / h - sign * mean * dp / h) ** 2))
    return total


def dissipation(state: "SimState") -> float:
    """Entropy production: |2 grad sqrt(v) - sqrt(v) grad phi|^2 + |2 grad sqrt(w) + sqrt(w) grad phi|^2 + |grad u|^2."""
    grid = state.phi.grid
    v, w = state.charges.v.values, state.charges.w.values
    if np.any(v < 0) or np.any(w < 0):
        raise DomainError("densities must be nonnegative")
    phi = state.phi.values
    species = (_species_production(v, phi, 1.0, grid.hx, grid.hy)
               + _species_production(w, phi, -1.0, grid.hx, grid.hy)) * grid.cell_area
    u = state.u.u
    # -<u, lap u> equals the summed squared velocity differences including the wall terms
    viscous = -inner_faces(u, velocity_laplacian(u))
    return float(species + max(viscous, 0.0))


def relative_entropy(state: "SimState", steady: "SteadyState") -> float:
    area = state.phi.grid.cell_area
    v, w = state.charges.v.values, state.charges.w.values
    densities = (np.sum(_xlogx(v, 'v')) + np.sum(_xlogx(w, 'w'))
                 - np.sum(_xlogx(steady.v.values, 'V')) - np.sum(_xlogx(steady.w.values, 'W'))) * area
    return float(densities - electrostatic_energy(state.phi) + electrostatic_energy(steady.phi))


def interaction_energy(v: ScalarField, w: ScalarField, tol: float = 1e-10) -> float:
    """Minimum over phi of 1/2 |grad phi|^2 - int phi (w - v), attained at the Poisson solution."""
    phi = solve_poisson_dirichlet(v - w, tol)
    return -electrostatic_energy(phi)


def h_functional(state: "SimState", tol: float = 1e-10) -> float:
    """Entropy minus interaction energy plus kinetic energy (coincides with k_functional)."""
    v, w = state.charges.v, state.charges.w
    return entropy(v, w) - interaction_energy(v, w, tol) + kinetic_energy(state.u.u)


def _kl(n: np.ndarray, reference: np.ndarray, area: float) -> float:
    mask = n > DENSITY_FLOOR
    return float(np.sum(n[mask] * np.log(n[mask] / reference[mask])) * area)


def csiszar_kullback(state: "SimState", steady: "SteadyState") -> Dict[str, float]:
    """L1 gaps to the Boltzmann densities and the entropy bounds sqrt(2 mu KL) that control them."""
    area = state.phi.grid.cell_area
    out = {}
    for name, n, ref, mass in (('v', state.charges.v.values, steady.v.values, steady.mu_v),
                               ('w', state.charges.w.values, steady.w.values, steady.mu_w)):
        gap = float(np.sum(np.abs(n - ref)) * area)
        if mass > 0:
            _require_positive(ScalarField(state.phi.grid, ref), name.upper())
            bound = math.sqrt(2.0 * mass * max(_kl(n, ref, area), 0.0))
        else:
            bound = 0.0
        out[f"l1_{name}"] = gap
        out[f"bound_{name}"] = bound
    return out


def report(state: "SimState", steady: "SteadyState", theta: float = 1.0, half_potential: bool = False) -> FunctionalReport:
    e = entropy(state.charges.v, state.charges.w)
    kin = kinetic_energy(state.u.u)
    el = electrostatic_energy(state.phi)
    return FunctionalReport(
        entropy=e,
        kinetic=kin,
        electrostatic=el,
        k_total=e + el + kin,
        lyapunov=lyapunov(state, steady, theta, half_potential),
        dissipation=dissipation(state),
        relative_entropy=relative_entropy(state, steady),
        theta=theta,
    )
