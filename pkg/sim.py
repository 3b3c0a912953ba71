# sim.py - coupled time stepping, initial-condition presets and run diagnostics

from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple
import logging
import math

import numpy as np

from analysis import DiagnosticsRecord
from config import SimConfig
from elliptic import solve_poisson_dirichlet
from errors import ConfigError, ContractError, DomainError, EHDError, RunAborted
from fluid import VelocityState, advance_velocity, lorentz_force, project
from functionals import dissipation, electrostatic_energy, entropy, kinetic_energy, lyapunov
from grid import GridSpec, ScalarField, VectorField, gradient_dirichlet0, laplacian_dirichlet0, norm_faces_sq
from steady import SteadyState, solve_steady
from transport import ChargePair, advance_charges

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimState:
    t: float
    u: VelocityState
    charges: ChargePair
    phi: ScalarField
    mu_v: float
    mu_w: float
    step: int = 0

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid

    def poisson_residual(self) -> float:
        q = self.charges.v.values - self.charges.w.values
        return float(np.max(np.abs(laplacian_dirichlet0(self.phi).values - q)))


# Presets

def _gaussian_integral(center: float, sigma: float, length: float) -> float:
    """Exact integral of exp(-(x - center)^2 / (2 sigma^2)) over (0, length)."""
    scale = sigma * math.sqrt(2.0)
    return sigma * math.sqrt(math.pi / 2.0) * (math.erf((length - center) / scale) + math.erf(center / scale))


def gaussian_blob(grid: GridSpec, mass: float, cx: float, cy: float, sigma: float) -> np.ndarray:
    """Gaussian bump whose exact integral over the rectangle is ``mass``."""
    if sigma <= 0:
        raise DomainError(f"blob width must be positive, got {sigma}")
    x, y = grid.cell_centers()
    bump = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma * sigma))
    norm = _gaussian_integral(cx, sigma, grid.lx) * _gaussian_integral(cy, sigma, grid.ly)
    return np.maximum(mass * bump / norm, 0.0)


def _neutral_rest(config: SimConfig, grid: GridSpec):
    density = config.param('mass', 1.0) / grid.area
    v = np.full(grid.shape, density)
    return v, v.copy(), VectorField.zeros(grid)


def _two_blobs(config: SimConfig, grid: GridSpec):
    sigma = config.param('sigma', 0.1)
    mu_v = config.param('mu_v', 2.0)
    mu_w = config.param('mu_w', 1.0)
    if mu_v < 0 or mu_w < 0:
        raise DomainError(f"preset masses must be nonnegative (mu_v={mu_v}, mu_w={mu_w})")
    v = gaussian_blob(grid, mu_v, config.param('vx', 0.35 * grid.lx), config.param('vy', 0.5 * grid.ly), sigma)
    w = gaussian_blob(grid, mu_w, config.param('wx', 0.65 * grid.lx), config.param('wy', 0.5 * grid.ly), sigma)
    return v, w, VectorField.zeros(grid)


def _sheared_blobs(config: SimConfig, grid: GridSpec):
    v, w, _ = _two_blobs(config, grid)
    amplitude = config.param('shear', 1.0)
    xs, ys = grid.xface_centers()
    ux = amplitude * np.sin(np.pi * xs / grid.lx) * np.cos(np.pi * ys / grid.ly)
    xs, ys = grid.yface_centers()
    uy = -amplitude * np.cos(np.pi * xs / grid.lx) * np.sin(np.pi * ys / grid.ly)
    u = project(VectorField(grid, ux, uy), config.fluid_tol)
    return v, w, u


def _noisy_neutral(config: SimConfig, grid: GridSpec):
    amplitude = config.param('amplitude', 0.1)
    density = config.param('mass', 1.0) / grid.area
    rng = np.random.default_rng(config.seed)
    v = density * (1.0 + amplitude * rng.uniform(-1.0, 1.0, grid.shape))
    w = density * (1.0 + amplitude * rng.uniform(-1.0, 1.0, grid.shape))
    return v, w, VectorField.zeros(grid)


PRESETS = {
    'neutral-rest': _neutral_rest,
    'two-blobs': _two_blobs,
    'sheared-blobs': _sheared_blobs,
    'noisy-neutral': _noisy_neutral,
}


def init_state(config: SimConfig) -> SimState:
    """Initial velocity, densities and the potential they generate."""
    builder = PRESETS.get(config.preset)
    if builder is None:
        raise ConfigError(f"unknown preset {config.preset!r}", key='preset')
    grid = config.grid
    v, w, u = builder(config, grid)
    if np.any(v < 0) or np.any(w < 0):
        raise DomainError(f"preset {config.preset!r} produced negative densities")

    charges = ChargePair(ScalarField(grid, v), ScalarField(grid, w))
    if config.mode == 'debye':
        u = VectorField.zeros(grid)
    phi = solve_poisson_dirichlet(charges.v - charges.w, config.poisson_tol)
    mu_v, mu_w = charges.masses()
    logger.info(f"Initialized preset {config.preset} on {grid.nx}x{grid.ny}: mu_v={mu_v:.12g}, mu_w={mu_w:.12g}")
    return SimState(t=0.0, u=VelocityState(u, ScalarField.zeros(grid)), charges=charges, phi=phi,
                    mu_v=mu_v, mu_w=mu_w, step=0)


def step(state: SimState, config: SimConfig) -> SimState:
    """Charges against the lagged (u, phi), then the Poisson refresh, then the velocity."""
    grid = state.grid
    if grid != config.grid:
        raise ContractError("state and config describe different grids")
    dt = config.dt
    index = state.step + 1
    try:
        charges = advance_charges(state.charges, state.u.u, state.phi, dt, config.transport_tol)
        phi = solve_poisson_dirichlet(charges.v - charges.w, config.poisson_tol, guess=state.phi)
        if config.mode == 'coupled':
            force = lorentz_force(charges.v, charges.w, phi)
            velocity = advance_velocity(state.u, force, dt, config.fluid_tol, config.advection)
        else:
            velocity = VelocityState.rest(grid)
    except EHDError as e:
        if e.step is None:
            e.step = index
        raise
    return replace(state, t=index * dt, u=velocity, charges=charges, phi=phi, step=index)


def step_count(config: SimConfig) -> int:
    """Steps needed to reach t_end; t is always step * dt."""
    return max(0, math.ceil(config.t_end / config.dt - 1e-9))


def distance_to_steady(state: SimState, steady: SteadyState) -> float:
    """|u|^2 + |v - V|^2 + |w - W|^2 + |phi - Phi|^2 + |grad(phi - Phi)|^2."""
    area = state.grid.cell_area
    dv = state.charges.v.values - steady.v.values
    dw = state.charges.w.values - steady.w.values
    dphi = state.phi - steady.phi
    return float(norm_faces_sq(state.u.u)
                 + (np.sum(dv * dv) + np.sum(dw * dw) + np.sum(dphi.values ** 2)) * area
                 + norm_faces_sq(gradient_dirichlet0(dphi)))


def make_record(state: SimState, steady: SteadyState, config: SimConfig) -> DiagnosticsRecord:
    v, w = state.charges.v, state.charges.w
    kin = kinetic_energy(state.u.u)
    ent = entropy(v, w)
    el = electrostatic_energy(state.phi)
    try:
        lyap = lyapunov(state, steady, config.theta, config.half_potential)
    except DomainError as e:
        logger.warning(f"Lyapunov functional undefined at step {state.step}: {e}")
        lyap = float('nan')
    return DiagnosticsRecord(
        step=state.step,
        t=state.t,
        mass_v=v.total(),
        mass_w=w.total(),
        min_v=float(v.values.min()),
        min_w=float(w.values.min()),
        kinetic=kin,
        entropy=ent,
        electrostatic=el,
        k_total=ent + el + kin,
        lyapunov=lyap,
        dist_sq=distance_to_steady(state, steady),
        dissipation=dissipation(state),
        max_div=state.u.max_divergence(),
    )


def run(config: SimConfig, state: Optional[SimState] = None, steady: Optional[SteadyState] = None,
        sink: Optional[Callable[[DiagnosticsRecord], None]] = None,
        resumed: bool = False) -> Tuple[SimState, List[DiagnosticsRecord]]:
    """
    Step until t >= t_end, recording diagnostics for the starting state,
    every output_every steps and at the final step. With ``resumed`` the
    starting state is a checkpoint whose record was already written, so
    records begin after its step.
    """
    fresh = not resumed
    records: List[DiagnosticsRecord] = []

    def emit(current: SimState):
        record = make_record(current, steady, config)
        records.append(record)
        if sink is not None:
            sink(record)

    try:
        if state is None:
            state = init_state(config)
        if steady is None:
            steady = solve_steady(state.grid, state.mu_v, state.mu_w, tol=config.steady_tol)
    except EHDError as e:
        if e.step is None:
            e.step = 0
        raise RunAborted(e, records) from e

    total = step_count(config)
    logger.info(f"Running {config.preset} ({config.mode}) from step {state.step} to {total}, dt={config.dt}")
    try:
        if fresh:
            emit(state)
        while state.step < total:
            state = step(state, config)
            if state.step % config.output_every == 0 or state.step == total:
                emit(state)
                latest = records[-1]
                logger.info(f"step {latest.step} t={latest.t:.6g} K={latest.k_total:.12g} dist={latest.dist_sq:.6e}")
    except EHDError as e:
        if e.step is None:
            e.step = state.step
        logger.error(f"Run aborted at step {e.step}: {e}")
        raise RunAborted(e, records) from e
    return state, records
