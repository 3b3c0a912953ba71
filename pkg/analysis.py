# analysis.py - decay-rate fitting and the weighted Poincare constant

from dataclasses import astuple, dataclass, fields
from typing import Optional, Sequence, Tuple
import logging

import numpy as np

from elliptic import solve_poisson_neumann_meanzero
from errors import ContractError, ConvergenceError, DomainError
from grid import ScalarField, gradient_neumann, norm_faces_sq

logger = logging.getLogger(__name__)

FLOOR = 1e-28
MIN_POINTS = 10
MIN_PLATEAU = 3
# log-units squared a plateau split must save over one straight line
PLATEAU_GAIN = 1.0
PLATEAU_FLATNESS = 0.1
PLATEAU_MARGIN = 1e3


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    t: float
    mass_v: float
    mass_w: float
    min_v: float
    min_w: float
    kinetic: float
    entropy: float
    electrostatic: float
    k_total: float
    lyapunov: float
    dist_sq: float
    dissipation: float
    max_div: float

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def values(self):
        return astuple(self)


@dataclass(frozen=True)
class DecayFit:
    lambda_: float
    c_dagger: float
    r_squared: float
    window: Tuple[float, float]
    points: int = 0

    def as_dict(self):
        return {
            'lambda': self.lambda_,
            'c_dagger': self.c_dagger,
            'r_squared': self.r_squared,
            'window_start': self.window[0],
            'window_end': self.window[1],
            'points': self.points,
        }


def _column(series: Sequence[DiagnosticsRecord], column: str):
    if column not in DiagnosticsRecord.field_names():
        raise ContractError(f"unknown diagnostics column {column!r}")
    t = np.array([r.t for r in series], dtype=float)
    y = np.array([getattr(r, column) for r in series], dtype=float)
    return t, y


def _plateau_start(t: np.ndarray, logy: np.ndarray) -> int:
    """
    Index where a decaying log-series levels off onto a flat tail, or len(t)
    when it never does. Every split into a straight prefix and a constant
    suffix is scored by its least-squares residual; the split only counts
    when it beats a single straight line by PLATEAU_GAIN and the suffix is
    nearly flat compared with the prefix.
    """
    n = t.size
    if n < MIN_POINTS + MIN_PLATEAU:
        return n
    tc = t - t.mean()
    yc = logy - logy.mean()

    def sums(a):
        return np.concatenate([[0.0], np.cumsum(a)])

    st, sy, stt, syy, sty = sums(tc), sums(yc), sums(tc * tc), sums(yc * yc), sums(tc * yc)
    k = np.arange(MIN_POINTS, n - MIN_PLATEAU + 1)

    def line(lo, hi, m):
        sxx = (stt[hi] - stt[lo]) - (st[hi] - st[lo]) ** 2 / m
        sxy = (sty[hi] - sty[lo]) - (st[hi] - st[lo]) * (sy[hi] - sy[lo]) / m
        ss = (syy[hi] - syy[lo]) - (sy[hi] - sy[lo]) ** 2 / m
        return sxx, sxy, ss

    sxx_p, sxy_p, ss_p = line(0, k, k)
    prefix_slope = sxy_p / sxx_p
    prefix_sse = ss_p - sxy_p * prefix_slope
    m = n - k
    sxx_s, sxy_s, ss_s = line(k, n, m)
    suffix_slope = sxy_s / sxx_s
    suffix_sse = ss_s

    sxx_a, sxy_a, ss_a = line(0, n, n)
    straight = ss_a - sxy_a * sxy_a / sxx_a

    total = prefix_sse + suffix_sse
    flat = (prefix_slope < 0) & (np.abs(suffix_slope) <= PLATEAU_FLATNESS * np.abs(prefix_slope))
    if not np.any(flat):
        return n
    total = np.where(flat, total, np.inf)
    best = int(np.argmin(total))
    if straight - total[best] <= PLATEAU_GAIN:
        return n
    return int(k[best])


def default_window(series: Sequence[DiagnosticsRecord], column: str) -> Tuple[float, float]:
    """
    Last half (in time) of the decaying part of a column. Values at or below
    FLOOR are dropped; a trailing plateau (the solver-tolerance floor) is cut
    off together with the points within PLATEAU_MARGIN of its level.
    """
    t, y = _column(series, column)
    keep = np.isfinite(y) & (y > FLOOR)
    t, y = t[keep], y[keep]
    if t.size == 0:
        raise DomainError(f"column {column!r} has no values above {FLOOR:g}")
    logy = np.log(y)
    k = _plateau_start(t, logy)
    if k < t.size:
        level = float(np.exp(np.mean(logy[k:])))
        above = t[:k][y[:k] > PLATEAU_MARGIN * level]
        decaying = above if above.size else t[:k]
        logger.debug(f"{column} levels off near {level:.3e} from t={t[k]:.6g}")
    else:
        decaying = t
    start, end = float(decaying.min()), float(decaying.max())
    return start + 0.5 * (end - start), end


def fit_log_linear(t: np.ndarray, y: np.ndarray, window: Tuple[float, float]) -> DecayFit:
    """Least squares of log(y) against t; lambda is minus the slope."""
    if t.size < MIN_POINTS:
        raise DomainError(f"need at least {MIN_POINTS} points in the fit window, got {t.size}")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise DomainError("values in the fit window must be positive; move the window before the floating-point floor")
    logy = np.log(y)
    tc = t - t.mean()
    sxx = float(np.dot(tc, tc))
    if sxx == 0.0:
        raise DomainError("fit window contains a single time")
    yc = logy - logy.mean()
    slope = float(np.dot(tc, yc)) / sxx
    intercept = float(logy.mean()) - slope * float(t.mean())
    ss_tot = float(np.dot(yc, yc))
    if ss_tot == 0.0:
        r_squared = 0.0
    else:
        ss_res = float(np.sum((yc - slope * tc) ** 2))
        r_squared = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return DecayFit(lambda_=-slope, c_dagger=float(np.exp(intercept)), r_squared=r_squared,
                    window=(float(window[0]), float(window[1])), points=int(t.size))


def fit_decay_rate(series: Sequence[DiagnosticsRecord], column: str = 'dist_sq',
                   window: Optional[Tuple[float, float]] = None) -> DecayFit:
    if window is None:
        window = default_window(series, column)
    t, y = _column(series, column)
    mask = (t >= window[0]) & (t <= window[1])
    fit = fit_log_linear(t[mask], y[mask], window)
    logger.info(f"Decay fit on {column}: lambda={fit.lambda_:.6g}, C={fit.c_dagger:.6g}, r2={fit.r_squared:.6f}")
    return fit


def observed_order(errors: Sequence[float], spacings: Sequence[float]) -> np.ndarray:
    """Orders log(e_k / e_k+1) / log(h_k / h_k+1) between successive refinements."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(spacings, dtype=float)
    if e.shape != h.shape or e.size < 2:
        raise ContractError("need matching error and spacing sequences of length >= 2")
    if np.any(e <= 0) or np.any(h <= 0):
        raise DomainError("errors and spacings must be positive")
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def weighted_poincare_constant(rho: ScalarField, tol: float = 1e-8, max_iter: int = 2000, seed: int = 0) -> float:
    """
    Smallest C with sum f^2 <= C sum |grad(f rho)|^2 over mean-zero f.

    Works on g = f rho: the largest ratio sum (g/rho)^2 / sum |grad g|^2
    (Neumann gradient) subject to sum g/rho = 0, found by inverse iteration
    with the constraint projected out after every solve.
    """
    values = rho.values
    if np.any(values <= 0):
        raise DomainError("weight must be strictly positive")
    grid = rho.grid
    area = grid.cell_area
    mass = 1.0 / (values * values)
    c = 1.0 / values
    csum = float(np.sum(c))

    def constrain(g):
        return g - (float(np.sum(c * g)) / csum)

    def quotient(g):
        num = float(np.sum(mass * g * g)) * area
        den = norm_faces_sq(gradient_neumann(ScalarField(grid, g)))
        return num / den

    rng = np.random.default_rng(seed)
    g = constrain(rng.standard_normal(grid.shape))
    g /= np.sqrt(np.sum(mass * g * g))
    estimate = quotient(g)

    for iteration in range(1, max_iter + 1):
        load = mass * g
        load = load - (float(np.sum(load)) / csum) * c
        # -lap_N y = load; the neumann solver returns the zero-mean representative
        y = solve_poisson_neumann_meanzero(ScalarField(grid, -load), tol=min(1e-10, 0.01 * tol)).values
        g = constrain(y)
        norm = np.sqrt(np.sum(mass * g * g))
        if norm == 0:
            raise ConvergenceError("inverse iteration collapsed to zero", iterations=iteration)
        g /= norm
        new = quotient(g)
        if abs(new - estimate) <= 0.1 * tol * abs(new):
            logger.debug(f"Weighted Poincare constant {new:.10g} after {iteration} iterations")
            return new
        estimate = new
    raise ConvergenceError("weighted Poincare iteration stagnated", residual=abs(new - estimate), iterations=max_iter)
