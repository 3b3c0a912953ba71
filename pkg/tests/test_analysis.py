# test_analysis.py

import numpy as np
import pytest

from analysis import (
    DiagnosticsRecord,
    default_window,
    fit_decay_rate,
    fit_log_linear,
    observed_order,
    weighted_poincare_constant,
)
from errors import ContractError, DomainError
from grid import GridSpec, ScalarField, gradient_neumann, norm_faces_sq


def series_from(t, values, column="dist_sq"):
    records = []
    for i, (ti, yi) in enumerate(zip(t, values)):
        data = {name: 1.0 for name in DiagnosticsRecord.field_names()}
        data.update(step=i, t=float(ti))
        data[column] = float(yi)
        records.append(DiagnosticsRecord(**data))
    return records


def test_exact_exponential_is_recovered():
    t = np.linspace(0.0, 1.0, 100)
    fit = fit_log_linear(t, 3.0 * np.exp(-2.0 * t), (0.0, 1.0))
    assert fit.lambda_ == pytest.approx(2.0, abs=1e-10)
    assert fit.c_dagger == pytest.approx(3.0, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)
    assert fit.points == 100


def test_perturbed_exponential_rate():
    t = np.linspace(0.0, 1.0, 100)
    y = 3.0 * np.exp(-2.0 * t) * (1.0 + 1e-3 * np.sin(t))
    assert fit_log_linear(t, y, (0.0, 1.0)).lambda_ == pytest.approx(2.0, abs=1e-2)


def test_constant_series_has_zero_rate_and_zero_r_squared():
    t = np.linspace(0.0, 1.0, 20)
    fit = fit_log_linear(t, np.full(20, 0.7), (0.0, 1.0))
    assert fit.lambda_ == 0.0
    assert fit.r_squared == 0.0


def test_scaling_leaves_rate_unchanged():
    t = np.linspace(0.0, 2.0, 50)
    y = 5.0 * np.exp(-0.3 * t) * (1.0 + 0.01 * np.cos(7 * t))
    a = fit_log_linear(t, y, (0.0, 2.0))
    b = fit_log_linear(t, 1e6 * y, (0.0, 2.0))
    assert b.lambda_ == pytest.approx(a.lambda_, abs=1e-12)
    assert b.c_dagger == pytest.approx(1e6 * a.c_dagger, rel=1e-12)


def test_fit_rejects_short_or_nonpositive_windows():
    t = np.linspace(0.0, 1.0, 9)
    with pytest.raises(DomainError):
        fit_log_linear(t, np.exp(-t), (0.0, 1.0))
    t = np.linspace(0.0, 1.0, 20)
    y = np.exp(-t)
    y[5] = 0.0
    with pytest.raises(DomainError):
        fit_log_linear(t, y, (0.0, 1.0))


def test_fit_on_diagnostics_series_with_default_window():
    t = np.linspace(0.0, 4.0, 81)
    series = series_from(t, 2.0 * np.exp(-1.5 * t))
    assert default_window(series, "dist_sq") == (2.0, 4.0)
    fit = fit_decay_rate(series, "dist_sq")
    assert fit.window == (2.0, 4.0)
    assert fit.points == 41
    assert fit.lambda_ == pytest.approx(1.5, abs=1e-9)
    assert fit.as_dict()["lambda"] == fit.lambda_
    with pytest.raises(ContractError):
        fit_decay_rate(series, "velocity")


def test_default_window_skips_floating_point_floor():
    t = np.linspace(0.0, 10.0, 101)
    y = np.exp(-10.0 * t)
    y[t > 6.0] = 0.0
    start, end = default_window(series_from(t, y), "dist_sq")
    assert end == pytest.approx(6.0)
    assert start == pytest.approx(3.0)


def test_default_window_stops_before_solver_plateau():
    t = np.linspace(0.0, 5.0, 101)
    y = np.maximum(35.0 * np.exp(-30.0 * t), 5e-24)
    series = series_from(t, y)
    start, end = default_window(series, "dist_sq")
    assert end == pytest.approx(1.65)
    assert start == pytest.approx(0.825)
    fit = fit_decay_rate(series, "dist_sq")
    assert fit.lambda_ == pytest.approx(30.0, rel=1e-8)
    assert fit.r_squared >= 0.999


def test_noisy_decay_without_plateau_keeps_full_range():
    rng = np.random.default_rng(3)
    t = np.linspace(0.0, 4.0, 81)
    y = np.exp(-2.0 * t + 0.01 * rng.standard_normal(t.size))
    start, end = default_window(series_from(t, y), "dist_sq")
    assert (start, end) == (2.0, 4.0)


def test_observed_order_of_second_order_errors():
    h = np.array([0.1, 0.05, 0.025])
    np.testing.assert_allclose(observed_order(3.0 * h ** 2, h), [2.0, 2.0], rtol=1e-12)
    with pytest.raises(ContractError):
        observed_order([1.0], [0.1])


def test_poincare_constant_for_unit_weight():
    grid = GridSpec(nx=32, ny=32, lx=1.0, ly=1.0)
    c = weighted_poincare_constant(ScalarField.constant(grid, 1.0))
    assert c == pytest.approx(1.0 / np.pi ** 2, rel=0.02)


def test_poincare_constant_on_long_rectangle():
    grid = GridSpec(nx=32, ny=16, lx=2.0, ly=1.0)
    c = weighted_poincare_constant(ScalarField.constant(grid, 1.0))
    assert c == pytest.approx((2.0 / np.pi) ** 2, rel=0.02)


def test_poincare_inequality_holds_for_random_fields():
    grid = GridSpec(nx=10, ny=8)
    rng = np.random.default_rng(0)
    rho = ScalarField(grid, rng.uniform(0.5, 2.0, grid.shape))
    tol = 1e-8
    c = weighted_poincare_constant(rho, tol=tol)
    for _ in range(100):
        f = rng.standard_normal(grid.shape)
        f -= f.mean()
        lhs = float(np.sum(f * f)) * grid.cell_area
        rhs = c * norm_faces_sq(gradient_neumann(ScalarField(grid, f * rho.values)))
        assert lhs <= (1.0 + 10 * tol) * rhs


def test_poincare_constant_scales_inverse_square():
    grid = GridSpec(nx=10, ny=10)
    rng = np.random.default_rng(1)
    rho = ScalarField(grid, rng.uniform(0.5, 1.5, grid.shape))
    base = weighted_poincare_constant(rho)
    scaled = weighted_poincare_constant(rho.scale(2.0))
    assert scaled == pytest.approx(base / 4.0, rel=1e-6)


def test_poincare_rejects_nonpositive_weight():
    grid = GridSpec(nx=6, ny=6)
    with pytest.raises(DomainError):
        weighted_poincare_constant(ScalarField.zeros(grid))
