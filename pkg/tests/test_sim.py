# test_sim.py

from dataclasses import replace

import numpy as np
import pytest

import sim
from analysis import fit_decay_rate
from config import SimConfig
from errors import ConfigError, DomainError, InvariantError, RunAborted
from fluid import VelocityState
from sim import SimState, distance_to_steady, init_state, run, step, step_count
from steady import solve_steady
from transport import ChargePair


def small(**overrides):
    params = dict(nx=12, ny=12, dt=1e-3, t_end=0.01, output_every=5)
    params.update(overrides)
    return SimConfig(**params)


def test_neutral_rest_initial_state():
    config = small(lx=2.0)
    state = init_state(config)
    assert not np.any(state.u.u.xcomp) and not np.any(state.u.u.ycomp)
    np.testing.assert_allclose(state.charges.v.values, 0.5, rtol=1e-15)
    np.testing.assert_array_equal(state.charges.v.values, state.charges.w.values)
    assert not np.any(state.phi.values)


def test_neutral_rest_is_a_fixed_point():
    config = small()
    state = init_state(config)
    out = step(state, config)
    np.testing.assert_allclose(out.charges.v.values, state.charges.v.values, rtol=1e-12)
    assert out.t == pytest.approx(config.dt)
    assert out.step == 1
    assert out.u.max_divergence() == 0.0


def test_two_blobs_masses_match_preset():
    config = small(nx=32, ny=32, preset="two-blobs")
    state = init_state(config)
    assert state.mu_v == pytest.approx(2.0, rel=1e-3)
    assert state.mu_w == pytest.approx(1.0, rel=1e-3)
    assert state.poisson_residual() <= 1e-10 * max(1.0, np.max(np.abs(state.charges.v.values)))


def test_preset_parameters_override_defaults():
    config = small(nx=32, ny=32, preset="two-blobs", preset_params={"mu_v": 3.0, "mu_w": 0.5})
    state = init_state(config)
    assert state.mu_v == pytest.approx(3.0, rel=1e-3)
    assert state.mu_w == pytest.approx(0.5, rel=1e-3)


def test_sheared_blobs_start_divergence_free():
    config = small(preset="sheared-blobs")
    state = init_state(config)
    assert state.u.u.max_abs() > 0.1
    assert state.u.max_divergence() <= 1e-9


def test_debye_mode_starts_and_stays_at_rest():
    config = small(preset="sheared-blobs", mode="debye")
    state = step(init_state(config), config)
    assert state.u.u.max_abs() == 0.0


def test_debye_equals_coupled_on_neutral_data():
    coupled = small(preset="noisy-neutral", preset_params={"amplitude": 0.0})
    debye = small(preset="noisy-neutral", preset_params={"amplitude": 0.0}, mode="debye")
    a = init_state(coupled)
    b = init_state(debye)
    for _ in range(3):
        a = step(a, coupled)
        b = step(b, debye)
    assert np.array_equal(a.charges.v.values, b.charges.v.values)
    assert np.array_equal(a.phi.values, b.phi.values)
    assert np.array_equal(a.u.u.xcomp, b.u.u.xcomp)


def test_charge_symmetry_is_bitwise():
    config = small(preset="two-blobs")
    state = init_state(config)
    mirrored = replace(state, charges=state.charges.swapped(), phi=-state.phi,
                       mu_v=state.mu_w, mu_w=state.mu_v)
    for _ in range(3):
        state = step(state, config)
        mirrored = step(mirrored, config)
    assert np.array_equal(mirrored.charges.v.values, state.charges.w.values)
    assert np.array_equal(mirrored.charges.w.values, state.charges.v.values)
    assert np.array_equal(mirrored.phi.values, -state.phi.values)
    assert np.array_equal(mirrored.u.u.xcomp, state.u.u.xcomp)
    assert np.array_equal(mirrored.u.u.ycomp, state.u.u.ycomp)


def test_t_end_zero_gives_one_record():
    config = small(t_end=0.0)
    final, records = run(config)
    assert final.step == 0
    assert len(records) == 1
    assert records[0].step == 0


def test_debye_run_conserves_mass_and_dissipates_entropy():
    config = small(nx=16, ny=16, preset="two-blobs", mode="debye", t_end=0.05, output_every=1)
    _, records = run(config)
    assert len(records) == 51
    mu_v, mu_w = records[0].mass_v, records[0].mass_w
    k0 = records[0].k_total
    for previous, record in zip(records, records[1:]):
        assert abs(record.mass_v - mu_v) <= 1e-12 * mu_v
        assert abs(record.mass_w - mu_w) <= 1e-12 * mu_w
        assert record.min_v >= 0.0 and record.min_w >= 0.0
        assert record.k_total <= previous.k_total + 1e-8 * (1 + abs(k0))
    assert records[-1].dist_sq < records[0].dist_sq


def test_coupled_run_records_cadence_and_final_step():
    config = small(preset="sheared-blobs", t_end=0.012, output_every=5)
    final, records = run(config)
    assert [r.step for r in records] == [0, 5, 10, 12]
    assert final.t == pytest.approx(0.012)
    assert all(r.max_div <= 1e-8 for r in records)
    assert step_count(config) == 12


def test_resumed_run_matches_uninterrupted_run_bitwise():
    long = small(preset="sheared-blobs", t_end=0.02, output_every=5)
    short = small(preset="sheared-blobs", t_end=0.01, output_every=5)
    full_state, full_records = run(long)
    half_state, half_records = run(short)
    resumed_state, resumed_records = run(long, state=half_state, resumed=True)
    assert half_records + resumed_records == full_records
    assert np.array_equal(resumed_state.charges.v.values, full_state.charges.v.values)
    assert np.array_equal(resumed_state.u.u.xcomp, full_state.u.u.xcomp)
    assert np.array_equal(resumed_state.phi.values, full_state.phi.values)


def test_distance_to_steady_vanishes_at_equilibrium():
    config = small(preset="two-blobs")
    state = init_state(config)
    steady = solve_steady(state.grid, state.mu_v, state.mu_w)
    at_rest = replace(state, charges=replace(state.charges, v=steady.v, w=steady.w), phi=steady.phi)
    assert distance_to_steady(at_rest, steady) == pytest.approx(0.0, abs=1e-20)
    assert distance_to_steady(state, steady) > 0.0


def test_failed_step_aborts_with_partial_records(monkeypatch):
    config = small(t_end=0.01, output_every=1)
    original = sim.advance_charges
    calls = {"n": 0}

    def failing(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise InvariantError("density became negative")
        return original(*args, **kwargs)

    monkeypatch.setattr(sim, "advance_charges", failing)
    with pytest.raises(RunAborted) as info:
        run(config)
    assert info.value.step == 3
    assert [r.step for r in info.value.records] == [0, 1, 2]
    assert info.value.to_record()["kind"] == "invariant"


def test_preset_errors():
    with pytest.raises(ConfigError):
        init_state(SimConfig.model_construct(**{**SimConfig().model_dump(), "preset": "vortex"}))
    with pytest.raises(DomainError):
        init_state(small(preset="noisy-neutral", preset_params={"amplitude": 2.0}))


def test_steady_state_is_a_fixed_point_of_the_coupled_step():
    config = small(nx=16, ny=16)
    steady = solve_steady(config.grid, 2.0, 1.0)
    state = SimState(t=0.0, u=VelocityState.rest(config.grid), charges=ChargePair(steady.v, steady.w),
                     phi=steady.phi, mu_v=2.0, mu_w=1.0)
    for _ in range(20):
        state = step(state, config)
    scale = float(np.max(steady.v.values))
    assert state.u.u.max_abs() <= 1e-9
    assert np.max(np.abs(state.charges.v.values - steady.v.values)) <= 1e-10 * scale
    assert np.max(np.abs(state.charges.w.values - steady.w.values)) <= 1e-10 * scale
    assert np.max(np.abs(state.phi.values - steady.phi.values)) <= 1e-9


@pytest.mark.parametrize("mode", ["coupled", "debye"])
def test_two_blobs_decay_exponentially_on_coarse_grid(mode):
    config = small(nx=32, ny=32, dt=5e-3, t_end=1.5, output_every=3, preset="two-blobs", mode=mode)
    _, records = run(config)
    distance = fit_decay_rate(records, "dist_sq")
    relative = fit_decay_rate(records, "lyapunov")
    assert distance.lambda_ > 0.0
    assert distance.r_squared >= 0.999
    assert relative.lambda_ == pytest.approx(distance.lambda_, rel=0.25)
    assert records[-1].dist_sq <= 1e-4 * records[0].dist_sq
