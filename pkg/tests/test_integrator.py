import numpy as np
import pytest

from bbmlab.grid import GridFunction, derivative, norm_h1, periodic_grid, sample
from bbmlab.integrator import (EvolutionState, IntegratorConfig, NonFiniteError,
                               conserved, evolve, rhs)
from bbmlab.profiles import energy_mass_phi, phi_c_values


@pytest.fixture(scope="module")
def soliton_run():
    grid = periodic_grid(100.0, 2048)
    u0 = GridFunction(grid, phi_c_values(2.0, grid.x + 60.0))
    traj = evolve(EvolutionState(u0, 0.0),
                  IntegratorConfig(dt=0.01, t_end=20.0, record_every=500))
    return grid, u0, traj


def test_rhs_identities():
    grid = periodic_grid(100.0, 2048)
    zero = GridFunction(grid, np.zeros(grid.n_points))
    assert np.abs(rhs(zero).values).max() == 0.0

    c = 2.0
    u = GridFunction(grid, phi_c_values(c, grid.x + 30.0))
    r = rhs(u)
    ux = derivative(u, 1)
    assert np.abs(r.values + c * ux.values).max() < 1e-8

    # dispersion relation of the linearization: -ik/(1+k^2)
    k = 2 * np.pi * 5 / (2 * grid.half_length)
    eps = 1e-8
    mode = GridFunction(grid, eps * np.cos(k * grid.x))
    pred = eps * k / (1 + k**2) * np.sin(k * grid.x)
    assert np.abs(rhs(mode).values - pred).max() / eps < 1e-6


def test_soliton_propagation(soliton_run):
    grid, u0, traj = soliton_run
    exact = GridFunction(grid, phi_c_values(2.0, grid.x + 60.0 - 40.0))
    err = norm_h1(traj.final.u - exact) / norm_h1(exact)
    assert err < 1e-5
    de, dn = traj.conservation_drift()
    assert de < 1e-8 and dn < 1e-8


def test_conserved_values(soliton_run):
    grid, u0, _ = soliton_run
    e, n = conserved(u0)
    e_exp, n_exp = energy_mass_phi(2.0)
    assert e == pytest.approx(e_exp, rel=1e-8)
    assert n == pytest.approx(n_exp, rel=1e-8)

    two = GridFunction(grid, phi_c_values(2.0, grid.x + 60.0)
                       + phi_c_values(1.3, grid.x - 20.0))
    e2, n2 = conserved(two)
    e_s, n_s = energy_mass_phi(1.3)
    assert e2 == pytest.approx(e_exp + e_s, rel=1e-8)
    assert n2 == pytest.approx(n_exp + n_s, rel=1e-8)


def test_zero_stays_zero():
    grid = periodic_grid(50.0, 256)
    traj = evolve(EvolutionState(GridFunction(grid, np.zeros(256)), 0.0),
                  IntegratorConfig(dt=0.05, t_end=1.0))
    assert np.abs(traj.final.u.values).max() == 0.0


def test_fourth_order_convergence():
    grid = periodic_grid(100.0, 2048)
    u0 = GridFunction(grid, phi_c_values(2.0, grid.x + 30.0))
    errs = []
    for dt in (0.08, 0.04):
        traj = evolve(EvolutionState(u0, 0.0), IntegratorConfig(dt=dt, t_end=5.0))
        exact = GridFunction(grid, phi_c_values(2.0, grid.x + 30.0 - 10.0))
        errs.append(norm_h1(traj.final.u - exact))
    ratio = errs[0] / errs[1]
    assert 16.0 * 0.8 <= ratio <= 16.0 * 1.2


def test_time_reversal_symmetry():
    # u(t,x) -> u(-t,-x) solves the equation, so evolving the reflected
    # final state forward returns the reflected initial state
    grid = periodic_grid(80.0, 1024)
    u0 = GridFunction(grid, phi_c_values(1.6, grid.x + 20.0)
                      + phi_c_values(1.2, grid.x - 10.0))
    cfg = IntegratorConfig(dt=0.01, t_end=6.0)
    fwd = evolve(EvolutionState(u0, 0.0), cfg).final.u
    back = evolve(EvolutionState(fwd.reflected(), 0.0), cfg).final.u
    assert np.abs(back.values - u0.reflected().values).max() < 1e-9


def test_nonfinite_detection():
    # an absurd step amplifies the nonlinear stages until overflow
    grid = periodic_grid(50.0, 256)
    u0 = GridFunction(grid, 10.0 * np.exp(-grid.x**2))
    with np.errstate(all="ignore"):
        with pytest.raises(NonFiniteError):
            evolve(EvolutionState(u0, 0.0),
                   IntegratorConfig(dt=1e4, t_end=5e4))


def test_record_every():
    grid = periodic_grid(50.0, 256)
    u0 = sample(grid, lambda x: 0.1 * np.exp(-x**2))
    traj = evolve(EvolutionState(u0, 0.0),
                  IntegratorConfig(dt=0.1, t_end=1.0, record_every=3))
    steps = [s.step_count for s in traj.states]
    assert steps == [0, 3, 6, 9, 10]
    assert traj.final.t == pytest.approx(1.0)


def test_rejects_line_grid():
    from bbmlab.grid import line_grid
    u0 = sample(line_grid(50.0, 256), lambda x: np.exp(-x**2))
    with pytest.raises(ValueError):
        rhs(u0)
