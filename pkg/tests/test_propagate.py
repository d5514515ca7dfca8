from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from chiralflow.analytic import DisorderInfluence, averaged_density_matrix, influence_gaussian
from chiralflow.disorder import (
    DisorderRealization,
    GaussianCorr,
    PeriodicGaussianCorr,
    sample_realization,
    spectral_antiderivative,
)
from chiralflow.model import (
    GaussianPacket,
    Grid,
    PhysParams,
    density_from_wavefunction,
    make_gaussian_wavefunction,
    moments,
    purity,
    spectral_shift_density,
)
from chiralflow.propagate import (
    EvolutionPlan,
    evolve_density_matrix_single,
    evolve_wavefunction,
    integrate_master_equation,
    line_integral_moments,
)
from conftest import circ_dist


@pytest.fixture
def ring17():
    return Grid.ring(17.0, 512)


@pytest.fixture
def params():
    return PhysParams()


def _flat_realization(grid, value=0.0):
    V = np.full(grid.n, value)
    return DisorderRealization(grid=grid, V=V, Phi=spectral_antiderivative(V, grid), seed=0)


def test_evolution_plan_validation(ring17, params):
    EvolutionPlan(params, ring17, (0.0, 1.0, 2.0))
    with pytest.raises(ValueError, match="start at 0"):
        EvolutionPlan(params, ring17, (1.0, 2.0))
    with pytest.raises(ValueError, match="increasing"):
        EvolutionPlan(params, ring17, (0.0, 2.0, 2.0))


def test_free_drift_is_spectral_translation(ring17, params):
    psi0 = make_gaussian_wavefunction(GaussianPacket(sigma=1.0), ring17)
    psi_t = evolve_wavefunction(psi0, _flat_realization(ring17), params, 3.7)
    target = make_gaussian_wavefunction(GaussianPacket(sigma=1.0, x0=3.7), ring17)
    assert abs(abs(psi_t.inner(target)) - 1.0) < 1e-10
    assert abs(psi_t.norm() - 1.0) < 1e-10


def test_constant_potential_is_gauge_phase(ring17, params):
    psi0 = make_gaussian_wavefunction(GaussianPacket(sigma=1.0), ring17)
    t = 2.5
    v0 = 0.8
    free = evolve_wavefunction(psi0, _flat_realization(ring17), params, t)
    shifted = evolve_wavefunction(psi0, _flat_realization(ring17, v0), params, t)
    ratio = shifted.amp[np.abs(free.amp) > 1e-6] / free.amp[np.abs(free.amp) > 1e-6]
    assert np.max(np.abs(ratio - np.exp(-1j * v0 * t))) < 1e-10
    rho_a = density_from_wavefunction(free)
    rho_b = density_from_wavefunction(shifted)
    assert np.max(np.abs(rho_a.rho - rho_b.rho)) < 1e-12


def test_against_dense_exponential_oracle(params):
    # independent oracle: expm of the discrete generator v p + V, including a
    # flight longer than the ring (winding)
    n, L = 128, 16.0
    grid = Grid.ring(L, n)
    model = PeriodicGaussianCorr(7.5e-3, 1.0, L)
    real = sample_realization(model, grid, seed=21)
    psi0 = make_gaussian_wavefunction(GaussianPacket(sigma=1.0), grid)
    F = np.fft.fft(np.eye(n), axis=0)
    Finv = np.fft.ifft(np.eye(n), axis=0)
    H = Finv @ (grid.momenta(1.0)[:, None] * F) * params.v + np.diag(real.V)
    for t in (1.7, 20.0):
        psi_oracle = expm(-1j * H * t) @ psi0.amp
        psi_mine = evolve_wavefunction(psi0, real, params, t)
        assert np.max(np.abs(psi_oracle - psi_mine.amp)) < 1e-12


def test_mean_position_is_disorder_free_per_realization(ring17, params):
    model = PeriodicGaussianCorr(7.5e-3, 1.0, 17.0)
    psi0 = make_gaussian_wavefunction(GaussianPacket(sigma=1.0), ring17)
    for seed in (1, 2, 3):
        real = sample_realization(model, ring17, seed=seed)
        for t in (2.0, 11.5):
            psi_t = evolve_wavefunction(psi0, real, params, t)
            m = moments(density_from_wavefunction(psi_t))
            assert circ_dist(m.mean_x, params.v * t, 17.0) < 1e-8
            assert abs(m.var_x - 1.0) < 1e-8  # position variance time invariant


def test_single_realization_unitarity(ring17, params):
    model = PeriodicGaussianCorr(7.5e-3, 1.0, 17.0)
    real = sample_realization(model, ring17, seed=4)
    psi0 = make_gaussian_wavefunction(GaussianPacket(sigma=1.2), ring17)
    rho0 = density_from_wavefunction(psi0)
    t = 6.3
    rho_t = evolve_density_matrix_single(rho0, real, params, t)
    rho_t.validate(check_positivity=False)
    assert abs(purity(rho_t) - purity(rho0)) < 1e-10
    assert abs(rho_t.trace() - 1.0) < 1e-10
    # full spectrum preserved
    ev0 = np.linalg.eigvalsh(rho0.rho)
    evt = np.linalg.eigvalsh(rho_t.rho)
    assert np.max(np.abs(np.sort(ev0) - np.sort(evt))) < 1e-10


def test_single_realization_populations_translate_exactly(ring17, params):
    model = PeriodicGaussianCorr(7.5e-3, 1.0, 17.0)
    real = sample_realization(model, ring17, seed=8)
    psi0 = make_gaussian_wavefunction(GaussianPacket(sigma=1.0), ring17)
    rho0 = density_from_wavefunction(psi0)
    t = 3.1
    rho_t = evolve_density_matrix_single(rho0, real, params, t)
    shifted = spectral_shift_density(rho0.rho, ring17, params.v * t)
    # the diagonal phase is exactly one, so populations match bit for bit
    assert np.array_equal(np.diag(rho_t.rho), np.diag(shifted))


def test_wavefunction_and_density_paths_agree(ring17, params):
    model = PeriodicGaussianCorr(7.5e-3, 1.0, 17.0)
    real = sample_realization(model, ring17, seed=12)
    psi0 = make_gaussian_wavefunction(GaussianPacket(sigma=1.0, p0=0.5), ring17)
    t = 4.4
    via_psi = density_from_wavefunction(evolve_wavefunction(psi0, real, params, t))
    via_rho = evolve_density_matrix_single(
        density_from_wavefunction(psi0), real, params, t
    )
    assert np.max(np.abs(via_psi.rho - via_rho.rho)) < 1e-12


def test_grid_mismatch_rejected(ring17, params):
    other = Grid.ring(17.0, 256)
    model = PeriodicGaussianCorr(7.5e-3, 1.0, 17.0)
    real = sample_realization(model, other, seed=1)
    psi0 = make_gaussian_wavefunction(GaussianPacket(sigma=1.0), ring17)
    with pytest.raises(ValueError, match="grids"):
        evolve_wavefunction(psi0, real, params, 1.0)


# ------------------------------------------------------- master equation


def test_master_equation_free_case(params):
    grid = Grid.ring(16.0, 256)
    rho0 = density_from_wavefunction(make_gaussian_wavefunction(GaussianPacket(sigma=1.0), grid))
    model = GaussianCorr(0.0, 1.0)
    out = integrate_master_equation(rho0, model, params, [1.5])[-1]
    expected = spectral_shift_density(rho0.rho, grid, 1.5)
    assert np.max(np.abs(out.rho - expected)) < 1e-12


def test_master_equation_matches_closed_form(params):
    grid = Grid.ring(16.0, 256)
    rho0 = density_from_wavefunction(make_gaussian_wavefunction(GaussianPacket(sigma=1.0), grid))
    model = GaussianCorr(7.5e-3, 1.0)
    t = 3.0
    integrated = integrate_master_equation(rho0, model, params, [t])[-1]
    integrated.validate(trace_tol=1e-8, check_positivity=False)
    closed = averaged_density_matrix(rho0, DisorderInfluence(model, params), t)
    assert np.max(np.abs(integrated.rho - closed.rho)) < 1e-6


def test_master_equation_exact_mode_agrees_with_rk4(params):
    grid = Grid.ring(16.0, 256)
    rho0 = density_from_wavefunction(make_gaussian_wavefunction(GaussianPacket(sigma=1.0), grid))
    model = PeriodicGaussianCorr(7.5e-3, 1.0, 16.0)
    times = [1.0, 4.0]
    rk4 = integrate_master_equation(rho0, model, params, times, method="rk4")
    exact = integrate_master_equation(rho0, model, params, times, method="exact")
    for a, b in zip(rk4, exact):
        assert np.max(np.abs(a.rho - b.rho)) < 1e-10


def test_master_equation_plateau_purity_in_small_loss_regime(params):
    # c0 small enough that the quadratic correction to the small-loss closed
    # form sits below 1e-4
    from chiralflow.analytic import purity_plateau

    grid = Grid.ring(24.0, 384)
    rho0 = density_from_wavefunction(make_gaussian_wavefunction(GaussianPacket(sigma=1.0), grid))
    c0 = 2e-3
    model = GaussianCorr(c0, 1.0)
    out = integrate_master_equation(rho0, model, params, [9.0])[-1]
    assert purity(out) == pytest.approx(purity_plateau(1.0, c0), abs=1e-4)


def test_master_equation_time_validation(params):
    grid = Grid.ring(16.0, 256)
    rho0 = density_from_wavefunction(make_gaussian_wavefunction(GaussianPacket(sigma=1.0), grid))
    with pytest.raises(ValueError, match="increasing"):
        integrate_master_equation(rho0, GaussianCorr(0.0, 1.0), params, [2.0, 1.0])


# --------------------------------------------------- line-integral moments


def test_line_integral_moments_vanish_for_equal_paths(params):
    model = GaussianCorr(0.5, 1.0)
    out = line_integral_moments(model, params, t=2.0, x=1.0, x_prime=1.0, n_samples=50, seed=1)
    assert out.moments == (0.0, 0.0, 0.0, 0.0)


def test_line_integral_moments_match_gaussian_structure(params):
    c0 = 0.5
    model = GaussianCorr(c0, 1.0)
    t, dx = 20.0, 5.0
    out = line_integral_moments(model, params, t=t, x=dx, x_prime=0.0, n_samples=5000, seed=7)
    m1, m2, m3, m4 = out.moments
    se = out.standard_errors
    F = influence_gaussian(c0, 1.0, params.v, params.hbar, t, dx)
    # order 2: variance is 2 (hbar v)^2 F
    target2 = 2 * (params.hbar * params.v) ** 2 * F
    assert abs(m2 - target2) < 5 * se[1]
    # odd moments vanish for Gaussian disorder
    assert abs(m1) < 5 * se[0]
    assert abs(m3) < 5 * se[2]
    # order 4: Gaussian factorization, raw fourth moment = 3 * variance^2
    assert abs(m4 - 3 * target2**2) < 5 * se[3]
