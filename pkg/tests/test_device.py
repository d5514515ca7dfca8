from __future__ import annotations

import numpy as np
import pytest

from chiralflow.device import beam_splitter_averaged, beam_splitter_probs, gap_condition
from chiralflow.disorder import PeriodicGaussianCorr, derive_seeds, sample_realization
from chiralflow.model import GaussianPacket, Grid, PhysParams, make_gaussian_wavefunction
from chiralflow.propagate import evolve_wavefunction


def test_ideal_beam_splitter():
    assert beam_splitter_probs(1.0, np.pi / 2) == pytest.approx((1.0, 0.0), abs=1e-15)
    assert beam_splitter_probs(0.0, 1.234) == pytest.approx((0.5, 0.5), abs=0)
    assert beam_splitter_probs(1.0, 0.0) == pytest.approx((0.5, 0.5), abs=1e-15)


def test_beam_splitter_probability_conservation_exact():
    rng = np.random.default_rng(3)
    for _ in range(200):
        mag = rng.uniform(0, 1)
        phase = rng.uniform(0, 2 * np.pi)
        phi = rng.uniform(0, 2 * np.pi)
        p_plus, p_minus = beam_splitter_probs(mag * np.exp(1j * phase), phi)
        assert p_plus + p_minus == 1.0  # exact by construction
        assert 0.0 <= p_plus <= 1.0


def test_beam_splitter_rejects_unphysical_overlap():
    with pytest.raises(ValueError, match="exceeds 1"):
        beam_splitter_probs(1.1, 0.0)


def test_averaged_beam_splitter_values():
    assert beam_splitter_averaged(1.0, np.pi / 2) == pytest.approx((1.0, 0.0), abs=1e-15)
    p_plus, p_minus = beam_splitter_averaged(0.9814590, np.pi / 2)
    assert p_plus == pytest.approx(0.9953648, abs=1e-7)
    assert p_plus + p_minus == 1.0
    assert beam_splitter_averaged(0.5, 0.0) == pytest.approx((0.5, 0.5), abs=0)
    with pytest.raises(ValueError, match="purity"):
        beam_splitter_averaged(1.5, 0.0)
    with pytest.raises(ValueError, match="purity"):
        beam_splitter_averaged(0.0, 0.0)


def test_visibility_monotone_in_purity():
    probs = [beam_splitter_averaged(r, np.pi / 2)[0] for r in (0.2, 0.5, 0.8, 1.0)]
    assert np.all(np.diff(probs) > 0)


def test_gap_condition_example():
    check = gap_condition(sigma=1.0, c0=7.5e-3, v=1.0, hbar=1.0, gap=1.0)
    assert check.lhs == pytest.approx(0.265, abs=1e-12)
    assert check.rhs == pytest.approx(1.0, abs=0)
    assert check.satisfied
    assert check.margin == pytest.approx(1 / 0.265, rel=1e-12)


def test_gap_condition_limits():
    assert not gap_condition(1.0, 1e6, 1.0, 1.0, 1.0).satisfied
    assert not gap_condition(1.0, 7.5e-3, 1.0, 1.0, 1e-6).satisfied
    with pytest.raises(ValueError):
        gap_condition(-1.0, 1.0, 1.0, 1.0, 1.0)


def test_averaged_formula_matches_pairwise_monte_carlo():
    # derivation chain: pair overlaps of independently disordered copies,
    # operated with the disorder phase compensated (the magnitude enters),
    # averaged over pairs, against the (r+1)/2 visibility at the pair purity
    grid = Grid.ring(16.0, 256)
    params = PhysParams()
    model = PeriodicGaussianCorr(7.5e-3, 1.0, 16.0)
    psi0 = make_gaussian_wavefunction(GaussianPacket(sigma=1.0), grid)
    m = 200
    t = 8.0
    states = np.empty((m, grid.n), dtype=complex)
    for i, seed in enumerate(derive_seeds(99, m)):
        real = sample_realization(model, grid, seed)
        states[i] = evolve_wavefunction(psi0, real, params, t).amp
    gram = (states @ states.conj().T) * grid.dx
    mags = np.abs(gram)
    off = ~np.eye(m, dtype=bool)
    phi = np.pi / 2
    p_plus_pairs = np.array(
        [beam_splitter_probs(o, phi)[0] for o in mags[off].ravel()]
    )
    mc_mean = p_plus_pairs.mean()
    r_pair = float((mags[off] ** 2).mean())
    expected = beam_splitter_averaged(r_pair, phi)[0]
    # bootstrap over realizations for the pair-mean standard error
    rng = np.random.default_rng(7)
    boots = np.empty(100)
    sq = mags**2
    for b in range(100):
        idx = rng.integers(0, m, size=m)
        sub = mags[np.ix_(idx, idx)]
        mask = ~np.eye(m, dtype=bool)
        boots[b] = 0.5 * (1 + sub[mask].mean() * np.sin(phi))
    se = boots.std()
    assert abs(mc_mean - expected) <= 3 * se + 1e-12
