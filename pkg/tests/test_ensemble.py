from __future__ import annotations

import numpy as np
import pytest

from chiralflow.analytic import DisorderInfluence
from chiralflow.disorder import GaussianCorr, PeriodicGaussianCorr, sample_realization
from chiralflow.ensemble import (
    ENSEMBLE_CSV_HEADER,
    EnsembleConfig,
    compare_with_analytic,
    ergodic_check,
    rho_snapshot_to_txt,
    run_ensemble,
    stats_to_csv,
)
from chiralflow.model import GaussianPacket, Grid, PhysParams, purity
from conftest import circ_dist


def small_config(c0=7.5e-3, m=120, seed=2024, length=16.0, n=256, sigma=1.0, times=(0.0, 2.0, 8.0)):
    return EnsembleConfig(
        model=PeriodicGaussianCorr(c0, 1.0, length),
        packet=GaussianPacket(sigma=sigma),
        grid=Grid.ring(length, n),
        params=PhysParams(),
        times=times,
        n_realizations=m,
        master_seed=seed,
    )


def test_config_validation():
    with pytest.raises(ValueError, match="2 realizations"):
        small_config(m=1)
    with pytest.raises(ValueError, match="periodic"):
        EnsembleConfig(
            model=GaussianCorr(1e-2, 1.0),
            packet=GaussianPacket(sigma=1.0),
            grid=Grid(x_min=0.0, n=64, dx=0.5, periodic=False),
            params=PhysParams(),
            times=(0.0, 1.0),
        )


def test_no_disorder_keeps_unit_purity():
    cfg = small_config(c0=0.0, m=40)
    stats = run_ensemble(cfg)
    assert np.all(np.abs(stats.r_mc - 1.0) < 1e-10)
    assert np.all(np.abs(stats.r_analytic - 1.0) < 1e-12)


def test_initial_purity_is_one():
    stats = run_ensemble(small_config(m=60))
    assert abs(stats.r_mc[0] - 1.0) < 1e-10
    assert stats.r_mc_se[0] < 1e-12


def test_bitwise_determinism_across_thread_counts():
    cfg = small_config(m=96)
    a = run_ensemble(cfg, threads=1, rho_snapshot_times=(8.0,))
    b = run_ensemble(cfg, threads=3, rho_snapshot_times=(8.0,))
    assert np.array_equal(a.r_mc, b.r_mc)
    assert np.array_equal(a.r_mc_se, b.r_mc_se)
    assert np.array_equal(a.var_p_mc, b.var_p_mc)
    assert np.array_equal(a.mean_x_mc, b.mean_x_mc)
    assert np.array_equal(a.avg_rho_snapshots[0][1].rho, b.avg_rho_snapshots[0][1].rho)


def test_seed_changes_results():
    a = run_ensemble(small_config(seed=1, m=40))
    b = run_ensemble(small_config(seed=2, m=40))
    assert not np.array_equal(a.r_mc[1:], b.r_mc[1:])


def test_purity_tracks_analytic_curve():
    cfg = small_config(m=200, times=tuple(np.linspace(0.0, 8.0, 9)))
    stats = run_ensemble(cfg)
    assert np.all(stats.r_mc <= 1 + 1e-12)
    gaps = np.abs(stats.r_mc - stats.r_analytic)
    assert np.all(gaps <= 5 * stats.r_mc_se + 1e-12)


def test_mean_and_variance_invariants():
    cfg = small_config(m=100, times=(0.0, 3.0, 7.0))
    stats = run_ensemble(cfg)
    for i, t in enumerate(stats.times):
        assert circ_dist(stats.mean_x_mc[i], t, 16.0) <= 3 * stats.mean_x_se[i] + 1e-8
        assert abs(stats.var_x_mc[i] - stats.var_x_mc[0]) <= 3 * stats.var_x_se[i] + 1e-8
    assert stats.var_x_mc[0] == pytest.approx(1.0, abs=1e-4)


def test_revival_on_the_ring():
    cfg = small_config(m=80, length=12.0, n=192, times=(0.0, 6.0, 12.0))
    stats = run_ensemble(cfg)
    assert stats.r_mc[1] < 1.0 - 5 * stats.r_mc_se[1]  # genuinely dephased mid cycle
    assert stats.r_mc[2] >= 1.0 - 3 * stats.r_mc_se[2] - 1e-10
    assert stats.var_p_mc[2] == pytest.approx(stats.var_p_mc[0], abs=1e-9)


def test_momentum_variance_matches_analytic():
    cfg = small_config(m=150, times=(0.0, 1.0, 4.0, 8.0))
    stats = run_ensemble(cfg)
    for i in range(len(stats.times)):
        assert abs(stats.var_p_mc[i] - stats.var_p_analytic[i]) <= 3 * stats.var_p_mc_se[i] + 1e-10


def test_rho_accumulation_and_memory_bound():
    cfg = small_config(m=40, times=(0.0, 2.0))
    stats = run_ensemble(cfg, rho_snapshot_times=(2.0,))
    t, rho = stats.avg_rho_snapshots[0]
    assert t == 2.0
    rho.validate(check_positivity=True)
    assert purity(rho) == pytest.approx(stats.r_mc[1], abs=1e-12)
    with pytest.raises(ValueError, match="not in the time grid"):
        run_ensemble(cfg, rho_snapshot_times=(1.0,))
    big = EnsembleConfig(
        model=PeriodicGaussianCorr(7.5e-3, 1.0, 16.0),
        packet=GaussianPacket(sigma=1.0),
        grid=Grid.ring(16.0, 8192),
        params=PhysParams(),
        times=(0.0,),
        n_realizations=2,
    )
    with pytest.raises(ValueError, match="O\\(n\\^2\\)"):
        run_ensemble(big, rho_snapshot_times=(0.0,))


def test_compare_with_analytic_gaussian_exactness_small():
    grid = Grid.ring(24.0, 256)
    cfg = EnsembleConfig(
        model=GaussianCorr(7.5e-3, 1.0),
        packet=GaussianPacket(sigma=1.0),
        grid=grid,
        params=PhysParams(),
        times=(0.0, 5.0),
        n_realizations=300,
        master_seed=31,
    )
    stats = run_ensemble(cfg, rho_snapshot_times=(5.0,))
    report = compare_with_analytic(stats, DisorderInfluence(GaussianCorr(7.5e-3, 1.0), PhysParams()))
    assert report.elementwise_pass, f"max ratio {report.max_dev_ratio}"
    assert report.purity_gap_pass
    assert not report.insufficient_statistics
    assert report.passed


def test_compare_flags_insufficient_statistics():
    cfg = small_config(m=2, times=(0.0, 4.0))
    stats = run_ensemble(cfg, rho_snapshot_times=(4.0,))
    report = compare_with_analytic(
        stats, DisorderInfluence(PeriodicGaussianCorr(7.5e-3, 1.0, 16.0), PhysParams())
    )
    assert report.insufficient_statistics
    assert not report.passed


def test_compare_free_case_zero_deviation():
    cfg = small_config(c0=0.0, m=30, times=(0.0, 4.0))
    stats = run_ensemble(cfg, rho_snapshot_times=(4.0,))
    report = compare_with_analytic(
        stats, DisorderInfluence(PeriodicGaussianCorr(0.0, 1.0, 16.0), PhysParams())
    )
    assert max(report.max_abs_dev) < 1e-12
    assert report.purity_gap_pass
    assert not report.insufficient_statistics


def test_ergodic_check_windows():
    grid = Grid.ring(200.0, 4096)
    model = PeriodicGaussianCorr(7.5e-3, 1.0, 200.0)
    real = sample_realization(model, grid, seed=6)
    packet = GaussianPacket(sigma=1.0)
    stats = ergodic_check(real, model, packet, PhysParams(), [0.0, 10.0])
    assert stats.mean_sq_overlap[0] == 1.0
    assert stats.analytic[0] == 1.0
    assert stats.n_windows[1] >= 20
    assert abs(stats.mean_sq_overlap[1] - stats.analytic[1]) <= 5 * stats.se[1]
    assert stats.passed()


def test_ergodic_check_rejects_short_separations():
    grid = Grid.ring(200.0, 2048)
    model = PeriodicGaussianCorr(7.5e-3, 1.0, 200.0)
    real = sample_realization(model, grid, seed=6)
    with pytest.raises(ValueError, match="3\\*ell"):
        ergodic_check(real, model, GaussianPacket(sigma=1.0), PhysParams(), [1.0])


def test_ergodic_check_free_field():
    grid = Grid.ring(100.0, 2048)
    model = PeriodicGaussianCorr(0.0, 1.0, 100.0)
    real = sample_realization(model, grid, seed=6)
    stats = ergodic_check(real, model, GaussianPacket(sigma=1.0), PhysParams(), [10.0, 25.0])
    assert np.all(np.abs(stats.mean_sq_overlap - 1.0) < 1e-10)


def test_csv_export_contract(tmp_path):
    cfg = small_config(m=30, times=(0.0, 2.0))
    stats = run_ensemble(cfg, rho_snapshot_times=(2.0,))
    path = stats_to_csv(stats, tmp_path / "out.csv")
    lines = path.read_bytes().decode().splitlines()
    assert lines[0] == ENSEMBLE_CSV_HEADER
    assert len(lines) == len(stats.times) + 1
    # byte determinism
    again = stats_to_csv(stats, tmp_path / "out2.csv")
    assert path.read_bytes() == again.read_bytes()
    dump = rho_snapshot_to_txt(stats.avg_rho_snapshots[0][1], tmp_path / "rho.txt")
    rows = dump.read_bytes().decode().splitlines()
    assert len(rows) == cfg.grid.n
    assert len(rows[0].split(",")) == 2 * cfg.grid.n
