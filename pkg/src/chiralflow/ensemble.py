"""Monte Carlo engine: propagate disorder ensembles and compare with theory.

Realizations evolve independently (the per-realization dynamics is exact, so
every snapshot is reached in one step from t = 0).  The purity of the
averaged state is accumulated through the pairwise-overlap identity

    Tr[rho_MC(t)^2] = (1/M^2) sum_{e,e'} |<psi_e(t)|psi_e'(t)>|^2,

which gives dense purity time series without ever forming the n x n matrix;
full averaged density matrices are accumulated only at requested snapshot
times.  Standard errors come from a bootstrap over realizations with a fixed
resample seed.  The engine is deterministic: identical configurations give
bitwise-identical results for any worker count, because every realization is
derived from a counter-split sub-seed and reductions run in a fixed order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytic import (
    DisorderInfluence,
    analytic_purity_series,
    averaged_density_matrix,
    purity_plateau,
)
from .disorder import (
    CorrelationModel,
    DeltaCorr,
    as_ring_model,
    derive_seeds,
    momentum_transfer_weights,
    sample_realization,
    split_seed,
)
from .model import (
    DensityMatrix,
    GaussianPacket,
    Grid,
    PhysParams,
    WaveFunction,
    density_from_wavefunction,
    make_gaussian_wavefunction,
    spectral_shift,
)
from .propagate import RealizationPropagator
from .report import format_float

__all__ = [
    "EnsembleConfig",
    "EnsembleStats",
    "ComparisonReport",
    "ErgodicStats",
    "run_ensemble",
    "compare_with_analytic",
    "ergodic_check",
    "stats_to_csv",
    "rho_snapshot_to_txt",
]

ENSEMBLE_CSV_HEADER = "t,r_mc,r_mc_se,r_analytic,r_plateau,var_p_mc,var_p_analytic,mean_x_mc"

_BOOTSTRAP_RESAMPLES = 200
_BOOTSTRAP_TAG = 0x626F6F74  # fixed tag mixed into the master seed for resampling
_BLOCK = 64  # realizations per work unit; fixed so results never depend on threads
_RHO_MAX_N = 4096  # full rho accumulation is O(n^2); keep it desk sized


@dataclass(frozen=True)
class EnsembleConfig:
    model: CorrelationModel
    packet: GaussianPacket
    grid: Grid
    params: PhysParams
    times: tuple[float, ...]
    n_realizations: int = 500
    master_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if self.n_realizations < 2:
            raise ValueError("need at least 2 realizations")
        if not self.grid.periodic:
            raise ValueError("ensemble runs require a periodic grid")


@dataclass(frozen=True)
class EnsembleStats:
    """Monte Carlo and analytic time series of the disorder-averaged state."""

    config: EnsembleConfig
    times: np.ndarray
    r_mc: np.ndarray
    r_mc_se: np.ndarray
    r_analytic: np.ndarray
    r_plateau: float
    var_p_mc: np.ndarray
    var_p_mc_se: np.ndarray
    var_p_analytic: np.ndarray
    mean_x_mc: np.ndarray
    mean_x_se: np.ndarray
    var_x_mc: np.ndarray
    var_x_se: np.ndarray
    avg_rho_snapshots: tuple[tuple[float, DensityMatrix], ...] = ()
    psi_snapshots: tuple[tuple[float, np.ndarray], ...] = field(default=(), repr=False)


def _momentum_grid(grid: Grid, hbar: float) -> tuple[np.ndarray, float]:
    return grid.momenta(hbar), 2 * np.pi * hbar / grid.length


def _initial_var_p(psi0: WaveFunction, hbar: float) -> float:
    p, dp = _momentum_grid(psi0.grid, hbar)
    dist = np.abs(np.fft.fft(psi0.amp)) ** 2 * psi0.grid.dx**2 / (2 * np.pi * hbar)
    w = dist * dp
    w /= w.sum()
    mean = float(np.sum(w * p))
    return float(np.sum(w * (p - mean) ** 2))


def _analytic_var_p_series(
    psi0: WaveFunction, model: CorrelationModel, params: PhysParams, times: np.ndarray
) -> np.ndarray:
    """Exact ring curve: discretized initial variance plus the mode-sum growth."""
    var0 = _initial_var_p(psi0, params.hbar)
    if isinstance(model, DeltaCorr):
        return np.full(len(times), np.nan)
    ring = as_ring_model(model, psi0.grid)
    q, g = momentum_transfer_weights(ring, params.hbar)
    grow = (4 / params.v**2) * (
        g[None, :] * np.sin(np.outer(params.v * times, q) / (2 * params.hbar)) ** 2
    ).sum(axis=1)
    return var0 + grow


def _batch_circular_moments(dens: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise circular position mean/variance for a (m, n) density matrix."""
    w = dens / dens.sum(axis=1, keepdims=True)
    theta = 2 * np.pi * (grid.x - grid.x_min) / grid.length
    z = w @ np.exp(1j * theta)
    center = grid.x_min + grid.length * (np.angle(z) % (2 * np.pi)) / (2 * np.pi)
    delta = grid.x[None, :] - center[:, None]
    delta -= grid.length * np.round(delta / grid.length)
    off = (w * delta).sum(axis=1)
    var = (w * (delta - off[:, None]) ** 2).sum(axis=1)
    return center + off, var


def _bootstrap_counts(master_seed: int, m: int) -> np.ndarray:
    rng = np.random.default_rng(np.uint64(split_seed(master_seed, _BOOTSTRAP_TAG)))
    counts = np.empty((_BOOTSTRAP_RESAMPLES, m))
    for r in range(_BOOTSTRAP_RESAMPLES):
        counts[r] = np.bincount(rng.integers(0, m, size=m), minlength=m)
    return counts


def run_ensemble(
    cfg: EnsembleConfig,
    threads: int = 1,
    rho_snapshot_times: tuple[float, ...] = (),
) -> EnsembleStats:
    """Propagate the disorder ensemble and accumulate averaged-state series.

    rho_snapshot_times selects the times (must be members of cfg.times) at
    which the full averaged density matrix and the per-realization states are
    kept for elementwise comparisons.
    """
    grid, params, m = cfg.grid, cfg.params, cfg.n_realizations
    if rho_snapshot_times and grid.n > _RHO_MAX_N:
        raise ValueError(
            f"full rho accumulation is O(n^2) and capped at n = {_RHO_MAX_N}; got {grid.n}"
        )
    snap_idx: dict[int, float] = {}
    for ts in rho_snapshot_times:
        hits = [i for i, t in enumerate(cfg.times) if abs(t - ts) <= 1e-12]
        if not hits:
            raise ValueError(f"rho snapshot time {ts} is not in the time grid")
        snap_idx[hits[0]] = cfg.times[hits[0]]

    psi0 = make_gaussian_wavefunction(cfg.packet, grid)
    psi0_f = np.fft.fft(psi0.amp)
    kappa = grid.wavenumbers
    seeds = derive_seeds(cfg.master_seed, m)

    props: list[RealizationPropagator] = [None] * m  # type: ignore[list-item]

    def build_block(block: range) -> None:
        for e in block:
            real = sample_realization(cfg.model, grid, seeds[e], params.hbar)
            props[e] = RealizationPropagator(real, params)

    blocks = [range(lo, min(lo + _BLOCK, m)) for lo in range(0, m, _BLOCK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(build_block, blocks))
    else:
        for b in blocks:
            build_block(b)

    times = np.asarray(cfg.times, dtype=float)
    n_t = len(times)
    counts = _bootstrap_counts(cfg.master_seed, m)
    p, dp = _momentum_grid(grid, params.hbar)
    p2 = p**2

    r_mc = np.empty(n_t)
    r_se = np.empty(n_t)
    var_p_mc = np.empty(n_t)
    var_p_se = np.empty(n_t)
    mean_x = np.empty(n_t)
    mean_x_se = np.empty(n_t)
    var_x = np.empty(n_t)
    var_x_se = np.empty(n_t)
    rho_snaps: list[tuple[float, DensityMatrix]] = []
    psi_snaps: list[tuple[float, np.ndarray]] = []

    X = np.empty((m, grid.n), dtype=complex)

    def fill_block(block: range, shifted: np.ndarray, t: float) -> None:
        for e in block:
            X[e] = shifted * props[e].phases(t)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for it, t in enumerate(times):
            shifted = spectral_shift(psi0.amp, grid, params.v * t)
            if pool is not None:
                list(pool.map(lambda b: fill_block(b, shifted, t), blocks))
            else:
                for b in blocks:
                    fill_block(b, shifted, t)

            gram = (X @ X.conj().T) * grid.dx
            if not np.isfinite(gram).all():
                bad = np.flatnonzero(~np.isfinite(X).all(axis=1))
                raise FloatingPointError(
                    f"non-finite state at t={t} in realization(s) {bad[:5].tolist()}"
                )
            overlaps_sq = np.abs(gram) ** 2
            r_mc[it] = overlaps_sq.mean()
            boot = ((counts @ overlaps_sq) * counts).sum(axis=1) / m**2
            r_se[it] = boot.std()

            mom = np.abs(np.fft.fft(X, axis=1)) ** 2 * grid.dx**2 / (2 * np.pi * params.hbar)
            pbar = mom.mean(axis=0) * dp
            tot = pbar.sum()
            mu = float(pbar @ p) / tot
            var_p_mc[it] = float(pbar @ p2) / tot - mu**2
            boot_means = (counts @ mom) * (dp / m)
            bt = boot_means.sum(axis=1)
            bmu = (boot_means @ p) / bt
            var_p_se[it] = ((boot_means @ p2) / bt - bmu**2).std()

            dens_each = np.abs(X) ** 2 * grid.dx
            mx, vx = _batch_circular_moments(dens_each, grid)
            # realization means may straddle the seam; average on the circle
            ang = 2 * np.pi * (mx - grid.x_min) / grid.length
            zbar = np.exp(1j * ang).mean()
            mean_x[it] = grid.x_min + grid.length * (np.angle(zbar) % (2 * np.pi)) / (2 * np.pi)
            dev = mx - mean_x[it]
            dev -= grid.length * np.round(dev / grid.length)
            mean_x[it] += dev.mean()
            mean_x_se[it] = dev.std(ddof=1) / np.sqrt(m)
            var_x[it] = vx.mean()
            var_x_se[it] = vx.std(ddof=1) / np.sqrt(m)

            if it in snap_idx:
                rho_bar = (X.T @ X.conj()) / m
                rho_snaps.append((t, DensityMatrix(grid, rho_bar)))
                psi_snaps.append((t, X.copy()))
    finally:
        if pool is not None:
            pool.shutdown()

    ring = as_ring_model(cfg.model, grid)
    influence = DisorderInfluence(ring, params)
    r_analytic = analytic_purity_series(psi0, influence, times)
    var_p_analytic = _analytic_var_p_series(psi0, cfg.model, params, times)
    if isinstance(cfg.model, DeltaCorr):
        plateau = float("nan")
    else:
        plateau = purity_plateau(cfg.packet.sigma, cfg.model.c0, cfg.model.ell, params.v, params.hbar)

    return EnsembleStats(
        config=cfg,
        times=times,
        r_mc=r_mc,
        r_mc_se=r_se,
        r_analytic=r_analytic,
        r_plateau=plateau,
        var_p_mc=var_p_mc,
        var_p_mc_se=var_p_se,
        var_p_analytic=var_p_analytic,
        mean_x_mc=mean_x,
        mean_x_se=mean_x_se,
        var_x_mc=var_x,
        var_x_se=var_x_se,
        avg_rho_snapshots=tuple(rho_snaps),
        psi_snapshots=tuple(psi_snaps),
    )


@dataclass(frozen=True)
class ComparisonReport:
    """Monte Carlo vs closed-form comparison with 5-sigma pass/fail gates."""

    snapshot_times: tuple[float, ...]
    max_abs_dev: tuple[float, ...]
    max_dev_ratio: tuple[float, ...]  # |dev| / (5 SE + floor), elementwise max
    elementwise_pass: bool
    purity_gaps: np.ndarray
    purity_gap_pass: bool
    insufficient_statistics: bool

    @property
    def passed(self) -> bool:
        return self.elementwise_pass and self.purity_gap_pass and not self.insufficient_statistics


def compare_with_analytic(stats: EnsembleStats, influence: DisorderInfluence) -> ComparisonReport:
    """Gauge ρ_MC against the closed-form average.

    Elementwise deviations at the stored snapshots are measured against a
    bootstrap standard error per matrix element (5 SE gate, with a 1e-12
    floor for elements with no support); purity gaps are gated at 5 SE per
    time.  Degenerate ensembles (too few realizations, or errors that dwarf
    the predicted loss) are flagged as insufficient statistics.
    """
    cfg = stats.config
    if influence.params != cfg.params:
        raise ValueError("influence parameters do not match the ensemble config")
    m = cfg.n_realizations
    psi0 = make_gaussian_wavefunction(cfg.packet, cfg.grid)
    rho0 = density_from_wavefunction(psi0)
    counts = _bootstrap_counts(cfg.master_seed, m)

    snap_times: list[float] = []
    max_devs: list[float] = []
    ratios: list[float] = []
    floor = 1e-12
    for (t, rho_mc), (_, psis) in zip(stats.avg_rho_snapshots, stats.psi_snapshots):
        rho_an = averaged_density_matrix(rho0, influence, t)
        dev = np.abs(rho_mc.rho - rho_an.rho)
        sum_re = np.zeros_like(dev)
        sum_re2 = np.zeros_like(dev)
        sum_im = np.zeros_like(dev)
        sum_im2 = np.zeros_like(dev)
        for c in counts:
            rho_b = ((c[:, None] * psis).T @ psis.conj()) / m
            sum_re += rho_b.real
            sum_re2 += rho_b.real**2
            sum_im += rho_b.imag
            sum_im2 += rho_b.imag**2
        nres = len(counts)
        var = (sum_re2 / nres - (sum_re / nres) ** 2) + (sum_im2 / nres - (sum_im / nres) ** 2)
        se = np.sqrt(np.maximum(var, 0.0))
        ratio = dev / (5 * se + floor)
        snap_times.append(t)
        max_devs.append(float(dev.max()))
        ratios.append(float(ratio.max()))

    gaps = np.abs(stats.r_mc - stats.r_analytic)
    purity_ok = bool(np.all(gaps <= 5 * stats.r_mc_se + floor))

    max_loss = float(max(0.0, 1.0 - np.min(stats.r_analytic)))
    weak = m < 30 or (max_loss > 0 and 5 * float(np.median(stats.r_mc_se)) > max_loss)

    return ComparisonReport(
        snapshot_times=tuple(snap_times),
        max_abs_dev=tuple(max_devs),
        max_dev_ratio=tuple(ratios),
        elementwise_pass=all(r <= 1.0 for r in ratios),
        purity_gaps=gaps,
        purity_gap_pass=purity_ok,
        insufficient_statistics=weak,
    )


@dataclass(frozen=True)
class ErgodicStats:
    """Windowed single-realization overlaps vs the ensemble coherence decay."""

    separations: np.ndarray
    mean_sq_overlap: np.ndarray
    se: np.ndarray
    analytic: np.ndarray
    n_windows: np.ndarray

    def passed(self, n_sigma: float = 5.0) -> bool:
        return bool(
            np.all(np.abs(self.mean_sq_overlap - self.analytic) <= n_sigma * self.se)
        )


def ergodic_check(
    real,
    model: CorrelationModel,
    packet: GaussianPacket,
    params: PhysParams,
    separations,
) -> ErgodicStats:
    """Compare windowed overlaps in one realization with the ensemble decay.

    For each separation s the packet is launched from ring positions w*s and
    (w+1)*s and evolved over one stretch of potential each (time s/v); the
    second state is translated back before the overlap, so each window pair
    mimics two disorder histories.  For s much larger than the correlation
    length the window mean of |overlap|^2 approaches the pair average of the
    ensemble, i.e. the purity of the averaged state at that flight time.
    """
    grid = real.grid
    ell = getattr(model, "ell", None)
    if ell is None:
        raise ValueError("ergodic check needs a finite correlation length")
    separations = np.asarray(separations, dtype=float)
    if np.any((separations != 0) & (separations < 3 * ell)):
        # zero separation is the trivial identity case and stays allowed
        raise ValueError(
            f"separations below 3*ell = {3 * ell} rejected: the potential is "
            "still correlated and memory is not yet lost"
        )
    ring = as_ring_model(model, grid)
    influence = DisorderInfluence(ring, params)
    prop = RealizationPropagator(real, params)

    mean_sq = np.empty(len(separations))
    ses = np.empty(len(separations))
    analytic = np.empty(len(separations))
    n_windows = np.empty(len(separations), dtype=int)
    for i, s in enumerate(separations):
        if s == 0:
            mean_sq[i], ses[i], analytic[i], n_windows[i] = 1.0, 0.0, 1.0, 1
            continue
        w_count = int(np.floor(grid.length / s))
        if w_count < 2:
            raise ValueError(f"ring too short for separation {s}")
        t_flight = s / params.v
        vals = np.empty(w_count)
        shift_op = np.exp(-1j * grid.wavenumbers * params.v * t_flight)
        phase = prop.phases(t_flight)
        for w in range(w_count):
            a = make_gaussian_wavefunction(
                GaussianPacket(packet.sigma, grid.x_min + w * s, packet.p0), grid
            )
            b = make_gaussian_wavefunction(
                GaussianPacket(packet.sigma, grid.x_min + (w + 1) * s, packet.p0), grid
            )
            psi_a = np.fft.ifft(np.fft.fft(a.amp) * shift_op) * phase
            psi_b = np.fft.ifft(np.fft.fft(b.amp) * shift_op) * phase
            # translate the second history back by s before comparing
            psi_b = np.fft.ifft(np.fft.fft(psi_b) * np.exp(1j * grid.wavenumbers * s))
            vals[w] = abs(grid.dx * np.vdot(psi_a, psi_b)) ** 2
        mean_sq[i] = vals.mean()
        ses[i] = vals.std(ddof=1) / np.sqrt(w_count)
        psi_ref = make_gaussian_wavefunction(packet, grid)
        analytic[i] = analytic_purity_series(psi_ref, influence, [t_flight])[0]
        n_windows[i] = w_count
    return ErgodicStats(
        separations=separations,
        mean_sq_overlap=mean_sq,
        se=ses,
        analytic=analytic,
        n_windows=n_windows,
    )


def stats_to_csv(stats: EnsembleStats, path: str | Path) -> Path:
    """Results export with the documented column contract."""
    path = Path(path)
    lines = [ENSEMBLE_CSV_HEADER]
    for i, t in enumerate(stats.times):
        row = (
            t,
            stats.r_mc[i],
            stats.r_mc_se[i],
            stats.r_analytic[i],
            stats.r_plateau,
            stats.var_p_mc[i],
            stats.var_p_analytic[i],
            stats.mean_x_mc[i],
        )
        lines.append(",".join(format_float(v) for v in row))
    path.write_bytes(("\n".join(lines) + "\n").encode())
    return path


def rho_snapshot_to_txt(rho: DensityMatrix, path: str | Path) -> Path:
    """Text dump of a density matrix: row-major re,im pairs per matrix row."""
    path = Path(path)
    lines = []
    for row in rho.rho:
        parts = []
        for z in row:
            parts.append(format_float(z.real))
            parts.append(format_float(z.imag))
        lines.append(",".join(parts))
    path.write_bytes(("\n".join(lines) + "\n").encode())
    return path
