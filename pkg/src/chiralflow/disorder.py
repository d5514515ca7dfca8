"""Disorder statistics: correlation models, momentum-transfer densities,
and spectral synthesis of mean-zero Gaussian random potentials.

Fields are synthesized on periodic grids by drawing independent complex
Gaussian amplitudes per Fourier mode, with mode variances taken from the
discrete momentum-transfer weights.  The synthesized ensemble then has the
target two-point correlation exactly (no circulant-embedding failure modes),
and the antiderivative Phi needed for the exact phase integrals comes from
the spectral antiderivative of the band-limited field.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .model import Grid
from .report import format_float

__all__ = [
    "GaussianCorr",
    "DeltaCorr",
    "PeriodicGaussianCorr",
    "CorrelationModel",
    "DisorderRealization",
    "FieldStats",
    "correlation",
    "momentum_transfer",
    "momentum_transfer_weights",
    "grid_mode_variances",
    "as_ring_model",
    "sample_realization",
    "accumulate_stats",
    "spectral_antiderivative",
    "derive_seeds",
    "split_seed",
    "realization_to_csv",
]

# momentum cutoff for truncated Gaussian spectra: exp(-(q ell/2 hbar)^2)
# drops below 4e-16 for q > 12 hbar/ell; one extra factor for margin
_Q_CUT_FACTOR = 13.0


@dataclass(frozen=True)
class GaussianCorr:
    """C(x) = c0 * exp(-(x/ell)^2); c0 is an energy squared."""

    c0: float
    ell: float

    def __post_init__(self) -> None:
        if self.c0 < 0:
            raise ValueError(f"c0 must be nonnegative, got {self.c0}")
        if not self.ell > 0:
            raise ValueError(f"ell must be positive, got {self.ell}")


@dataclass(frozen=True)
class DeltaCorr:
    """C(x) = c0 * delta(x); c0 is an energy squared times a length."""

    c0: float

    def __post_init__(self) -> None:
        if self.c0 < 0:
            raise ValueError(f"c0 must be nonnegative, got {self.c0}")


@dataclass(frozen=True)
class PeriodicGaussianCorr:
    """Ring correlations C(x) = c0 * sum_m exp(-((x + m L)/ell)^2)."""

    c0: float
    ell: float
    length: float

    def __post_init__(self) -> None:
        if self.c0 < 0:
            raise ValueError(f"c0 must be nonnegative, got {self.c0}")
        if not self.ell > 0:
            raise ValueError(f"ell must be positive, got {self.ell}")
        if not self.length > 4 * self.ell:
            raise ValueError(
                f"ring length {self.length} must exceed 4*ell = {4 * self.ell} "
                "to keep the wrap-around truncation below 1e-7 relative"
            )


CorrelationModel = Union[GaussianCorr, DeltaCorr, PeriodicGaussianCorr]


def correlation(model: CorrelationModel, x) -> np.ndarray | float:
    """Two-point correlation C(x); the delta model has no pointwise value."""
    if isinstance(model, DeltaCorr):
        raise ValueError(
            "delta correlations are distribution-valued; no pointwise C(x) "
            "(use momentum_transfer instead)"
        )
    x = np.asarray(x, dtype=float)
    if isinstance(model, GaussianCorr):
        out = model.c0 * np.exp(-((x / model.ell) ** 2))
    else:
        m_max = int(np.ceil(6 * model.ell / model.length)) + 1
        m = np.arange(-m_max, m_max + 1)
        out = model.c0 * np.exp(
            -(((x[..., None] + m * model.length) / model.ell) ** 2)
        ).sum(axis=-1)
    return out if out.ndim else float(out)


def momentum_transfer(model: CorrelationModel, q=None, hbar: float = 1.0):
    """Momentum-transfer density G(q) = (1/2 pi hbar) FT of C.

    Continuum models return the pointwise density; the periodic model has a
    discrete spectrum and returns the weight list (q_n, g_n) with
    sum(g_n) = C(0).
    """
    if isinstance(model, PeriodicGaussianCorr):
        return momentum_transfer_weights(model, hbar)
    if q is None:
        raise ValueError("q required for continuum correlation models")
    q = np.asarray(q, dtype=float)
    if isinstance(model, DeltaCorr):
        out = np.full_like(q, model.c0 / (2 * np.pi * hbar))
    else:
        out = (
            model.c0
            * model.ell
            / (2 * np.sqrt(np.pi) * hbar)
            * np.exp(-((q * model.ell / (2 * hbar)) ** 2))
        )
    return out if out.ndim else float(out)


def momentum_transfer_weights(
    model: PeriodicGaussianCorr, hbar: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Discrete weights g_n at q_n = 2 pi hbar n / L, g_n = (2 pi hbar/L) G(q_n)."""
    n_max = int(np.ceil(_Q_CUT_FACTOR * model.length / (2 * np.pi * model.ell))) + 1
    n = np.arange(-n_max, n_max + 1)
    q = 2 * np.pi * hbar * n / model.length
    g = (
        model.c0
        * model.ell
        * np.sqrt(np.pi)
        / model.length
        * np.exp(-((q * model.ell / (2 * hbar)) ** 2))
    )
    return q, g


def as_ring_model(model: CorrelationModel, grid: Grid) -> CorrelationModel:
    """Map a correlation model onto the grid's ring.

    Gaussian correlations become one period of the periodized model (exact up
    to the exp(-(L/ell)^2) truncation); periodic models must match the grid
    circumference; delta correlations pass through unchanged.
    """
    if isinstance(model, DeltaCorr):
        return model
    return _as_periodic(model, grid)


def _as_periodic(model: CorrelationModel, grid: Grid) -> PeriodicGaussianCorr:
    if isinstance(model, PeriodicGaussianCorr):
        if abs(model.length - grid.length) > 1e-10 * grid.length:
            raise ValueError(
                f"model period {model.length} does not match grid length {grid.length}"
            )
        return model
    if isinstance(model, GaussianCorr):
        if grid.length <= 8 * model.ell:
            raise ValueError(
                f"grid length {grid.length} must exceed 8*ell = {8 * model.ell} "
                "to treat Gaussian correlations as one ring period"
            )
        # one period of the periodized model; exact up to exp(-(L/ell)^2)
        return PeriodicGaussianCorr(model.c0, model.ell, grid.length)
    raise TypeError(f"unsupported model {model!r}")


def grid_mode_variances(model: CorrelationModel, grid: Grid, hbar: float = 1.0) -> np.ndarray:
    """Per-mode variances g(q_k) on the grid's momentum lattice (fft order)."""
    if not grid.periodic:
        raise ValueError("disorder synthesis requires a periodic grid")
    q = grid.momenta(hbar)
    if isinstance(model, DeltaCorr):
        # flat up to the grid Nyquist momentum; per-cell variance c0/dx
        return np.full(grid.n, model.c0 / grid.length)
    per = _as_periodic(model, grid)
    return (
        per.c0
        * per.ell
        * np.sqrt(np.pi)
        / per.length
        * np.exp(-((q * per.ell / (2 * hbar)) ** 2))
    )


@dataclass(frozen=True)
class DisorderRealization:
    """One sampled potential on a ring plus its exact antiderivative.

    Phi[i] integrates the band-limited interpolant of V from x_min to x_i;
    the full-loop integral is mean(V) * length (the zero mode), which callers
    add per winding when a path wraps the ring.
    """

    grid: Grid
    V: np.ndarray
    Phi: np.ndarray
    seed: int

    def loop_integral(self) -> float:
        return float(np.mean(self.V) * self.grid.length)


@dataclass(frozen=True)
class FieldStats:
    """Ensemble statistics of sampled fields, per circular lag."""

    sample_mean: float
    mean_se: float
    lags: np.ndarray
    sample_cov: np.ndarray
    cov_se: np.ndarray
    n_samples: int


_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def split_seed(master_seed: int, index: int) -> int:
    """Counter-based sub-seed: realization index hashed into the master seed.

    Order independent, so realizations can be drawn on any worker in any
    order with identical results.
    """
    return _splitmix64((master_seed ^ _splitmix64(index)) & _MASK64)


def derive_seeds(master_seed: int, count: int) -> list[int]:
    return [split_seed(master_seed, i) for i in range(count)]


def spectral_antiderivative(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Antiderivative of the band-limited interpolant, zero at x_min.

    The zero mode contributes mean(values) * (x - x_min); periodic modes are
    divided by i*kappa.  Exact for band-limited fields, so consecutive
    differences equal the per-cell quadrature of the interpolant.
    """
    if not grid.periodic:
        raise ValueError("spectral antiderivative requires a periodic grid")
    a = np.fft.fft(values) / grid.n
    kappa = grid.wavenumbers
    coef = np.zeros(grid.n, dtype=complex)
    nz = kappa != 0
    coef[nz] = a[nz] * grid.n / (1j * kappa[nz])
    offset = np.sum(a[nz] / (1j * kappa[nz]))
    periodic_part = np.fft.ifft(coef) - offset
    return np.real(a[0]) * (grid.x - grid.x_min) + periodic_part.real


def sample_realization(
    model: CorrelationModel, grid: Grid, seed: int, hbar: float = 1.0
) -> DisorderRealization:
    """Draw one mean-zero Gaussian field with the model's correlations.

    Deterministic in (model, grid, seed).  Delta correlations are realized as
    independent per-cell Gaussians of variance c0/dx, the unique
    discretization whose momentum-transfer density is flat up to the grid
    Nyquist momentum.
    """
    if not grid.periodic:
        raise ValueError("disorder sampling requires a periodic grid")
    rng = np.random.default_rng(np.uint64(seed & _MASK64))
    n = grid.n
    if isinstance(model, DeltaCorr):
        V = rng.standard_normal(n) * np.sqrt(model.c0 / grid.dx)
    else:
        g = grid_mode_variances(model, grid, hbar)
        a = rng.standard_normal(n)
        b = rng.standard_normal(n)
        spec = np.zeros(n, dtype=complex)
        half = n // 2
        spec[0] = a[0] * np.sqrt(g[0])
        spec[half] = a[half] * np.sqrt(g[half])
        idx = np.arange(1, half)
        spec[idx] = (a[idx] + 1j * b[idx]) * np.sqrt(g[idx] / 2)
        spec[n - idx] = spec[idx].conj()
        V = np.fft.ifft(spec * n).real
    Phi = spectral_antiderivative(V, grid)
    return DisorderRealization(grid=grid, V=V, Phi=Phi, seed=int(seed))


def accumulate_stats(realizations: Sequence[DisorderRealization]) -> FieldStats:
    """Unbiased ensemble mean and circular lag covariance with standard errors.

    The covariance estimator uses the raw second moment (the models are
    mean-zero by construction); standard errors are across realizations.
    """
    if len(realizations) < 2:
        raise ValueError("need at least 2 realizations")
    grid = realizations[0].grid
    for r in realizations[1:]:
        if not grid.compatible(r.grid):
            raise ValueError("realizations live on mismatched grids")
    n = grid.n
    m = len(realizations)
    means = np.array([r.V.mean() for r in realizations])
    covs = np.empty((m, n))
    for i, r in enumerate(realizations):
        f = np.fft.fft(r.V)
        covs[i] = np.fft.ifft(f * f.conj()).real / n
    lags = grid.dx * np.arange(n)
    return FieldStats(
        sample_mean=float(means.mean()),
        mean_se=float(means.std(ddof=1) / np.sqrt(m)),
        lags=lags,
        sample_cov=covs.mean(axis=0),
        cov_se=covs.std(axis=0, ddof=1) / np.sqrt(m),
        n_samples=m,
    )


def realization_to_csv(real: DisorderRealization, path: str | Path) -> None:
    """Debug dump: header x,V,Phi, one row per grid point, 17 significant digits."""
    lines = ["x,V,Phi"]
    for xi, vi, pi in zip(real.grid.x, real.V, real.Phi):
        lines.append(f"{format_float(xi)},{format_float(vi)},{format_float(pi)}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode())
