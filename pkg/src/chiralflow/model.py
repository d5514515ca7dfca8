"""Shared value types: units, spatial grid, wave functions, density matrices.

Internal units put hbar = 1 and measure length in units of the disorder
correlation length, so times are ell/v and energies v*hbar/ell.  All state
types are immutable values; operations return new objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

__all__ = [
    "PhysParams",
    "Grid",
    "GaussianPacket",
    "WaveFunction",
    "DensityMatrix",
    "Moments",
    "make_gaussian_wavefunction",
    "density_from_wavefunction",
    "purity",
    "moments",
    "spectral_shift",
    "spectral_shift_density",
]


@dataclass(frozen=True)
class PhysParams:
    """Drift Hamiltonian parameters: hbar and the drift velocity v (> 0)."""

    hbar: float = 1.0
    v: float = 1.0

    def __post_init__(self) -> None:
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if not self.v > 0:
            raise ValueError(f"v must be positive, got {self.v}")


@dataclass(frozen=True)
class Grid:
    """Uniform 1D grid; periodic grids are rings of circumference n*dx."""

    x_min: float
    n: int
    dx: float
    periodic: bool = True

    def __post_init__(self) -> None:
        if self.n < 8:
            raise ValueError(f"grid needs n >= 8 points, got {self.n}")
        if not self.dx > 0:
            raise ValueError(f"grid spacing must be positive, got {self.dx}")

    @classmethod
    def ring(cls, length: float, n: int, x_min: float | None = None) -> "Grid":
        """Periodic grid of circumference `length`; centered unless x_min given."""
        if x_min is None:
            x_min = -length / 2
        return cls(x_min=x_min, n=n, dx=length / n, periodic=True)

    @property
    def length(self) -> float:
        return self.n * self.dx

    @property
    def periodic_length(self) -> float | None:
        return self.length if self.periodic else None

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the DFT modes (2*pi * fftfreq)."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    def momenta(self, hbar: float = 1.0) -> np.ndarray:
        return hbar * self.wavenumbers

    def wrap(self, x):
        """Map coordinates onto [x_min, x_min + length)."""
        return self.x_min + np.mod(np.asarray(x) - self.x_min, self.length)

    def compatible(self, other: "Grid") -> bool:
        return (
            self.n == other.n
            and self.periodic == other.periodic
            and math.isclose(self.x_min, other.x_min, rel_tol=0, abs_tol=1e-12)
            and math.isclose(self.dx, other.dx, rel_tol=1e-14, abs_tol=0)
        )


@dataclass(frozen=True)
class GaussianPacket:
    """Gaussian initial state: position spread sigma, center x0, carrier p0.

    The amplitude is exp[-(x-x0)^2/(4 sigma^2) + i p0 (x-x0)/hbar], so the
    position variance is sigma^2 and the momentum variance hbar^2/(4 sigma^2).
    """

    sigma: float
    x0: float = 0.0
    p0: float = 0.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class WaveFunction:
    grid: Grid
    amp: np.ndarray

    def norm(self) -> float:
        return float(self.grid.dx * np.sum(np.abs(self.amp) ** 2))

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.amp / np.sqrt(self.norm()))

    def inner(self, other: "WaveFunction") -> complex:
        """L2 inner product <self|other> with the grid quadrature weight."""
        if not self.grid.compatible(other.grid):
            raise ValueError("wave functions live on different grids")
        return complex(self.grid.dx * np.vdot(self.amp, other.amp))

    def density(self) -> np.ndarray:
        return np.abs(self.amp) ** 2

    def validate(self, atol: float = 1e-10) -> None:
        if abs(self.norm() - 1.0) > atol:
            raise ValueError(f"wave function norm {self.norm()} departs from 1")


@dataclass(frozen=True)
class DensityMatrix:
    """Grid-discretized rho(x, x'): rho[i, j] ~ <x_i|rho|x_j>."""

    grid: Grid
    rho: np.ndarray

    # full diagonalization for the positivity check is only attempted below
    # this size; larger matrices get the cheap invariants only
    POSITIVITY_MAX_N = 512

    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)) * self.grid.dx)

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.rho))

    def validate(
        self,
        herm_tol: float = 1e-12,
        trace_tol: float = 1e-8,
        eig_tol: float = 1e-8,
        check_positivity: bool | None = None,
    ) -> None:
        err = np.max(np.abs(self.rho - self.rho.conj().T))
        if err > herm_tol:
            raise ValueError(f"density matrix not Hermitian: max deviation {err:.3e}")
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {tr} departs from 1")
        if check_positivity is None:
            check_positivity = self.grid.n <= self.POSITIVITY_MAX_N
        if check_positivity:
            evals = np.linalg.eigvalsh(self.rho) * self.grid.dx
            if evals.min() < -eig_tol:
                raise ValueError(f"negative eigenvalue {evals.min():.3e}")


class Moments(NamedTuple):
    mean_x: float
    var_x: float
    mean_p: float
    var_p: float


def make_gaussian_wavefunction(packet: GaussianPacket, grid: Grid) -> WaveFunction:
    """Discretize and normalize a Gaussian packet on the grid.

    On periodic grids the state is the periodized Gaussian (the sum over ring
    images), which is the exact ring analogue and stays well defined even when
    the tails of a single image reach the seam; packets with sigma > length/4
    are rejected as too delocalized.  On non-periodic grids the packet must be
    numerically supported inside the grid (boundary amplitude below 1e-12 of
    the peak).
    """
    x = grid.x
    if grid.periodic:
        if packet.sigma > grid.length / 4:
            raise ValueError(
                f"sigma={packet.sigma} exceeds a quarter of the ring "
                f"circumference {grid.length}; packet too delocalized"
            )
        m_max = int(np.ceil((8 * packet.sigma + grid.length / 2) / grid.length)) + 1
        amp = np.zeros(grid.n, dtype=complex)
        for m in range(-m_max, m_max + 1):
            u = x - packet.x0 + m * grid.length
            amp += np.exp(-0.25 * (u / packet.sigma) ** 2 + 1j * packet.p0 * u)
    else:
        u = x - packet.x0
        amp = np.exp(-0.25 * (u / packet.sigma) ** 2 + 1j * packet.p0 * u)
        peak = np.abs(amp).max()
        edge = max(abs(amp[0]), abs(amp[-1]))
        if edge > 1e-12 * peak:
            raise ValueError(
                f"packet support exceeds grid: boundary amplitude {edge/peak:.3e} "
                f"of peak (needs < 1e-12); enlarge the grid or shrink sigma"
            )
    amp /= np.sqrt(grid.dx * np.sum(np.abs(amp) ** 2))
    return WaveFunction(grid, amp)


def density_from_wavefunction(psi: WaveFunction) -> DensityMatrix:
    """Rank-1 projector rho_ij = psi_i conj(psi_j) of a normalized state."""
    psi.validate()
    return DensityMatrix(psi.grid, np.outer(psi.amp, psi.amp.conj()))


def purity(rho: DensityMatrix) -> float:
    """Tr[rho^2] by grid quadrature, dx^2 * sum |rho_ij|^2."""
    return float(rho.grid.dx**2 * np.sum(np.abs(rho.rho) ** 2))


def _circular_position_moments(weights: np.ndarray, grid: Grid) -> tuple[float, float]:
    """Mean and variance of a localized distribution on the ring.

    Coordinates are unwrapped around the circular mean, so the result is the
    usual localized mean/variance regardless of where the packet sits relative
    to the seam.
    """
    w = weights / weights.sum()
    theta = 2 * np.pi * (grid.x - grid.x_min) / grid.length
    z = np.sum(w * np.exp(1j * theta))
    if abs(z) < 1e-12:
        # no meaningful circular mean; fall back to the plain grid moments
        mean = float(np.sum(w * grid.x))
        var = float(np.sum(w * (grid.x - mean) ** 2))
        return mean, var
    center = grid.x_min + grid.length * (np.angle(z) % (2 * np.pi)) / (2 * np.pi)
    delta = grid.x - center
    delta -= grid.length * np.round(delta / grid.length)
    mean_off = float(np.sum(w * delta))
    var = float(np.sum(w * (delta - mean_off) ** 2))
    return center + mean_off, var


def momentum_distribution(rho: DensityMatrix, hbar: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal of rho in the momentum representation.

    Returns (p, P) with sum(P) * dp = trace; computed from the antidiagonal
    sums of rho, which is exact on the periodic grid.
    """
    n = rho.grid.n
    rows = np.arange(n)
    s = np.empty(n, dtype=complex)
    mat = rho.rho
    for d in range(n):
        s[d] = mat[rows, (rows - d) % n].sum()
    p = rho.grid.momenta(hbar)
    dist = np.real(np.fft.fft(s)) * rho.grid.dx**2 / (2 * np.pi * hbar)
    return p, dist


def moments(rho: DensityMatrix, hbar: float = 1.0) -> Moments:
    """Position and momentum mean/variance of a density matrix.

    Position moments come from the diagonal (circular-unwrapped on rings);
    momentum moments from the spectral representation of the antidiagonals.
    """
    dens = rho.diagonal() * rho.grid.dx
    if rho.grid.periodic:
        mean_x, var_x = _circular_position_moments(dens, rho.grid)
    else:
        w = dens / dens.sum()
        mean_x = float(np.sum(w * rho.grid.x))
        var_x = float(np.sum(w * (rho.grid.x - mean_x) ** 2))
    p, dist = momentum_distribution(rho, hbar)
    dp = 2 * np.pi * hbar / rho.grid.length
    wp = dist * dp
    wp = wp / wp.sum()
    mean_p = float(np.sum(wp * p))
    var_p = float(np.sum(wp * (p - mean_p) ** 2))
    return Moments(mean_x, var_x, mean_p, var_p)


def spectral_shift(amp: np.ndarray, grid: Grid, delta: float) -> np.ndarray:
    """Band-limited translation amp(x) -> amp(x - delta) on the periodic grid.

    Exact for band-limited functions and any real delta (no interpolation).
    """
    if not grid.periodic:
        raise ValueError("spectral shifts require a periodic grid")
    phase = np.exp(-1j * grid.wavenumbers * delta)
    return np.fft.ifft(np.fft.fft(amp) * phase)


def spectral_shift_density(rho: np.ndarray, grid: Grid, delta: float) -> np.ndarray:
    """Translate both arguments of rho(x, x') by delta (T rho T^dagger)."""
    if not grid.periodic:
        raise ValueError("spectral shifts require a periodic grid")
    phase = np.exp(-1j * grid.wavenumbers * delta)
    out = np.fft.ifft(np.fft.fft(rho, axis=0) * phase[:, None], axis=0)
    out = np.fft.ifft(np.fft.fft(out, axis=1) * phase[None, :], axis=1)
    return out
