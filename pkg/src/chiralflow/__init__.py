"""chiralflow: disorder-averaged transport of chiral wave packets.

A library and CLI for the exact dynamics of unidirectional wave packets in
random potentials: per-realization propagation, Monte Carlo disorder
ensembles, closed-form averaged states, dephasing diagnostics (purity
plateau, decoherence cone, momentum broadening, ring revivals), and the
device-level beam-splitter and gap-budget consequences.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402,F401
    DensityMatrix,
    GaussianPacket,
    Grid,
    Moments,
    PhysParams,
    WaveFunction,
    density_from_wavefunction,
    make_gaussian_wavefunction,
    moments,
    purity,
)

__all__ = [
    "__version__",
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
]
