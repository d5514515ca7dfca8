"""Device-level consequences of dephasing: beam splitters and the gap budget."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GapCheck",
    "beam_splitter_probs",
    "beam_splitter_averaged",
    "gap_condition",
]


def beam_splitter_probs(overlap: complex, phi: float) -> tuple[float, float]:
    """Output probabilities of a balanced beam splitter with mismatched inputs.

    prob_pm = (1 pm Im[<psi|psi'> e^{i phi}]) / 2; identical inputs recover
    the ideal (1 pm sin phi)/2.
    """
    overlap = complex(overlap)
    if abs(overlap) > 1 + 1e-12:
        raise ValueError(f"overlap magnitude {abs(overlap)} exceeds 1")
    term = (overlap * np.exp(1j * phi)).imag
    p_plus = 0.5 * (1 + term)
    return p_plus, 1.0 - p_plus

def beam_splitter_averaged(r: float, phi: float) -> tuple[float, float]:
    """Disorder-averaged output probabilities, visibility (r + 1)/2.

    r is the purity of the disorder-averaged state at the interference time;
    the module stays stateless and takes it as input.
    """
    if not 0 < r <= 1:
        raise ValueError(f"purity must lie in (0, 1], got {r}")
    p_plus = 0.5 * (1 + (r + 1) / 2 * np.sin(phi))
    return p_plus, 1.0 - p_plus


@dataclass(frozen=True)
class GapCheck:
    """Momentum-budget check: broadened variance vs the bulk-gap window.

    lhs = hbar^2/(4 sigma^2) + 2 c0/v^2 (the saturated momentum variance),
    rhs = (gap/v)^2; satisfied iff lhs < rhs, with margin = rhs/lhs for
    parameter sweeps.
    """

    lhs: float
    rhs: float
    satisfied: bool
    margin: float


def gap_condition(sigma: float, c0: float, v: float, hbar: float, gap: float) -> GapCheck:
    if min(sigma, v, hbar, gap) <= 0 or c0 < 0:
        raise ValueError("all parameters must be positive (c0 may be zero)")
    lhs = hbar**2 / (4 * sigma**2) + 2 * c0 / v**2
    rhs = (gap / v) ** 2
    return GapCheck(lhs=lhs, rhs=rhs, satisfied=lhs < rhs, margin=rhs / lhs)
