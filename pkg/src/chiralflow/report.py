"""Deterministic result emission: delimited output, JSON summaries, figures.

All writers produce byte-identical files for identical inputs: floats carry
17 significant digits, line endings are LF, JSON keys are sorted, and no
timestamps are embedded.
"""

from __future__ import annotations

import json
import subprocess
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import __version__

__all__ = [
    "format_float",
    "write_csv",
    "write_json",
    "version_string",
    "save_purity_figure",
    "save_series_figure",
    "save_field_figure",
    "save_cone_figure",
]


def format_float(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return f"{float(x):.17g}"


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    path.write_bytes(("\n".join(lines) + "\n").encode())
    return path


def write_json(path: str | Path, payload: Mapping) -> Path:
    path = Path(path)
    path.write_bytes((json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())
    return path


def version_string() -> str:
    """Package version, extended with the git description when available."""
    root = Path(__file__).resolve().parents[2]
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=root,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if described.returncode == 0 and described.stdout.strip():
            return f"chiralflow {__version__} ({described.stdout.strip()})"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"chiralflow {__version__}"


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_purity_figure(path, times, r_mc, r_mc_se, r_analytic, r_plateau, title=""):
    """Purity evolution: MC points with error bars, exact curve, plateau line."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    ax.plot(times, r_analytic, "-", color="purple", lw=1.2, label="exact average")
    ax.errorbar(
        times,
        r_mc,
        yerr=r_mc_se,
        fmt=".",
        color="k",
        ms=3,
        elinewidth=0.6,
        label="Monte Carlo",
    )
    ax.axhline(r_plateau, color="crimson", ls=":", lw=1.2, label="plateau approximation")
    ax.set_xlabel("v t")
    ax.set_ylabel("purity")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_series_figure(path, x, series, labels, xlabel, ylabel, title=""):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    for values, label in zip(series, labels):
        ax.plot(x, values, lw=1.2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if labels:
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_field_figure(path, x, values, xlabel="x", ylabel="V(x)", title=""):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 3.0))
    ax.plot(x, values, lw=0.8, color="tab:blue")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_cone_figure(path, x, times, field, title="disorder influence"):
    """Spatiotemporal map of the coherence-decay exponent (decoherence cone)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    mesh = ax.pcolormesh(x, times, field, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="influence exponent")
    ax.set_xlabel("separation x")
    ax.set_ylabel("t")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
