"""Report figures rendered next to the delimited outputs.

The CSV files remain the data contract; these plots are a convenience for
eyeballing a run. matplotlib is imported lazily with the Agg backend so that
headless pipelines and worker processes never pay for it.
"""

from __future__ import annotations

import math

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_decay_figure(path, curve, cert, fit=None) -> None:
    """Mean-square curve with its confidence band against the certified bound."""
    plt = _plt()
    t = np.asarray(curve.times)
    mean = np.asarray(curve.mean)
    hw = np.asarray(curve.ci_half)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    pos = mean > 0.0
    ax.semilogy(t[pos], mean[pos], color="C0", lw=1.2, label="Monte Carlo mean square")
    band_lo = np.maximum(mean - hw, 1e-300)
    ax.fill_between(t[pos], band_lo[pos], (mean + hw)[pos], color="C0", alpha=0.25, lw=0)
    ax.semilogy(
        t,
        cert.B * np.exp(-cert.sigma * t),
        color="C3",
        ls="--",
        lw=1.4,
        label=f"certified bound B e^(-sigma t), sigma={cert.sigma:.4g}",
    )
    if fit is not None and math.isfinite(fit.sigma_hat):
        ax.semilogy(
            t,
            np.exp(fit.intercept - fit.sigma_hat * (t - 0.0)),
            color="C2",
            ls=":",
            lw=1.2,
            label=f"fitted rate {fit.sigma_hat:.4g}",
        )
    ax.set_xlabel("t")
    ax.set_ylabel("E|X(t)|^2")
    ax.legend(loc="best", fontsize=9)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_interval_figure(path, detail, n_paths: int) -> None:
    """Per-interval path suprema against the pathwise decay thresholds."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    Ns = np.asarray(detail.Ns)
    ax.semilogy(Ns, detail.thresholds, "C3--", lw=1.4, label="threshold e^(-sigma N / 2)")
    ax.semilogy(Ns, np.maximum(detail.freqs, 1e-300), "C0o-", lw=1.0, ms=4,
                label=f"violation frequency ({n_paths} paths)")
    shown = np.minimum(detail.prob_bounds, 1.0)
    ax.semilogy(Ns, shown, "C1-.", lw=1.2, label="certified frequency bound (capped at 1)")
    ax.set_xlabel("unit interval start N")
    ax.set_ylabel("frequency / threshold")
    ax.legend(loc="best", fontsize=9)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_energy_figure(path, dts, rms) -> None:
    """Energy-identity RMS residual under dyadic step refinement."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.loglog(dts, rms, "C0o-", label="per-step RMS residual")
    ref = rms[0] * (np.asarray(dts) / dts[0])
    ax.loglog(dts, ref, "k:", lw=1.0, label="slope 1 reference")
    ax.set_xlabel("dt")
    ax.set_ylabel("RMS residual")
    ax.legend(loc="best", fontsize=9)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
