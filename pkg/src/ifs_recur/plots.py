"""Figure rendering for the CLI report path.

Each function draws one figure from already-computed report data and
writes it to a file; nothing here recomputes statistics.  The Agg backend
is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .garsia_algebra import Histogram
from .measure_lab import BorelCantelliReport, PixelMask
from .transversality_mc import ScalingReport


def scaling_figure(report: ScalingReport, path: str) -> None:
    """Log-log mean pair counts with the fitted slope line."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    s = np.array(report.s_grid)
    means = np.array(report.means)
    err = np.array(report.stderrs)
    ok = means > 0
    ax.errorbar(s[ok], means[ok], yerr=err[ok], fmt="o", capsize=3,
                label="sample mean")
    fit = np.exp(report.intercept) * s ** report.slope
    ax.plot(s, fit, "--",
            label=f"fit: slope {report.slope:.3f} (target {report.d})")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("s")
    ax.set_ylabel("mean overlapping pairs")
    ax.set_title(f"pair-overlap scaling, m={report.m}, n={report.n}, "
                 f"d={report.d}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def separation_figure(levels, scaled, path: str) -> None:
    """Separation minimum times 2^n against the level n."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(levels, scaled, "o-")
    ax.set_xlabel("n")
    ax.set_ylabel("separation(n) * 2^n")
    ax.set_title("scaled separation minima")
    ax.set_ylim(bottom=0)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def mask_figure(mask: PixelMask, path: str) -> None:
    """Occupancy plot: a step trace in d=1, an image in d=2."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if mask.dimension == 1:
        xs = mask.window.lo[0] + (np.arange(mask.resolution[0]) + 0.5) * \
            mask.window.widths[0] / mask.resolution[0]
        ax.fill_between(xs, 0, mask.bits.astype(float), step="mid")
        ax.set_xlabel("x")
        ax.set_ylabel("occupied")
        ax.set_ylim(-0.05, 1.1)
    else:
        extent = (mask.window.lo[0], mask.window.hi[0],
                  mask.window.lo[1], mask.window.hi[1])
        ax.imshow(mask.bits.T, origin="lower", extent=extent, cmap="Greys",
                  aspect="auto", interpolation="nearest")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_title("stage-set raster")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def level_measure_figure(levels, measures, path: str,
                         title: str = "stage-set measures") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(levels, measures, "o-")
    ax.set_xlabel("level n")
    ax.set_ylabel("union measure")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def partial_sums_figure(report: BorelCantelliReport, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(report.levels, report.partial_sums, "o-", label="level bounds")
    if report.gamma_partial_sums is not None:
        ax.plot(report.levels, report.gamma_partial_sums, "s--",
                label=f"overlap series (gamma={report.gamma:.4f})")
    ax.set_xlabel("N")
    ax.set_ylabel("partial sum")
    ax.set_title(f"bounding series ({report.hint.value})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def density_figure(hist: Histogram, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    centers = 0.5 * (hist.edges[:-1] + hist.edges[1:])
    ax.bar(centers, hist.density, width=hist.bin_width, align="center")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title("atom-measure histogram")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def coverage_figure(levels, fractions, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(levels, fractions, "o-")
    ax.set_xlabel("max level N")
    ax.set_ylabel("covered fraction")
    ax.set_ylim(0, 1.05)
    ax.set_title("cumulative coverage")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
