"""PNG renderings of the report data.

Each function takes the same rows the CLI writes to CSV and saves one figure.
Figures are built on the Agg canvas directly, so nothing here touches pyplot
state or needs a display.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {"figsize": (5.0, 3.6), "dpi": 120}


def _figure():
    fig = Figure(figsize=STYLE["figsize"], dpi=STYLE["dpi"], layout="constrained")
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot()


def _save(fig, path):
    fig.savefig(path)
    return str(path)


def degree_survival(rows: Sequence[Mapping], path, fits: Mapping[str, Mapping] | None = None):
    """Log-log survival ``Pr(D >= d)`` per side, with fitted Pareto tails dashed.

    ``rows`` carry ``side``, ``degree`` and ``survival``; ``fits`` maps a side
    to ``{"alpha": ..., "x_min": ...}``.
    """
    fig, ax = _figure()
    sides = sorted({r["side"] for r in rows})
    for side in sides:
        d = np.array([r["degree"] for r in rows if r["side"] == side], dtype=float)
        s = np.array([r["survival"] for r in rows if r["side"] == side], dtype=float)
        (line,) = ax.loglog(d, s, marker=".", ls="none", ms=3, label=f"{side} nodes")
        fit = (fits or {}).get(side)
        if fit and len(d):
            # the fitted law covers the tail only; scale it by the tail share
            xm, a = fit["x_min"], fit["alpha"]
            share = s[d >= xm].max() if np.any(d >= xm) else 1.0
            grid = np.geomspace(xm, d.max(), 50)
            ax.loglog(grid, share * (xm / grid) ** a, ls="--", color=line.get_color(),
                      label=f"{side} fit, alpha={a:.2f}")
    ax.set_xlabel("degree d")
    ax.set_ylabel("Pr(D >= d)")
    ax.legend(fontsize=7)
    return _save(fig, path)


def core_cdf(curves: Mapping[str, Sequence[tuple[int, float]]], path, rank_k: int | None = None,
             max_groups: int = 30):
    """Fraction of each group with core number at least ``k``.

    Only the first ``max_groups`` groups are drawn; line styles cycle every
    ten colors so groups stay distinguishable.
    """
    fig, ax = _figure()
    for i, name in enumerate(list(curves)[:max_groups]):
        ks, frac = zip(*curves[name]) if curves[name] else ((), ())
        ax.step(ks, frac, where="post", lw=1, color=f"C{i % 10}", ls=("-", "--", ":")[i // 10 % 3],
                label=str(name))
    if rank_k is not None:
        ax.axvline(rank_k, color="k", lw=0.8, ls=":")
    ax.set_xlabel("core number k")
    ax.set_ylabel("fraction with core >= k")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=5, ncol=3)
    return _save(fig, path)


def coverage_vs_rank(rows: Sequence[Mapping], path):
    """Analytic and empirical coverage per side against the assumed rank."""
    fig, ax = _figure()
    for side in sorted({r["side"] for r in rows}):
        sub = sorted((r for r in rows if r["side"] == side), key=lambda r: r["rank"])
        k = [r["rank"] for r in sub]
        (line,) = ax.plot(k, [r["empirical_core"] for r in sub], marker="o", ms=3,
                          label=f"{side} k-core")
        an = [r.get("analytic", math.nan) for r in sub]
        if not all(math.isnan(v) for v in an):
            ax.plot(k, an, ls="--", color=line.get_color(), label=f"{side} Pareto tail")
    ax.set_xlabel("assumed rank k")
    ax.set_ylabel("coverage")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7)
    return _save(fig, path)


def nae_ecdf(pairwise: Sequence[tuple[np.ndarray, np.ndarray]], max_curve: tuple[np.ndarray, np.ndarray],
             path, max_pairs: int = 20):
    """Pairwise NAE eCDFs in grey and the per-entry maximum NAE eCDF on top.

    Curves are ``(x, F)`` step functions.
    """
    fig, ax = _figure()
    for x, F in list(pairwise)[:max_pairs]:
        ax.step(np.r_[0, x, 1], np.r_[0, F, 1], where="post", color="0.6", lw=0.6)
    x, F = max_curve
    ax.step(np.r_[0, x, 1], np.r_[0, F, 1], where="post", color="C3", lw=1.5, label="max over worlds")
    ax.axhline(0.5, color="k", lw=0.6, ls=":")
    ax.set_xlabel("NAE")
    ax.set_ylabel("fraction of unobserved entries")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7, loc="lower right")
    return _save(fig, path)


def risk_heatmap(R: np.ndarray, path):
    """Pairwise expected risk between worlds."""
    fig, ax = _figure()
    im = ax.imshow(R, cmap="viridis", vmin=0)
    fig.colorbar(im, ax=ax, label="expected NAE")
    ax.set_xlabel("world")
    ax.set_ylabel("world")
    return _save(fig, path)


def coverage_growth(curves: Mapping[str, Sequence[tuple[int, float]]], path):
    """Simulated coverage against the number of draws, one curve per label."""
    fig, ax = _figure()
    for name, pts in curves.items():
        m, frac = zip(*pts)
        ax.semilogx(np.maximum(m, 1), frac, marker=".", label=str(name))
    ax.set_xlabel("draws m")
    ax.set_ylabel("fraction of nodes covered")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7)
    return _save(fig, path)
