"""Pareto tails of degree sequences and the coverage they imply.

For a tail ``Pr(K > k) = (x_min / k) ** alpha`` the expected fraction of nodes
that can sit inside a rank-k core is bounded by the survival function at k.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import TailFitError
from .graph import CORE, CoreDecomposition, DegreeSequence, check_criterion

MIN_TAIL = 10


class EmptyGroupWarning(UserWarning):
    """Coverage was requested for a group with no members."""


@dataclass(frozen=True)
class PowerLawFit:
    """Tail index and threshold of a Pareto law fitted to one side's degrees."""

    alpha: float
    x_min: float
    n: int
    side: str | None = None
    ks_distance: float | None = None
    n_tail: int | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.x_min >= 1:
            raise ValueError(f"x_min must be >= 1, got {self.x_min}")

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in ("side", "alpha", "x_min", "n", "ks_distance", "n_tail")}


class Coverage(NamedTuple):
    expected_nodes: float
    fraction: float


def _ks_distance(tail_sorted: np.ndarray, alpha: float, x_min: float) -> float:
    n = len(tail_sorted)
    cdf = 1.0 - (x_min / tail_sorted) ** alpha
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def _mle(tail: np.ndarray, x_min: float) -> float:
    s = float(np.sum(np.log(tail / x_min)))
    if s <= 0:
        raise TailFitError("all tail values equal x_min; alpha is undefined")
    return len(tail) / s


def fit_pareto_tail(
    degrees: DegreeSequence | Sequence[float] | np.ndarray,
    x_min: float | None = None,
    min_tail: int = MIN_TAIL,
    max_candidates: int = 400,
) -> PowerLawFit:
    """Continuous Pareto maximum-likelihood fit of a degree tail.

    With ``x_min`` given, ``alpha = n_tail / sum(log(d / x_min))`` over the
    degrees ``d >= x_min``. Otherwise ``x_min`` is the candidate value that
    minimises the Kolmogorov-Smirnov distance between the empirical tail and
    the fitted law; candidates are the distinct degrees (thinned to at most
    ``max_candidates`` quantiles) that leave at least ``min_tail`` points.
    """
    side = degrees.side if isinstance(degrees, DegreeSequence) else None
    d = np.asarray(degrees, dtype=np.float64)
    n = len(d)
    d = np.sort(d[d >= 1])

    if x_min is not None:
        if x_min < 1:
            raise TailFitError("x_min must be >= 1")
        tail = d[d >= x_min]
        if len(tail) < min_tail:
            raise TailFitError(f"only {len(tail)} degrees >= x_min={x_min}, need {min_tail}")
        alpha = _mle(tail, x_min)
        return PowerLawFit(alpha, float(x_min), n, side, _ks_distance(tail, alpha, x_min), len(tail))

    if len(d) < min_tail:
        raise TailFitError(f"only {len(d)} positive degrees, need {min_tail}")
    if d[0] == d[-1]:
        raise TailFitError("all degrees are equal; alpha is undefined")
    cands = np.unique(d[: len(d) - min_tail + 1])
    if len(cands) > max_candidates:
        cands = np.unique(np.quantile(cands, np.linspace(0, 1, max_candidates), method="lower"))
    best = None
    for xm in cands:
        start = np.searchsorted(d, xm, side="left")
        tail = d[start:]
        if len(tail) < min_tail or tail[-1] == xm:
            continue
        alpha = _mle(tail, xm)
        ks = _ks_distance(tail, alpha, xm)
        if best is None or ks < best[0]:
            best = (ks, alpha, float(xm), len(tail))
    if best is None:
        raise TailFitError("no candidate x_min leaves a non-degenerate tail")
    ks, alpha, xm, n_tail = best
    return PowerLawFit(alpha, xm, n, side, ks, n_tail)


def survival(fit: PowerLawFit, k):
    """``Pr(K >= k)`` under the fit: ``min(1, (x_min / k) ** alpha)``.

    Works elementwise for array ``k``; values of ``k`` at or below x_min give 1.
    """
    k_arr = np.asarray(k, dtype=np.float64)
    if np.any(k_arr <= 0):
        raise ValueError("k must be positive")
    out = np.minimum(1.0, (fit.x_min / k_arr) ** fit.alpha)
    return float(out) if out.ndim == 0 else out


def validity_coverage(fit: PowerLawFit, rank_k: int) -> Coverage:
    """Expected number and fraction of nodes with degree at least ``rank_k``.

    This is the upper bound on nodes that can satisfy the rank-k core
    condition. For a continuous law ``Pr(K >= k) == Pr(K > k)``, so the
    ">=" convention changes nothing numerically.
    """
    if rank_k < 1:
        raise ValueError("rank_k must be >= 1")
    frac = survival(fit, rank_k)
    return Coverage(fit.n * frac, frac)


def empirical_coverage(
    cd: CoreDecomposition,
    side: str,
    rank_k: int,
    members: Sequence[int] | np.ndarray | None = None,
    criterion: str = CORE,
) -> float:
    """Fraction of nodes (optionally of a group) with core number >= ``rank_k``.

    ``members`` is an index array or boolean mask selecting a group. An empty
    group yields 0.0 and an :class:`EmptyGroupWarning`. ``criterion="degree"``
    counts degrees instead of core numbers.
    """
    check_criterion(criterion)
    levels = cd.level(side, criterion)
    if members is not None:
        levels = levels[np.asarray(members)]
    if len(levels) == 0:
        warnings.warn("empty group: coverage reported as 0.0", EmptyGroupWarning, stacklevel=2)
        return 0.0
    return float(np.mean(levels >= rank_k))


def coverage_table(
    fit: PowerLawFit | None,
    cd: CoreDecomposition,
    side: str,
    ranks: Sequence[int],
) -> list[dict]:
    """Analytic and empirical coverage side by side for each rank."""
    rows = []
    for k in ranks:
        row = {"side": side, "rank": int(k),
               "empirical_core": empirical_coverage(cd, side, k),
               "empirical_degree": empirical_coverage(cd, side, k, criterion="degree")}
        if fit is not None:
            row["analytic"] = validity_coverage(fit, k).fraction
        else:
            row["analytic"] = math.nan
        rows.append(row)
    return rows
