"""Losses, risks, estimators, isomerism and validity verdicts.

Loss convention: ``loss(kind, x, y)`` is the Bregman divergence ``D(x, y)``.
The risk of hypothesis ``h`` against world ``f`` is ``E_T[loss(h(X), f(X))]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DomainError, PreconditionError
from .graph import CORE, LEFT, RIGHT, SIDES, CoreDecomposition, SampleGraph

LOSS_KINDS = ("squared", "log_loss", "kl", "itakura_saito")
ESTIMATORS = ("monte_carlo", "horvitz_thompson", "empirical_risk", "ht_weighted_empirical_risk")
HT_ESTIMATORS = ("horvitz_thompson", "ht_weighted_empirical_risk")

INVALID = "invalid"
VALID_POSSIBLE = "valid_possible"

# Multiplier on max(m, n) * eps * sigma_max for the numeric rank cut-off.
RANK_RTOL_FACTOR = 1.0


def _xlogy_ratio(x, y):
    # x * ln(x / y) with the 0 * ln 0 = 0 convention
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x == 0, 0.0, x * np.log(np.where(x == 0, 1.0, x) / y))


def loss(kind: str, x, y):
    """Scalar Bregman divergence ``D(x, y)``, elementwise over arrays.

    ``kl`` is the generalized form ``x ln(x/y) - x + y``, which reduces to
    ``x ln(x/y)`` when both arguments are normalized and stays nonnegative
    for arbitrary positive inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if kind == "squared":
        out = (x - y) ** 2
    elif kind == "log_loss":
        if np.any((x < 0) | (x > 1)) or np.any((y <= 0) | (y >= 1)):
            raise DomainError("log_loss needs x in [0, 1] and y in (0, 1)")
        out = _xlogy_ratio(x, y) + _xlogy_ratio(1 - x, 1 - y)
    elif kind == "kl":
        if np.any(x < 0) or np.any(y <= 0):
            raise DomainError("kl needs x >= 0 and y > 0")
        out = _xlogy_ratio(x, y) - x + y
    elif kind == "itakura_saito":
        if np.any(x <= 0) or np.any(y <= 0):
            raise DomainError("itakura_saito needs x > 0 and y > 0")
        r = x / y
        out = r - np.log(r) - 1
    else:
        raise DomainError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
    # rounding can leave tiny negatives near x == y
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def _target_weights(shape, target) -> np.ndarray:
    if target is None:
        return np.full(shape, 1.0 / math.prod(shape))
    w = np.asarray(target, dtype=np.float64)
    if w.shape != shape:
        raise ValueError(f"target shape {w.shape} does not match {shape}")
    if np.any(w < 0):
        raise ValueError("target weights must be nonnegative")
    s = w.sum()
    if not np.isclose(s, 1.0, rtol=1e-9, atol=1e-12):
        raise ValueError(f"target weights sum to {s}, not 1")
    return w


def _as_matrix(a) -> np.ndarray:
    return np.asarray(getattr(a, "matrix", a), dtype=np.float64)


def true_risk(f, h, target=None, kind: str = "squared") -> float:
    """``sum_x p_T(x) * loss(h(x), f(x))``; ``target=None`` is uniform.

    ``f`` and ``h`` are arrays or objects with a ``matrix`` attribute.
    """
    F, H = _as_matrix(f), _as_matrix(h)
    if F.shape != H.shape:
        raise ValueError(f"shape mismatch: {F.shape} vs {H.shape}")
    w = _target_weights(F.shape, target)
    return float(np.sum(w * loss(kind, H, F)))


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    estimator: str
    sample_size: int

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")

    def to_json(self) -> dict:
        return {"value": self.value, "estimator": self.estimator, "sample_size": self.sample_size}


def estimate_risk(
    estimator: str,
    samples: Sequence[tuple],
    target_weights: Sequence[float] | None = None,
    kind: str = "squared",
    propensities: Sequence[float] | None = None,
) -> RiskEstimate:
    """Estimate a mean or a risk from samples ``(entry, f_val, h_val)``.

    ``monte_carlo`` and ``empirical_risk`` average the raw ``f_val`` and the
    loss respectively. The Horvitz-Thompson variants reweight each term by
    ``p_T(x) / p_S(x)``, with ``target_weights`` giving ``p_T`` and
    ``propensities`` giving the sampling probability ``p_S`` of each sample,
    which makes them unbiased for the target expectation.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    m = len(samples)
    if m < 1:
        raise ValueError("need at least one sample")
    arr = np.asarray([(s[1], s[2]) for s in samples], dtype=np.float64)
    f_val, h_val = arr[:, 0], arr[:, 1]
    if estimator in ("monte_carlo", "horvitz_thompson"):
        terms = f_val
    else:
        terms = np.atleast_1d(loss(kind, h_val, f_val))

    if estimator in HT_ESTIMATORS:
        if target_weights is None or propensities is None:
            raise PreconditionError(f"{estimator} needs target_weights and propensities")
        pt = np.asarray(target_weights, dtype=np.float64)
        ps = np.asarray(propensities, dtype=np.float64)
        if pt.shape != (m,) or ps.shape != (m,):
            raise ValueError("target_weights and propensities need one value per sample")
        if np.any(pt <= 0):
            raise PreconditionError("zero target weight: Horvitz-Thompson estimator is undefined")
        if np.any(ps <= 0):
            raise PreconditionError("zero sampling propensity: Horvitz-Thompson estimator is undefined")
        terms = terms * pt / ps
    return RiskEstimate(float(np.mean(terms)), estimator, m)


# isomerism


def _rank(a: np.ndarray, tol: float) -> int:
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > tol))


def rank_tolerance(matrix: np.ndarray, factor: float = RANK_RTOL_FACTOR) -> float:
    """Singular values at or below this count as zero."""
    m, n = matrix.shape
    smax = np.linalg.norm(matrix, 2) if matrix.size else 0.0
    return factor * max(m, n) * np.finfo(np.float64).eps * smax


def restricted_ranks(matrix, mask, tol: float | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Ranks of ``F[:, S_i]`` for each row ``i`` and ``F[S_j, :]`` for each column ``j``.

    ``S_i`` is the set of observed columns in row ``i``; ``S_j`` the observed
    rows in column ``j``. Returns (row ranks, column ranks, rank(F)).
    """
    F = _as_matrix(matrix)
    M = np.asarray(mask, dtype=bool)
    if F.shape != M.shape:
        raise ValueError("matrix and mask shapes differ")
    if tol is None:
        tol = rank_tolerance(F)
    full = _rank(F, tol)
    rows = np.array([_rank(F[:, M[i]], tol) for i in range(F.shape[0])], dtype=np.int64)
    cols = np.array([_rank(F[M[:, j], :], tol) for j in range(F.shape[1])], dtype=np.int64)
    return rows, cols, full


def is_isomeric(matrix, mask, tol: float | None = None) -> bool:
    """Whether ``matrix`` is isomeric with respect to the observed ``mask``.

    True iff every row- and column-restricted submatrix keeps the full rank.
    Every column must hold at least one observation.
    """
    M = np.asarray(mask, dtype=bool)
    if M.ndim != 2:
        raise ValueError("mask must be 2-D")
    empty = np.flatnonzero(~M.any(axis=0))
    if len(empty):
        raise PreconditionError(f"columns without observations: {empty[:10].tolist()}")
    rows, cols, full = restricted_ranks(matrix, M, tol)
    return bool(np.all(rows == full) and np.all(cols == full))


# verdicts


@dataclass(frozen=True)
class ValidityVerdict:
    """Per-node necessary-condition verdicts for a rank assumption.

    A node is ``invalid`` when its level (core number by default) is below
    ``rank_assumed``. ``valid_possible`` only means the necessary condition
    holds; nothing here certifies validity.
    """

    rank_assumed: int
    criterion: str
    levels: Mapping[str, np.ndarray]
    node_ids: Mapping[str, tuple]
    groups: Mapping[str, Mapping[str, np.ndarray]] = field(default_factory=dict)

    def labels(self, side: str) -> np.ndarray:
        ok = self.levels[side] >= self.rank_assumed
        return np.where(ok, VALID_POSSIBLE, INVALID)

    @property
    def per_node(self) -> dict:
        out = {}
        for side in SIDES:
            for nid, lab in zip(self.node_ids[side], self.labels(side)):
                out[(side, nid)] = str(lab)
        return out

    def __len__(self):
        return sum(len(self.levels[s]) for s in SIDES)

    @property
    def summary(self) -> dict:
        out = {}
        for side in SIDES:
            lv = self.levels[side]
            out[side] = {
                "n": int(len(lv)),
                "fraction_valid_possible": float(np.mean(lv >= self.rank_assumed)) if len(lv) else 0.0,
            }
        for attr, by_group in self.groups.items():
            out[f"by_{attr}"] = {
                str(g): {"n": int(len(lv)),
                         "fraction_valid_possible": float(np.mean(lv >= self.rank_assumed)) if len(lv) else 0.0}
                for g, lv in by_group.items()
            }
        return out

    def to_json(self) -> dict:
        return {"rank_assumed": self.rank_assumed, "criterion": self.criterion, "summary": self.summary}

    def rows(self) -> Iterable[dict]:
        for side in SIDES:
            for nid, lv, lab in zip(self.node_ids[side], self.levels[side], self.labels(side)):
                yield {"side": side, "node": nid, "level": int(lv), "verdict": str(lab)}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["side", "node", "level", "verdict"])
            w.writeheader()
            w.writerows(self.rows())


def validity_verdict(
    cd: CoreDecomposition,
    rank_assumed: int,
    graph: SampleGraph | None = None,
    group_by: Sequence[tuple[str, str]] = (),
    criterion: str = CORE,
) -> ValidityVerdict:
    """Mark each node ``invalid`` or ``valid_possible`` for rank ``rank_assumed``.

    With ``graph`` given, nodes carry their original ids and ``group_by``
    pairs ``(side, attribute)`` add per-group fractions to the summary.
    """
    if rank_assumed < 1:
        raise ValueError("rank_assumed must be >= 1")
    levels = {s: np.asarray(cd.level(s, criterion)) for s in SIDES}
    if graph is not None:
        ids = {LEFT: tuple(graph.left_ids), RIGHT: tuple(graph.right_ids)}
    else:
        ids = {s: tuple(range(len(levels[s]))) for s in SIDES}
    groups = {}
    for side, attr in group_by:
        if graph is None:
            raise PreconditionError("group_by needs the graph for node metadata")
        vals = graph.attribute_values(side, attr)
        groups[attr] = {g: levels[side][np.asarray([v == g for v in vals])]
                        for g in sorted(set(vals), key=str)}
    return ValidityVerdict(int(rank_assumed), criterion, levels, ids, groups)


# bounds


def hoeffding_bound(m: int, delta: float) -> float:
    """Two-sided Hoeffding gap ``sqrt(ln(2/delta) / (2m))`` for losses in [0, 1]."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * m))


def markov_lower_bound(epsilon, prob_exceed):
    """``epsilon * Pr(L > epsilon)``, a lower bound on ``E[L]`` for ``L >= 0``."""
    e = np.asarray(epsilon, dtype=np.float64)
    p = np.asarray(prob_exceed, dtype=np.float64)
    if np.any(e < 0):
        raise ValueError("epsilon must be nonnegative")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("prob_exceed must lie in [0, 1]")
    out = e * p
    return float(out) if out.ndim == 0 else out


# Bregman projection


def _default_box(kind: str) -> tuple[float, float]:
    if kind == "squared":
        return (-np.inf, np.inf)
    if kind == "log_loss":
        return (1e-9, 1 - 1e-9)
    return (1e-9, np.inf)


def bregman_project(
    h,
    basis,
    kind: str = "squared",
    offset=None,
    box: tuple[float, float] | None = None,
    x0=None,
    tol: float = 1e-12,
    max_iters: int = 500,
) -> np.ndarray:
    """``argmin_z sum D(z, h)`` over ``z = offset + basis @ c`` inside ``box``.

    ``basis`` has one column per direction of the affine space. Squared loss
    without a finite box is solved in closed form; everything else goes to
    SLSQP started from ``x0`` (a feasible point, e.g. a member of the space).
    """
    hv = np.asarray(h, dtype=np.float64).ravel()
    B = np.asarray(basis, dtype=np.float64).reshape(len(hv), -1)
    o = np.zeros_like(hv) if offset is None else np.asarray(offset, dtype=np.float64).ravel()
    lo, hi = box if box is not None else _default_box(kind)
    if kind == "squared" and np.isneginf(lo) and np.isposinf(hi):
        c, *_ = np.linalg.lstsq(B, hv - o, rcond=None)
        return o + B @ c

    if x0 is None:
        c0 = np.zeros(B.shape[1])
    else:
        c0, *_ = np.linalg.lstsq(B, np.asarray(x0, dtype=np.float64).ravel() - o, rcond=None)

    def obj(c):
        z = o + B @ c
        return float(np.sum(loss(kind, np.clip(z, lo, hi), hv)))

    def grad(c):
        z = np.clip(o + B @ c, lo, hi)
        if kind == "squared":
            g = 2 * (z - hv)
        elif kind == "kl":
            g = np.log(z / hv)
        elif kind == "itakura_saito":
            g = 1 / hv - 1 / z
        else:
            g = np.log(z / hv) - np.log((1 - z) / (1 - hv))
        return B.T @ g

    cons = []
    if np.isfinite(lo):
        cons.append({"type": "ineq", "fun": lambda c: o + B @ c - lo, "jac": lambda c: B})
    if np.isfinite(hi):
        cons.append({"type": "ineq", "fun": lambda c: hi - (o + B @ c), "jac": lambda c: -B})
    res = optimize.minimize(obj, c0, jac=grad, constraints=cons, method="SLSQP",
                            options={"ftol": tol, "maxiter": max_iters})
    if not res.success:
        raise ConvergenceError(f"Bregman projection did not converge: {res.message}")
    return np.clip(o + B @ res.x, lo, hi)


def pythagorean_check(
    f,
    h,
    basis,
    kind: str = "squared",
    offset=None,
    box: tuple[float, float] | None = None,
    tol: float = 1e-8,
) -> bool:
    """Whether ``D(f, f*) <= D(f, h) + tol`` with ``f*`` the projection of ``h``.

    ``f`` must lie in the affine space (and box); it also seeds the solver.
    """
    fv = np.asarray(f, dtype=np.float64).ravel()
    hv = np.asarray(h, dtype=np.float64).ravel()
    fstar = bregman_project(hv, basis, kind, offset=offset, box=box, x0=fv)
    lhs = float(np.sum(loss(kind, fv, fstar)))
    rhs = float(np.sum(loss(kind, fv, hv)))
    return lhs <= rhs + tol

