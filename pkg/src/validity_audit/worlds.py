"""Ensembles of possible worlds and their disagreement.

A world is a dense ``m x n`` matrix that reproduces the observed labels,
lies (up to a relative tolerance) in the column span of a fixed orthonormal
basis ``Q`` and respects the label box. Worlds are generated one after the
other, each pushed away from its predecessors, so the ensemble is a
heuristic sample of the set of consistent completions, not a draw from any
particular distribution over it.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla

from .errors import PreconditionError, RankDeficientError, WorldRejected
from .graph import SampleGraph

FIT_TOL = 1e-3
RANK_TOL = 1e-2
BOX_ATOL = 1e-9


# projections and residuals


def orthonormal_subspace(U: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis ``Q`` (``m x k``) of the column span of ``U``."""
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] == 0:
        raise ValueError("U must be a non-empty 2-D matrix")
    k = U.shape[1]
    sv = np.linalg.svd(U, compute_uv=False)
    rank = int(np.sum(sv > rtol * sv.max())) if sv.size and sv.max() > 0 else 0
    if rank < k:
        raise RankDeficientError(
            f"U ({U.shape[0]}x{k}) has rank {rank}: {k - rank} of {k} columns are linearly dependent")
    Q, _ = np.linalg.qr(U)
    return Q


def project_subspace(Q: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``P_Q(X) = Q Q^T X``."""
    return Q @ (Q.T @ X)


def project_observed(mask: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``P_S(X)``: zero the unobserved entries."""
    return np.where(mask, X, 0.0)


def fit_residual(X: np.ndarray, rows: np.ndarray, cols: np.ndarray, labels: np.ndarray) -> float:
    """RMS error on the observed entries."""
    if len(labels) == 0:
        return 0.0
    d = np.asarray(X[rows, cols], dtype=np.float64) - labels
    return float(np.sqrt(np.mean(d * d)))


def rank_residual(Q: np.ndarray, X: np.ndarray) -> float:
    """``||P_Q(X) - X||_F / ||X||_F`` (0 for the zero matrix)."""
    X = np.asarray(X, dtype=np.float64)
    nx = np.linalg.norm(X)
    if nx == 0:
        return 0.0
    return float(np.linalg.norm(project_subspace(Q, X) - X) / nx)


# base factorization


class Factorization(NamedTuple):
    U: np.ndarray
    V: np.ndarray
    fit_residual: float
    converged: bool
    iterations: int
    method: str
    completion: np.ndarray | None = None


def _als(rows, cols, y, m, n, k, rng, max_iters, fit_tol, ridge):
    U = rng.normal(scale=1.0 / math.sqrt(k), size=(m, k))
    V = rng.normal(scale=1.0 / math.sqrt(k), size=(n, k))
    by_r = np.split(np.argsort(rows, kind="stable"), np.cumsum(np.bincount(rows, minlength=m))[:-1])
    by_c = np.split(np.argsort(cols, kind="stable"), np.cumsum(np.bincount(cols, minlength=n))[:-1])

    def solve(A, b):
        # ridge normal equations, in dual form when underdetermined
        if A.shape[0] >= k:
            return np.linalg.solve(A.T @ A + ridge * np.eye(k), A.T @ b)
        if A.shape[0] == 0:
            return np.zeros(k)
        return A.T @ np.linalg.solve(A @ A.T + ridge * np.eye(A.shape[0]), b)

    res = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        for i, e in enumerate(by_r):
            U[i] = solve(V[cols[e]], y[e])
        for j, e in enumerate(by_c):
            V[j] = solve(U[rows[e]], y[e])
        res = _sparse_rms(U, V, rows, cols, y)
        if res <= fit_tol:
            break
    return U, V, res, it


def _sparse_rms(U, V, rows, cols, y):
    r = np.einsum("ij,ij->i", U[rows], V[cols]) - y
    return float(np.sqrt(np.mean(r * r)))


def _gauss_newton(rows, cols, y, m, n, k, rng, max_iters, fit_tol, inner_iters=300, damp=1e-3):
    # Gauss-Newton on the factor pair: each step is the damped least-squares
    # solution of the linearized residual, followed by a halving line search
    nnz = len(y)
    Y = sparse.csr_matrix((y, (rows, cols)), shape=(m, n))
    if k < min(m, n):
        u, s, vt = sla.svds(Y, k=k, random_state=int(rng.integers(2**31)))
        U, V = u * np.sqrt(s), vt.T * np.sqrt(s)
    else:
        U = rng.normal(scale=1.0 / math.sqrt(k), size=(m, k))
        V = rng.normal(scale=1.0 / math.sqrt(k), size=(n, k))
    ar = np.arange(k)
    jr = np.repeat(np.arange(nnz), 2 * k)
    jc = np.concatenate([rows[:, None] * k + ar, m * k + cols[:, None] * k + ar], axis=1).ravel()
    r = np.einsum("ij,ij->i", U[rows], V[cols]) - y
    it = 0
    for it in range(1, max_iters + 1):
        data = np.concatenate([V[cols], U[rows]], axis=1).ravel()
        J = sparse.csr_matrix((data, (jr, jc)), shape=(nnz, (m + n) * k))
        d = sla.lsqr(J, -r, damp=damp, atol=1e-12, btol=1e-12, iter_lim=inner_iters)[0]
        dU, dV = d[: m * k].reshape(m, k), d[m * k:].reshape(n, k)
        f0 = r @ r
        step = 1.0
        while step > 1e-6:
            r2 = np.einsum("ij,ij->i", U[rows] + step * dU[rows], V[cols] + step * dV[cols]) - y
            if r2 @ r2 < f0:
                break
            step /= 2
        else:
            break
        U += step * dU
        V += step * dV
        r = r2
        if math.sqrt(r @ r / max(nnz, 1)) <= fit_tol:
            break
    return U, V, float(math.sqrt(r @ r / max(nnz, 1))), it


def _impute(g, k, rng, max_iters, fit_tol, stall_tol=1e-6):
    # box-constrained hard impute: a block power step for the top-k column
    # space of the current completion, projection onto it, clipping to the
    # label box and reinstating the observed labels
    lo, hi = map(float, g.label_range)
    rows, cols = np.asarray(g.rows), np.asarray(g.cols)
    y = np.asarray(g.labels, dtype=np.float64)
    m, n = g.shape
    X = np.full((m, n), float(np.clip(y.mean(), lo, hi)))
    X[rows, cols] = y
    Q = np.linalg.qr(rng.normal(size=(m, k)))[0]
    prev = math.inf
    res = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        Q = np.linalg.qr(X @ (X.T @ Q))[0]
        C = Q.T @ X
        L = Q @ C
        r = L[rows, cols] - y
        res = float(np.sqrt(np.mean(r * r)))
        X = np.clip(L, lo, hi)
        X[rows, cols] = y
        if res <= fit_tol:
            break
        if it % 25 == 0:
            if math.isfinite(prev) and prev - res <= stall_tol * prev * 25:
                break
            prev = res
    return Q, C.T, res, it, X


def fit_base_factorization(
    g: SampleGraph,
    rank_k: int,
    seed=None,
    max_iters: int = 1000,
    fit_tol: float = FIT_TOL,
    method: str = "impute",
    ridge: float = 1e-8,
) -> Factorization:
    """Rank-``rank_k`` factors ``U V^T`` fitted to the observed labels only.

    ``method="impute"`` (default) alternates a rank-``k`` projection of a
    dense completion with clipping to the label box, keeping observed labels
    fixed; it also returns that completion, which the world generator uses
    for columns the observations pin down. ``"als"`` alternates
    ridge-regularized least squares over rows and columns and
    ``"gauss_newton"`` takes damped Gauss-Newton steps on both factors; these
    two ignore the box and reach a lower observed error when the rank is
    large, at the price of wild predictions off the sample. If ``fit_tol``
    is not reached within ``max_iters`` the last factors are returned with
    ``converged=False``.
    """
    if rank_k < 1:
        raise ValueError("rank_k must be >= 1")
    if g.n_edges == 0:
        raise PreconditionError("graph has no observed entries")
    rng = np.random.default_rng(seed)
    m, n = g.shape
    if rank_k > min(m, n):
        raise ValueError(f"rank_k={rank_k} exceeds min(m, n)={min(m, n)}")
    rows, cols, y = np.asarray(g.rows), np.asarray(g.cols), np.asarray(g.labels, dtype=np.float64)
    completion = None
    if method == "impute":
        U, V, res, it, completion = _impute(g, rank_k, rng, max_iters, fit_tol)
    elif method == "als":
        U, V, res, it = _als(rows, cols, y, m, n, rank_k, rng, max_iters, fit_tol, ridge)
    elif method == "gauss_newton":
        U, V, res, it = _gauss_newton(rows, cols, y, m, n, rank_k, rng, max_iters, fit_tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return Factorization(U, V, res, res <= fit_tol, it, method, completion)


# worlds


@dataclass(frozen=True, eq=False)
class World:
    """One possible world; construction enforces its box, fit and rank bounds."""

    matrix: np.ndarray
    rank_bound: int
    fit_residual: float
    rank_residual: float
    label_range: tuple[float, float]
    fit_tol: float = FIT_TOL
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        lo, hi = self.label_range
        X = self.matrix
        if X.size and (X.min() < lo - BOX_ATOL or X.max() > hi + BOX_ATOL):
            raise WorldRejected("entries leave the label box", X, self.fit_residual, self.rank_residual)
        if not self.fit_residual <= self.fit_tol:
            raise WorldRejected(
                f"fit residual {self.fit_residual:.3g} exceeds {self.fit_tol:g}",
                X, self.fit_residual, self.rank_residual)
        if not self.rank_residual <= self.rank_tol:
            raise WorldRejected(
                f"rank residual {self.rank_residual:.3g} exceeds {self.rank_tol:g}",
                X, self.fit_residual, self.rank_residual)

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class WorldWeights:
    """Term weights of the world objective.

    ``div`` is the diversity weight per earlier world; it is divided by the
    number of earlier worlds so the push away from their mean has a fixed
    scale, and halved on every rejected attempt.
    """

    sub: float = 1.0
    fit: float = 1.0
    div: float = 0.5

    def __post_init__(self):
        if min(self.sub, self.fit) <= 0 or self.div < 0:
            raise ValueError("weights must be positive (div may be 0)")


def determined_columns(Q: np.ndarray, rows, cols, n: int) -> np.ndarray:
    """Boolean mask of columns whose observed rows of ``Q`` have full column rank.

    For such a column the coefficients in the span of ``Q`` are pinned down
    by its observations; every other column keeps free directions.
    """
    k = Q.shape[1]
    rows, cols = np.asarray(rows), np.asarray(cols)
    counts = np.bincount(cols, minlength=n)
    order = np.argsort(cols, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)])
    out = np.zeros(n, dtype=bool)
    for j in np.flatnonzero(counts >= k):
        out[j] = np.linalg.matrix_rank(Q[rows[order[starts[j]:starts[j + 1]]]]) == k
    return out


class Candidate(NamedTuple):
    """A generated matrix that failed a tolerance, kept for diagnostics."""

    index: int
    matrix: np.ndarray
    fit_residual: float
    rank_residual: float
    reason: str


@dataclass
class WorldEnsemble:
    """Worlds sharing one subspace, one mask and one set of tolerances.

    ``rejected`` logs every failed attempt; ``candidates`` keeps the final
    matrix of each slot that produced no valid world, when requested.
    """

    worlds: list
    subspace_q: np.ndarray
    mask: np.ndarray
    tolerances: tuple[float, float]
    label_range: tuple[float, float]
    seed: int | None = None
    rejected: list = field(default_factory=list)
    candidates: list = field(default_factory=list)

    def __len__(self):
        return len(self.worlds)

    def __iter__(self) -> Iterator[World]:
        return iter(self.worlds)

    def matrices(self, include_rejected: bool = False) -> list:
        mats = [w.matrix for w in self.worlds]
        if include_rejected:
            mats += [c.matrix for c in self.candidates]
        return mats

    def stack(self, dtype=np.float64, include_rejected: bool = False) -> np.ndarray:
        return np.stack(self.matrices(include_rejected)).astype(dtype, copy=False)

    def min_pairwise_unobserved_rms(self, include_rejected: bool = False) -> float:
        un = ~self.mask
        mats = self.matrices(include_rejected)
        best = math.inf
        for i in range(len(mats)):
            for j in range(i + 1, len(mats)):
                d = mats[i][un].astype(np.float64) - mats[j][un]
                best = min(best, float(np.sqrt(np.mean(d * d))) if d.size else 0.0)
        return best


class WorldGenerator:
    """Sequential world generator for one sample graph and one basis ``Q``.

    Each world starts uniformly at random in the label box and descends
    ``w.sub ||P_Q(X) - X||^2 + w.fit ||P_S(X) - Y||^2 - lam sum_i ||X - X_i||^2``
    by projected gradient with backtracking, clipping to the box after every
    step. It is then settled without the diversity term: columns determined
    by their observations take the matching column of ``base``, the others
    alternate projection onto the span of ``Q`` with clipping to the box and
    reinstating the observed labels. That converges to a nearest pair of
    points between the two sets, which keeps the result close to where the
    descent left it.

    ``base`` is a box-feasible completion with the observed labels, such as
    :attr:`Factorization.completion`; without it one is computed by
    alternating projection for the given ``Q``.
    """

    def __init__(self, g: SampleGraph, Q: np.ndarray, weights: WorldWeights = WorldWeights(),
                 fit_tol: float = FIT_TOL, rank_tol: float = RANK_TOL,
                 max_iters: int = 100, polish_iters: int = 200, dtype=np.float64,
                 base: np.ndarray | None = None):
        Q = np.asarray(Q, dtype=np.float64)
        if Q.shape[0] != g.n_left:
            raise ValueError(f"Q has {Q.shape[0]} rows, graph has {g.n_left} left nodes")
        if not np.allclose(Q.T @ Q, np.eye(Q.shape[1]), atol=1e-8):
            raise PreconditionError("Q is not orthonormal")
        self.g = g
        self.Q = Q
        self.weights = weights
        self.fit_tol = fit_tol
        self.rank_tol = rank_tol
        self.max_iters = max_iters
        self.polish_iters = polish_iters
        self.dtype = dtype
        self.lo, self.hi = map(float, g.label_range)
        self.rows = np.asarray(g.rows)
        self.cols = np.asarray(g.cols)
        self.y = np.asarray(g.labels, dtype=np.float64)
        self.mask = g.mask()
        self.determined = determined_columns(Q, self.rows, self.cols, g.n_right)
        if base is None:
            base = self._alternate(self._feasible(np.full(g.shape, (self.lo + self.hi) / 2)))
        else:
            base = np.array(base, dtype=np.float64)
            if base.shape != g.shape:
                raise ValueError(f"base has shape {base.shape}, expected {g.shape}")
            base = self._feasible(base)
        self.base = base
        self.floor = self.residuals(base)
        self._sum = np.zeros(g.shape)
        self._sumsq = 0.0
        self.n_prior = 0

    def _feasible(self, X):
        X = np.clip(X, self.lo, self.hi)
        X[self.rows, self.cols] = self.y
        return X

    def _alternate(self, X, iters=None):
        # fixed-Q alternating projection between the span and the box with
        # observed labels; converges to the closest such pair
        for _ in range(self.polish_iters if iters is None else iters):
            X = self._feasible(project_subspace(self.Q, X))
        return X

    def add_prior(self, X: np.ndarray) -> None:
        """Register an earlier world for the diversity term."""
        X = np.asarray(X, dtype=np.float64)
        self._sum += X
        self._sumsq += float(np.sum(X * X))
        self.n_prior += 1

    def _objective(self, X, lam_div):
        w = self.weights
        sub = np.sum((project_subspace(self.Q, X) - X) ** 2)
        fit = np.sum((X[self.rows, self.cols] - self.y) ** 2)
        div = 0.0
        if self.n_prior and lam_div:
            # sum_i ||X - X_i||^2 = p||X||^2 - 2<X, sum X_i> + sum ||X_i||^2
            div = self.n_prior * np.sum(X * X) - 2 * np.sum(X * self._sum) + self._sumsq
        return w.sub * sub + w.fit * fit - lam_div * div

    def _gradient(self, X, lam_div):
        w = self.weights
        G = 2 * w.sub * (X - project_subspace(self.Q, X))
        G[self.rows, self.cols] += 2 * w.fit * (X[self.rows, self.cols] - self.y)
        if self.n_prior and lam_div:
            G -= 2 * lam_div * (self.n_prior * X - self._sum)
        return G

    def descend(self, X, lam_div) -> tuple[np.ndarray, int]:
        """Projected gradient with backtracking; returns the iterate and steps taken."""
        f = self._objective(X, lam_div)
        step = 0.5
        taken = 0
        for _ in range(self.max_iters):
            G = self._gradient(X, lam_div)
            while True:
                Xn = np.clip(X - step * G, self.lo, self.hi)
                fn = self._objective(Xn, lam_div)
                if fn <= f - 1e-4 * np.sum(G * (X - Xn)) or step < 1e-8:
                    break
                step /= 2
            if step < 1e-8:
                break
            if f - fn <= 1e-10 * max(1.0, abs(f)):
                X = Xn
                break
            X, f = Xn, fn
            taken += 1
            step = min(step * 2, 0.5)
        return X, taken

    def settle(self, X) -> np.ndarray:
        """Feasible matrix near ``X``: determined columns from ``base``, the
        rest by alternating projection, stopping once the rank residual
        meets half its tolerance or stops improving."""
        det = self.determined
        X = self._feasible(X)
        X[:, det] = self.base[:, det]
        best = math.inf
        for it in range(self.polish_iters):
            X = self._feasible(project_subspace(self.Q, X))
            X[:, det] = self.base[:, det]
            if it % 10 == 9:
                rr = self.residuals(X)[1]
                if rr <= self.rank_tol * 0.5 or rr > best * (1 - 1e-4):
                    break
                best = rr
        return X

    def residuals(self, X) -> tuple[float, float]:
        return fit_residual(X, self.rows, self.cols, self.y), rank_residual(self.Q, X)

    def default_lambda(self) -> float:
        return self.weights.div / self.n_prior if self.n_prior else 0.0

    def candidate(self, rng, lam_div: float | None = None) -> tuple[np.ndarray, float, float]:
        """Generate a matrix and its residuals without validating it."""
        lam = self.default_lambda() if lam_div is None else lam_div
        X0 = rng.uniform(self.lo, self.hi, size=self.g.shape)
        X, _ = self.descend(X0, lam)
        X = self.settle(X)
        fr, rr = self.residuals(X)
        return X, fr, rr

    def generate(self, rng, lam_div: float | None = None) -> World:
        """One world; raises :class:`WorldRejected` if a tolerance fails."""
        X, fr, rr = self.candidate(rng, lam_div)
        return World(X.astype(self.dtype), self.Q.shape[1], fr, rr, (self.lo, self.hi),
                     self.fit_tol, self.rank_tol)


def generate_world(
    prior: Sequence[World | np.ndarray],
    g: SampleGraph,
    Q: np.ndarray,
    seed=None,
    weights: WorldWeights = WorldWeights(),
    max_iters: int = 100,
    fit_tol: float = FIT_TOL,
    rank_tol: float = RANK_TOL,
    base: np.ndarray | None = None,
) -> World:
    """Generate one world pushed away from the ``prior`` worlds.

    Raises :class:`WorldRejected` if the result violates a tolerance.
    """
    gen = WorldGenerator(g, Q, weights, fit_tol, rank_tol, max_iters, base=base)
    for X in prior:
        gen.add_prior(getattr(X, "matrix", X))
    return gen.generate(np.random.default_rng(seed))


def generate_ensemble(
    g: SampleGraph,
    Q: np.ndarray,
    n_worlds: int,
    seed=None,
    weights: WorldWeights = WorldWeights(),
    max_iters: int = 100,
    polish_iters: int = 200,
    fit_tol: float = FIT_TOL,
    rank_tol: float = RANK_TOL,
    max_attempts: int = 4,
    dtype=np.float64,
    progress=None,
    base: np.ndarray | None = None,
    keep_rejected: bool = True,
) -> WorldEnsemble:
    """``n_worlds`` worlds generated in sequence.

    A rejected attempt is retried with half the diversity weight, up to
    ``max_attempts`` times, unless the settled base completion already fails
    the tolerances (then no diversity weight can help and the slot gets a
    single attempt). With ``keep_rejected`` the last attempt of a failed slot
    is stored in ``candidates`` and still repels later worlds.
    ``progress`` is an optional callback ``(index, world_or_None)``.
    """
    if n_worlds < 1:
        raise ValueError("n_worlds must be >= 1")
    rng = np.random.default_rng(seed)
    gen = WorldGenerator(g, Q, weights, fit_tol, rank_tol, max_iters, polish_iters, dtype, base)
    floor_ok = gen.floor[0] <= fit_tol and gen.floor[1] <= rank_tol
    attempts = max_attempts if floor_ok else 1
    worlds, rejected, candidates = [], [], []
    for i in range(n_worlds):
        lam = gen.default_lambda()
        world = last = None
        for attempt in range(attempts):
            try:
                world = gen.generate(rng, lam)
                break
            except WorldRejected as exc:
                rejected.append({"index": i, "attempt": attempt, "lambda_div": lam,
                                 "fit_residual": exc.fit_residual, "rank_residual": exc.rank_residual,
                                 "reason": str(exc)})
                last = Candidate(i, np.asarray(exc.matrix, dtype=dtype), exc.fit_residual,
                                 exc.rank_residual, str(exc))
                lam /= 2
        if world is not None:
            worlds.append(world)
            gen.add_prior(world.matrix)
        elif keep_rejected and last is not None:
            candidates.append(last)
            gen.add_prior(last.matrix)
        if progress is not None:
            progress(i, world)
    return WorldEnsemble(worlds, gen.Q, gen.mask, (fit_tol, rank_tol), (gen.lo, gen.hi),
                         seed if isinstance(seed, int) else None, rejected, candidates)


# disagreement


def nae(a, b, y_min: float, y_max: float):
    """Normalized absolute error ``|a - b| / (y_max - y_min)``, elementwise."""
    if not y_max > y_min:
        raise ValueError("y_max must exceed y_min")
    out = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) / (y_max - y_min)
    return float(out) if out.ndim == 0 else out


class ECDF:
    """Right-continuous empirical CDF of a sample, kept as a step function.

    ``x`` holds the distinct sample values in increasing order and ``F`` the
    CDF value on ``[x[i], x[i+1])``.
    """

    def __init__(self, values=None, *, x=None, F=None, n=None):
        if values is not None:
            v = np.sort(np.asarray(values, dtype=np.float64).ravel())
            if v.size == 0:
                raise ValueError("empty sample")
            last = np.r_[v[1:] != v[:-1], True]
            self.x = v[last]
            self.F = (np.flatnonzero(last) + 1) / v.size
            self.n = int(v.size)
        else:
            self.x = np.asarray(x, dtype=np.float64)
            self.F = np.asarray(F, dtype=np.float64)
            self.n = int(n) if n is not None else len(self.x)
        if np.any(np.diff(self.F) < 0) or (len(self.F) and (self.F[0] < 0 or self.F[-1] > 1 + 1e-12)):
            raise ValueError("CDF values must be non-decreasing within [0, 1]")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.x, t, side="right") - 1
        out = np.where(idx >= 0, self.F[np.maximum(idx, 0)], 0.0)
        return float(out) if out.ndim == 0 else out

    def survival(self, t):
        return 1.0 - np.asarray(self(t))

    def area_over(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """``int_lo^hi (1 - F(t)) dt`` summed exactly over the steps."""
        knots = np.clip(np.r_[lo, self.x, hi], lo, hi)
        # survival is 1 before the first knot and 1 - F[i] on [x[i], x[i+1])
        surv = np.r_[1.0, 1.0 - self.F]
        return float(np.sum(np.diff(knots) * surv))

    def quantile(self, q):
        q = np.asarray(q, dtype=np.float64)
        idx = np.searchsorted(self.F, q - 1e-12, side="left")
        out = self.x[np.minimum(idx, len(self.x) - 1)]
        return float(out) if out.ndim == 0 else out

    def median(self) -> float:
        return self.quantile(0.5)

    def on_grid(self, grid) -> np.ndarray:
        return np.asarray(self(grid))

    def thinned(self, max_points: int) -> "ECDF":
        """Step function on at most ``max_points`` of the knots (values at
        kept knots are exact; the area is approximate)."""
        if len(self.x) <= max_points:
            return self
        keep = np.unique(np.linspace(0, len(self.x) - 1, max_points).round().astype(np.int64))
        return ECDF(x=self.x[keep], F=self.F[keep], n=self.n)


@dataclass
class DisagreementStats:
    pairs: list
    pairwise_nae_ecdf: list
    max_nae_ecdf: ECDF
    expected_risk_per_pair: np.ndarray
    label_range: tuple[float, float]
    n_entries: int

    def risk_matrix(self, p: int) -> np.ndarray:
        R = np.zeros((p, p))
        for (i, j), r in zip(self.pairs, self.expected_risk_per_pair):
            R[i, j] = R[j, i] = r
        return R

    def summary(self) -> dict:
        r = self.expected_risk_per_pair
        return {
            "n_pairs": len(self.pairs),
            "n_unobserved_entries": self.n_entries,
            "median_max_nae": self.max_nae_ecdf.median(),
            "mean_max_nae": self.max_nae_ecdf.area_over(),
            "min_expected_risk": float(r.min()) if len(r) else math.nan,
            "mean_expected_risk": float(r.mean()) if len(r) else math.nan,
            "max_expected_risk": float(r.max()) if len(r) else math.nan,
        }


def disagreement_stats(
    ensemble: WorldEnsemble | Sequence[np.ndarray],
    mask: np.ndarray | None = None,
    label_range: tuple[float, float] | None = None,
    max_pairs: int | None = None,
    ecdf_points: int | None = 2048,
    seed=None,
    include_rejected: bool = False,
) -> DisagreementStats:
    """NAE statistics over the unobserved entries of an ensemble.

    Pairwise eCDFs are thinned to ``ecdf_points`` knots for storage (``None``
    keeps them whole); expected risks always come from the full step
    function. ``max_pairs`` evaluates a seeded random subset of pairs.
    ``include_rejected`` adds the ensemble's rejected candidates after its
    valid worlds.
    """
    if isinstance(ensemble, WorldEnsemble):
        mats = ensemble.matrices(include_rejected)
        mask = ensemble.mask if mask is None else mask
        label_range = ensemble.label_range if label_range is None else label_range
    else:
        mats = [getattr(w, "matrix", w) for w in ensemble]
    if len(mats) < 2:
        raise PreconditionError("need at least two worlds")
    if mask is None or label_range is None:
        raise ValueError("mask and label_range are required for bare matrices")
    lo, hi = label_range
    un = ~np.asarray(mask, dtype=bool)
    vals = [np.asarray(M)[un] for M in mats]
    p = len(vals)
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    if max_pairs is not None and len(pairs) > max_pairs:
        pick = np.random.default_rng(seed).choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[t] for t in np.sort(pick)]

    ecdfs, risks = [], []
    for i, j in pairs:
        e = ECDF(nae(vals[i], vals[j], lo, hi)) if un.any() else ECDF([0.0])
        risks.append(e.area_over())
        ecdfs.append(e if ecdf_points is None else e.thinned(ecdf_points))

    if un.any():
        vmax = np.max(np.stack(vals), axis=0) if p * vals[0].size <= 50_000_000 else _running(vals, np.maximum)
        vmin = np.min(np.stack(vals), axis=0) if p * vals[0].size <= 50_000_000 else _running(vals, np.minimum)
        max_e = ECDF(nae(vmax, vmin, lo, hi))
    else:
        max_e = ECDF([0.0])
    return DisagreementStats(pairs, ecdfs, max_e, np.asarray(risks), (lo, hi), int(un.sum()))


def _running(vals, op):
    acc = np.array(vals[0], dtype=np.float64)
    for v in vals[1:]:
        op(acc, v, out=acc)
    return acc


# persistence

_MAGIC = b"VAWORLD1"
_HEADER = struct.Struct("<8sIIIIcxxxddq")
_DTYPES = {b"f": np.float32, b"d": np.float64}


def save_ensemble(ensemble: WorldEnsemble, directory, name: str = "worlds", dtype=np.float32) -> dict:
    """Write ``<name>.bin`` (header + row-major worlds), ``<name>.json`` and ``<name>_observed.npz``."""
    os.makedirs(directory, exist_ok=True)
    code = b"f" if np.dtype(dtype) == np.float32 else b"d"
    m, n = ensemble.mask.shape
    k = ensemble.subspace_q.shape[1]
    p = len(ensemble.worlds) + len(ensemble.candidates)
    fit_tol, rank_tol = ensemble.tolerances
    seed = -1 if ensemble.seed is None else int(ensemble.seed)
    bin_path = os.path.join(directory, f"{name}.bin")
    with open(bin_path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, m, n, k, p, code, fit_tol, rank_tol, seed))
        for w in list(ensemble.worlds) + list(ensemble.candidates):
            fh.write(np.ascontiguousarray(w.matrix, dtype=_DTYPES[code]).tobytes())
    np.savez_compressed(os.path.join(directory, f"{name}_observed.npz"),
                        mask=ensemble.mask, Q=ensemble.subspace_q)
    manifest = {
        "format": _MAGIC.decode(),
        "binary": os.path.basename(bin_path),
        "observed": f"{name}_observed.npz",
        "shape": [m, n],
        "rank_k": k,
        "n_worlds": p,
        "dtype": np.dtype(_DTYPES[code]).name,
        "tolerances": {"fit": fit_tol, "rank": rank_tol},
        "label_range": list(ensemble.label_range),
        "seed": ensemble.seed,
        "header_bytes": _HEADER.size,
        "worlds": [{"slot": i, "accepted": True, "fit_residual": w.fit_residual,
                    "rank_residual": w.rank_residual} for i, w in enumerate(ensemble.worlds)]
        + [{"slot": len(ensemble.worlds) + i, "accepted": False, "index": c.index,
            "fit_residual": c.fit_residual, "rank_residual": c.rank_residual, "reason": c.reason}
           for i, c in enumerate(ensemble.candidates)],
        "rejected": [{kk: v for kk, v in r.items()} for r in ensemble.rejected],
    }
    with open(os.path.join(directory, f"{name}.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def load_ensemble(directory, name: str = "worlds", mmap: bool = True) -> WorldEnsemble:
    """Read an ensemble written by :func:`save_ensemble`.

    With ``mmap`` the world matrices are read-only views into the file.
    """
    with open(os.path.join(directory, f"{name}.json")) as fh:
        manifest = json.load(fh)
    bin_path = os.path.join(directory, manifest["binary"])
    with open(bin_path, "rb") as fh:
        magic, m, n, k, p, code, fit_tol, rank_tol, seed = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != _MAGIC:
        raise ValueError(f"{bin_path} is not a world container")
    dt = _DTYPES[code]
    if mmap:
        data = np.memmap(bin_path, dtype=dt, mode="r", offset=_HEADER.size, shape=(p, m, n))
    else:
        data = np.fromfile(bin_path, dtype=dt, offset=_HEADER.size).reshape(p, m, n)
    obs = np.load(os.path.join(directory, manifest["observed"]))
    lo, hi = manifest["label_range"]
    worlds, candidates = [], []
    for i, rec in enumerate(manifest["worlds"]):
        if rec.get("accepted", True):
            worlds.append(World(data[i], k, rec["fit_residual"], rec["rank_residual"], (lo, hi),
                                fit_tol, rank_tol))
        else:
            candidates.append(Candidate(rec["index"], data[i], rec["fit_residual"],
                                        rec["rank_residual"], rec["reason"]))
    return WorldEnsemble(worlds, obs["Q"], obs["mask"], (fit_tol, rank_tol), (lo, hi),
                         None if seed < 0 else seed, manifest.get("rejected", []), candidates)
