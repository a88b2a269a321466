"""Cost of reaching validity by scaling data collection or by benchmarks.

Closed forms are evaluated in log space; the Monte-Carlo helpers stand in for
the unequal-probability coupon collector, whose exact expectation is not
computable at realistic domain sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError

DEFAULT_THRESHOLD = 100.0


def log10_scaling_bound(alpha: float, x_min: float, domain_size: int) -> float:
    """log10 of ``(domain_size / 2) ** (alpha + 1) / (alpha * x_min ** alpha)``."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if not x_min > 0 or domain_size < 1:
        raise DomainError("x_min and domain_size must be positive")
    ln = (alpha + 1) * math.log(domain_size / 2) - math.log(alpha) - alpha * math.log(x_min)
    return ln / math.log(10)


def scaling_bound(alpha: float, x_min: float, domain_size: int) -> float:
    """Lower bound on the expected number of draws until a uniformly chosen
    node is sampled once. Returns ``inf`` if the value overflows a float."""
    lg = log10_scaling_bound(alpha, x_min, domain_size)
    return 10.0 ** lg if lg < 308 else math.inf


def benchmark_cost(alpha: float, x_min: float, domain_size: int,
                   threshold_x: float = DEFAULT_THRESHOLD) -> float:
    """Expected number of nodes with fewer than ``threshold_x`` observations:
    ``domain_size * (1 - (x_min / threshold_x) ** alpha)``."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if threshold_x < x_min:
        raise DomainError(f"threshold_x={threshold_x} is below x_min={x_min}")
    return domain_size * -math.expm1(alpha * math.log(x_min / threshold_x))


@dataclass(frozen=True)
class CostReport:
    """Scaling and benchmark costs for one parameter setting."""

    alpha: float
    x_min: float
    domain_size: int
    threshold_x: float
    scaling_lower_bound: float
    log10_scaling_lower_bound: float
    benchmark_nodes: float

    def __post_init__(self):
        if self.scaling_lower_bound < 0 or self.benchmark_nodes < 0:
            raise ValueError("costs must be nonnegative")

    @classmethod
    def compute(cls, alpha, x_min, domain_size, threshold_x=DEFAULT_THRESHOLD) -> "CostReport":
        lg = log10_scaling_bound(alpha, x_min, domain_size)
        return cls(
            alpha=float(alpha),
            x_min=float(x_min),
            domain_size=int(domain_size),
            threshold_x=float(threshold_x),
            scaling_lower_bound=scaling_bound(alpha, x_min, domain_size),
            log10_scaling_lower_bound=lg,
            benchmark_nodes=benchmark_cost(alpha, x_min, domain_size, threshold_x),
        )

    @property
    def log10_benchmark_nodes(self) -> float:
        return math.log10(self.benchmark_nodes) if self.benchmark_nodes > 0 else -math.inf

    def to_json(self) -> dict:
        return {
            "params": {"alpha": self.alpha, "x_min": self.x_min,
                       "domain_size": self.domain_size, "threshold_x": self.threshold_x},
            "scaling_lower_bound": self.scaling_lower_bound,
            "log10_scaling_lower_bound": self.log10_scaling_lower_bound,
            "benchmark_nodes": self.benchmark_nodes,
            "log10_benchmark_nodes": self.log10_benchmark_nodes,
        }


def simulate_first_success(p: float, trials: int, seed=None) -> float:
    """Mean number of Bernoulli(p) trials until the first success."""
    if not 0 < p <= 1:
        raise DomainError("p must lie in (0, 1]")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    return float(rng.geometric(p, size=trials).mean())


def pareto_weights(alpha: float, x_min: float, n: int, rng) -> np.ndarray:
    """``n`` i.i.d. Pareto(alpha, x_min) draws by inverse transform."""
    return x_min * (1.0 - rng.random(n)) ** (-1.0 / alpha)


def simulate_coverage_growth(
    alpha: float,
    x_min: float,
    domain_size: int,
    rank_k: int,
    sample_schedule: Sequence[int],
    seed=None,
    weights: str | np.ndarray = "pareto",
) -> list[tuple[int, float]]:
    """Fraction of nodes sampled at least ``rank_k`` times after ``m`` draws.

    Sampling weights are drawn once from the Pareto law (``weights="pareto"``),
    set uniform (``"uniform"``), or passed in explicitly; draws are with
    replacement proportional to weight. The schedule is evaluated on one
    growing sample, so the curve is non-decreasing in ``m``.
    """
    rng = np.random.default_rng(seed)
    if isinstance(weights, str):
        if weights == "pareto":
            w = pareto_weights(alpha, x_min, domain_size, rng)
        elif weights == "uniform":
            w = np.ones(domain_size)
        else:
            raise ValueError(f"unknown weights {weights!r}")
    else:
        w = np.asarray(weights, dtype=np.float64)
        if len(w) != domain_size or np.any(w < 0):
            raise ValueError("explicit weights must be nonnegative with length domain_size")
    p = w / w.sum()
    counts = np.zeros(domain_size, dtype=np.int64)
    drawn = 0
    out = {}
    for m in sorted(set(int(x) for x in sample_schedule)):
        if m < 0:
            raise ValueError("schedule entries must be nonnegative")
        if m > drawn:
            counts += rng.multinomial(m - drawn, p)
            drawn = m
        out[m] = float(np.mean(counts >= rank_k))
    return [(int(m), out[int(m)]) for m in sample_schedule]


def simulate_mean_first_success(
    alpha: float, x_min: float, domain_size: int, draws: int, seed=None
) -> float:
    """Monte-Carlo mean of first-success times over uniformly chosen nodes.

    Node ``i`` (values ``1..domain_size``) is hit per draw with probability
    ``min(1, alpha * x_min**alpha * i**-(alpha+1))``, the Pareto density at
    its value. The analytic :func:`scaling_bound` lower-bounds this mean.
    """
    rng = np.random.default_rng(seed)
    nodes = rng.integers(1, domain_size + 1, size=draws).astype(np.float64)
    p = np.minimum(1.0, alpha * x_min ** alpha * nodes ** -(alpha + 1.0))
    return float(rng.geometric(p).mean())
