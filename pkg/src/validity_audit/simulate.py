"""Synthetic social-system generators and biased samplers.

Barabasi-Albert graphs are undirected; they are stored as a
:class:`SampleGraph` whose left and right id sets are both ``range(n)`` and
whose edges point from the newer node to the older one. Use
:func:`undirected_degrees` for their degree sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SampleGraph
from .scaling import pareto_weights

BARABASI_ALBERT = "barabasi_albert"
PARETO_BIPARTITE = "pareto_bipartite"
GENERATOR_KINDS = (BARABASI_ALBERT, PARETO_BIPARTITE)


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str
    n_nodes: int
    m_attach: int = 1
    alpha: float | None = None
    x_min: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"kind must be one of {GENERATOR_KINDS}, got {self.kind!r}")
        if self.m_attach < 1:
            raise ValueError("m_attach must be >= 1")
        if self.n_nodes <= self.m_attach:
            raise ValueError("n_nodes must exceed m_attach")
        if self.kind == PARETO_BIPARTITE:
            if self.alpha is None or self.x_min is None:
                raise ValueError("pareto_bipartite needs alpha and x_min")
            if not self.alpha > 0 or not self.x_min >= 1:
                raise ValueError("need alpha > 0 and x_min >= 1")


def _edge_graph(n_left, n_right, rows, cols) -> SampleGraph:
    return SampleGraph(
        left_ids=tuple(range(n_left)),
        right_ids=tuple(range(n_right)),
        rows=np.asarray(rows, dtype=np.int64),
        cols=np.asarray(cols, dtype=np.int64),
        labels=np.ones(len(rows)),
        label_range=(1.0, 1.0),
    )


def generate_ba(config: GeneratorConfig) -> SampleGraph:
    """Preferential-attachment graph started from a complete graph on ``m_attach`` nodes.

    Each new node links to ``m_attach`` distinct existing nodes, drawn with
    probability proportional to degree. Degree-proportional draws pick a
    uniform slot in the list of all edge endpoints so far; while that list is
    empty (``m_attach == 1``) the choice is uniform.
    """
    if config.kind != BARABASI_ALBERT:
        raise ValueError("config.kind must be 'barabasi_albert'")
    n, m = config.n_nodes, config.m_attach
    rng = np.random.default_rng(config.seed)
    n_edges = m * (m - 1) // 2 + m * (n - m)
    src = np.empty(n_edges, dtype=np.int64)
    dst = np.empty(n_edges, dtype=np.int64)
    ends = np.empty(2 * n_edges, dtype=np.int64)
    e = 0
    for i in range(1, m):
        for j in range(i):
            src[e], dst[e] = i, j
            ends[2 * e], ends[2 * e + 1] = i, j
            e += 1

    buf = rng.random(4096)
    pos = 0
    for new in range(m, n):
        chosen: set = set()
        n_ends = 2 * e
        while len(chosen) < m:
            if pos == len(buf):
                buf = rng.random(4096)
                pos = 0
            u = buf[pos]
            pos += 1
            t = int(ends[int(u * n_ends)]) if n_ends else int(u * new)
            chosen.add(t)
        for t in sorted(chosen):
            src[e], dst[e] = new, t
            ends[2 * e], ends[2 * e + 1] = new, t
            e += 1
    return _edge_graph(n, n, src, dst)


def undirected_degrees(g: SampleGraph) -> np.ndarray:
    """Degrees of a one-mode graph stored as left=right=range(n)."""
    if g.n_left != g.n_right:
        raise ValueError("not a one-mode graph")
    return np.bincount(g.rows, minlength=g.n_left) + np.bincount(g.cols, minlength=g.n_left)


def _stub_draws(weights: np.ndarray, m: int, rng) -> np.ndarray:
    # each node contributes floor(w) stubs; the urn is refilled when exhausted
    stubs = np.repeat(np.arange(len(weights)), np.floor(weights).astype(np.int64))
    if m and len(stubs) == 0:
        raise ValueError("all weights are below 1; no stubs to draw")
    out = []
    left = m
    while left > 0:
        perm = rng.permutation(stubs)
        out.append(perm[:left])
        left -= len(out[-1])
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def generate_pareto_bipartite(
    config: GeneratorConfig,
    n_left: int | None = None,
    n_right: int | None = None,
    m_edges: int | None = None,
    sampling: str = "stubs",
) -> SampleGraph:
    """Bipartite graph whose endpoint weights follow Pareto(alpha, x_min) per side.

    ``sampling="independent"`` draws both endpoints of every edge i.i.d. with
    probability proportional to weight. ``"stubs"`` (default) gives node ``i``
    ``floor(w_i)`` stubs and draws endpoints from that urn without
    replacement, so per-endpoint probability is still proportional to weight
    but degrees follow the Pareto law without Poisson smoothing. The default
    ``m_edges`` is the number of left stubs. Duplicate pairs are collapsed.
    """
    if config.kind != PARETO_BIPARTITE:
        raise ValueError("config.kind must be 'pareto_bipartite'")
    if sampling not in ("stubs", "independent"):
        raise ValueError("sampling must be 'stubs' or 'independent'")
    nl = config.n_nodes if n_left is None else n_left
    nr = config.n_nodes if n_right is None else n_right
    rng = np.random.default_rng(config.seed)
    wl = pareto_weights(config.alpha, config.x_min, nl, rng)
    wr = pareto_weights(config.alpha, config.x_min, nr, rng)
    if m_edges is None:
        m_edges = int(np.floor(wl).sum())
    if m_edges < 0:
        raise ValueError("m_edges must be nonnegative")
    if sampling == "stubs":
        rows = _stub_draws(wl, m_edges, rng)
        cols = _stub_draws(wr, m_edges, rng)
    else:
        rows = rng.choice(nl, size=m_edges, p=wl / wl.sum())
        cols = rng.choice(nr, size=m_edges, p=wr / wr.sum())
    pairs = np.unique(rows.astype(np.int64) * nr + cols)
    return _edge_graph(nl, nr, pairs // nr, pairs % nr)


class BiasedSampler:
    """Draws edges of a graph with popularity, quality and temporal bias.

    Static draw probability of edge ``e`` is proportional to
    ``deg(node_e) ** popularity_weight * label_e ** quality_weight`` where
    ``node_e`` is the edge's endpoint on ``side``. With ``temporal_memory > 0``
    an edge is additionally weighted by ``1 + temporal_memory * c`` where
    ``c`` counts draws of its node among the last ``memory_window`` draws,
    so consecutive draws are dependent.
    """

    def __init__(self, g: SampleGraph, popularity_weight: float = 0.0,
                 quality_weight: float = 0.0, temporal_memory: float = 0.0,
                 memory_window: int = 10, side: str = "right"):
        if min(popularity_weight, quality_weight, temporal_memory) < 0:
            raise ValueError("bias weights must be nonnegative")
        if g.n_edges == 0:
            raise ValueError("graph has no edges to sample")
        self.graph = g
        self.temporal_memory = float(temporal_memory)
        self.memory_window = int(memory_window)
        self.side = side
        self.nodes = g.cols if side == "right" else g.rows
        deg = g.degrees(side).degrees[self.nodes].astype(np.float64)
        logw = popularity_weight * np.log(deg)
        if quality_weight:
            if np.any(g.labels <= 0):
                raise ValueError("quality bias needs positive labels")
            logw = logw + quality_weight * np.log(g.labels)
        w = np.exp(logw - logw.max())
        self.probabilities = w / w.sum()

    def draw(self, size: int, seed=None) -> np.ndarray:
        """Indices of ``size`` sampled edges (with replacement)."""
        rng = np.random.default_rng(seed)
        p = self.probabilities
        if self.temporal_memory == 0:
            return rng.choice(len(p), size=size, p=p)
        out = np.empty(size, dtype=np.int64)
        recent: list = []
        boost = np.zeros(self.graph.n_side(self.side))
        for t in range(size):
            q = p * (1 + self.temporal_memory * boost[self.nodes])
            e = int(rng.choice(len(q), p=q / q.sum()))
            out[t] = e
            node = self.nodes[e]
            boost[node] += 1
            recent.append(node)
            if len(recent) > self.memory_window:
                boost[recent.pop(0)] -= 1
        return out

    def samples(self, size: int, world=None, hypothesis=None, seed=None):
        """Draws as ``(entry, f_val, h_val)`` tuples plus their propensities.

        ``f_val`` is read from ``world`` (default: the edge labels), ``h_val``
        from ``hypothesis`` (default: zeros). Propensities are the static
        draw probabilities, exact only when ``temporal_memory == 0``.
        """
        idx = self.draw(size, seed)
        r, c = self.graph.rows[idx], self.graph.cols[idx]
        f = self.graph.labels[idx] if world is None else np.asarray(world)[r, c]
        h = np.zeros(len(idx)) if hypothesis is None else np.asarray(hypothesis)[r, c]
        samples = [((int(i), int(j)), float(a), float(b)) for i, j, a, b in zip(r, c, f, h)]
        return samples, self.probabilities[idx]


def biased_sampler(g: SampleGraph, popularity_weight: float = 0.0, quality_weight: float = 0.0,
                   temporal_memory: float = 0.0, **kwargs) -> BiasedSampler:
    return BiasedSampler(g, popularity_weight, quality_weight, temporal_memory, **kwargs)
