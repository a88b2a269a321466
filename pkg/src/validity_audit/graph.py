"""Bipartite sample graphs: ingestion, degrees, k-cores and group statistics.

A :class:`SampleGraph` holds the observed interactions between two node sets
(e.g. users and items). Node ids are interned to dense indices in order of
first appearance; repeated (left, right) pairs are collapsed to one edge that
keeps the label of the latest observation.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .errors import ParseError, SchemaError, ValidationError

LEFT = "left"
RIGHT = "right"
SIDES = (LEFT, RIGHT)

CORE = "core"
DEGREE = "degree"
CRITERIA = (CORE, DEGREE)


def check_side(side: str) -> str:
    if side not in SIDES:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return side


def check_criterion(criterion: str) -> str:
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be 'core' or 'degree', got {criterion!r}")
    return criterion


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleGraph:
    """Immutable simple bipartite graph of observed interactions.

    Edges are stored as parallel arrays ``rows`` (left index), ``cols``
    (right index) and ``labels``. ``multiplicity`` counts how many raw
    observations were collapsed into each edge.
    """

    left_ids: tuple
    right_ids: tuple
    rows: np.ndarray
    cols: np.ndarray
    labels: np.ndarray
    label_range: tuple[float, float]
    timestamps: np.ndarray | None = None
    multiplicity: np.ndarray | None = None
    left_meta: Mapping[int, Mapping[str, Any]] = field(default_factory=dict)
    right_meta: Mapping[int, Mapping[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        n_e = len(self.rows)
        if not (len(self.cols) == len(self.labels) == n_e):
            raise ValidationError("rows, cols and labels must have equal length")
        if n_e:
            if self.rows.min() < 0 or self.rows.max() >= len(self.left_ids):
                raise ValidationError("edge references an out-of-range left node")
            if self.cols.min() < 0 or self.cols.max() >= len(self.right_ids):
                raise ValidationError("edge references an out-of-range right node")
        lo, hi = self.label_range
        if lo > hi:
            raise ValidationError(f"label_range {self.label_range} is empty")
        if n_e and (self.labels.min() < lo or self.labels.max() > hi):
            raise ValidationError(f"labels outside label_range {self.label_range}")
        mult = self.multiplicity if self.multiplicity is not None else np.ones(n_e, np.int64)
        for name, arr in (("rows", self.rows), ("cols", self.cols),
                          ("labels", self.labels), ("multiplicity", mult)):
            object.__setattr__(self, name, _frozen(arr))
        if self.timestamps is not None:
            object.__setattr__(self, "timestamps", _frozen(self.timestamps))
        object.__setattr__(self, "left_meta", MappingProxyType(dict(self.left_meta)))
        object.__setattr__(self, "right_meta", MappingProxyType(dict(self.right_meta)))

    @classmethod
    def from_interactions(
        cls,
        left: Sequence,
        right: Sequence,
        labels: Sequence[float] | None = None,
        timestamps: Sequence[int] | None = None,
        label_range: tuple[float, float] | None = None,
        left_meta: Mapping[Any, Mapping[str, Any]] | None = None,
        right_meta: Mapping[Any, Mapping[str, Any]] | None = None,
        left_ids: Sequence | None = None,
        right_ids: Sequence | None = None,
    ) -> "SampleGraph":
        """Build a graph from raw interaction records.

        ``left``/``right`` hold node ids of any hashable type. Ids are interned
        in first-appearance order, starting after any ids pre-declared through
        ``left_ids``/``right_ids``. Metadata maps are keyed by raw id; ids that
        only appear in metadata become isolated nodes. A missing ``labels``
        means a pure interaction graph (every label 1.0).
        """
        if len(left) != len(right):
            raise ValidationError("left and right id sequences differ in length")
        n_raw = len(left)
        if labels is None:
            lab = np.ones(n_raw, dtype=np.float64)
        else:
            lab = np.asarray(labels, dtype=np.float64)
            if len(lab) != n_raw:
                raise ValidationError("labels length does not match edges")
        ts = None
        if timestamps is not None:
            ts = np.asarray(timestamps, dtype=np.int64)
            if len(ts) != n_raw:
                raise ValidationError("timestamps length does not match edges")
        if label_range is None:
            label_range = (float(lab.min()), float(lab.max())) if n_raw else (1.0, 1.0)
        label_range = (float(label_range[0]), float(label_range[1]))

        l_index: dict = {}
        r_index: dict = {}
        for ident in left_ids or ():
            l_index.setdefault(ident, len(l_index))
        for ident in right_ids or ():
            r_index.setdefault(ident, len(r_index))
        rows = np.fromiter((l_index.setdefault(x, len(l_index)) for x in left),
                           dtype=np.int64, count=n_raw)
        cols = np.fromiter((r_index.setdefault(x, len(r_index)) for x in right),
                           dtype=np.int64, count=n_raw)
        for ident in left_meta or {}:
            l_index.setdefault(ident, len(l_index))
        for ident in right_meta or {}:
            r_index.setdefault(ident, len(r_index))

        rows, cols, lab, ts, mult = _collapse_duplicates(rows, cols, lab, ts, len(r_index))
        lmeta = {l_index[k]: dict(v) for k, v in (left_meta or {}).items()}
        rmeta = {r_index[k]: dict(v) for k, v in (right_meta or {}).items()}
        return cls(
            left_ids=tuple(l_index),
            right_ids=tuple(r_index),
            rows=rows,
            cols=cols,
            labels=lab,
            label_range=label_range,
            timestamps=ts,
            multiplicity=mult,
            left_meta=lmeta,
            right_meta=rmeta,
        )

    @property
    def n_left(self) -> int:
        return len(self.left_ids)

    @property
    def n_right(self) -> int:
        return len(self.right_ids)

    @property
    def n_nodes(self) -> int:
        return self.n_left + self.n_right

    @property
    def n_edges(self) -> int:
        return len(self.rows)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_left, self.n_right)

    def n_side(self, side: str) -> int:
        return self.n_left if check_side(side) == LEFT else self.n_right

    def meta(self, side: str) -> Mapping[int, Mapping[str, Any]]:
        return self.left_meta if check_side(side) == LEFT else self.right_meta

    def ids(self, side: str) -> tuple:
        return self.left_ids if check_side(side) == LEFT else self.right_ids

    def degrees(self, side: str, multiplicity: bool = False) -> "DegreeSequence":
        """Degree sequence of one side.

        With ``multiplicity=True`` every raw observation counts, including the
        duplicates collapsed at build time.
        """
        idx = self.rows if check_side(side) == LEFT else self.cols
        w = self.multiplicity if multiplicity else None
        deg = np.bincount(idx, weights=w, minlength=self.n_side(side)).astype(np.int64)
        return DegreeSequence(side=side, degrees=deg)

    def biadjacency(self, values: str = "ones") -> sparse.csr_matrix:
        """Sparse ``n_left x n_right`` matrix of ones (or labels)."""
        data = self.labels if values == "labels" else np.ones(self.n_edges)
        return sparse.csr_matrix((data, (self.rows, self.cols)), shape=self.shape)

    def mask(self) -> np.ndarray:
        """Dense boolean matrix of observed entries."""
        m = np.zeros(self.shape, dtype=bool)
        m[self.rows, self.cols] = True
        return m

    def dense_labels(self, fill: float = 0.0) -> np.ndarray:
        y = np.full(self.shape, fill, dtype=np.float64)
        y[self.rows, self.cols] = self.labels
        return y

    def attribute_values(self, side: str, attribute: str) -> np.ndarray:
        """Object array of one metadata attribute per node (None if absent).

        Raises :class:`SchemaError` if no node on that side carries it.
        """
        meta = self.meta(side)
        out = np.full(self.n_side(side), None, dtype=object)
        seen = False
        for i, rec in meta.items():
            if attribute in rec:
                out[i] = rec[attribute]
                seen = True
        if not seen:
            raise SchemaError(f"unknown {side} attribute {attribute!r}")
        return out

    def group_members(self, side: str, attribute: str, value: Any) -> np.ndarray:
        """Indices of the nodes whose ``attribute`` equals ``value``."""
        vals = self.attribute_values(side, attribute)
        return np.flatnonzero(vals == value)

    def subgraph(self, left_index: Sequence[int], right_index: Sequence[int]) -> "SampleGraph":
        """Induced subgraph on the given node indices (order preserved)."""
        left_index = np.asarray(left_index, dtype=np.int64)
        right_index = np.asarray(right_index, dtype=np.int64)
        lmap = np.full(self.n_left, -1)
        lmap[left_index] = np.arange(len(left_index))
        rmap = np.full(self.n_right, -1)
        rmap[right_index] = np.arange(len(right_index))
        keep = (lmap[self.rows] >= 0) & (rmap[self.cols] >= 0)
        return SampleGraph(
            left_ids=tuple(self.left_ids[i] for i in left_index),
            right_ids=tuple(self.right_ids[j] for j in right_index),
            rows=lmap[self.rows[keep]],
            cols=rmap[self.cols[keep]],
            labels=self.labels[keep],
            label_range=self.label_range,
            timestamps=None if self.timestamps is None else self.timestamps[keep],
            multiplicity=self.multiplicity[keep],
            left_meta={int(lmap[i]): v for i, v in self.left_meta.items() if lmap[i] >= 0},
            right_meta={int(rmap[j]): v for j, v in self.right_meta.items() if rmap[j] >= 0},
        )


def _collapse_duplicates(rows, cols, labels, timestamps, n_right):
    n = len(rows)
    if n == 0:
        return rows, cols, labels, timestamps, np.zeros(0, dtype=np.int64)
    key = rows * max(n_right, 1) + cols
    _, first, group, counts = np.unique(
        key, return_index=True, return_inverse=True, return_counts=True
    )
    group = group.ravel()
    ts = timestamps if timestamps is not None else np.zeros(n, dtype=np.int64)
    # within a group: latest timestamp wins, ties go to the later row
    order = np.lexsort((np.arange(n), ts, group))
    winners = order[np.cumsum(counts) - 1]
    o = np.argsort(first, kind="stable")
    take = winners[o]
    ts_out = None if timestamps is None else timestamps[take]
    return rows[take], cols[take], labels[take], ts_out, counts[o].astype(np.int64)


@dataclass(frozen=True, eq=False)
class DegreeSequence:
    """Degrees of all nodes on one side of a sample graph."""

    side: str
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return len(self.degrees)

    def __len__(self):
        return len(self.degrees)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.degrees, dtype=dtype)


@dataclass(frozen=True, eq=False)
class CoreDecomposition:
    """Core numbers (and degrees) of every node of a sample graph."""

    left_core: np.ndarray
    right_core: np.ndarray
    left_degree: np.ndarray
    right_degree: np.ndarray

    def __post_init__(self):
        for name in ("left_core", "right_core", "left_degree", "right_degree"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.int64)))

    @property
    def max_core(self) -> int:
        both = np.concatenate([self.left_core, self.right_core])
        return int(both.max()) if len(both) else 0

    def core_number(self, side: str) -> np.ndarray:
        return self.left_core if check_side(side) == LEFT else self.right_core

    def degree(self, side: str) -> np.ndarray:
        return self.left_degree if check_side(side) == LEFT else self.right_degree

    def level(self, side: str, criterion: str = CORE) -> np.ndarray:
        """Per-node value compared against a rank: core number or degree.

        The degree criterion is weaker: a node can have degree >= k while
        lying outside the k-core.
        """
        check_criterion(criterion)
        return self.core_number(side) if criterion == CORE else self.degree(side)

    def all_levels(self, criterion: str = CORE) -> np.ndarray:
        return np.concatenate([self.level(LEFT, criterion), self.level(RIGHT, criterion)])


def _bz_core_numbers(indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    # Batagelj-Zaversnik bucket peeling, O(|V| + |E|)
    n = len(indptr) - 1
    deg_arr = np.diff(indptr)
    if n == 0:
        return deg_arr.astype(np.int64)
    md = int(deg_arr.max())
    vert_arr = np.argsort(deg_arr, kind="stable")
    pos_arr = np.empty(n, dtype=np.int64)
    pos_arr[vert_arr] = np.arange(n)
    counts = np.bincount(deg_arr, minlength=md + 1)
    bin_arr = np.concatenate([[0], np.cumsum(counts)[:-1]])

    deg = deg_arr.tolist()
    vert = vert_arr.tolist()
    pos = pos_arr.tolist()
    bins = bin_arr.tolist()
    ptr = indptr.tolist()
    nbr = indices.tolist()
    for i in range(n):
        v = vert[i]
        dv = deg[v]
        for u in nbr[ptr[v]:ptr[v + 1]]:
            du = deg[u]
            if du > dv:
                pu = pos[u]
                pw = bins[du]
                w = vert[pw]
                if u != w:
                    pos[u] = pw
                    vert[pu] = w
                    pos[w] = pu
                    vert[pw] = u
                bins[du] += 1
                deg[u] = du - 1
    return np.asarray(deg, dtype=np.int64)


def kcore_decompose(g: SampleGraph) -> CoreDecomposition:
    """Exact core numbers of all nodes, peeling both sides jointly.

    Left node ``i`` and right node ``j`` are vertices ``i`` and
    ``n_left + j`` of one undirected graph.
    """
    nl, nr = g.n_left, g.n_right
    src = np.concatenate([g.rows, g.cols + nl])
    dst = np.concatenate([g.cols + nl, g.rows])
    adj = sparse.csr_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(nl + nr, nl + nr))
    core = _bz_core_numbers(adj.indptr.astype(np.int64), adj.indices.astype(np.int64))
    deg = np.diff(adj.indptr)
    return CoreDecomposition(
        left_core=core[:nl], right_core=core[nl:], left_degree=deg[:nl], right_degree=deg[nl:]
    )


def is_k_connected(
    g: SampleGraph, k: int, cd: CoreDecomposition | None = None, criterion: str = CORE
) -> bool:
    """True iff every node lies in a core of order at least ``k``.

    ``criterion="degree"`` checks the weaker condition that every node has
    at least ``k`` observations.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return True
    cd = cd if cd is not None else kcore_decompose(g)
    levels = cd.all_levels(criterion)
    return bool(len(levels) == 0 or levels.min() >= k)


def group_core_cdf(
    g: SampleGraph, cd: CoreDecomposition, side: str, attribute: str, criterion: str = CORE
) -> dict[Any, list[tuple[int, float]]]:
    """Per attribute value, the fraction of the group with core number >= k.

    Curves run over ``k = 0 .. max_core + 1``; nodes without the attribute
    are left out.
    """
    values = g.attribute_values(side, attribute)
    levels = cd.level(side, criterion)
    top = int(levels.max()) + 1 if len(levels) else 1
    ks = np.arange(top + 1)
    out = {}
    groups = sorted({v for v in values if v is not None}, key=str)
    for grp in groups:
        lv = np.sort(levels[values == grp])
        # fraction with level >= k
        frac = 1.0 - np.searchsorted(lv, ks, side="left") / len(lv)
        out[grp] = [(int(k), float(f)) for k, f in zip(ks, frac)]
    return out


def project_ternary(triples: Iterable[tuple], mode: int = 2) -> SampleGraph:
    """Sum a set of observed triples over one index.

    The two remaining indices (in their original order) become the left and
    right nodes; each edge label counts the distinct values of the summed
    index observed for that pair.
    """
    if mode not in (0, 1, 2):
        raise ValueError("mode must be 0, 1 or 2")
    keep = [i for i in range(3) if i != mode]
    counts: dict[tuple, int] = {}
    for t in dict.fromkeys(tuple(t) for t in triples):
        pair = (t[keep[0]], t[keep[1]])
        counts[pair] = counts.get(pair, 0) + 1
    left = [p[0] for p in counts]
    right = [p[1] for p in counts]
    labels = list(counts.values())
    top = float(max(labels)) if labels else 1.0
    return SampleGraph.from_interactions(left, right, labels, label_range=(1.0, top))


# --------------------------------------------------------------------------
# readers and writers


def _maybe_int(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def ingest_movielens(
    data_path: str | os.PathLike, user_meta_path: str | os.PathLike | None = None
) -> SampleGraph:
    """Read the MovieLens 100k ``u.data`` (and optionally ``u.user``) files.

    ``u.data`` rows are ``user \\t item \\t rating \\t timestamp``; ``u.user``
    rows are ``user|age|gender|occupation|zip``. Users become left nodes,
    items right nodes, ratings the labels on a (1, 5) scale.
    """
    users, items, ratings, stamps = [], [], [], []
    with open(data_path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"expected 4 tab-separated fields, got {len(parts)}",
                                 line=lineno, path=data_path)
            try:
                u, i, r, t = int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=data_path) from None
            if not 1.0 <= r <= 5.0:
                raise ValidationError(f"{data_path}:{lineno}: rating {r} outside [1, 5]")
            users.append(u)
            items.append(i)
            ratings.append(r)
            stamps.append(t)

    meta = None
    if user_meta_path is not None:
        meta = {}
        with open(user_meta_path, encoding="latin-1") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                parts = line.split("|")
                if len(parts) != 5:
                    raise ParseError(f"expected 5 pipe-separated fields, got {len(parts)}",
                                     line=lineno, path=user_meta_path)
                try:
                    uid, age = int(parts[0]), int(parts[1])
                except ValueError as exc:
                    raise ParseError(str(exc), line=lineno, path=user_meta_path) from None
                meta[uid] = {"age": age, "gender": parts[2], "occupation": parts[3],
                             "zip": parts[4]}
    return SampleGraph.from_interactions(
        users, items, ratings, stamps, label_range=(1.0, 5.0), left_meta=meta
    )


def _sniff_delimiter(path, sample: str) -> str:
    if str(path).endswith((".tsv", ".tab")):
        return "\t"
    try:
        return csv.Sniffer().sniff(sample, delimiters=",\t;|").delimiter
    except csv.Error:
        return ","


def ingest_edge_list(
    path: str | os.PathLike,
    schema: Mapping[str, str] | None = None,
    label_range: tuple[float, float] | None = None,
    delimiter: str | None = None,
) -> SampleGraph:
    """Read a delimited edge list with a header row.

    ``schema`` maps roles to column names: ``left`` and ``right`` are
    required, ``label`` and ``timestamp`` optional. Defaults to the columns
    written by :func:`write_edge_list`. Without a label column every edge
    gets label 1.0. Numeric-looking ids are read as ints, others as strings.
    """
    explicit = schema is not None
    schema = dict(schema or {"left": "left", "right": "right", "label": "label",
                             "timestamp": "timestamp"})
    for role in ("left", "right"):
        if role not in schema:
            raise SchemaError(f"schema needs a {role!r} column")
    with open(path, newline="", encoding="utf-8") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        delim = delimiter or _sniff_delimiter(path, sample)
        reader = csv.reader(fh, delimiter=delim)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            return SampleGraph.from_interactions([], [], label_range=label_range or (1.0, 1.0))
        cols = {}
        for role, name in schema.items():
            if name is None:
                continue
            if name not in header:
                # the default schema treats label/timestamp as optional
                if not explicit and role in ("label", "timestamp"):
                    continue
                raise SchemaError(f"unknown column {name!r} (have {header})")
            cols[role] = header.index(name)
        left, right, labels, stamps = [], [], [], []
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}",
                                 line=lineno, path=path)
            left.append(_maybe_int(row[cols["left"]].strip()))
            right.append(_maybe_int(row[cols["right"]].strip()))
            if "label" in cols:
                tok = row[cols["label"]].strip()
                try:
                    labels.append(float(tok))
                except ValueError:
                    raise ParseError(f"non-numeric label {tok!r}", line=lineno, path=path) from None
            if "timestamp" in cols:
                tok = row[cols["timestamp"]].strip()
                try:
                    stamps.append(int(float(tok)))
                except ValueError:
                    raise ParseError(f"non-numeric timestamp {tok!r}", line=lineno,
                                     path=path) from None
    return SampleGraph.from_interactions(
        left,
        right,
        labels if "label" in cols else None,
        stamps if "timestamp" in cols else None,
        label_range=label_range,
    )


def write_edge_list(g: SampleGraph, path: str | os.PathLike, delimiter: str = ",") -> None:
    """Write ``g`` in the format :func:`ingest_edge_list` reads by default."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        header = ["left", "right", "label"]
        if g.timestamps is not None:
            header.append("timestamp")
        w.writerow(header)
        for e in range(g.n_edges):
            row = [g.left_ids[g.rows[e]], g.right_ids[g.cols[e]], repr(float(g.labels[e]))]
            if g.timestamps is not None:
                row.append(int(g.timestamps[e]))
            w.writerow(row)
