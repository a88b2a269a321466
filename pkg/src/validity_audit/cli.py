"""Command-line entry point: ``validity-audit <command> [options]``.

Settings come from three layers, later ones winning: built-in defaults, a
YAML (or JSON) document given with ``--config``, and command-line flags.
Every command writes its files under ``--out-dir`` and prints a short
summary to stdout in ``--format`` (json or csv).

Exit codes: 0 success, 1 internal error, 2 usage or precondition failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from . import plots
from .errors import AuditError, ConvergenceError, PreconditionError
from .graph import (CORE, CRITERIA, LEFT, RIGHT, SIDES, SampleGraph, group_core_cdf,
                    ingest_edge_list, ingest_movielens, kcore_decompose, write_edge_list)
from .risk import hoeffding_bound, markov_lower_bound, validity_verdict
from .scaling import CostReport, simulate_coverage_growth
from .simulate import (BARABASI_ALBERT, GeneratorConfig, generate_ba, generate_pareto_bipartite)
from .tail import coverage_table, empirical_coverage, fit_pareto_tail
from .worlds import (WorldWeights, disagreement_stats, fit_base_factorization, generate_ensemble,
                     orthonormal_subspace, rank_residual, save_ensemble)

log = logging.getLogger("validity_audit")

DEFAULT_RANKS = (1, 2, 5, 8, 10, 20, 30, 40, 50, 60, 80, 100)

DEFAULTS: dict = {
    "seed": 0,
    "out_dir": "validity-audit-out",
    "format": "json",
    "figures": True,
    "input": {"format": "movielens", "path": None, "user_meta": None, "columns": None,
              "label_range": None, "delimiter": None},
    "ranks": list(DEFAULT_RANKS),
    "criterion": CORE,
    "group": {"side": LEFT, "attribute": None},
    "tail": {"x_min": None, "min_tail": 10},
    "verdict": {"rank": 50},
    "worlds": {"rank": 50, "n_worlds": 100, "fit_tol": 1e-3, "rank_tol": 1e-2,
               "weights": {"sub": 1.0, "fit": 1.0, "div": 0.5},
               "base_method": "impute", "base_iters": 1000, "max_iters": 100,
               "polish_iters": 200, "max_attempts": 4, "dtype": "float32",
               "ecdf_points": 2048, "keep_rejected": True, "delta": 0.05},
    "simulate": {"alpha": 2.5, "x_min": 5.0, "domain_size": 10_000_000, "threshold": 100.0,
                 "growth": {"nodes": 100, "rank": 1, "weights": ["uniform", "pareto"],
                            "schedule": [10, 30, 100, 300, 1000, 3000, 10000, 30000, 100000]},
                 "generator": None},
}


@dataclass
class AuditConfig:
    """Fully resolved settings for one command invocation."""

    seed: int
    out_dir: str
    format: str
    figures: bool
    input: dict
    ranks: list
    criterion: str
    group: dict
    tail: dict
    verdict: dict
    worlds: dict
    simulate: dict
    sources: list = field(default_factory=list)

    def __post_init__(self):
        if not self.ranks or any(int(k) != k or k < 1 for k in self.ranks):
            raise PreconditionError(f"ranks must be a nonempty list of positive integers, got {self.ranks}")
        self.ranks = [int(k) for k in self.ranks]
        if self.format not in ("json", "csv"):
            raise PreconditionError(f"format must be json or csv, got {self.format!r}")
        if self.criterion not in CRITERIA:
            raise PreconditionError(f"criterion must be one of {CRITERIA}")
        if self.group.get("side", LEFT) not in SIDES:
            raise PreconditionError(f"group side must be one of {SIDES}")

    @classmethod
    def from_mapping(cls, data: Mapping, sources: Sequence[str] = ()) -> "AuditConfig":
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise PreconditionError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: copy.deepcopy(data[k]) for k in DEFAULTS}, sources=list(sources))

    def prepare_out_dir(self) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        if not os.access(self.out_dir, os.W_OK):
            raise PreconditionError(f"output directory {self.out_dir!r} is not writable")
        return self.out_dir

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def to_json(self) -> dict:
        return asdict(self)


def deep_merge(base: Mapping, override: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise PreconditionError(f"{path}: config must be a mapping at the top level")
    # accept dashes in keys, as on the command line
    return _undash(data)


def _undash(data):
    if isinstance(data, Mapping):
        return {str(k).replace("-", "_"): _undash(v) for k, v in data.items()}
    return data


def _set(d: dict, dotted: str, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


# flag name -> dotted config key
_FLAG_KEYS = {
    "seed": "seed", "out_dir": "out_dir", "format": "format",
    "input": "input.path", "input_format": "input.format", "user_meta": "input.user_meta",
    "delimiter": "input.delimiter", "ranks": "ranks", "criterion": "criterion",
    "group_attribute": "group.attribute", "group_side": "group.side", "x_min": None,
    "rank": None, "n_worlds": "worlds.n_worlds", "alpha": "simulate.alpha",
    "domain_size": "simulate.domain_size", "threshold": "simulate.threshold",
    "growth_nodes": "simulate.growth.nodes", "generator": "simulate.generator.kind",
    "generator_nodes": "simulate.generator.n_nodes",
}


def resolve_config(args: argparse.Namespace) -> AuditConfig:
    data = copy.deepcopy(DEFAULTS)
    sources = ["defaults"]
    if getattr(args, "config", None):
        data = deep_merge(data, load_config_file(args.config))
        sources.append(os.path.abspath(args.config))
    flags: dict = {}
    for name, key in _FLAG_KEYS.items():
        val = getattr(args, name, None)
        if val is None:
            continue
        if name == "x_min":
            key = "simulate.x_min" if args.command == "simulate" else "tail.x_min"
        elif name == "rank":
            key = "worlds.rank" if args.command == "worlds" else "verdict.rank"
        _set(flags, key, val)
    if getattr(args, "no_figures", False):
        flags["figures"] = False
    if flags:
        data = deep_merge(data, flags)
        sources.append("flags")
    gen = data["simulate"].get("generator")
    if isinstance(gen, Mapping) and gen.get("kind") is None:
        data["simulate"]["generator"] = None
    return AuditConfig.from_mapping(data, sources)


# shared helpers


def load_graph(cfg: AuditConfig) -> SampleGraph:
    inp = cfg.input
    if not inp.get("path"):
        raise PreconditionError("no input path given (use --input or input.path in the config)")
    fmt = inp.get("format", "movielens")
    lr = tuple(inp["label_range"]) if inp.get("label_range") else None
    if fmt == "movielens":
        path = inp["path"]
        data = os.path.join(path, "u.data") if os.path.isdir(path) else path
        meta = inp.get("user_meta")
        if meta is None and os.path.isdir(path) and os.path.exists(os.path.join(path, "u.user")):
            meta = os.path.join(path, "u.user")
        g = ingest_movielens(data, meta)
    elif fmt == "edge_list":
        g = ingest_edge_list(inp["path"], inp.get("columns"), lr, inp.get("delimiter"))
    else:
        raise PreconditionError(f"unknown input format {fmt!r}")
    if g.n_edges == 0:
        raise PreconditionError("empty graph")
    log.info("loaded %d x %d graph with %d edges", g.n_left, g.n_right, g.n_edges)
    return g


def write_csv(path: str, rows: Sequence[Mapping], fieldnames: Sequence[str] | None = None) -> str:
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: str, obj) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2)
    return path


def emit(cfg: AuditConfig, summary: Mapping, table: Sequence[Mapping] | None = None, out=None):
    """Print ``summary`` as JSON, or ``table`` (falling back to summary) as CSV."""
    out = out or sys.stdout
    if cfg.format == "json":
        json.dump(_jsonable(summary), out, indent=2)
        out.write("\n")
        return
    rows = list(table) if table is not None else [
        {"key": k, "value": json.dumps(_jsonable(v))} for k, v in summary.items()]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["key", "value"], extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    out.write(buf.getvalue())


def _safe_fit(degrees, cfg: AuditConfig):
    try:
        return fit_pareto_tail(degrees, x_min=cfg.tail.get("x_min"),
                               min_tail=int(cfg.tail.get("min_tail", 10))), None
    except AuditError as exc:
        return None, str(exc)


def degree_survival_rows(g: SampleGraph) -> list[dict]:
    rows = []
    for side in SIDES:
        d = np.asarray(g.degrees(side).degrees)
        vals, counts = np.unique(d, return_counts=True)
        # Pr(D >= v) for each distinct degree
        surv = (len(d) - np.concatenate([[0], np.cumsum(counts)[:-1]])) / max(len(d), 1)
        rows += [{"side": side, "degree": int(v), "count": int(c), "survival": float(s)}
                 for v, c, s in zip(vals, counts, surv)]
    return rows


# commands


def run_audit(g: SampleGraph, cfg: AuditConfig) -> tuple[dict, dict]:
    """Audit report and the CSV tables it is drawn from, without writing files."""
    t0 = time.perf_counter()
    cd = kcore_decompose(g)
    fits, fit_errors = {}, {}
    for side in SIDES:
        fit, err = _safe_fit(g.degrees(side), cfg)
        if fit is not None:
            fits[side] = fit
        else:
            fit_errors[side] = err
    coverage = []
    for side in SIDES:
        coverage += coverage_table(fits.get(side), cd, side, cfg.ranks)

    side, attr = cfg.group.get("side", LEFT), cfg.group.get("attribute")
    group_rows, core_curves, groups = [], {}, {}
    if attr:
        values = g.attribute_values(side, attr)
        names = sorted({v for v in values if v is not None}, key=str)
        if not names:
            raise PreconditionError(f"no {side} node carries attribute {attr!r}")
        levels = cd.level(side, cfg.criterion)
        for name in names:
            members = np.flatnonzero(values == name)
            groups[str(name)] = {
                "n": int(len(members)),
                "mean_core": float(levels[members].mean()),
                "coverage": {str(k): empirical_coverage(cd, side, k, members, cfg.criterion)
                             for k in cfg.ranks},
            }
            for k in cfg.ranks:
                group_rows.append({"group": name, "n": len(members), "rank": k,
                                   "coverage": groups[str(name)]["coverage"][str(k)]})
        core_curves = group_core_cdf(g, cd, side, attr, cfg.criterion)
    else:
        core_curves = {side: [(int(k), float(np.mean(cd.level(side, cfg.criterion) >= k)))
                              for k in range(cd.max_core + 2)]}
    core_rows = [{"group": name, "k": k, "fraction": f}
                 for name, pts in core_curves.items() for k, f in pts]

    vrank = int(cfg.verdict.get("rank", max(cfg.ranks)))
    verdict = validity_verdict(cd, vrank, g, ((side, attr),) if attr else (), cfg.criterion)

    report = {
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "graph": {"n_left": g.n_left, "n_right": g.n_right, "n_edges": g.n_edges,
                  "label_range": list(g.label_range)},
        "degrees": {s: _describe(np.asarray(g.degrees(s).degrees)) for s in SIDES},
        "cores": {"max_core": cd.max_core,
                  **{s: _describe(np.asarray(cd.core_number(s))) for s in SIDES}},
        "tail_fits": {s: f.to_json() for s, f in fits.items()},
        "tail_fit_errors": fit_errors,
        "coverage": coverage,
        "groups": {"side": side, "attribute": attr, "criterion": cfg.criterion, "values": groups},
        "verdict": verdict.to_json(),
        "runtime_seconds": time.perf_counter() - t0,
    }
    tables = {"degree_survival": degree_survival_rows(g), "coverage": coverage,
              "core_cdf": core_rows, "group_coverage": group_rows,
              "fits": {s: f.to_json() for s, f in fits.items()}, "core_curves": core_curves}
    return report, tables


def _describe(a: np.ndarray) -> dict:
    if len(a) == 0:
        return {"n": 0}
    return {"n": int(len(a)), "min": int(a.min()), "median": float(np.median(a)),
            "mean": float(a.mean()), "max": int(a.max())}


def cmd_audit(cfg: AuditConfig) -> int:
    g = load_graph(cfg)
    cfg.prepare_out_dir()
    report, tables = run_audit(g, cfg)
    files = {"report": write_json(cfg.path("audit.json"), report),
             "degree_survival": write_csv(cfg.path("degree_survival.csv"), tables["degree_survival"],
                                          ["side", "degree", "count", "survival"]),
             "coverage": write_csv(cfg.path("coverage.csv"), tables["coverage"],
                                   ["side", "rank", "analytic", "empirical_core", "empirical_degree"]),
             "core_cdf": write_csv(cfg.path("core_cdf.csv"), tables["core_cdf"], ["group", "k", "fraction"])}
    if tables["group_coverage"]:
        files["group_coverage"] = write_csv(cfg.path("group_coverage.csv"), tables["group_coverage"],
                                            ["group", "n", "rank", "coverage"])
    if cfg.figures:
        files["degree_survival_png"] = plots.degree_survival(
            tables["degree_survival"], cfg.path("degree_survival.png"), tables["fits"])
        files["core_cdf_png"] = plots.core_cdf(tables["core_curves"], cfg.path("core_cdf.png"),
                                               int(cfg.verdict.get("rank", 0)) or None)
        files["coverage_png"] = plots.coverage_vs_rank(tables["coverage"], cfg.path("coverage.png"))
    emit(cfg, {"files": files, "graph": report["graph"], "coverage": report["coverage"]},
         report["coverage"])
    return 0


def run_worlds(g: SampleGraph, cfg: AuditConfig, progress=None):
    """Base fit, ensemble and disagreement statistics (nothing written)."""
    w = cfg.worlds
    p = int(w["n_worlds"])
    if p < 2:
        raise PreconditionError("disagreement statistics need at least 2 worlds")
    k = int(w["rank"])
    if k > min(g.shape):
        raise PreconditionError(f"rank {k} exceeds the matrix dimensions {g.shape}")
    t0 = time.perf_counter()
    fac = fit_base_factorization(g, k, seed=cfg.seed, max_iters=int(w["base_iters"]),
                                 fit_tol=float(w["fit_tol"]), method=w["base_method"])
    log.info("base fit: observed RMS %.4g after %d iterations", fac.fit_residual, fac.iterations)
    Q = orthonormal_subspace(fac.U)
    ens = generate_ensemble(
        g, Q, p, seed=cfg.seed, weights=WorldWeights(**w["weights"]),
        max_iters=int(w["max_iters"]), polish_iters=int(w["polish_iters"]),
        fit_tol=float(w["fit_tol"]), rank_tol=float(w["rank_tol"]),
        max_attempts=int(w["max_attempts"]), dtype=np.dtype(w["dtype"]).type,
        progress=progress, base=fac.completion, keep_rejected=bool(w["keep_rejected"]))
    include_rejected = len(ens.worlds) < 2
    if include_rejected and len(ens.matrices(True)) < 2:
        raise PreconditionError("fewer than 2 matrices were generated; no statistics")
    stats = disagreement_stats(ens, ecdf_points=w.get("ecdf_points"), include_rejected=include_rejected)
    base = {"method": fac.method, "fit_residual": fac.fit_residual, "converged": fac.converged,
            "iterations": fac.iterations}
    return fac, ens, stats, base, include_rejected, time.perf_counter() - t0


def cmd_worlds(cfg: AuditConfig) -> int:
    g = load_graph(cfg)
    cfg.prepare_out_dir()

    def progress(i, world):
        log.info("world %d: %s", i, "accepted" if world is not None else "rejected")

    fac, ens, stats, base, include_rejected, runtime = run_worlds(g, cfg, progress)
    manifest = save_ensemble(ens, cfg.out_dir, "worlds", dtype=np.dtype(cfg.worlds["dtype"]).type)

    n = len(ens.matrices(include_rejected))
    R = stats.risk_matrix(n)
    delta = float(cfg.worlds.get("delta", 0.05))
    pair_rows = []
    for (i, j), r, e in zip(stats.pairs, stats.expected_risk_per_pair, stats.pairwise_nae_ecdf):
        pair_rows.append({"world_i": i, "world_j": j, "expected_risk": float(r),
                          "median_nae": e.median(),
                          "markov_lower_bound": float(markov_lower_bound(r, 1.0))})
    ecdf_rows = [{"world_i": i, "world_j": j, "nae": float(x), "cdf": float(F)}
                 for (i, j), e in zip(stats.pairs, stats.pairwise_nae_ecdf) for x, F in zip(e.x, e.F)]
    me = stats.max_nae_ecdf.thinned(cfg.worlds.get("ecdf_points") or len(stats.max_nae_ecdf.x))
    max_rows = [{"nae": float(x), "cdf": float(F)} for x, F in zip(me.x, me.F)]
    files = {"container": os.path.join(cfg.out_dir, manifest["binary"]),
             "manifest": cfg.path("worlds.json"),
             "pairs": write_csv(cfg.path("pair_risk.csv"), pair_rows,
                                ["world_i", "world_j", "expected_risk", "median_nae", "markov_lower_bound"]),
             "pairwise_ecdf": write_csv(cfg.path("nae_ecdf.csv"), ecdf_rows, ["world_i", "world_j", "nae", "cdf"]),
             "max_ecdf": write_csv(cfg.path("max_nae_ecdf.csv"), max_rows, ["nae", "cdf"])}
    summary = {
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "base_fit": base,
        "n_requested": int(cfg.worlds["n_worlds"]),
        "n_accepted": len(ens.worlds),
        "n_rejected_slots": len(ens.candidates),
        "n_rejected_attempts": len(ens.rejected),
        "statistics_include_rejected": include_rejected,
        "rank_residual_floor": _floor(ens, fac),
        "hoeffding_gap": hoeffding_bound(max(g.n_edges, 1), delta),
        "stats": stats.summary(),
        "runtime_seconds": runtime,
        "files": files,
    }
    write_json(cfg.path("worlds_report.json"), summary)
    files["report"] = cfg.path("worlds_report.json")
    if cfg.figures:
        files["nae_ecdf_png"] = plots.nae_ecdf(
            [(e.x, e.F) for e in stats.pairwise_nae_ecdf], (me.x, me.F), cfg.path("nae_ecdf.png"))
        files["risk_png"] = plots.risk_heatmap(R, cfg.path("pair_risk.png"))
    for rec in ens.rejected:
        log.warning("world %d attempt %d rejected: %s", rec["index"], rec["attempt"], rec["reason"])
    emit(cfg, {k: v for k, v in summary.items() if k != "config"}, pair_rows)
    return 0


def _floor(ens, fac) -> float | None:
    if fac.completion is None:
        return None
    return rank_residual(ens.subspace_q, fac.completion)


def run_simulate(cfg: AuditConfig):
    s = cfg.simulate
    rep = CostReport.compute(float(s["alpha"]), float(s["x_min"]), int(float(s["domain_size"])),
                             float(s["threshold"]))
    gr = s.get("growth") or {}
    curves = {}
    growth_rows = []
    for i, kind in enumerate(gr.get("weights", [])):
        pts = simulate_coverage_growth(rep.alpha, rep.x_min, int(gr["nodes"]), int(gr.get("rank", 1)),
                                       gr["schedule"], seed=cfg.seed + i, weights=kind)
        curves[kind] = pts
        growth_rows += [{"weights": kind, "nodes": int(gr["nodes"]), "rank": int(gr.get("rank", 1)),
                         "draws": m, "coverage": f} for m, f in pts]
    graph = None
    gen = s.get("generator")
    if gen:
        kind = gen.get("kind", BARABASI_ALBERT)
        conf = GeneratorConfig(kind, int(gen.get("n_nodes", 1000)), int(gen.get("m_attach", 1)),
                               gen.get("alpha", rep.alpha), gen.get("x_min", rep.x_min), cfg.seed)
        graph = generate_ba(conf) if kind == BARABASI_ALBERT else generate_pareto_bipartite(conf)
    return rep, growth_rows, curves, graph


def cmd_simulate(cfg: AuditConfig) -> int:
    rep, growth_rows, curves, graph = run_simulate(cfg)
    cfg.prepare_out_dir()
    js = rep.to_json()
    row = {**js.pop("params"), **js}
    files = {"bounds": write_csv(cfg.path("bounds.csv"), [row], list(row))}
    if growth_rows:
        files["growth"] = write_csv(cfg.path("coverage_growth.csv"), growth_rows,
                                    ["weights", "nodes", "rank", "draws", "coverage"])
    if graph is not None:
        write_edge_list(graph, cfg.path("graph.csv"))
        files["graph"] = cfg.path("graph.csv")
    if cfg.figures and curves:
        files["growth_png"] = plots.coverage_growth(curves, cfg.path("coverage_growth.png"))
    summary = {"config": cfg.to_json(), "seed": cfg.seed, "bounds": row, "files": files}
    write_json(cfg.path("simulate.json"), summary)
    emit(cfg, {"bounds": row, "files": files}, [row])
    return 0


def cmd_fit_tail(cfg: AuditConfig) -> int:
    g = load_graph(cfg)
    cfg.prepare_out_dir()
    rows = []
    for side in SIDES:
        fit = fit_pareto_tail(g.degrees(side), x_min=cfg.tail.get("x_min"),
                              min_tail=int(cfg.tail.get("min_tail", 10)))
        rows.append({"side": side, **fit.to_json()})
    if cfg.format == "json":
        write_json(cfg.path("tail_fit.json"), {"seed": cfg.seed, "fits": rows})
    else:
        write_csv(cfg.path("tail_fit.csv"), rows)
    emit(cfg, {"fits": rows}, rows)
    return 0


def cmd_verdict(cfg: AuditConfig) -> int:
    g = load_graph(cfg)
    cfg.prepare_out_dir()
    cd = kcore_decompose(g)
    side, attr = cfg.group.get("side", LEFT), cfg.group.get("attribute")
    v = validity_verdict(cd, int(cfg.verdict["rank"]), g, ((side, attr),) if attr else (), cfg.criterion)
    v.write_csv(cfg.path("verdict.csv"))
    write_json(cfg.path("verdict.json"), {"seed": cfg.seed, **v.to_json()})
    rows = [{"side": s, "n": v.summary[s]["n"],
             "fraction_valid_possible": v.summary[s]["fraction_valid_possible"]} for s in SIDES]
    emit(cfg, v.to_json(), rows)
    return 0


COMMANDS = {"audit": cmd_audit, "worlds": cmd_worlds, "simulate": cmd_simulate,
            "fit-tail": cmd_fit_tail, "verdict": cmd_verdict}


def _ranks(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out += list(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    # suppressed defaults let these flags go before or after the command
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="YAML or JSON settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    common.add_argument("-v", "--verbose", action="count")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="data file, or a MovieLens directory with u.data/u.user")
    data.add_argument("--input-format", choices=("movielens", "edge_list"))
    data.add_argument("--user-meta", help="MovieLens u.user file")
    data.add_argument("--delimiter")
    data.add_argument("--criterion", choices=CRITERIA)
    data.add_argument("--group-attribute")
    data.add_argument("--group-side", choices=SIDES)

    parser = argparse.ArgumentParser(prog="validity-audit", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("audit", parents=[common, data], help="degrees, cores, tail fits, coverage")
    p.add_argument("--ranks", type=_ranks, help="e.g. 8,10,20 or 8..100")
    p.add_argument("--x-min", type=float, help="fix the tail fit's x_min")
    p.add_argument("--rank", type=int, help="rank for the per-node verdict")
    p = sub.add_parser("worlds", parents=[common, data], help="possible-worlds ensemble")
    p.add_argument("--rank", type=int)
    p.add_argument("--n-worlds", type=int)
    p = sub.add_parser("simulate", parents=[common], help="scaling bounds and coverage growth")
    p.add_argument("--alpha", type=float)
    p.add_argument("--x-min", type=float)
    p.add_argument("--domain-size", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--growth-nodes", type=int)
    p.add_argument("--generator", choices=("barabasi_albert", "pareto_bipartite"),
                   help="also write a synthetic graph as graph.csv")
    p.add_argument("--generator-nodes", type=int)
    p = sub.add_parser("fit-tail", parents=[common, data], help="Pareto tail fit per side")
    p.add_argument("--x-min", type=float)
    p = sub.add_parser("verdict", parents=[common, data], help="per-node necessary-condition verdicts")
    p.add_argument("--rank", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ConvergenceError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AuditError, ValueError, KeyError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort report
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
