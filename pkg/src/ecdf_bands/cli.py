"""Command-line front end.

Subcommands: ``test`` (band test on one PIT column or several chains),
``pit`` (empirical PIT from draws plus comparison samples), ``power``
(rejection-rate sweeps), ``thin`` (ESS-based thinning), ``gamma``
(build or query precomputed adjustment grids), and ``plot`` (SVG
figures).  Exit codes: 0 for a passing test, 1 for a statistical
rejection, 2 for usage or data errors.

Input files are CSV (optional header, one column per chain) or NDJSON
with records like {"chain": 0, "value": 1.25}.  The environment
variable ECDF_BANDS_CACHE can point at a default gamma-grid file.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .bands_multi import test_multi
from .bands_single import test_single
from .gamma_cache import build_grid, interpolate, load_grid, save_grid
from .power import power_sweep
from .report import PlotSpec, plot_data, rank_hist, render_svg
from .thinning import STRATEGIES, ess_report, thin, thinning_factor
from .transform import (
    ChainSet,
    PitValues,
    default_grid,
    ecdf_eval,
    empirical_pit,
    joint_fractional_ranks,
)

REPORT_SCHEMA = "report/1"
CACHE_ENV = "ECDF_BANDS_CACHE"


@dataclass(frozen=True)
class RunConfig:
    """Validated knobs shared by the statistical subcommands."""

    alpha: float = 0.05
    method: str = "auto"
    m: int = 10_000
    seed: int = 0
    grid_k: int = 100
    tie_policy: str = "deterministic"
    strategy: str = "BULK_TAIL_MIN"
    threads: int = 1
    out: str | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 0.5:
            raise ValueError("alpha must lie in (0, 0.5]")
        if self.method not in ("auto", "simulate", "optimize", "cache"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.grid_k < 1:
            raise ValueError("grid-k must be positive")
        if self.threads < 1:
            raise ValueError("threads must be positive")


def _config(args: argparse.Namespace) -> RunConfig:
    fields = {}
    for name in ("alpha", "method", "seed", "grid_k", "tie_policy", "strategy", "threads", "out"):
        if hasattr(args, name) and getattr(args, name) is not None:
            fields[name] = getattr(args, name)
    if getattr(args, "m_reps", None) is not None:
        fields["m"] = args.m_reps
    return RunConfig(**fields)


def _read_table(path: str) -> np.ndarray:
    """Rectangular float table from CSV or NDJSON; rows kept as rows."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if not stripped:
        raise ValueError(f"{path}: empty input")
    if stripped[0] == "{":
        return _parse_ndjson(text, path)
    return _parse_csv(text, path)


def _parse_ndjson(text: str, path: str) -> np.ndarray:
    series: dict[int, list[float]] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            chain = int(rec["chain"])
            value = float(rec["value"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{ln}: bad NDJSON record ({exc})") from exc
        series.setdefault(chain, []).append(value)
    lengths = {len(v) for v in series.values()}
    if len(lengths) != 1:
        raise ValueError(f"{path}: chains have unequal lengths {sorted(lengths)}")
    cols = [series[c] for c in sorted(series)]
    # one row per draw position, one column per chain
    return np.array(cols, dtype=np.float64).T


def _parse_csv(text: str, path: str) -> np.ndarray:
    rows = [row for row in csv.reader(text.splitlines()) if row and any(c.strip() for c in row)]
    if not rows:
        raise ValueError(f"{path}: empty input")
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1
    if start == len(rows):
        raise ValueError(f"{path}: no data rows")
    width = len(rows[start])
    data = []
    for ln, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise ValueError(f"{path}:{ln}: ragged row ({len(row)} cells, expected {width})")
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: non-numeric cell ({exc})") from exc
    return np.array(data, dtype=np.float64)


def _columns(path: str) -> np.ndarray:
    """(L, N) array with one row per column of the input file."""
    return _read_table(path).T


def _load_cache(explicit: str | None = None):
    path = explicit or os.environ.get(CACHE_ENV)
    if not path:
        return None
    return load_grid(path)


def _write_text(out: str | None, text: str) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _exceedance_records(exceedances) -> list[dict]:
    return [
        {"index": e.index, "observed": e.observed, "bound": e.bound, "side": e.side}
        for e in exceedances
    ]


def cmd_test(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cols = _columns(args.input)
    cache = _load_cache()
    if cols.shape[0] == 1:
        values = cols[0]
        grid = default_grid(values.size, k_max=cfg.grid_k)
        rep = test_single(
            values,
            alpha=cfg.alpha,
            method=cfg.method,
            grid=grid,
            m=cfg.m,
            seed=cfg.seed,
            threads=cfg.threads,
            cache=cache,
        )
        info = rep.bands.gamma_info
        payload = {
            "schema": REPORT_SCHEMA,
            "mode": "single",
            "n": rep.bands.n,
            "chains": 1,
            "alpha": cfg.alpha,
            "gamma": rep.bands.gamma,
            "attained_coverage": info.attained_coverage if info else None,
            "method": info.method if info else "fixed",
            "grid": [float(z) for z in rep.bands.grid.points],
            "bands": {
                "lower": [float(v) for v in rep.bands.lower],
                "upper": [float(v) for v in rep.bands.upper],
            },
            "inside": rep.inside,
            "exceedances": [_exceedance_records(rep.exceedances)],
        }
    else:
        cs = ChainSet(cols)
        grid = default_grid(cs.n_draws, cs.n_chains * cs.n_draws, k_max=cfg.grid_k)
        rep = test_multi(
            cs,
            alpha=cfg.alpha,
            method=cfg.method,
            grid=grid,
            tie_policy=cfg.tie_policy,
            m=cfg.m,
            seed=cfg.seed,
            threads=cfg.threads,
            cache=cache,
        )
        info = rep.bands.gamma_info
        payload = {
            "schema": REPORT_SCHEMA,
            "mode": "multi",
            "n": rep.bands.n,
            "chains": rep.bands.n_chains,
            "alpha": cfg.alpha,
            "gamma": rep.bands.gamma,
            "attained_coverage": info.attained_coverage if info else None,
            "method": info.method if info else "fixed",
            "grid": [float(z) for z in rep.bands.grid.points],
            "bands": {
                "lower": [float(v) for v in rep.bands.lower],
                "upper": [float(v) for v in rep.bands.upper],
            },
            "inside": rep.inside,
            "exceedances": [_exceedance_records(r.exceedances) for r in rep.chains],
        }
    _write_text(cfg.out, _json_text(payload))
    return 0 if rep.inside else 1


def cmd_pit(args: argparse.Namespace) -> int:
    cfg = _config(args)
    draws = _columns(args.draws)
    if draws.shape[0] != 1:
        raise ValueError("draws file must have exactly one column")
    y = draws[0]
    comp = _read_table(args.comparison)
    if comp.shape[0] == 1 and y.size > 1:
        comp = np.repeat(comp, y.size, axis=0)
    pit = empirical_pit(y, comp)
    lines = [f"# resolution: {pit.resolution}", "pit"]
    lines += [repr(float(v)) for v in pit.values]
    _write_text(cfg.out, "\n".join(lines) + "\n")
    return 0


def cmd_power(args: argparse.Namespace) -> int:
    cfg = _config(args)
    ks = [float(k) for k in args.ks.split(",") if k.strip()]
    tests = [t.strip() for t in args.tests.split(",") if t.strip()]
    curve = power_sweep(
        tests,
        args.family,
        ks,
        args.n,
        replicates=cfg.m,
        seed=cfg.seed,
        n_chains=args.chains,
        alpha=cfg.alpha,
        threads=cfg.threads,
    )
    names = sorted(curve.rates)
    header = ["k"]
    for t in names:
        header += [f"rate_{t}", f"se_{t}"]
    lines = [",".join(header)]
    for j, k in enumerate(curve.ks):
        row = [f"{k:g}"]
        for t in names:
            r = curve.rates[t][j]
            se = (r * (1.0 - r) / curve.replicates) ** 0.5
            row += [f"{r:.6f}", f"{se:.6f}"]
        lines.append(",".join(row))
    _write_text(cfg.out, "\n".join(lines) + "\n")
    return 0


def cmd_thin(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cs = ChainSet(_columns(args.input))
    rep = ess_report(cs)
    plan = thinning_factor(rep, cs.n_chains * cs.n_draws, cfg.strategy)
    thinned = thin(cs, plan.factor)
    lines = [",".join(f"chain{i + 1}" for i in range(thinned.n_chains))]
    for row in thinned.chains.T:
        lines.append(",".join(repr(float(v)) for v in row))
    _write_text(cfg.out, "\n".join(lines) + "\n")
    payload = {
        "ess_mean": rep.ess_mean,
        "ess_bulk": rep.ess_bulk,
        "ess_tail": rep.ess_tail,
        "ess_quantiles": list(rep.ess_quantiles),
        "n_total": rep.n_total,
        "strategy": plan.strategy,
        "factor": plan.factor,
        "kept_per_chain": thinned.n_draws,
    }
    if args.ess_out:
        _write_text(args.ess_out, _json_text(payload))
    else:
        sys.stderr.write(
            f"thinned by {plan.factor} ({cfg.strategy}): kept {thinned.n_draws} of "
            f"{cs.n_draws} draws per chain\n"
        )
    return 0


def cmd_gamma(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if args.gamma_action == "build":
        ns = [int(v) for v in args.ns.split(",") if v.strip()]
        ls = [int(v) for v in args.ls.split(",") if v.strip()]
        alphas = [float(v) for v in args.alphas.split(",") if v.strip()]
        grid = build_grid(
            ns, ls, alphas, k_policy=cfg.grid_k, m=cfg.m, seed=cfg.seed, threads=cfg.threads
        )
        if not cfg.out:
            raise ValueError("gamma build requires --out")
        save_grid(grid, cfg.out)
        sys.stderr.write(f"wrote {len(grid.entries)} entries to {cfg.out}\n")
        return 0
    grid = _load_cache(args.grid_file)
    if grid is None:
        raise ValueError(f"no grid file given and {CACHE_ENV} is not set")
    res = interpolate(grid, args.n, args.l, cfg.alpha)
    payload = {
        "n": args.n,
        "l": args.l,
        "alpha": cfg.alpha,
        "gamma": res.gamma,
        "attained_coverage": res.attained_coverage,
        "method": res.method,
    }
    _write_text(cfg.out, _json_text(payload))
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cols = _columns(args.input)
    cache = _load_cache()
    if args.kind == "rank_hist":
        return _plot_hist(args, cfg, cols)
    if cols.shape[0] == 1:
        rep = test_single(
            cols[0],
            alpha=cfg.alpha,
            method=cfg.method,
            grid=default_grid(cols.shape[1], k_max=cfg.grid_k),
            m=cfg.m,
            seed=cfg.seed,
            threads=cfg.threads,
            cache=cache,
        )
        spec = PlotSpec(args.kind, rep.bands, (rep.trajectory,), title=args.title)
    else:
        cs = ChainSet(cols)
        rep = test_multi(
            cs,
            alpha=cfg.alpha,
            method=cfg.method,
            grid=default_grid(cs.n_draws, cs.n_chains * cs.n_draws, k_max=cfg.grid_k),
            tie_policy=cfg.tie_policy,
            m=cfg.m,
            seed=cfg.seed,
            threads=cfg.threads,
            cache=cache,
        )
        labels = tuple(f"chain {i + 1}" for i in range(cs.n_chains))
        spec = PlotSpec(
            args.kind,
            rep.bands,
            tuple(r.trajectory for r in rep.chains),
            labels=labels,
            title=args.title,
        )
    if args.data_out:
        _write_text(args.data_out, _json_text(plot_data(spec)))
    _write_text(cfg.out, render_svg(spec))
    return 0


def _plot_hist(args: argparse.Namespace, cfg: RunConfig, cols: np.ndarray) -> int:
    if cols.shape[0] == 1:
        values = cols[0]
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("rank_hist input values must lie in [0, 1]")
        hist = rank_hist(values, args.bins, alpha=cfg.alpha)
        spec = PlotSpec("rank_hist", hist=hist, title=args.title)
        if args.data_out:
            _write_text(args.data_out, _json_text(plot_data(spec)))
        _write_text(cfg.out, render_svg(spec))
        return 0
    cs = ChainSet(cols)
    ranks = joint_fractional_ranks(cs, tie_policy=cfg.tie_policy, seed=cfg.seed)
    if not cfg.out:
        raise ValueError("multi-chain rank_hist requires --out (one file per chain)")
    stem, ext = os.path.splitext(cfg.out)
    for ci in range(cs.n_chains):
        hist = rank_hist(ranks[ci], args.bins, alpha=cfg.alpha, expected_total=cs.n_draws)
        title = args.title or f"chain {ci + 1}"
        spec = PlotSpec("rank_hist", hist=hist, title=title)
        _write_text(f"{stem}_chain{ci + 1}{ext or '.svg'}", render_svg(spec))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecdf-bands",
        description="Simultaneous confidence bands and uniformity tests for PIT ECDFs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, method=True, tie=False):
        p.add_argument("--alpha", type=float, default=None, help="test level (default 0.05)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        if method:
            p.add_argument(
                "--method",
                choices=("auto", "simulate", "optimize", "cache"),
                default=None,
                help="gamma calibration method",
            )
            p.add_argument("--m-reps", type=int, default=None, help="simulation replicates")
            p.add_argument("--grid-k", type=int, default=None, help="largest evaluation grid size")
        if tie:
            p.add_argument(
                "--tie-policy",
                choices=("deterministic", "random"),
                default=None,
                help="how pooled rank ties break",
            )

    p = sub.add_parser("test", help="band test for one PIT column or several chains")
    p.add_argument("input", help="CSV or NDJSON file; one column per chain")
    common(p, tie=True)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("pit", help="empirical PIT values from draws and comparison samples")
    p.add_argument("draws", help="single-column file of draws")
    p.add_argument("comparison", help="file with one comparison row per draw")
    common(p, method=False)
    p.set_defaults(func=cmd_pit)

    p = sub.add_parser("power", help="rejection-rate sweep over a transformation family")
    p.add_argument("--family", choices=("A", "B", "C"), required=True)
    p.add_argument("--ks", required=True, help="comma-separated strengths, e.g. 0.2,0.5,1,2")
    p.add_argument("--n", type=int, required=True, help="sample size per chain")
    p.add_argument("--tests", default="bands", help="comma-separated: bands,T1,W2,U2,KS")
    p.add_argument("--chains", type=int, default=1, help="chain count (bands test only if > 1)")
    common(p)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("thin", help="ESS-based thinning of chains")
    p.add_argument("input", help="CSV or NDJSON file; one column per chain")
    p.add_argument("--strategy", choices=STRATEGIES, default=None)
    p.add_argument("--ess-out", default=None, help="where to write the ESS report JSON")
    common(p, method=False)
    p.set_defaults(func=cmd_thin)

    p = sub.add_parser("gamma", help="build or query a precomputed adjustment grid")
    gsub = p.add_subparsers(dest="gamma_action", required=True)
    pb = gsub.add_parser("build", help="calibrate a grid of adjustment levels")
    pb.add_argument("--ns", required=True, help="comma-separated sample sizes")
    pb.add_argument("--ls", default="1", help="comma-separated chain counts")
    pb.add_argument("--alphas", default="0.05", help="comma-separated levels")
    common(pb)
    pb.set_defaults(func=cmd_gamma)
    pq = gsub.add_parser("query", help="interpolate a stored grid")
    pq.add_argument("grid_file", nargs="?", default=None, help=f"grid JSON (default ${CACHE_ENV})")
    pq.add_argument("--n", type=int, required=True)
    pq.add_argument("--l", type=int, default=1)
    common(pq, method=False)
    pq.set_defaults(func=cmd_gamma)

    p = sub.add_parser("plot", help="render an SVG figure")
    p.add_argument("input", help="CSV or NDJSON file")
    p.add_argument("--kind", choices=("ecdf", "ecdf_diff", "rank_hist"), default="ecdf_diff")
    p.add_argument("--bins", type=int, default=50, help="histogram bin count")
    p.add_argument("--title", default="", help="figure title")
    p.add_argument("--data-out", default=None, help="also write plot data JSON here")
    common(p, tie=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
