"""Command-line entry point: ``bcm <command> [--config PATH] [flags]``.

Every output file starts with ``# key=value`` lines recording the command,
library version and all resolved parameters, so a run can be repeated from
its own outputs.  Wall-clock timings go to stdout only, which keeps the
files bit-identical across reruns.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .classify import (
    RESULT_COLUMNS,
    REPEAT_COLUMNS,
    ClassifyConfig,
    load_dataset,
    run_classification,
    synthetic_corpus,
)
from .config import build, load_config, resolved
from .convergence import SUMMARY_COLUMNS, TRIAL_COLUMNS, ConvergenceConfig, run_convergence
from .errors import BCMError, ConfigError, ConvergenceError
from .estimate import estimate_coords_1d, estimate_coords_pointcloud, estimate_coords_samples
from .fileio import (
    ensure_dir,
    read_coords,
    read_grid,
    read_pointcloud,
    read_spd,
    write_coords,
    write_gram,
    write_grid,
    write_pointcloud,
    write_report,
    write_spd,
    write_table,
)
from .gaussian import (
    COVARIANCE_COLUMNS,
    CovarianceConfig,
    gaussian_barycenter,
    run_covariance_experiment,
    summarize_covariance,
    trial_rng,
)
from .inpaint import COLUMNS as INPAINT_COLUMNS
from .inpaint import InpaintConfig, run_inpaint, summarize
from .ot import PointCloud
from .qp import minimizer_multiplicity
from .synthesis import ibp_barycenter, quantile_barycenter_1d

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3


def _paths(value) -> tuple:
    if value is None:
        return ()
    if isinstance(value, (tuple, list)):
        return tuple(str(v) for v in value)
    return tuple(v.strip() for v in str(value).split(",") if v.strip())


# --- command configs ---------------------------------------------------------

@dataclass
class EstimateConfig:
    """``method``: ``pointcloud`` (weighted clouds, plan projections),
    ``samples`` (clouds read as i.i.d. samples, held-out entropic maps) or
    ``exact1d`` (uniform 1D samples, monotone maps)."""

    query: str | None = None
    refs: tuple = ()
    method: str = "pointcloud"
    epsilon: float = 1.0
    tol: float = 1e-7
    max_iters: int = 10_000
    seed: int = 0
    threads: int = 1

    def validate(self):
        if not self.query or not self.refs:
            raise ConfigError("estimate-coords needs 'query' and 'refs'")
        if self.method not in ("pointcloud", "samples", "exact1d"):
            raise ConfigError(f"unknown method {self.method!r}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")


@dataclass
class SynthesizeConfig:
    """``kind``: ``gaussian`` (SPD files), ``1d`` (uniform 1D point clouds)
    or ``grid`` (grid files, entropic barycenter)."""

    kind: str = "gaussian"
    refs: tuple = ()
    lam: tuple = ()
    coords: str | None = None
    epsilon: float = 1.0
    method: str = "dense"
    tol: float | None = None
    max_iters: int | None = None
    seed: int = 0
    threads: int = 1

    def validate(self):
        if self.kind not in ("gaussian", "1d", "grid"):
            raise ConfigError(f"unknown kind {self.kind!r}")
        if not self.refs:
            raise ConfigError("synthesize needs 'refs'")
        if not self.lam and not self.coords:
            raise ConfigError("synthesize needs 'lam' or a 'coords' file")


@dataclass
class ClassifyRunConfig(ClassifyConfig):
    """Classification protocol plus the data source.  Without ``data_dir``
    a synthetic 1D corpus with ``topics`` x ``per_topic`` documents is used."""

    data_dir: str | None = None
    topics: int = 2
    per_topic: int = 20
    n_points: int = 40


# --- helpers --------------------------------------------------------------------

def _metadata(command: str, cfg, **extra) -> dict:
    meta = {"command": command, "version": __version__}
    meta.update(resolved(cfg))
    meta.update(extra)
    return meta


def _config(cls, args, epsilon_key: str | None = "epsilon", extra: dict | None = None):
    """Config file values, then command-specific flags, then the common flags."""
    values = load_config(args.config) if args.config else {}
    values.update(extra or {})
    if args.seed is not None:
        values["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        values["threads"] = args.threads
    if args.epsilon is not None:
        if epsilon_key is None:
            raise ConfigError(f"--epsilon does not apply to '{args.command}'")
        values[epsilon_key] = args.epsilon
    cfg = build(cls, values)
    cfg.validate()
    return cfg


def _out(args) -> str:
    return ensure_dir(args.out)


# --- commands ---------------------------------------------------------------------

def cmd_estimate_coords(args) -> int:
    extra = {}
    if args.query:
        extra["query"] = args.query
    if args.ref:
        extra["refs"] = tuple(args.ref)
    cfg = _config(EstimateConfig, args, extra=extra)
    cfg.refs = _paths(cfg.refs)
    out = _out(args)
    t0 = time.perf_counter()
    query = read_pointcloud(cfg.query)
    refs = [read_pointcloud(p) for p in cfg.refs]
    if cfg.method == "pointcloud":
        est = estimate_coords_pointcloud(query, refs, cfg.epsilon, cfg.tol, cfg.max_iters, cfg.threads)
        cost = "squared"
    elif cfg.method == "samples":
        est = estimate_coords_samples(
            query.points, [r.points for r in refs], cfg.epsilon, cfg.tol, cfg.max_iters, cfg.threads
        )
        cost = "half-squared"
    else:
        for c in [query, *refs]:
            if c.dim != 1:
                raise ConfigError("exact1d needs one-dimensional clouds")
        est = estimate_coords_1d(query.points[:, 0], [r.points[:, 0] for r in refs])
        cost = "exact"
    diag = minimizer_multiplicity(est.gram)
    meta = _metadata("estimate-coords", cfg, cost=cost)
    write_coords(os.path.join(out, "coords.csv"), est.lam, meta)
    write_gram(os.path.join(out, "gram.csv"), est.gram, meta)
    report = {
        "objective": est.value,
        "iterations": est.solution.iterations,
        "converged": est.solution.converged,
        "multiplicity": diag.kind.value,
    }
    if diag.witness is not None:
        report["witness"] = " ".join(format(float(x), ".17g") for x in diag.witness)
    write_report(os.path.join(out, "report.txt"), report, meta)
    print("lambda =", " ".join(f"{x:.6g}" for x in est.lam))
    print(f"objective = {est.value:.6g}  multiplicity = {diag.kind.value}")
    print(f"elapsed {time.perf_counter() - t0:.3f}s")
    return EXIT_OK


def cmd_covariance(args) -> int:
    cfg = _config(CovarianceConfig, args, epsilon_key=None)
    out = _out(args)
    t0 = time.perf_counter()
    rows = run_covariance_experiment(cfg)
    meta = _metadata("covariance", cfg, rng="philox(seed,trial[,n])")
    write_table(os.path.join(out, "covariance.csv"), COVARIANCE_COLUMNS, rows, meta)
    summary = summarize_covariance(rows)
    cols = ("n", "median_bcm", "q25_bcm", "q75_bcm", "median_empirical", "q25_empirical", "q75_empirical")
    write_table(os.path.join(out, "covariance_summary.csv"), cols, summary, meta)
    for n, b50, _, _, e50, _, _ in summary:
        print(f"n={n}: median W2 bcm {b50:.4g}  empirical {e50:.4g}")
    print(f"elapsed {time.perf_counter() - t0:.3f}s")
    return EXIT_OK


def cmd_inpaint(args) -> int:
    cfg = _config(InpaintConfig, args)
    out = _out(args)
    grids = ensure_dir(os.path.join(out, "grids"))
    meta = _metadata(
        "inpaint",
        cfg,
        data=cfg.source,
        score="entropic plan cost <pi,M>, squared pixel distance",
        ibp_stop="l1 change of normalized iterate < ibp_tol",
    )
    t0 = time.perf_counter()

    def save(res):
        stem = os.path.join(grids, f"trial_{res.trial:04d}")
        for name in ("original", "corrupted", "bcm", "linear"):
            write_grid(f"{stem}_{name}.csv", getattr(res, name), meta)
        print(f"trial {res.trial}: W2^2 bcm {res.w2_bcm:.4f}  linear {res.w2_linear:.4f}")

    results = run_inpaint(cfg, on_trial=save)
    write_table(os.path.join(out, "inpaint.csv"), INPAINT_COLUMNS, [r.row() for r in results], meta)
    lam_cols = [f"lam_{i + 1}" for i in range(len(results[0].lam))]
    write_table(
        os.path.join(out, "inpaint_coords.csv"),
        ["trial", "estimator", *lam_cols],
        [row for r in results for row in ((r.trial, "bcm", *r.lam), (r.trial, "linear", *r.lam_linear))],
        meta,
    )
    summary = summarize(results)
    write_report(os.path.join(out, "inpaint_summary.txt"), summary, meta)
    print(
        f"mean W2^2 bcm {summary['mean_w2_bcm']:.4f}  linear {summary['mean_w2_linear']:.4f}  "
        f"bcm wins {summary['bcm_win_rate']:.0%}"
    )
    print(f"elapsed {time.perf_counter() - t0:.3f}s")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _config(SynthesizeConfig, args)
    cfg.refs = _paths(cfg.refs)
    out = _out(args)
    t0 = time.perf_counter()
    lam = np.asarray(read_coords(cfg.coords) if cfg.coords else cfg.lam, dtype=float)
    meta = _metadata("synthesize", cfg)
    if cfg.kind == "gaussian":
        tol = 1e-10 if cfg.tol is None else cfg.tol
        iters = 1000 if cfg.max_iters is None else cfg.max_iters
        res = gaussian_barycenter(lam, [read_spd(p) for p in cfg.refs], tol, iters)
        write_spd(os.path.join(out, "barycenter.csv"), res.cov, meta)
        write_report(
            os.path.join(out, "report.txt"),
            {"iterations": res.iterations, "residual": res.residual},
            meta,
        )
    elif cfg.kind == "1d":
        clouds = [read_pointcloud(p) for p in cfg.refs]
        if any(c.dim != 1 for c in clouds):
            raise ConfigError("1d synthesis needs one-dimensional clouds")
        bary = quantile_barycenter_1d(lam, [c.points[:, 0] for c in clouds])
        write_pointcloud(os.path.join(out, "barycenter.csv"), PointCloud.uniform(bary[:, None]), meta)
    else:
        bary = ibp_barycenter(
            lam,
            [read_grid(p) for p in cfg.refs],
            cfg.epsilon,
            max_iters=5000 if cfg.max_iters is None else cfg.max_iters,
            tol=1e-7 if cfg.tol is None else cfg.tol,
            method=cfg.method,
        )
        write_grid(os.path.join(out, "barycenter.csv"), bary, meta)
    print(f"wrote {os.path.join(out, 'barycenter.csv')}")
    print(f"elapsed {time.perf_counter() - t0:.3f}s")
    return EXIT_OK


def cmd_convergence(args) -> int:
    cfg = _config(ConvergenceConfig, args, epsilon_key="eps0")
    out = _out(args)
    t0 = time.perf_counter()
    rows, summary = run_convergence(cfg)
    meta = _metadata("convergence", cfg, cost="half-squared", family="zero-mean gaussians")
    write_table(os.path.join(out, "convergence_trials.csv"), TRIAL_COLUMNS, rows, meta)
    write_table(os.path.join(out, "convergence.csv"), SUMMARY_COLUMNS, summary, meta)
    for n, eps, e, l in summary:
        print(f"n={n} eps={eps:.4g}: median max|A_hat - A| {e:.4g}  median |lam_hat - lam| {l:.4g}")
    print(f"elapsed {time.perf_counter() - t0:.3f}s")
    return EXIT_OK


def cmd_classify(args) -> int:
    extra = {"data_dir": args.data} if args.data else {}
    cfg = _config(ClassifyRunConfig, args, extra=extra)
    out = _out(args)
    t0 = time.perf_counter()
    if cfg.data_dir:
        docs = load_dataset(cfg.data_dir)
        source = cfg.data_dir
    else:
        docs = synthetic_corpus(cfg.topics, cfg.per_topic, cfg.n_points, trial_rng(cfg.seed, 2**31))
        source = "synthetic"
    summary, repeats, cache = run_classification(docs, cfg)
    meta = _metadata("classify", cfg, data=source, distance="entropic plan cost <pi,M>")
    write_table(os.path.join(out, "classify.csv"), RESULT_COLUMNS, summary, meta)
    write_table(os.path.join(out, "classify_repeats.csv"), REPEAT_COLUMNS, repeats, meta)
    for m, k, acc, _ in summary:
        print(f"{m:12s} k={k}: accuracy {acc:.3f}")
    print(f"transport solves {cache.misses}, cache hits {cache.hits}")
    print(f"elapsed {time.perf_counter() - t0:.3f}s")
    return EXIT_OK


COMMANDS = {
    "estimate-coords": cmd_estimate_coords,
    "covariance": cmd_covariance,
    "inpaint": cmd_inpaint,
    "synthesize": cmd_synthesize,
    "convergence": cmd_convergence,
    "classify": cmd_classify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--seed", type=int, help="base seed for the per-trial RNG streams")
    common.add_argument("--epsilon", type=float, help="entropic regularization")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bcm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    p = sub.add_parser("estimate-coords", parents=[common], help="coordinates of a query measure")
    p.add_argument("--query", metavar="PATH", help="query point-cloud CSV")
    p.add_argument("--ref", metavar="PATH", action="append", help="reference point-cloud CSV (repeatable)")
    sub.add_parser("covariance", parents=[common], help="Gaussian covariance estimation experiment")
    sub.add_parser("inpaint", parents=[common], help="image denoising/inpainting experiment")
    sub.add_parser("synthesize", parents=[common], help="barycenter from coordinates")
    sub.add_parser("convergence", parents=[common], help="sample-size study of the Gram estimate")
    p = sub.add_parser("classify", parents=[common], help="topic classification accuracy")
    p.add_argument("--data", metavar="DIR", help="dataset directory (point clouds + labels.csv)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"bcm {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"bcm {args.command}: did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (BCMError, OSError, ValueError) as exc:
        print(f"bcm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
