"""Command-line entry point: ``sbekmeans {generate,cluster,bench,rerun}``.

Every output file gets a ``<file>.manifest.json`` sibling recording the
normalised argument list, the resolved seed, the library version and a
fingerprint of the input data; ``sbekmeans rerun MANIFEST`` replays it.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .core import Centroids, ContractError, RngStream, SolverConfig, set_threads
from .data import (PAPER_2D_INIT, PRESETS, DataFormatError, fingerprint, format_rows, load_any,
                   load_csv, preset)
from .harness import ALGORITHMS, make_histogram, run_solver, run_trials
from .solvers import DivergenceError

EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 2, 3, 4


class UsageError(Exception):
    pass


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV or IDX3 image file")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--label-column", type=int, default=None,
                   help="0-based column holding labels (negative counts from the end)")
    p.add_argument("--algo", choices=ALGORITHMS, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--gamma0", type=float, default=None,
                   help="initial step (sbe, default K) or constant step (be, default 0.9)")
    p.add_argument("--alpha", type=float, default=0.75)
    p.add_argument("--beta", type=float, default=1 / 1.01)
    p.add_argument("--batch-size", type=int, default=None, help="mini-batch size M (mbem, sbe)")
    p.add_argument("--imaxit", type=int, default=5)
    p.add_argument("--omaxit", type=int, default=100, help="outer iterations (mbem, sbe, be)")
    p.add_argument("--max-iter", type=int, default=50, help="EM iteration cap")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sbekmeans", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=None,
                    help="worker cap; never changes numerical output (env SBE_THREADS)")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a preset dataset to CSV")
    g.add_argument("--preset", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--with-labels", action="store_true", help="append the component index as a last column")
    g.add_argument("--sigma", type=float, default=0.25, help="noise level for the noisy-digit preset")
    g.add_argument("--per-center", type=int, default=7500)
    g.add_argument("--bases", default=None, help="CSV or IDX file of base images (noisy-digit preset)")
    g.add_argument("--init-out", default=None,
                   help="also write the fixed 4-center initialisation (2-D Gaussian preset)")

    c = sub.add_parser("cluster", help="run one solver")
    _add_solver_flags(c)
    c.add_argument("--init", default="random", help="'random' or 'file=PATH'")
    c.add_argument("--centroids-out", default="centroids.csv")
    c.add_argument("--trace-out", default=None, help="CSV of iter,objective")

    b = sub.add_parser("bench", help="repeated random-init trials")
    _add_solver_flags(b)
    b.add_argument("--trials", type=int, default=100)
    b.add_argument("--out", default="bench.json")
    b.add_argument("--hist-out", default=None)
    b.add_argument("--bins", type=int, default=30)
    b.add_argument("--timing-out", default=None,
                   help="JSON of per-trial wall times (not reproducible bit-for-bit)")

    r = sub.add_parser("rerun", help="replay the run recorded in a manifest")
    r.add_argument("manifest")
    return ap


# ------------------------------------------------------------------ helpers

def _check_writable(path: Optional[str]) -> None:
    if path is None:
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise UsageError(f"cannot write {path}: directory {parent} is missing or not writable")


def _normalised_argv(args: argparse.Namespace) -> List[str]:
    out = [args.command]
    for key, val in sorted(vars(args).items()):
        if key in ("command", "threads") or val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        out += [flag] if val is True else [flag, repr(val) if isinstance(val, float) else str(val)]
    return out


def _manifest(args, data_fp: str, extra: Optional[dict] = None) -> dict:
    m = {
        "subcommand": args.command,
        "argv": _normalised_argv(args),
        "seed": args.seed,
        "version": __version__,
        "dataset_fingerprint": data_fp,
    }
    if extra:
        m.update(extra)
    return m


def _write(path: str, text: str, manifest: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)
    with open(path + ".manifest.json", "w") as fh:
        fh.write(json.dumps(dict(manifest, output=os.path.basename(path)), indent=2, sort_keys=True) + "\n")


def _solver_config(args) -> SolverConfig:
    if args.algo in ("mbem", "sbe") and args.batch_size is None:
        raise UsageError(f"--algo {args.algo} requires --batch-size")
    gamma0 = args.gamma0
    if args.algo == "sbe" and gamma0 is None:
        gamma0 = float(args.k)
        print(f"gamma0 not given; using gamma0 = K = {gamma0}", file=sys.stderr)
    if args.algo == "be" and gamma0 is None:
        gamma0 = 0.9
        print(f"gamma0 not given; using constant step {gamma0}", file=sys.stderr)
    if args.max_iter < 1:
        raise UsageError("--max-iter must be >= 1")
    cfg = SolverConfig(k=args.k, gamma0=gamma0, alpha=args.alpha, beta=args.beta,
                       batch_size=args.batch_size if args.batch_size is not None else 1,
                       imaxit=args.imaxit, omaxit=args.omaxit, seed=args.seed)
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    return cfg


def _load_data(args):
    return load_any(args.data, has_header=args.has_header, label_column=args.label_column)


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    if args.preset not in PRESETS:
        raise UsageError(f"unknown preset {args.preset!r}; available: {', '.join(PRESETS)}")
    _check_writable(args.out)
    _check_writable(args.init_out)
    if args.init_out is not None and args.preset != "paper-sec3.1-gaussian":
        raise UsageError("--init-out only applies to paper-sec3.1-gaussian")
    bases = load_any(args.bases).points if args.bases else None
    data = preset(args.preset, RngStream(args.seed), bases=bases, sigma=args.sigma,
                  per_center=args.per_center)
    pts = data.points
    if args.with_labels:
        pts = np.column_stack([pts, data.labels])
    fp = fingerprint(data)
    m = _manifest(args, fp, {"n": data.n, "dim": data.dim})
    _write(args.out, format_rows(pts), m)
    if args.init_out:
        _write(args.init_out, format_rows(PAPER_2D_INIT), m)
    print(f"wrote {data.n} x {data.dim} points to {args.out} (fingerprint {fp})")
    return 0


def cmd_cluster(args) -> int:
    _check_writable(args.centroids_out)
    _check_writable(args.trace_out)
    init_path = None
    if args.init != "random":
        if not args.init.startswith("file="):
            raise UsageError("--init must be 'random' or 'file=PATH'")
        init_path = args.init[len("file="):]
    data = _load_data(args)
    cfg = _solver_config(args)
    if args.algo in ("mbem", "sbe"):
        cfg.check_data(data)
    init = None
    if init_path is not None:
        init = Centroids(load_csv(init_path).points)
        if init.k != args.k or init.dim != data.dim:
            raise UsageError(f"init file has shape {init.centers.shape}, expected ({args.k}, {data.dim})")
    elif args.k > data.n:
        raise UsageError(f"--k {args.k} exceeds dataset size {data.n}")

    trace = run_solver(args.algo, data, cfg, RngStream(args.seed), args.max_iter, cfg.gamma0,
                       init=init)
    m = _manifest(args, fingerprint(data), {"resolved_gamma0": cfg.gamma0 if args.algo in ("sbe", "be") else None,
                                            "final_objective": trace.final_objective,
                                            "iterations": trace.iterations})
    _write(args.centroids_out, format_rows(trace.final_centroids.centers), m)
    if args.trace_out:
        lines = ["iter,objective"] + [f"{i},{v!r}" for i, v in enumerate(trace.objectives, start=1)]
        _write(args.trace_out, "\n".join(lines) + "\n", m)
    print(f"{args.algo}: final objective {trace.final_objective:.6f} after {trace.iterations} iterations")
    return 0


def cmd_bench(args) -> int:
    for p in (args.out, args.hist_out, args.timing_out):
        _check_writable(p)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.bins < 1:
        raise UsageError("--bins must be >= 1")
    data = _load_data(args)
    cfg = _solver_config(args)
    if args.k > data.n:
        raise UsageError(f"--k {args.k} exceeds dataset size {data.n}")
    if args.algo in ("mbem", "sbe"):
        cfg.check_data(data)
    workers = args.threads or int(os.environ.get("SBE_THREADS", "1") or 1)
    set_threads(1)
    summary = run_trials(data, args.algo, cfg, args.trials, args.seed, workers=workers,
                         em_max_iter=args.max_iter, be_gamma=cfg.gamma0)
    m = _manifest(args, fingerprint(data))
    doc = dict(summary.to_dict(), manifest=m)
    _write(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n", m)
    ok = [v for v in summary.objectives if v == v]
    if args.hist_out:
        _write(args.hist_out, make_histogram(ok, args.bins).to_csv(), m)
    if args.timing_out:
        timing = {"wall_times": summary.wall_times,
                  "mean_wall_time": float(np.mean(summary.wall_times))}
        with open(args.timing_out, "w") as fh:
            json.dump(timing, fh, indent=2)
    print(f"{args.algo}: min {summary.min:.6f} max {summary.max:.6f} mean {summary.mean:.6f} "
          f"var {summary.variance:.3e} ({len(summary.diverged)} diverged)")
    return 0


def cmd_rerun(args, threads) -> int:
    with open(args.manifest) as fh:
        m = json.load(fh)
    argv = (["--threads", str(threads)] if threads else []) + list(m["argv"])
    return main(argv)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        set_threads(args.threads)
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "cluster":
            return cmd_cluster(args)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_rerun(args, args.threads)
    except (UsageError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    finally:
        set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
