"""Command line entry point: ``cutstokes run <config> [--out DIR] [--n-max N] [--threads N]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse_config, validate
from .verification import (ErrorReport, ManufacturedCase, attach_eoc, make_case,
                           position_center, sample_solution, solve_case)

log = logging.getLogger("cutstokes")

CSV_HEADER = ("study,case_id,n,h,mu_minus,mu_plus,f,k,c1,c2,err_l2_u,err_h1w_u,"
              "err_h1w_u_scaled,err_l2w_p,eoc_l2_u,eoc_h1w_u,eoc_l2w_p,residual,status,wall_ms"
              ).split(",")
SCALE_NOTE = ("err_h1w_u_scaled = err_h1w_u / max over the interior phase of |g-|, "
              "the radial profile of the interior velocity")

EXIT_OK, EXIT_CASE_FAILED, EXIT_CONFIG = 0, 1, 2


@dataclass
class Job:
    case_id: str
    n: int
    case: ManufacturedCase
    k: Optional[int] = None


def case_jobs(cfg: RunConfig, n_max: int = 32) -> list:
    mm, mp, f = cfg.mu_minus, cfg.mu_plus, cfg.f
    c = (cfg.c1, cfg.c2)
    s = cfg.study
    if s == "convergence":
        return [Job(f"n{n}", n, make_case(c, mm, mp, f))
                for n in cfg.resolved_n_list(n_max)]
    if s == "viscosity":
        return [Job(f"mu_plus{i}", cfg.n, make_case(c, mm, m, f))
                for i, m in enumerate(cfg.mu_plus_list)]
    if s == "slip":
        return [Job(f"f{i}", cfg.n, make_case(c, mm, mp, fi))
                for i, fi in enumerate(cfg.f_list)]
    if s == "position":
        return [Job(f"k{k}", cfg.n, make_case(position_center(k, cfg.n), mm, mp, f), k)
                for k in cfg.k_list]
    if cfg.k is not None:
        c = position_center(cfg.k, cfg.n)
    return [Job("single", cfg.n, make_case(c, mm, mp, f), cfg.k)]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def result_row(study: str, job: Job, rep: ErrorReport, timings: bool) -> list:
    cs = job.case
    return [_cell(v) for v in (
        study, job.case_id, job.n, rep.h, cs.mu_minus, cs.mu_plus, cs.slip, job.k,
        float(cs.center[0]), float(cs.center[1]), rep.err_l2_u, rep.err_h1w_u,
        rep.err_h1w_u_scaled, rep.err_l2w_p, rep.eoc_l2_u, rep.eoc_h1w_u, rep.eoc_l2w_p,
        rep.residual, rep.status, round(rep.wall_ms, 3) if timings else None)]


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        env = os.environ.get("CUTSTOKES_THREADS", "").strip()
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("thread count must be at least 1")
    return threads


def run(cfg: RunConfig, out: Optional[str] = None, n_max: int = 32,
        threads: Optional[int] = None) -> int:
    """Run the configured study and write results.csv and meta.json.

    Returns 0 when every case solved, 1 otherwise.
    """
    validate(cfg, n_max)
    out_dir = Path(out if out is not None else cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = case_jobs(cfg, n_max)
    overrides = cfg.penalty_overrides()

    def work(job: Job):
        log.info("solving %s n=%d", job.case_id, job.n)
        rep, _, sol = solve_case(job.case, job.n, cfg.tol, **overrides)
        if rep.ok and cfg.dump_solution:
            np.savetxt(out_dir / f"solution_{job.case_id}.txt",
                       sample_solution(sol, cfg.dump_points),
                       header="x y phase u1 u2 p", fmt="%.17g")
        return rep

    nthreads = resolve_threads(threads)
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            reports = list(pool.map(work, jobs))
    else:
        reports = [work(s) for s in jobs]
    if cfg.study == "convergence":
        attach_eoc(reports)

    with open(out_dir / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for job, rep in zip(jobs, reports):
            w.writerow(result_row(cfg.study, job, rep, cfg.record_timings))

    failed = [(s.case_id, r.status, r.message) for s, r in zip(jobs, reports) if not r.ok]
    meta = {
        "version": __version__,
        "config": cfg.to_dict(),
        "n_max": n_max,
        "threads": nthreads,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scaled_error": SCALE_NOTE,
        "cases": [{"case_id": s.case_id, "n": s.n, "status": r.status, "message": r.message,
                   "residual": r.residual if math.isfinite(r.residual) else None,
                   "multiplier": r.multiplier if math.isfinite(r.multiplier) else None,
                   "wall_ms": r.wall_ms}
                  for s, r in zip(jobs, reports)],
        "failed": len(failed),
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    for cid, status, msg in failed:
        log.error("case %s failed: %s %s", cid, status, msg)
    return EXIT_CASE_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cutstokes", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a study described by a config file")
    r.add_argument("config", help="config file (key=value text or JSON)")
    r.add_argument("--out", help="output directory (overrides the config's out key)")
    r.add_argument("--n-max", type=int, default=32,
                   help="largest mesh size allowed; also extends the default n-list (default 32)")
    r.add_argument("--threads", type=int, default=None,
                   help="concurrent sweep entries (default: CUTSTOKES_THREADS or 1)")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
        return run(cfg, args.out, args.n_max, args.threads)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, UnicodeDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
