"""Command line: ``solve <config>``, ``verify <dir>``, ``sweep <config>``.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 inconclusive report (or a verify mismatch), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, config_from_dict, parse_config
from .errors import ConfigurationError, SolverError
from .grid import read_field_csv, write_field_csv
from .io import atomic_write_text, canonical_json, config_hash, read_json, write_json
from .solver import Solution, TodaProblem, newton_solve, solve_g2
from .verify import (
    TRUNCATION_NOTE,
    refinement_consistency,
    refinement_study,
    solution_report,
    sweep_report,
    theorem49_report,
    prop42_report,
    wang_report,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INCONCLUSIVE, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("todadisk")


def field_names(problem):
    kind = problem.kind
    if kind in ("cyclic", "subcyclic"):
        return [f"w_{i}" for i in range(1, problem.family.n_fields + 1)]
    if kind == "maximal":
        return ["u", "v"]
    if kind == "g2":
        return ["w_2", "w_3"]
    return ["w"]


def _manifest(cfg: ExperimentConfig, grids):
    return {
        "config_hash": config_hash(cfg.render()),
        "versions": {
            "todadisk": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "grids": [g.params() for g in grids],
    }


def _setup_logging(out: Path, quiet: bool):
    log.handlers.clear()
    log.setLevel(logging.INFO)
    log.propagate = False
    out.mkdir(parents=True, exist_ok=True)
    fh = logging.FileHandler(out / "run.log", mode="a")
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(fh)
    if not quiet:
        sh = logging.StreamHandler(sys.stdout)
        sh.setFormatter(logging.Formatter("%(message)s"))
        log.addHandler(sh)


def _solve(problem, cfg):
    if problem.kind != "g2":
        return newton_solve(problem), None
    sol, rep = solve_g2(problem.q, problem.grid, mode=cfg.g2_mode, **cfg.solver)
    extra = {k: v for k, v in rep.items() if k != "weights"}
    return sol, extra


def _stored_problem(cfg):
    """The problem whose fields a solution directory holds."""
    problem = cfg.problem()
    if problem.kind == "g2" and cfg.g2_mode == "unconstrained":
        # unconstrained runs store the three fields of the full rank-7 system
        return TodaProblem("subcyclic", problem.q, problem.grid, rank=7, **cfg.solver)
    return problem


def _write_solution(out: Path, sol: Solution, extra=None):
    """Fields as CSV, metadata as JSON, and the report; returns the verdict."""
    names = field_names(sol.problem)
    for name, values in zip(names, sol.fields):
        write_field_csv(out / "fields" / f"{name}.csv", sol.grid, values)
    meta = sol.metadata()
    meta["fields"] = names
    if extra is not None:
        meta["g2"] = extra
    write_json(out / "solution.json", meta)
    doc, text, verdict = solution_report(sol)
    if extra is not None:
        doc["g2"] = extra
    write_json(out / "report.json", doc)
    atomic_write_text(out / "report.txt", text)
    return verdict, doc


def _run_one(cfg, out: Path, R=None, q=None):
    problem = cfg.problem(R=R, q=q)
    log.info("solving %s rank %s on R=%g (%d x %d)", problem.kind, problem.rank, problem.grid.R,
             problem.grid.n_rho, problem.grid.n_theta)
    sol, extra = _solve(problem, cfg)
    log.info("converged: residual %.3e after %d iterations", sol.residual_sup, sol.newton_iterations)
    verdict, doc = _write_solution(out, sol, extra)
    write_json(out / "config.json", cfg.render() if R is None and q is None else _member_config(cfg, R, q))
    return sol, verdict, doc


def _member_config(cfg, R, q):
    d = cfg.render()
    d["mode"] = "solve"
    if R is not None:
        d["grid"]["R"] = R
    if q is not None:
        d["q"] = q.to_json()
    return d


def run_solve(cfg: ExperimentConfig, out: Path):
    grids = [cfg.build_grid()]
    if cfg.mode == "refine":
        table = refinement_study(cfg.problem(), cfg.sweep["levels"])
        write_json(out / "refine.json", table)
        write_json(out / "config.json", cfg.render())
        write_json(out / "manifest.json", _manifest(cfg, grids))
        log.info("refinement study over %d levels written", cfg.sweep["levels"])
        return EXIT_OK
    sol, verdict, doc = _run_one(cfg, out)
    code = EXIT_INCONCLUSIVE if verdict == "inconclusive" else EXIT_OK
    if cfg.mode == "verify":
        fine = cfg.problem().with_grid(cfg.build_grid().refined())
        grids.append(fine.grid)
        fsol = newton_solve(fine)
        rep_fn = _equivalence_fn(sol.problem)
        consistency = None
        if rep_fn is not None:
            consistency = refinement_consistency(rep_fn(sol), rep_fn(fsol))
            if not consistency["consistent"]:
                code = EXIT_INCONCLUSIVE
        write_json(out / "refinement_check.json", {"fine_grid": fine.grid.params(), "consistency": consistency})
    write_json(out / "manifest.json", _manifest(cfg, grids))
    log.info("verdict: %s", verdict)
    return code


def _equivalence_fn(problem):
    kind, r = problem.kind, problem.rank
    if (kind == "cyclic" and r >= 3) or (kind == "subcyclic" and r >= 4):
        return theorem49_report
    if kind == "vortex" and abs(problem.family.b * problem.family.c - 0.5) <= 1e-12:
        return prop42_report
    if kind == "wang":
        return wang_report
    return None


def _parallel_map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # results come back in submission order, so aggregation is deterministic
        return list(pool.map(fn, items))


def run_sweep(cfg: ExperimentConfig, out: Path, threads=1):
    mode = cfg.mode if cfg.mode in ("sweep-R", "sweep-amplitude") else "sweep-R"
    if mode == "sweep-R":
        radii = sorted(cfg.sweep["radii"])

        def member(R):
            sol, verdict, doc = _run_one(cfg, out / f"R_{R:g}", R=R)
            return sol

        sols = _parallel_map(member, radii, threads)
        rep_fn = _equivalence_fn(sols[0].problem)
        if rep_fn is not None:
            summary = sweep_report([rep_fn(s) for s in sols])
            verdict = summary["verdict"]
        else:
            summary = {
                "radii": radii,
                "members": [solution_report(s)[0] for s in sols],
                "verdict": "no equivalence report for this family",
                "note": TRUNCATION_NOTE,
            }
            verdict = "ok"
        grids = [s.grid for s in sols]
    else:
        amps = list(cfg.sweep["amplitudes"])

        def member(t):
            sol, verdict, doc = _run_one(cfg, out / f"t_{t:g}", q=cfg.q.scaled(t))
            return sol, verdict, doc

        results = _parallel_map(member, amps, threads)
        rows = []
        for t, (sol, verdict, doc) in zip(amps, results):
            rows.append({"amplitude": t, "verdict": verdict, "checks": doc["checks"],
                         "residual_sup": sol.residual_sup})
        summary = {"amplitudes": amps, "members": rows, "note": TRUNCATION_NOTE}
        verdicts = [r["verdict"] for r in rows]
        verdict = "inconclusive" if "inconclusive" in verdicts else "ok"
        summary["verdict"] = verdict
        grids = [results[0][0].grid]
    write_json(out / "sweep.json", summary)
    atomic_write_text(out / "sweep.txt", _sweep_text(summary, mode))
    write_json(out / "config.json", cfg.with_mode(mode).render())
    write_json(out / "manifest.json", _manifest(cfg, grids))
    log.info("sweep verdict: %s", verdict)
    return EXIT_INCONCLUSIVE if verdict == "inconclusive" else EXIT_OK


def _sweep_text(summary, mode):
    lines = [f"{mode}: verdict {summary['verdict']}"]
    for key, tr in summary.get("trends", {}).items():
        if tr.get("applicable"):
            vals = ", ".join(f"{v:.6g}" for v in tr["values"])
            lines.append(f"  ({key}) {tr['kind']}: {vals}")
    lines.append(f"note: {summary['note']}")
    return "\n".join(lines) + "\n"


def run_verify(directory: Path, out: Path | None):
    """Rebuild the report of a stored solution and compare it byte for byte."""
    cfg = config_from_dict(read_json(directory / "config.json"))
    meta = read_json(directory / "solution.json")
    problem = _stored_problem(cfg)
    W = np.array([read_field_csv(directory / "fields" / f"{name}.csv", problem.grid) for name in meta["fields"]])
    trace = [(e["amplitude"], e["residual"], e["iterations"], e["accepted"]) for e in meta["continuation_trace"]]
    sol = Solution(problem, W, meta["residual_sup"], meta["newton_iterations"], trace, meta["converged"])
    doc, text, verdict = solution_report(sol)
    if "g2" in meta:
        doc["g2"] = meta["g2"]
    new = canonical_json(doc)
    target = out if out is not None else directory
    old_path = directory / "report.json"
    old = old_path.read_text() if old_path.exists() else None
    if out is not None:
        atomic_write_text(out / "report.json", new)
        atomic_write_text(out / "report.txt", text)
    identical = old == new
    log.info("report regenerated for %s: %s", target, "identical" if identical else "DIFFERS")
    if not identical:
        return EXIT_INCONCLUSIVE
    return EXIT_INCONCLUSIVE if verdict == "inconclusive" else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="todadisk", description="Toda and vortex systems on the Poincare disk.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, arg, helptext in (
        ("solve", "config", "solve one configuration (modes solve, verify, refine)"),
        ("verify", "dir", "regenerate the report of a stored solution directory"),
        ("sweep", "config", "R-sweep or amplitude sweep"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument(arg)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="concurrent sweep members")
        sp.add_argument("--quiet", action="store_true", help="no progress output")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            directory = Path(args.dir)
            out = Path(args.out) if args.out else None
            _setup_logging(out or directory, args.quiet)
            return run_verify(directory, out)
        cfg = parse_config(args.config)
        out = Path(args.out or cfg.out or "todadisk-out")
        _setup_logging(out, args.quiet)
        if args.command == "sweep":
            return run_sweep(cfg, out, max(1, args.threads))
        if cfg.mode in ("sweep-R", "sweep-amplitude"):
            raise ConfigurationError(f"mode: {cfg.mode} runs with the sweep command")
        return run_solve(cfg, out)
    except (ConfigurationError, ValueError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        for h in list(log.handlers):
            h.close()
            log.removeHandler(h)


if __name__ == "__main__":
    sys.exit(main())
