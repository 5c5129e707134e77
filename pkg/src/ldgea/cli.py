"""Command-line front end.

Commands::

    ldgea run [CONFIG] [--set section.key=value ...] [--ablated] [--seed N] [--threads N] [--out DIR]
    ldgea baseline [CONFIG] [--set ...] [--seed N] [--out DIR]
    ldgea refine RUN_DIR [--top-k K] [--out FILE]
    ldgea report ARCHIVE [ARCHIVE ...] [--out DIR]
    ldgea render ARCHIVE --rank R [--out FILE]

Exit status is 0 on success, 2 for configuration or usage errors (nothing is
written) and 3 for failures during a run, including interrupts; a failed or
interrupted run keeps everything flushed so far.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import records as rec_io
from .algorithm import GenerationRecord, LensSearch, SlotResult, initial_distribution, ldgea_loop
from .baseline import baseline_run, point_descriptor
from .config import ConfigError, RunConfig, build_problem, load_config, with_overrides
from .descriptor import Descriptor
from .evostrat.cmaes import ConvergedPoint
from .merit import LensProblem
from .refine import bfgs_refine
from .render import render_svg

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("ldgea")


class UsageError(Exception):
    pass


# -- helpers -----------------------------------------------------------------


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config, args.set or [])
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "ablated", False):
        changes["ablated"] = True
    if getattr(args, "threads", None) is not None:
        changes["threads"] = args.threads
    try:
        return with_overrides(cfg, **changes) if changes else cfg
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _breakdown(problem: LensProblem, x, materials, image_distance=None) -> tuple[float | None, dict | None]:
    try:
        b = problem.breakdown(x, materials, image_distance)
    except (ArithmeticError, ValueError):
        return None, None
    img = b.image_distance if math.isfinite(b.image_distance) else None
    return img, b.to_dict()


def _finite_stats(values) -> dict:
    v = np.array([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"n": 0, "mean": None, "std": None}
    return {"n": int(v.size), "mean": float(v.mean()), "std": float(v.std())}


def _start_run(out: Path, cfg: RunConfig, kind: str) -> str:
    out.mkdir(parents=True, exist_ok=True)
    config = cfg.to_dict()
    rid = rec_io.run_id(config, kind)
    rec_io.write_json(out / rec_io.RUN_NAME, {
        "run_id": rid, "kind": kind, "config": config, "started": rec_io.now(),
        "thread_cap": cfg.thread_cap(),
    })
    return rid


# -- run -----------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    template, problem = build_problem(cfg)
    kind = "ablated" if cfg.ablated else "ldgea"
    out = Path(args.out or f"runs/{kind}-seed{cfg.seed}")
    rid = _start_run(out, cfg, kind)
    writer = rec_io.ArchiveWriter(out / rec_io.ARCHIVE_NAME, rid, kind, cfg.seed)
    gen_log = rec_io.JsonlLog(out / rec_io.GENERATIONS_NAME)
    start = time.perf_counter()
    state = {"generations": 0, "evaluations": 0, "means": []}

    def on_generation(g: GenerationRecord, results: list[SlotResult]):
        for i, r in enumerate(results):
            key = g.descriptors[i]
            for v, x in r.archive.entries():
                img, bd = _breakdown(problem, x, r.descriptor.materials)
                writer.write(g.iteration, i, key, x, r.descriptor.materials, v, img, bd)
        writer.flush()
        stats = _finite_stats(g.values)
        d = g.to_dict()
        d["errors"] = [r.error for r in results]
        d["value_mean"], d["value_std"] = stats["mean"], stats["std"]
        d.pop("wall_time")
        gen_log.write(d)
        state["generations"] += 1
        state["evaluations"] += g.evaluations
        state["means"].append(stats["mean"])
        log.info("iteration %d: best %.6g, mean %s, %d evaluations", g.iteration,
                 min(g.values), stats["mean"], g.evaluations)

    status, code, result = "ok", EXIT_OK, None
    try:
        search = LensSearch(template, problem, cfg.budget, cfg.hvea_config())
        result = ldgea_loop(cfg, initial_distribution(template, cfg), search, on_generation)
    except KeyboardInterrupt:
        status, code = "interrupted", EXIT_RUNTIME
    except Exception as exc:  # reported through the exit status
        log.error("run failed: %s: %s", type(exc).__name__, exc)
        status, code = f"failed: {type(exc).__name__}: {exc}", EXIT_RUNTIME
    finally:
        writer.close()
        gen_log.close()
    summary = {
        "run_id": rid, "kind": kind, "seed": cfg.seed, "status": status,
        "generations": state["generations"], "evaluations": state["evaluations"],
        "mean_by_iteration": state["means"], "wall_time": time.perf_counter() - start,
        "archived_records": writer.count,
    }
    if result is not None:
        key, _, best = result.best()
        summary.update({
            "candidates": result.candidates, "distinct_descriptors": result.distinct,
            "best_value": best if math.isfinite(best) else None, "best_descriptor": key,
            "termination": result.reason,
        })
    rec_io.write_json(out / rec_io.SUMMARY_NAME, summary)
    print(f"{kind} run {rid}: {status}; {summary.get('candidates', 0)} candidates, "
          f"{summary.get('distinct_descriptors', 0)} descriptors, best {summary.get('best_value')} -> {out}")
    return code


# -- baseline ----------------------------------------------------------------------


def cmd_baseline(args) -> int:
    cfg = _resolve_config(args)
    template, problem = build_problem(cfg)
    out = Path(args.out or f"runs/baseline-seed{cfg.seed}")
    rid = _start_run(out, cfg, "baseline")
    writer = rec_io.ArchiveWriter(out / rec_io.ARCHIVE_NAME, rid, "baseline", cfg.seed)
    restart_log = rec_io.JsonlLog(out / rec_io.GENERATIONS_NAME)
    k = template.n_continuous
    log.info("baseline budget %d = %d x %d x %d", cfg.baseline_budget, cfg.lam, cfg.budget, cfg.iterations)
    start = time.perf_counter()

    def on_converged(p: ConvergedPoint):
        x, mats = p.x[:k], [int(m) for m in p.x[k:]]
        img, bd = _breakdown(problem, x, mats) if math.isfinite(p.f) else (None, None)
        writer.write(p.restart, 0, point_descriptor(template, p.x), x, mats, p.f, img, bd,
                     regime=p.regime, lam=p.lam, evaluations=p.evaluations, reason=p.reason)
        writer.flush()
        restart_log.write({"restart": p.restart, "regime": p.regime, "lam": p.lam,
                           "evaluations": p.evaluations, "reason": p.reason, "value": p.f})

    status, code, result = "ok", EXIT_OK, None
    try:
        result = baseline_run(cfg, on_converged, built=(template, problem))
    except KeyboardInterrupt:
        status, code = "interrupted", EXIT_RUNTIME
    except Exception as exc:
        log.error("baseline failed: %s: %s", type(exc).__name__, exc)
        status, code = f"failed: {type(exc).__name__}: {exc}", EXIT_RUNTIME
    finally:
        writer.close()
        restart_log.close()
    summary = {
        "run_id": rid, "kind": "baseline", "seed": cfg.seed, "status": status,
        "budget": cfg.baseline_budget, "archived_records": writer.count,
        "wall_time": time.perf_counter() - start,
    }
    if result is not None:
        finite = [p for p in result.archive if math.isfinite(p.f)]
        summary.update({
            "evaluations": result.evaluations, "restarts": result.restarts,
            "candidates": len(finite),
            "distinct_descriptors": len({point_descriptor(template, p.x) for p in finite}),
            "best_value": result.best_f if math.isfinite(result.best_f) else None,
        })
    rec_io.write_json(out / rec_io.SUMMARY_NAME, summary)
    print(f"baseline run {rid}: {status}; budget {cfg.baseline_budget}, "
          f"{summary.get('distinct_descriptors', 0)} descriptors, best {summary.get('best_value')} -> {out}")
    return code


# -- refine ----------------------------------------------------------------------


def _run_dir(path: str) -> tuple[Path, Path]:
    p = Path(path)
    archive = p / rec_io.ARCHIVE_NAME if p.is_dir() else p
    if not archive.exists():
        raise UsageError(f"no archive at {archive}")
    return archive.parent, archive


def _stored_config(run_dir: Path) -> RunConfig:
    meta = run_dir / rec_io.RUN_NAME
    if not meta.exists():
        raise UsageError(f"{meta} not found; cannot rebuild the lens problem")
    return RunConfig.from_resolved(json.loads(meta.read_text(encoding="utf-8"))["config"])


def cmd_refine(args) -> int:
    run_dir, archive = _run_dir(args.archive)
    cfg = _stored_config(run_dir)
    _, problem = build_problem(cfg)
    try:
        loaded = rec_io.load_archive(archive)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    k = args.top_k if args.top_k is not None else cfg.refine_top_k
    if k < 1:
        raise UsageError("--top-k must be positive")
    top = loaded.ranked()[:k]
    out = Path(args.out) if args.out else run_dir / "refined.jsonl"

    def one(row):
        _, key, r = row
        return bfgs_refine(problem, np.array(r["x"]), Descriptor.parse(key).materials,
                           max_iter=args.max_iter)

    code = EXIT_OK
    reports = []
    try:
        with ThreadPoolExecutor(max_workers=max(1, min(cfg.thread_cap(), len(top)))) as pool:
            reports = list(pool.map(one, top))
    except KeyboardInterrupt:
        code = EXIT_RUNTIME
    except Exception as exc:
        log.error("refinement failed: %s: %s", type(exc).__name__, exc)
        code = EXIT_RUNTIME
    rid = top[0][2]["run_id"] if top else ""
    with rec_io.ArchiveWriter(out, rid, "refined", cfg.seed) as w:
        for rank, ((_, key, r), rep) in enumerate(zip(top, reports), 1):
            _, bd = _breakdown(problem, rep.x_after, Descriptor.parse(key).materials, rep.image_after)
            d = rep.to_dict()
            w.write(r["iteration"], r["slot"], key, rep.x_after, Descriptor.parse(key).materials, rep.f_after,
                    rep.image_after, bd, rank=rank, value_before=rep.f_before, x_before=d["x_before"],
                    improvement=rep.improvement, iterations=rep.iterations, grad_norm=rep.grad_norm,
                    reason=rep.reason, projected_steps=rep.projected_steps)
            print(f"#{rank} {key}: {rep.f_before:.6g} -> {rep.f_after:.6g} (x{rep.improvement:.3g}, "
                  f"{rep.iterations} iterations, {rep.reason})")
    return code


# -- report ------------------------------------------------------------------------


def _percentiles(values) -> dict:
    v = np.sort(np.array(values, dtype=float))
    if v.size == 0:
        return {}
    return {f"p{q}": float(np.percentile(v, q)) for q in (10, 25, 50, 75, 90)}


def build_report(paths: list[str]) -> tuple[dict, str]:
    """Report dictionary and the per-iteration CSV text for ``paths``."""
    runs = []
    rows = []
    union: set[str] = set()
    for path in paths:
        p = Path(path)
        archive = p / rec_io.ARCHIVE_NAME if p.is_dir() else p
        loaded = rec_io.load_archive(archive)
        values = loaded.values
        union |= loaded.descriptors
        entry = {
            "path": str(path), "kind": loaded.kind, "records": len(loaded.records),
            "candidates": loaded.candidates, "distinct_descriptors": len(loaded.descriptors),
            "best_value": min(values) if values else None,
            "worst_value": max(values) if values else None,
            "percentiles": _percentiles(values),
        }
        gen_path = archive.parent / rec_io.GENERATIONS_NAME
        if loaded.kind in ("ldgea", "ablated") and gen_path.exists():
            series = []
            for g in rec_io.read_jsonl(gen_path):
                st = _finite_stats(g["values"])
                series.append(st["mean"])
                rows.append([str(path), loaded.kind, g["iteration"], st["n"],
                             "" if st["mean"] is None else repr(st["mean"]),
                             "" if st["std"] is None else repr(st["std"])])
            entry["mean_by_iteration"] = series
        runs.append(entry)
    report = {"runs": runs, "union_distinct_descriptors": len(union)}
    ldg = [r for r in runs if r["kind"] == "ldgea" and r["worst_value"] is not None]
    base = [(path, r) for path, r in zip(paths, runs) if r["kind"] == "baseline"]
    if ldg and base:
        worst = max(r["worst_value"] for r in ldg)
        count = 0
        for path, _ in base:
            p = Path(path)
            loaded = rec_io.load_archive(p / rec_io.ARCHIVE_NAME if p.is_dir() else p)
            count += sum(1 for v in loaded.values if v <= worst)
        report["comparison"] = {
            "worst_ldgea_value": worst,
            "baseline_at_least_as_good": count,
            "ldgea_distinct": sum(r["distinct_descriptors"] for r in ldg),
            "baseline_distinct": sum(r["distinct_descriptors"] for _, r in base),
        }
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "kind", "iteration", "n_finite", "mean", "std"])
    w.writerows(rows)
    return report, buf.getvalue()


def cmd_report(args) -> int:
    for path in args.archives:
        p = Path(path)
        if not (p / rec_io.ARCHIVE_NAME if p.is_dir() else p).exists():
            raise UsageError(f"no archive at {path}")
    try:
        report, table = build_report(args.archives)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rec_io.write_json(out / "report.json", report)
        (out / "per_iteration.csv").write_text(table, encoding="utf-8")
        print(f"report written to {out}")
    else:
        print(json.dumps(rec_io.clean(report), indent=2, sort_keys=True))
    return EXIT_OK


# -- render ------------------------------------------------------------------------


def cmd_render(args) -> int:
    run_dir, archive = _run_dir(args.archive)
    cfg = _stored_config(run_dir)
    template, _ = build_problem(cfg)
    try:
        loaded = rec_io.load_archive(archive)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    ranked = loaded.ranked()
    if not 1 <= args.rank <= len(ranked):
        raise UsageError(f"rank {args.rank} outside 1..{len(ranked)}")
    value, key, r = ranked[args.rank - 1]
    design = template.build(r["x"], r["materials"], r.get("image_distance"))
    svg = render_svg(design, title=f"#{args.rank} {key}  F = {value:.4g}")
    out = Path(args.out) if args.out else run_dir / f"rank{args.rank}.svg"
    out.write_text(svg, encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldgea", description="Descriptor-guided lens design search.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, ablated=True, threads=True):
        p.add_argument("config", nargs="?", help="TOML run configuration")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a configuration value")
        p.add_argument("--seed", type=int)
        if ablated:
            p.add_argument("--ablated", action="store_true", help="sample descriptors uniformly")
        if threads:
            p.add_argument("--threads", type=int, help="thread cap (the LDGEA_THREADS variable wins)")
        p.add_argument("--out", help="output directory")

    common(sub.add_parser("run", help="descriptor-guided search"))
    common(sub.add_parser("baseline", help="equal-budget CMA-ES with restarts"), ablated=False, threads=False)
    p = sub.add_parser("refine", help="BFGS refinement of the best archived candidates")
    p.add_argument("archive", help="run directory or archive file")
    p.add_argument("--top-k", type=int)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--out")
    p = sub.add_parser("report", help="metrics over one or more archives")
    p.add_argument("archives", nargs="+")
    p.add_argument("--out", help="directory for report.json and per_iteration.csv")
    p = sub.add_parser("render", help="SVG cross-section of an archived design")
    p.add_argument("archive")
    p.add_argument("--rank", type=int, default=1, help="1 = best")
    p.add_argument("--out")
    return ap


COMMANDS = {"run": cmd_run, "baseline": cmd_baseline, "refine": cmd_refine, "report": cmd_report, "render": cmd_render}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
