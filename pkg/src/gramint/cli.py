"""Batch driver: ``python -m gramint <command> --config run.json``.

Commands
--------
gen-heat   write the heat benchmark as a system manifest
offline    solve the Lyapunov equations at the training nodes and persist
           the algebraic blocks and/or the fitted geometric interpolants
sweep      evaluate one method at the test points and write an error CSV
compare    run the algebraic and geometric methods on one test set
hsv        Hankel singular values at the test points
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .bt import ExactModel, hankel_svd
from .config import METHODS, RunConfig
from .exceptions import GramintError
from .interp_alg import OfflineData, node_factors, offline_precompute
from .interp_geo import GeometricModel
from .lyap import controllability_factor, observability_factor
from .metrics import sweep, write_csv
from .system import assemble, make_heat_benchmark, save_system

log = logging.getLogger("gramint")

BUILT = ("algebraic", "geometric")


class MissingArtifacts(GramintError):
    pass


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _install(tmp: Path, final: Path):
    if final.exists():
        shutil.rmtree(final)
    tmp.rename(final)


class Repeated:
    """Wrap a model so each ``reduce`` is timed over several repetitions."""

    def __init__(self, model, repeats):
        self.model = model
        self.repeats = repeats

    def reduce(self, mu):
        runs = [self.model.reduce(mu) for _ in range(self.repeats)]
        rom = runs[-1]
        rom.timings = {k: statistics.median(r.timings[k] for r in runs) for k in rom.timings}
        return rom


def cmd_gen_heat(cfg: RunConfig, out: Path, grid_side=None) -> Path:
    side = grid_side or cfg.system.get("grid_side", 40)
    sys_ = make_heat_benchmark(side)
    path = save_system(sys_, out / "system")
    log.info("wrote %s (n=%d)", path, sys_.state_dim)
    return path


def cmd_offline(cfg: RunConfig, out: Path, methods=BUILT) -> dict:
    sys_ = cfg.build_system()
    cfg.check_domain(sys_)
    grid = cfg.training_grid()
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    xs, ys = node_factors(sys_, grid, cfg.adi_tol)
    report = {"config": cfg.to_json(), "nodes": grid.size,
              "ranks_x": [x.rank for x in xs], "ranks_y": [y.rank for y in ys],
              "timings": {"lyapunov": time.perf_counter() - t0}}
    for method in methods:
        tmp = out / f".{method}.partial"
        if tmp.exists():
            shutil.rmtree(tmp)
        try:
            t1 = time.perf_counter()
            if method == "algebraic":
                off = offline_precompute(sys_, grid, cfg.adi_tol, factors=(xs, ys),
                                         bt_tol=cfg.bt_tol, weights=cfg.weights)
                off.save(tmp)
            else:
                geo = GeometricModel.fit(sys_, grid, xs, ys, k=cfg.common_rank, bt_tol=cfg.bt_tol)
                geo.save(tmp)
                report["common_rank"] = geo.k
            report["timings"][f"prepare_{method}"] = time.perf_counter() - t1
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        _install(tmp, out / method)
    _write_json(out / "offline_report.json", report)
    return report


def load_model(cfg: RunConfig, out: Path, method, sys_):
    if method == "exact":
        return ExactModel(sys_, cfg.adi_tol, cfg.bt_tol)
    path = out / method
    if not path.is_dir():
        raise MissingArtifacts(
            f"no {method} artifacts in {out}; run `python -m gramint offline --method {method}` first")
    if method == "algebraic":
        return OfflineData.load(path, with_factors=False)
    return GeometricModel.load(sys_, path)


def _timing_summary(records) -> dict:
    stages = sorted({k for r in records for k in r.timings})
    return {k: statistics.median(r.timings[k] for r in records if k in r.timings) for k in stages}


def _run_sweep(cfg, out, method, sys_, points, fom_cache):
    out.mkdir(parents=True, exist_ok=True)
    model = Repeated(load_model(cfg, out, method, sys_), cfg.timing_repeats)
    records = sweep(sys_, method, model, points, cfg.frequency_grid(), cfg.workers, fom_cache)
    write_csv(records, out / f"sweep_{method}.csv")
    _write_json(out / f"sweep_{method}_report.json", {
        "config": dict(cfg.to_json(), method=method),
        "points": len(records),
        "failures": [{"mu": r.mu.tolist(), "error": r.failure} for r in records if not r.ok],
        "median_timings": _timing_summary([r for r in records if r.ok]),
    })
    return records


def cmd_sweep(cfg: RunConfig, out: Path) -> list:
    sys_ = cfg.build_system()
    return _run_sweep(cfg, out, cfg.method, sys_, cfg.test_points(), {})


def cmd_compare(cfg: RunConfig, out: Path, methods=BUILT) -> dict:
    sys_ = cfg.build_system()
    points = cfg.test_points()
    cache = {}
    results = {m: _run_sweep(cfg, out, m, sys_, points, cache) for m in methods}
    header = ["mu1", "mu2"] + [f"{col}_{m}" for m in methods for col in ("r", "hinf_abs", "hinf_rel")]
    with open(out / "compare.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, mu in enumerate(points):
            row = [repr(float(mu[0])), repr(float(mu[1])) if mu.size > 1 else ""]
            for m in methods:
                rec = results[m][i]
                row += [str(rec.r), repr(float(rec.hinf_abs)), repr(float(rec.hinf_rel))]
            writer.writerow(row)
    return results


def cmd_hsv(cfg: RunConfig, out: Path) -> Path:
    sys_ = cfg.build_system()
    out.mkdir(parents=True, exist_ok=True)
    path = out / "hsv.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mu1", "mu2", "index", "sigma", "sigma_rel"])
        for mu in cfg.test_points():
            asm = assemble(sys_, mu)
            X = controllability_factor(asm, cfg.adi_tol)
            Y = observability_factor(asm, cfg.adi_tol)
            s = hankel_svd(Y, asm.E, X).singular_values
            mu2 = repr(float(mu[1])) if mu.size > 1 else ""
            for i, v in enumerate(s, start=1):
                writer.writerow([repr(float(mu[0])), mu2, i, repr(float(v)), repr(float(v / s[0]))])
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gramint", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-heat", "offline", "sweep", "compare", "hsv"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name != "gen-heat")
        p.add_argument("--method", choices=METHODS + ("both",))
        p.add_argument("--out", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        if name == "gen-heat":
            p.add_argument("--grid-side", type=int, help="interior points per side (n = side^2)")
    return parser


def resolve(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig(training=["1:4:9", "4:3:10"])
    method = None if args.method == "both" else args.method
    cfg = cfg.updated(method=method, out=str(args.out) if args.out else None, workers=args.workers)
    if args.seed is not None:
        test = dict(cfg.test)
        test["seed"] = args.seed
        cfg = cfg.updated(test=test)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        out = Path(cfg.out)
        if args.command == "gen-heat":
            out.mkdir(parents=True, exist_ok=True)
            cmd_gen_heat(cfg, out, args.grid_side)
            return 0
        if args.command == "offline":
            if args.method == "both":
                methods = BUILT
            else:
                methods = () if cfg.method == "exact" else (cfg.method,)
            report = cmd_offline(cfg, out, methods)
            print(json.dumps(report["timings"], sort_keys=True))
            return 0
        if args.command == "sweep":
            records = cmd_sweep(cfg, out)
        elif args.command == "compare":
            records = [r for recs in cmd_compare(cfg, out).values() for r in recs]
        else:
            print(cmd_hsv(cfg, out))
            return 0
    except GramintError as exc:
        print(f"gramint: error: {exc}", file=sys.stderr)
        return 2
    failed = sum(not r.ok for r in records)
    errs = np.array([r.hinf_rel for r in records if r.ok])
    if errs.size:
        print(f"{len(records)} points, median relative error {np.median(errs):.3e}, {failed} failed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
