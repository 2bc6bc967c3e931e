"""Command line entry points: ``simulate``, ``validate`` and ``bench``.

Exit codes: 0 success, 1 configuration error, 2 runtime/solver error,
3 validation failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .backend import BackendKind
from .errors import ConfigError, LoadError, VoxelDiffError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VALIDATION = 3
EXIT_IO = 4

log = logging.getLogger("voxeldiff")


def write_field_table(field, names, path) -> Path:
    """Every voxel and substrate value, one voxel per row."""
    path = Path(path)
    nx, ny, nz = field.shape
    rho = field.per_voxel()
    with open(path, "w") as fh:
        fh.write(f"# nx={nx} ny={ny} nz={nz} S={field.n_substrates}\n")
        fh.write(",".join(["voxel", "i", "j", "k", *names]) + "\n")
        n = 0
        for k in range(nz):
            for j in range(ny):
                for i in range(nx):
                    fh.write(f"{n},{i},{j},{k}," + ",".join(repr(float(v)) for v in rho[n]) + "\n")
                    n += 1
    return path


def _backend_from_args(args, default: BackendKind) -> BackendKind:
    if args.backend is None and args.workers is None:
        return default
    name = args.backend or ("parallel" if args.workers else default.name)
    if name == "serial":
        if args.workers not in (None, 1):
            raise ConfigError("serial backend takes exactly one worker", field="--workers")
        return BackendKind.serial()
    workers = args.workers if args.workers is not None else (
        default.workers if default.name == "parallel" else os.cpu_count() or 1)
    try:
        return BackendKind.parallel(workers)
    except ConfigError as exc:
        raise ConfigError(exc.reason, field="--workers") from None


def cmd_simulate(args) -> int:
    from .config import parse_config
    from .engine import build_simulation

    cfg_path = Path(args.config)
    if not cfg_path.is_file():
        print(f"error: config not found: {cfg_path}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = parse_config(cfg_path)
    overrides = {"backend": _backend_from_args(args, cfg.backend)}
    if args.snapshot_interval is not None:
        overrides["snapshot_interval"] = args.snapshot_interval
    try:
        cfg = cfg.with_overrides(**overrides)
    except ConfigError as exc:
        if exc.field == "save/snapshot_interval":
            raise ConfigError(exc.reason, field="--snapshot-interval") from None
        raise
    out = Path(args.out) if args.out else Path(cfg.folder)
    out.mkdir(parents=True, exist_ok=True)
    sim = build_simulation(cfg, snapshot_dir=out / "snapshots")
    metrics = sim.run()
    write_field_table(sim.density, sim.microenv.names, out / "final_field.csv")
    (out / "metrics.txt").write_text("\n".join(metrics.to_lines()) + "\n")
    print(metrics.summary())
    if not args.quiet:
        for line in metrics.to_lines():
            print(line)
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from . import validation

    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    ok = True
    if args.check == "convergence":
        reports = [validation.run_convergence_test("temporal", args.levels),
                   validation.run_convergence_test("spatial", max(3, args.levels - 1))]
        for rep in reports:
            print(rep.format())
            ok &= rep.passed
        if out is not None and not args.no_figures:
            from .plotting import plot_convergence

            print(f"figure: {plot_convergence(reports, out / 'convergence.png')}")
    elif args.check == "crosscheck":
        if args.config:
            from .config import parse_config

            cfg = parse_config(args.config)
        else:
            cfg = validation.crosscheck_config(steps=args.steps)
        rep = validation.backend_crosscheck(cfg, args.workers)
        print(f"serial vs parallel({args.workers}): {rep.format()}")
        ok = rep.passed
    else:
        target = out if out is not None else Path("mutant_check")
        rep = validation.run_mutant_detection(target)
        print(rep.format())
        ok = rep.passed
        if not args.no_figures:
            from .plotting import plot_slice

            for label in ("reference", "mutant"):
                _, plane = validation.read_snapshot_table(target / f"{label}.csv")
                plot_slice(plane, target / f"{label}.png", title=label)
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_bench(args) -> int:
    from . import bench

    if args.suite:
        suite = bench.load_suite(args.suite)
        if args.reps is not None:
            suite.repetitions = args.reps
    else:
        suite = bench.default_suite(args.profile, args.workers, args.reps or 3)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = bench.run_benchmark(suite, progress=None if args.quiet else print)
    table = bench.write_bench_table(rows, out / "bench.csv")
    phases = bench.write_phase_table(rows, out / "phases.csv")
    print(bench.format_rows(rows))
    print(f"tables: {table}, {phases}")
    if not args.no_figures:
        from .plotting import plot_phase_breakdown, plot_speedup

        figs = [plot_speedup(rows, out / "speedup.png"),
                plot_phase_breakdown(rows[-1].phases["serial"], out / "phases.png",
                                     title=f"serial, {rows[-1].label}")]
        print("figures: " + ", ".join(str(f) for f in figs))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxeldiff", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a configured simulation")
    s.add_argument("--config", required=True, help="XML configuration file")
    s.add_argument("--backend", choices=("serial", "parallel"))
    s.add_argument("--workers", type=int, help="worker threads for the parallel backend")
    s.add_argument("--out", help="output directory (default: config save/folder)")
    s.add_argument("--snapshot-interval", type=float, metavar="MIN",
                   help="simulated minutes between snapshots (0 disables)")
    s.add_argument("--quiet", action="store_true", help="print only the summary line")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="run a validation check")
    v.add_argument("check", choices=("convergence", "crosscheck", "snapshot-mutant"))
    v.add_argument("--levels", type=int, default=5, help="temporal refinement levels")
    v.add_argument("--workers", type=int, default=8, help="parallel workers for crosscheck")
    v.add_argument("--steps", type=int, default=100, help="diffusion steps for crosscheck")
    v.add_argument("--config", help="crosscheck this configuration instead of the built-in one")
    v.add_argument("--out", help="directory for snapshots and figures")
    v.add_argument("--no-figures", action="store_true")
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("bench", help="benchmark backends over 60/180/360-minute workloads")
    b.add_argument("--suite", help="JSON suite file (default: built-in suite)")
    b.add_argument("--profile", choices=("full", "quick"), default="full",
                   help="built-in geometry: full 100^3 or quick 16^3")
    b.add_argument("--reps", type=int, help="repetitions per case (default 3)")
    b.add_argument("--workers", type=int, help="worker count for parallel(max)")
    b.add_argument("--out", default="bench_out")
    b.add_argument("--no-figures", action="store_true")
    b.add_argument("--quiet", action="store_true")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LoadError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: config not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (VoxelDiffError, ValueError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
