"""Command-line interface: ``onebit-gna {gen,solve,bench,diag,repro}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bench
from .baselines import BihtOptions, biht, exhaustive_l0, lp_estimate
from .diagnostics import diagnostics_report
from .io import read_dataset, write_dataset
from .model import ProblemConfig, make_signal, observe, sample_matrix, trial_rng
from .solver import SolverOptions, SolverReport, run_gna

log = logging.getLogger("onebit_gna")


def _config_from_args(args) -> ProblemConfig:
    base = ProblemConfig.load(args.config) if args.config else None
    values = {}
    for key in ("m", "n", "s", "nu", "sigma", "flip_prob", "seed"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
        elif base is not None:
            values[key] = getattr(base, key)
    missing = {"m", "n", "s"} - set(values)
    if missing:
        raise SystemExit(f"gen: missing {sorted(missing)} (give flags or --config)")
    return ProblemConfig(**values)


def cmd_gen(args) -> int:
    cfg = _config_from_args(args)
    rng = trial_rng(cfg.seed)
    signal = make_signal(cfg.n, cfg.s, rng, values=args.values)
    ens = sample_matrix(cfg.m, cfg.n, cfg.nu, rng)
    obs = observe(ens, signal, cfg.sigma, cfg.flip_prob, rng)
    write_dataset(args.out, ens.matrix, obs.y, obs.flip_mask, cfg.s)
    if args.truth:
        Path(args.truth).write_text(json.dumps({
            "n": cfg.n,
            "support": signal.support.tolist(),
            "values": signal.values.tolist(),
        }))
    log.info("wrote %s (m=%d, n=%d, s=%d)", args.out, cfg.m, cfg.n, cfg.s)
    return 0


def _solve_report(method, psi, y, s, eta, max_iter) -> SolverReport:
    if method == "gna":
        return run_gna(psi, y, SolverOptions(s=s, eta=eta, max_iter=max_iter))
    if method == "biht":
        x, info = biht(psi, y, BihtOptions(s=s, max_iter=max_iter), return_info=True)
        iters, converged = info["iterations"], info["converged"]
    elif method == "lp":
        x, iters, converged = lp_estimate(psi, y, s), 1, True
    else:
        x, iters, converged = exhaustive_l0(psi, y, s), 1, True
    return SolverReport(x_hat=x, iterations=iters, converged=converged,
                        active_history=[tuple(np.flatnonzero(x))], ls_solves=0, method=method)


def cmd_solve(args) -> int:
    data = read_dataset(args.dataset)
    s = args.s or data.s
    max_iter = args.max_iter if args.max_iter is not None else (5 if args.method == "gna" else 100)
    report = _solve_report(args.method, data.matrix, data.y.astype(float), s, args.eta, max_iter)
    _write_json(report.to_dict(), args.out)
    return 0


def _write_json(obj, out):
    text = json.dumps(obj, indent=2)
    if out in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        Path(out).write_text(text + "\n")


def _print_rows(rows):
    print(f"{'method':>7} {'m':>5} {'n':>5} {'s':>3} {'nu':>5} {'sigma':>5} {'q':>5} "
          f"{'time(s)':>9} {'l2-err':>9} {'PrE%':>6} {'iters':>6}")
    for r in rows:
        print(f"{r.method:>7} {r.m:>5} {r.n:>5} {r.s:>3} {r.nu:>5.2f} {r.sigma:>5.2f} "
              f"{r.flip_prob:>5.2f} {r.mean_time_s:>9.2e} {r.mean_l2_err:>9.2e} "
              f"{r.pre_percent:>6.1f} {r.mean_iterations:>6.2f}")


def _write_outputs(records, out_dir: Path, outputs, sweep=None, y_keys=("pre_percent", "l2_err",
                                                                        "iterations")):
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = bench.aggregate(records)
    if "csv" in outputs:
        bench.emit(rows, out_dir / "results.csv")
    if "json" in outputs:
        bench.emit(records, out_dir / "records.json")
    if "plot" in outputs and sweep:
        for key in y_keys:
            bench.emit(bench.plot_data(records, x=sweep, y=key), out_dir / f"plot_{key}_vs_{sweep}.csv")
    return rows


def _progress(done, total):
    if done == total or done % max(total // 10, 1) == 0:
        log.info("%d/%d trials", done, total)


def cmd_bench(args) -> int:
    plan = bench.parse_plan(Path(args.plan).read_text(), replications=args.reps,
                            base_seed=args.seed)
    records = bench.run_trials(plan, threads=args.threads, progress=_progress)
    sweeps = plan.swept_keys()
    rows = _write_outputs(records, Path(args.out_dir), plan.outputs or ("csv", "json", "plot"),
                          sweep=sweeps[0] if len(sweeps) == 1 else None)
    _print_rows(rows)
    return 0


def cmd_diag(args) -> int:
    data = read_dataset(args.dataset)
    s = args.s or data.s
    report = diagnostics_report(data.matrix, s, budget=args.budget, samples=args.samples,
                                rng=np.random.default_rng(args.seed))
    _write_json(report, args.out)
    return 0


def cmd_repro(args) -> int:
    spec = bench.preset(args.name, args.profile)
    out_dir = Path(args.out_dir) / args.name
    reps = args.reps or 100
    if spec["kind"] == "wavelet":
        cfg = spec["config"]
        records = bench.run_wavelet_trials(cfg, reps, base_seed=args.seed, methods=spec["methods"],
                                           threads=args.threads, max_iter=spec["max_iter"])
        rows = _write_outputs(records, out_dir, ("csv", "json"))
        with (out_dir / "psnr.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("method", "mean_psnr", "median_psnr", "mean_time_s"))
            for method in spec["methods"]:
                recs = [r for r in records if r.method == method]
                vals = np.array([r.psnr for r in recs])
                finite = vals[np.isfinite(vals)]
                w.writerow((method, float(np.mean(finite)) if finite.size else math.inf,
                            float(np.median(vals)), float(np.mean([r.wall_time_s for r in recs]))))
        _print_rows(rows)
        print((out_dir / "psnr.csv").read_text(), end="")
        return 0
    plan = bench.ExperimentPlan(grid=spec["grid"], methods=spec["methods"], replications=reps,
                                base_seed=args.seed, max_iter=spec["max_iter"])
    records = bench.run_trials(plan, threads=args.threads, progress=_progress)
    y_keys = (spec["y"],) if "y" in spec else ("pre_percent", "l2_err", "iterations")
    rows = _write_outputs(records, out_dir, ("csv", "json", "plot"), sweep=spec.get("x"),
                          y_keys=y_keys)
    _print_rows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onebit-gna", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset container")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--nu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--flip-prob", dest="flip_prob", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--values", choices=("sign", "gaussian"), default="sign")
    p.add_argument("--truth", help="also write the true signal as JSON here")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="decode a dataset container")
    p.add_argument("dataset")
    p.add_argument("--method", choices=bench.METHODS, default="gna")
    p.add_argument("--s", type=int, help="sparsity (default: value stored in the container)")
    p.add_argument("--eta", type=float, default=0.9)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a Monte Carlo plan file")
    p.add_argument("--plan", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir", default="bench_out")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diag", help="restricted-spectrum diagnostics of a dataset")
    p.add_argument("dataset")
    p.add_argument("--s", type=int)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_diag)

    p = sub.add_parser("repro", help="run a named reproduction preset")
    p.add_argument("name", choices=sorted(bench.PRESETS))
    p.add_argument("--profile", choices=("ci", "full"), default="ci")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default="repro_out")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
