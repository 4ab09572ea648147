"""Monte Carlo experiment harness.

A plan is a grid of :class:`ProblemConfig` cells, a set of decoders and a
number of replications. Every (cell, replication) pair draws a fresh
signal, matrix, noise and flip pattern from a stream derived only from
``(base_seed, cell index, replication)``, then runs each decoder on the
same data. Only decode time is measured.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import EXHAUSTIVE_MAX_SUPPORTS, BihtOptions, biht, exhaustive_l0, lp_estimate
from .model import (
    ProblemConfig,
    effective_scale,
    haar_forward,
    haar_inverse,
    make_signal,
    observe,
    sample_matrix,
    trial_rng,
)
from .solver import SolverOptions, run_gna

__all__ = [
    "METHODS",
    "TrialRecord",
    "AggregateRow",
    "ExperimentPlan",
    "l2_error",
    "support_exact",
    "decode",
    "run_trials",
    "aggregate",
    "psnr",
    "wavelet_experiment",
    "run_wavelet_trials",
    "plot_data",
    "emit",
    "write_rows_csv",
    "read_rows_csv",
    "write_records_json",
    "read_records_json",
    "write_plot_data",
    "read_plot_data",
    "parse_sweep",
    "parse_plan",
    "PRESETS",
    "preset",
]

METHODS = ("gna", "biht", "lp", "oracle")
CSV_COLUMNS = ("m", "n", "s", "nu", "sigma", "flip_prob", "method", "time_s",
               "l2_err", "pre_percent", "iterations", "trials")


@dataclass
class TrialRecord:
    config: ProblemConfig
    method: str
    replication: int
    l2_err: float
    support_exact: bool
    iterations: int
    wall_time_s: float
    linf_err_scaled: float | None = None
    psnr: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["config"] = asdict(self.config)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TrialRecord":
        obj = dict(obj)
        obj["config"] = ProblemConfig(**obj["config"])
        return cls(**obj)


@dataclass(frozen=True)
class AggregateRow:
    m: int
    n: int
    s: int
    nu: float
    sigma: float
    flip_prob: float
    method: str
    mean_time_s: float
    mean_l2_err: float
    pre_percent: float
    mean_iterations: float
    trial_count: int


@dataclass
class ExperimentPlan:
    """Grid of configurations, decoders and replication count.

    ``signal_values`` selects the nonzero distribution (see
    :func:`~onebit_gna.model.make_signal`); ``"sign"`` gives equal-magnitude
    nonzeros.
    """

    grid: list
    methods: tuple = ("gna",)
    replications: int = 100
    base_seed: int = 0
    outputs: list = field(default_factory=list)
    eta: float = 0.9
    max_iter: int = 5
    biht_max_iter: int = 100
    signal_values: str = "sign"

    def __post_init__(self):
        self.grid = list(self.grid)
        self.methods = tuple(self.methods)
        if not self.grid:
            raise ValueError("plan grid is empty")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if len(set(self.grid)) != len(self.grid):
            raise ValueError("plan grid contains duplicate configurations")
        if "oracle" in self.methods:
            for cfg in self.grid:
                if math.comb(cfg.n, cfg.s) > EXHAUSTIVE_MAX_SUPPORTS:
                    raise ValueError(
                        f"oracle method needs C(n, s) <= {EXHAUSTIVE_MAX_SUPPORTS:.0e}; "
                        f"config n={cfg.n}, s={cfg.s} has {math.comb(cfg.n, cfg.s):.3e}"
                    )

    def swept_keys(self) -> list:
        keys = ("m", "n", "s", "nu", "sigma", "flip_prob")
        return [k for k in keys if len({getattr(c, k) for c in self.grid}) > 1]


def l2_error(x_hat, x_star) -> float:
    """``|| x_hat/||x_hat|| - x*/||x*|| ||_2``; a zero estimate scores 1."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    target = x_star / np.linalg.norm(x_star)
    norm = np.linalg.norm(x_hat)
    if norm == 0:
        return 1.0
    return float(np.linalg.norm(x_hat / norm - target))


def support_exact(x_hat, x_star) -> bool:
    return bool(np.array_equal(np.flatnonzero(x_hat), np.flatnonzero(x_star)))


def decode(method: str, psi, y, s: int, eta: float = 0.9, max_iter: int = 5,
           biht_max_iter: int = 100):
    """Run one decoder; returns ``(x_hat, iterations)``."""
    if method == "gna":
        report = run_gna(psi, y, SolverOptions(s=s, eta=eta, max_iter=max_iter))
        return report.x_hat, report.iterations
    if method == "biht":
        x, info = biht(psi, y, BihtOptions(s=s, max_iter=biht_max_iter), return_info=True)
        return x, info["iterations"]
    if method == "lp":
        return lp_estimate(psi, y, s), 1
    if method == "oracle":
        return exhaustive_l0(psi, y, s), 1
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def _metrics(cfg, method, rep, x_hat, x_star, iterations, elapsed, c):
    linf = None
    if abs(c) >= 1e-6:
        linf = float(np.max(np.abs(x_hat / c - x_star)))
    return TrialRecord(
        config=cfg,
        method=method,
        replication=rep,
        l2_err=l2_error(x_hat, x_star),
        support_exact=support_exact(x_hat, x_star),
        iterations=int(iterations),
        wall_time_s=elapsed,
        linf_err_scaled=linf,
    )


def _run_cell(plan: ExperimentPlan, ci: int, rep: int) -> list:
    cfg = plan.grid[ci]
    rng = trial_rng(plan.base_seed, ci, rep)
    signal = make_signal(cfg.n, cfg.s, rng, values=plan.signal_values)
    ens = sample_matrix(cfg.m, cfg.n, cfg.nu, rng)
    obs = observe(ens, signal, cfg.sigma, cfg.flip_prob, rng)
    psi = ens.matrix
    y = obs.y.astype(float)
    x_star = signal.to_dense()
    c = effective_scale(cfg.sigma, cfg.flip_prob).c
    out = []
    for method in plan.methods:
        t0 = time.perf_counter()
        try:
            x_hat, iters = decode(method, psi, y, cfg.s, plan.eta, plan.max_iter, plan.biht_max_iter)
        except Exception as exc:  # recorded, never aborts the battery
            out.append(TrialRecord(cfg, method, rep, math.nan, False, 0,
                                   time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}"))
            continue
        elapsed = time.perf_counter() - t0
        out.append(_metrics(cfg, method, rep, x_hat, x_star, iters, elapsed, c))
    return out


def run_trials(plan: ExperimentPlan, threads: int = 1, progress=None) -> list:
    """All TrialRecords of ``plan``, ordered by (cell, replication, method)."""
    cells = [(ci, rep) for ci in range(len(plan.grid)) for rep in range(plan.replications)]
    if threads <= 1:
        results = []
        for ci, rep in cells:
            results.append(_run_cell(plan, ci, rep))
            if progress:
                progress(len(results), len(cells))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda cell: _run_cell(plan, *cell), cells))
    return [rec for batch in results for rec in batch]


def aggregate(records) -> list:
    """One :class:`AggregateRow` per (config, method), in first-seen order.

    Failed trials count against ``pre_percent`` and are left out of the
    error, time and iteration means.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.config, rec.method), []).append(rec)
    rows = []
    for (cfg, method), recs in groups.items():
        ok = [r for r in recs if r.error is None]
        mean = (lambda vals: float(np.mean(vals)) if vals else math.nan)
        rows.append(AggregateRow(
            m=cfg.m, n=cfg.n, s=cfg.s, nu=cfg.nu, sigma=cfg.sigma, flip_prob=cfg.flip_prob,
            method=method,
            mean_time_s=mean([r.wall_time_s for r in ok]),
            mean_l2_err=mean([r.l2_err for r in ok]),
            pre_percent=100.0 * sum(r.support_exact for r in recs) / len(recs),
            mean_iterations=mean([r.iterations for r in ok]),
            trial_count=len(recs),
        ))
    return rows


def psnr(reference, estimate) -> float:
    """``10 log10(V^2 / MSE)`` with ``V = max |reference|``; ``inf`` on an exact match."""
    reference = np.asarray(reference, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if reference.shape != estimate.shape:
        raise ValueError(f"length mismatch: {reference.shape} vs {estimate.shape}")
    mse = float(np.mean((reference - estimate) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float(np.max(np.abs(reference)))
    return 10.0 * math.log10(peak**2 / mse)


def wavelet_experiment(config: ProblemConfig, rng, methods=("gna",), level: int = 1,
                       eta: float = 0.9, max_iter: int = 5, biht_max_iter: int = 100,
                       signal_values: str = "sign", replication: int = 0):
    """1D signal that is sparse in the Haar basis, observed through a Gaussian matrix.

    The decoders see the composed matrix ``G @ W`` (``W`` = Haar synthesis)
    and recover the coefficients. Each estimate is scaled to unit norm,
    oriented by the sign of the effective scale and mapped back through
    ``W`` before scoring PSNR against the true signal.

    Returns a list of ``(TrialRecord, reconstruction)``, one per method,
    all on identical data.
    """
    if config.n % (2**level):
        raise ValueError(f"n={config.n} is not divisible by 2**{level}")
    coef = make_signal(config.n, config.s, rng, values=signal_values)
    signal = haar_inverse(coef.to_dense(), level)
    gauss = sample_matrix(config.m, config.n, config.nu, rng)
    obs = observe(gauss, signal, config.sigma, config.flip_prob, rng)
    psi = haar_forward(gauss.matrix, level)
    y = obs.y.astype(float)
    x_star = coef.to_dense()
    c = effective_scale(config.sigma, config.flip_prob).c
    orient = -1.0 if c < 0 else 1.0
    out = []
    for method in methods:
        t0 = time.perf_counter()
        x_hat, iters = decode(method, psi, y, config.s, eta, max_iter, biht_max_iter)
        elapsed = time.perf_counter() - t0
        rec = _metrics(config, method, replication, x_hat, x_star, iters, elapsed, c)
        norm = np.linalg.norm(x_hat)
        unit = orient * x_hat / norm if norm > 0 else x_hat
        recon = haar_inverse(unit, level)
        rec.psnr = psnr(signal, recon)
        out.append((rec, recon))
    return out


def run_wavelet_trials(config: ProblemConfig, replications: int, base_seed: int = 0,
                       methods=("gna", "biht"), threads: int = 1, **kwargs) -> list:
    def cell(rep):
        rng = trial_rng(base_seed, rep)
        return [rec for rec, _ in wavelet_experiment(config, rng, methods=methods,
                                                     replication=rep, **kwargs)]

    if threads <= 1:
        batches = [cell(rep) for rep in range(replications)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(cell, range(replications)))
    return [rec for batch in batches for rec in batch]


# --- plot data -------------------------------------------------------------

def plot_data(records, x: str, y: str = "pre_percent") -> dict:
    """Curves ``{method: [(x, y, stderr), ...]}`` from trial records.

    ``x`` is a :class:`ProblemConfig` field; ``y`` is one of
    ``pre_percent``, ``l2_err``, ``median_l2_err``, ``iterations``,
    ``wall_time_s`` or ``psnr``.
    """
    groups: dict = {}
    for rec in records:
        if rec.error is not None and y != "pre_percent":
            continue
        groups.setdefault(rec.method, {}).setdefault(getattr(rec.config, x), []).append(rec)
    curves = {}
    for method, by_x in groups.items():
        pts = []
        for xv in sorted(by_x):
            recs = by_x[xv]
            k = len(recs)
            if y == "pre_percent":
                p = sum(r.support_exact for r in recs) / k
                pts.append((xv, 100.0 * p, 100.0 * math.sqrt(p * (1 - p) / k)))
                continue
            attr = "l2_err" if y == "median_l2_err" else y
            vals = np.array([getattr(r, attr) for r in recs], dtype=float)
            center = float(np.median(vals)) if y == "median_l2_err" else float(np.mean(vals))
            err = float(np.std(vals, ddof=1) / math.sqrt(k)) if k > 1 else 0.0
            pts.append((xv, center, err))
        curves[method] = pts
    return curves


# --- serialization ---------------------------------------------------------

def _ioerror(path, exc):
    return OSError(f"cannot write {path}: {exc}")


def write_rows_csv(rows, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in rows:
                w.writerow([r.m, r.n, r.s, repr(r.nu), repr(r.sigma), repr(r.flip_prob), r.method,
                            repr(r.mean_time_s), repr(r.mean_l2_err), repr(r.pre_percent),
                            repr(r.mean_iterations), r.trial_count])
    except OSError as exc:
        raise _ioerror(path, exc) from exc


def read_rows_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for rec in reader:
            d = dict(zip(CSV_COLUMNS, rec))
            rows.append(AggregateRow(
                m=int(d["m"]), n=int(d["n"]), s=int(d["s"]), nu=float(d["nu"]),
                sigma=float(d["sigma"]), flip_prob=float(d["flip_prob"]), method=d["method"],
                mean_time_s=float(d["time_s"]), mean_l2_err=float(d["l2_err"]),
                pre_percent=float(d["pre_percent"]), mean_iterations=float(d["iterations"]),
                trial_count=int(d["trials"]),
            ))
    return rows


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    return obj


def _json_restore(obj):
    if isinstance(obj, str) and obj in ("inf", "-inf", "nan"):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _json_restore(v) for k, v in obj.items()}
    return obj


def write_records_json(records, path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps([_json_safe(r.to_dict()) for r in records], indent=1))
    except OSError as exc:
        raise _ioerror(path, exc) from exc


def read_records_json(path) -> list:
    data = json.loads(Path(path).read_text())
    return [TrialRecord.from_dict({k: _json_restore(v) for k, v in d.items()}) for d in data]


def write_plot_data(curves: dict, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("method", "x", "y", "stderr"))
            for method, pts in curves.items():
                for x, y, err in pts:
                    w.writerow((method, repr(x), repr(float(y)), repr(float(err))))
    except OSError as exc:
        raise _ioerror(path, exc) from exc


def read_plot_data(path) -> dict:
    curves: dict = {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for method, x, y, err in reader:
            try:
                xv = int(x)
            except ValueError:
                xv = float(x)
            curves.setdefault(method, []).append((xv, float(y), float(err)))
    return curves


def emit(items, target) -> Path:
    """Write ``items`` to ``target``, choosing the format from the payload.

    * list of :class:`AggregateRow` (or an empty list) -> CSV table
    * list of :class:`TrialRecord` -> JSON
    * ``{method: [(x, y, stderr)]}`` -> plot-data CSV
    """
    target = Path(target)
    if isinstance(items, dict):
        write_plot_data(items, target)
    else:
        items = list(items)
        if items and isinstance(items[0], TrialRecord):
            write_records_json(items, target)
        elif all(isinstance(r, AggregateRow) for r in items):
            write_rows_csv(items, target)
        else:
            raise TypeError(f"cannot emit items of type {type(items[0]).__name__}")
    return target


# --- plan files ------------------------------------------------------------

def parse_sweep(text: str, kind=float) -> list:
    """``"a"``, ``"a,b,c"`` or MATLAB-style ``"start:step:stop"`` (inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) == 2:
            start, stop = parts
            step = 1.0
        elif len(parts) == 3:
            start, step, stop = parts
        else:
            raise ValueError(f"bad sweep {text!r}")
        if step == 0 or (stop - start) / step < -1e-9:
            raise ValueError(f"sweep {text!r} is empty")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [round(start + i * step, 12) for i in range(count)]
    else:
        vals = [float(p) for p in text.split(",") if p.strip()]
    if kind is int:
        if any(not float(v).is_integer() for v in vals):
            raise ValueError(f"sweep {text!r} must contain integers")
        return [int(v) for v in vals]
    return vals


_GRID_KEYS = {"m": int, "n": int, "s": int, "nu": float, "sigma": float, "flip_prob": float}


def parse_plan(text: str, **overrides) -> ExperimentPlan:
    """Build a plan from a flat ``key = value`` file.

    Grid keys (``m n s nu sigma flip_prob``) accept sweeps such as
    ``s = 1:2:20``; swept keys form a Cartesian product. Other keys:
    ``methods``, ``replications``, ``seed``, ``eta``, ``max_iter``,
    ``biht_max_iter``, ``values``, ``outputs``.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"plan line {lineno}: expected 'key = value'")
        k, v = (p.strip() for p in line.split("=", 1))
        raw[k] = v
    known = set(_GRID_KEYS) | {"methods", "replications", "reps", "seed", "eta", "max_iter",
                               "biht_max_iter", "values", "outputs"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown plan keys {sorted(unknown)}")
    missing = {"m", "n", "s"} - set(raw)
    if missing:
        raise ValueError(f"plan is missing {sorted(missing)}")
    axes = {k: parse_sweep(raw.get(k, "0"), kind) for k, kind in _GRID_KEYS.items()}
    grid = [ProblemConfig(**dict(zip(axes, combo))) for combo in itertools.product(*axes.values())]
    kwargs = dict(
        grid=grid,
        methods=tuple(m.strip() for m in raw.get("methods", "gna").split(",") if m.strip()),
        replications=int(raw.get("replications", raw.get("reps", 100))),
        base_seed=int(raw.get("seed", 0)),
        eta=float(raw.get("eta", 0.9)),
        max_iter=int(raw.get("max_iter", 5)),
        biht_max_iter=int(raw.get("biht_max_iter", 100)),
        signal_values=raw.get("values", "sign"),
        outputs=[o.strip() for o in raw.get("outputs", "csv,json,plot").split(",") if o.strip()],
    )
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentPlan(**kwargs)


# --- named presets ---------------------------------------------------------

def _grid(values: dict):
    axes = {k: (v if isinstance(v, (list, tuple)) else [v]) for k, v in values.items()}
    return [ProblemConfig(**dict(zip(axes, combo))) for combo in itertools.product(*axes.values())]


_S_SWEEP = list(range(1, 21, 2))
_TABLE1 = {
    "a": dict(nu=0.2, sigma=0.2, flip_prob=0.05),
    "b": dict(nu=0.3, sigma=0.3, flip_prob=0.10),
    "c": dict(nu=0.5, sigma=0.5, flip_prob=0.15),
}


def _table1(cell, profile):
    sizes = [dict(m=500, n=2500, s=5)]
    if profile == "full":
        sizes.append(dict(m=1000, n=5000, s=10))
    grid = [c for size in sizes for c in _grid({**size, **_TABLE1[cell]})]
    return dict(kind="grid", grid=grid, methods=("gna", "biht", "lp"), max_iter=5, x=None)


PRESETS = {
    "fig1": lambda profile: dict(kind="grid", x="s", y="iterations", max_iter=10, methods=("gna",),
                                 grid=_grid(dict(m=500, n=1000, s=_S_SWEEP, nu=0.1, sigma=0.05,
                                                 flip_prob=0.01))),
    "fig2a": lambda profile: dict(kind="grid", x="s", max_iter=5, methods=("gna",),
                                  grid=_grid(dict(m=500, n=1000, s=_S_SWEEP, nu=0.1, sigma=0.05,
                                                  flip_prob=0.01))),
    "fig2b": lambda profile: dict(kind="grid", x="sigma", max_iter=5, methods=("gna",),
                                  grid=_grid(dict(m=500, n=1000, s=10, nu=0.3,
                                                  sigma=parse_sweep("0:0.1:1"), flip_prob=0.05))),
    "fig2c": lambda profile: dict(kind="grid", x="flip_prob", max_iter=5, methods=("gna",),
                                  grid=_grid(dict(m=500, n=1000, s=5, nu=0.1, sigma=0.05,
                                                  flip_prob=parse_sweep("0:0.02:0.2")))),
    "fig2d": lambda profile: dict(kind="grid", x="flip_prob", max_iter=5, methods=("gna",),
                                  grid=_grid(dict(m=500, n=1000, s=5, nu=0.1, sigma=0.05,
                                                  flip_prob=parse_sweep("0.8:0.02:1")))),
    "table1a": lambda profile: _table1("a", profile),
    "table1b": lambda profile: _table1("b", profile),
    "table1c": lambda profile: _table1("c", profile),
    "wavelet1d": lambda profile: dict(
        kind="wavelet", methods=("gna", "biht", "lp"), max_iter=5,
        config=(ProblemConfig(m=2500, n=8000, s=36, nu=0.0, sigma=0.5, flip_prob=0.06)
                if profile == "full" else
                ProblemConfig(m=600, n=2048, s=12, nu=0.0, sigma=0.5, flip_prob=0.06))),
}


def preset(name: str, profile: str = "ci") -> dict:
    """Settings of a named reproduction preset (``profile`` is ``"ci"`` or ``"full"``)."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if profile not in ("ci", "full"):
        raise ValueError(f"profile must be 'ci' or 'full', got {profile!r}")
    return PRESETS[name](profile)
