"""Empirical restricted-spectrum constants and error-rate fits.

Everything here is an estimate: extrema over a continuum or over more
supports than the budget allows are reported as envelopes over the
evaluated samples, never as certified bounds. All Gram quantities are
normalized by ``m``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RestrictedSpectrum",
    "ConeConstants",
    "ScalingFit",
    "restricted_spectrum",
    "cone_constants",
    "cone_ratio",
    "scaling_fit",
    "eta_bound",
    "diagnostics_report",
]

_BATCH = 4096


@dataclass(frozen=True)
class RestrictedSpectrum:
    c2s_min: float
    c2s_max: float
    support_size: int
    exhaustive: bool
    supports_evaluated: int


@dataclass(frozen=True)
class ConeConstants:
    c_star_lower: float
    c_star_upper: float
    samples: int
    ratios: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    points: tuple


def _block_extrema(gram, supports):
    lo, hi = np.inf, -np.inf
    for start in range(0, len(supports), _BATCH):
        idx = np.asarray(supports[start:start + _BATCH], dtype=np.intp)
        blocks = gram[idx[:, :, None], idx[:, None, :]]
        ev = np.linalg.eigvalsh(blocks)
        lo = min(lo, float(ev[:, 0].min()))
        hi = max(hi, float(ev[:, -1].max()))
    return lo, hi


def restricted_spectrum(psi, s: int, budget: int = 100_000, rng=None) -> RestrictedSpectrum:
    """Extreme eigenvalues of ``Psi_A^T Psi_A / m`` over supports ``|A| = 2s``.

    All ``C(n, 2s)`` supports are enumerated when that count fits in
    ``budget``; otherwise ``budget`` uniformly random supports are drawn
    from ``rng``.
    """
    psi = np.asarray(psi, dtype=float)
    m, n = psi.shape
    k = 2 * int(s)
    if s < 1 or k > n:
        raise ValueError(f"need 1 <= 2s <= n, got s={s}, n={n}")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    gram = psi.T @ psi / m
    exhaustive = math.comb(n, k) <= budget
    if exhaustive:
        supports = list(itertools.combinations(range(n), k))
    else:
        rng = np.random.default_rng() if rng is None else rng
        supports = [np.sort(rng.choice(n, size=k, replace=False)) for _ in range(budget)]
    lo, hi = _block_extrema(gram, supports)
    return RestrictedSpectrum(
        c2s_min=max(lo, 0.0),
        c2s_max=hi,
        support_size=k,
        exhaustive=exhaustive,
        supports_evaluated=len(supports),
    )


def cone_ratio(psi, v) -> float:
    """``v^T Psi^T Psi v / (m ||v||_1 ||v||_inf)``."""
    psi = np.asarray(psi, dtype=float)
    v = np.asarray(v, dtype=float)
    pv = psi @ v
    return float(pv @ pv) / (psi.shape[0] * np.abs(v).sum() * np.abs(v).max())


def cone_constants(psi, s: int, samples: int, rng) -> ConeConstants:
    """Sampled envelope of :func:`cone_ratio` over random ``2s``-sparse directions.

    Each sample draws a uniform support then Gaussian values, in that
    order, so a longer run with the same seed extends a shorter one.
    """
    psi = np.asarray(psi, dtype=float)
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    m, n = psi.shape
    k = min(2 * int(s), n)
    ratios = np.empty(samples)
    for i in range(samples):
        support = rng.choice(n, size=k, replace=False)
        v = rng.standard_normal(k)
        pv = psi[:, support] @ v
        a = np.abs(v)
        ratios[i] = float(pv @ pv) / (m * a.sum() * a.max())
    ratios.flags.writeable = False
    return ConeConstants(
        c_star_lower=float(ratios.min()),
        c_star_upper=float(ratios.max()),
        samples=samples,
        ratios=ratios,
    )


def scaling_fit(points) -> ScalingFit:
    """Least-squares line through ``(log m, log error)``."""
    pts = [(float(m), float(e)) for m, e in points]
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points, got {len(pts)}")
    arr = np.array(pts)
    if np.any(arr <= 0):
        raise ValueError("scaling_fit needs strictly positive m and error values")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    if ss_tot <= 1e-300:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return ScalingFit(slope=float(slope), intercept=float(intercept), r2=r2, points=tuple(pts))


def eta_bound(gamma_max_estimate: float, s: int):
    """Step-size ceilings ``(4/(9 g), 4/(9 g sqrt(s)))``.

    The first keeps the KKT fixed-point characterization valid, the second
    is the range used for the iteration-complexity guarantee. Advisory only.
    """
    if not gamma_max_estimate > 0:
        raise ValueError("gamma_max_estimate must be > 0")
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    base = 4.0 / (9.0 * gamma_max_estimate)
    return base, base / math.sqrt(s)


def diagnostics_report(psi, s: int, budget: int = 100_000, samples: int = 10_000,
                       rng=None, gamma_max_estimate: float | None = None) -> dict:
    """JSON-ready diagnostics for a sensing matrix.

    When ``gamma_max_estimate`` is not given the sampled ``c2s_max`` is used.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    spec = restricted_spectrum(psi, s, budget=budget, rng=rng)
    cone = cone_constants(psi, s, samples, rng)
    gamma = spec.c2s_max if gamma_max_estimate is None else gamma_max_estimate
    return {
        "c2s_min": spec.c2s_min,
        "c2s_max": spec.c2s_max,
        "exhaustive": spec.exhaustive,
        "c_star_lower": cone.c_star_lower,
        "c_star_upper": cone.c_star_upper,
        "samples": cone.samples,
        "eta_bounds": list(eta_bound(gamma, s)),
    }
