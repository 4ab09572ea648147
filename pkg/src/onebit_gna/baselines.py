"""Comparison decoders for 1-bit measurements.

* :func:`biht` -- binary iterative hard thresholding.
* :func:`lp_estimate` -- back-projection ``Psi^T y / m`` projected onto
  ``{||x||_1 <= sqrt(s), ||x||_2 <= 1}``.
* :func:`exhaustive_l0` -- brute-force global minimizer of the
  cardinality-constrained least-squares problem, for small instances.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import sign
from .solver import SingularGramError, _check_problem, hard_threshold, restricted_least_squares

__all__ = [
    "BihtOptions",
    "biht",
    "project_l1_ball",
    "lp_estimate",
    "l0_objective",
    "exhaustive_l0",
    "EXHAUSTIVE_MAX_SUPPORTS",
]

EXHAUSTIVE_MAX_SUPPORTS = 10**6


@dataclass
class BihtOptions:
    """Options for :func:`biht`. ``step=None`` means ``1/m``."""

    s: int
    step: float | None = None
    max_iter: int = 100
    normalize_output: bool = True

    def __post_init__(self):
        if int(self.s) < 1:
            raise ValueError(f"s must be >= 1, got {self.s}")
        if self.step is not None and not self.step > 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if int(self.max_iter) < 0:
            raise ValueError(f"max_iter must be >= 0, got {self.max_iter}")


def _biht_update(psi, y, x, step, s):
    return hard_threshold(x + step * (psi.T @ (y - sign(psi @ x))) / 2.0, s)


def biht(psi, y, opts: BihtOptions, return_info: bool = False):
    """Binary iterative hard thresholding.

    Iterates ``x <- H_s(x + step * Psi^T (y - sign(Psi x)) / 2)`` from zero
    until the iterate repeats or ``max_iter`` steps have run.

    Parameters
    ----------
    psi : (m, n) array
    y : (m,) array of +-1
    opts : BihtOptions
    return_info : bool
        Also return ``{"iterations", "converged"}``.

    Returns
    -------
    x : (n,) array
        Unit-norm when ``opts.normalize_output`` and nonzero.
    """
    psi, y = _check_problem(psi, y)
    m, n = psi.shape
    step = 1.0 / m if opts.step is None else opts.step
    x = np.zeros(n)
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        x_new = _biht_update(psi, y, x, step, opts.s)
        if np.array_equal(x_new, x):
            converged = True
            break
        x = x_new
    if opts.normalize_output:
        norm = np.linalg.norm(x)
        if norm > 0:
            x = x / norm
    if return_info:
        return x, {"iterations": it, "converged": converged}
    return x


def project_l1_ball(v, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{w : ||w||_1 <= radius}`` (sort-based, O(n log n))."""
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.flatnonzero(u * k > css - radius)[-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def lp_estimate(psi, y, s: int) -> np.ndarray:
    """Projected linear estimator.

    ``Psi^T y / m`` is projected onto the l1 ball of radius ``sqrt(s)`` and
    then rescaled into the unit l2 ball if needed.
    """
    psi, y = _check_problem(psi, y)
    if int(s) < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    v = psi.T @ y / psi.shape[0]
    w = project_l1_ball(v, math.sqrt(s))
    norm = np.linalg.norm(w)
    if norm > 1.0:
        w = w / norm
    return w


def l0_objective(psi, y, x) -> float:
    """``||y - Psi x||^2 / (2m)``."""
    psi, y = _check_problem(psi, y)
    r = y - psi @ np.asarray(x, dtype=float)
    return float(r @ r) / (2 * psi.shape[0])


def exhaustive_l0(psi, y, s: int, return_objective: bool = False):
    """Global minimizer of ``||y - Psi x||^2/(2m)`` over ``||x||_0 <= s`` by enumeration.

    All supports of size ``s`` are tried. Objective ties within 1e-12 keep
    the lexicographically smallest support. Supports with a singular Gram
    matrix are skipped.
    """
    psi, y = _check_problem(psi, y)
    m, n = psi.shape
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    count = math.comb(n, s)
    if count > EXHAUSTIVE_MAX_SUPPORTS:
        raise ValueError(
            f"exhaustive search over C({n}, {s}) = {count:.3e} supports exceeds "
            f"the limit of {EXHAUSTIVE_MAX_SUPPORTS:.0e}"
        )
    yy = float(y @ y)
    best_obj, best_support, best_u = np.inf, None, None
    for support in itertools.combinations(range(n), s):
        idx = list(support)
        try:
            u = restricted_least_squares(psi, y, idx)
        except SingularGramError:
            continue
        r = y - psi[:, idx] @ u
        obj = float(r @ r) / (2 * m)
        if obj < best_obj - 1e-12:
            best_obj, best_support, best_u = obj, idx, u
    x = np.zeros(n)
    if best_support is None:
        best_obj = yy / (2 * m)
    else:
        x[best_support] = best_u
    if return_objective:
        return x, best_obj
    return x
