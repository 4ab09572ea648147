"""Generalized Newton algorithm (GNA) for cardinality-constrained least squares.

Solves ``min ||y - Psi x||^2 / (2m)  s.t.  ||x||_0 <= s`` by iterating on the
primal/dual pair ``(x, d)`` with ``d = Psi^T (y - Psi x) / m``:

1. pick the active set ``A`` = indices of the ``s`` largest ``|x + eta d|``;
2. ``x_A`` = least-squares fit on the columns ``A``, ``x`` zero elsewhere;
3. ``d`` = scaled residual correlation off ``A``, zero on ``A``;
4. stop once the active set repeats.

:func:`newton_step` performs the same update by explicitly solving the
``2n x 2n`` Newton system for the KKT map and serves as a test oracle.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

__all__ = [
    "SingularGramError",
    "SolverOptions",
    "SolverState",
    "SolverReport",
    "hard_threshold",
    "active_set",
    "restricted_least_squares",
    "initial_state",
    "gna_step",
    "run_gna",
    "kkt_residual",
    "newton_step",
]

NEWTON_MAX_N = 512
_RIDGE_SCALE = 1e-10
# reciprocal pivot ratio below which a Cholesky factor counts as singular
_PIVOT_RTOL = 1e-7


class SingularGramError(LinAlgError):
    """Restricted Gram matrix is numerically singular."""

    def __init__(self, active, iteration=None):
        self.active = tuple(int(i) for i in active)
        self.iteration = iteration
        super().__init__(self._message())

    def _message(self):
        where = "" if self.iteration is None else f" at iteration {self.iteration}"
        return f"restricted Gram matrix is singular on active set {list(self.active)}{where}"

    def __str__(self):
        return self._message()


@dataclass
class SolverOptions:
    s: int
    eta: float = 0.9
    max_iter: int = 5
    ls_ridge: float = 0.0

    def __post_init__(self):
        if int(self.s) < 1:
            raise ValueError(f"s must be >= 1, got {self.s}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.ls_ridge < 0:
            raise ValueError(f"ls_ridge must be >= 0, got {self.ls_ridge}")
        self.s = int(self.s)
        self.max_iter = int(self.max_iter)


@dataclass(frozen=True)
class SolverState:
    """Primal/dual iterate.

    ``active`` is the index set that produced ``x`` (``None`` for a starting
    point that was not produced by an update).
    """

    x: np.ndarray
    d: np.ndarray
    active: np.ndarray | None = None
    k: int = 0


@dataclass
class SolverReport:
    x_hat: np.ndarray
    iterations: int
    converged: bool
    active_history: list = field(default_factory=list)
    ls_solves: int = 0
    ridge_solves: int = 0
    method: str = "gna"

    def to_dict(self) -> dict:
        nz = np.flatnonzero(self.x_hat)
        return {
            "method": self.method,
            "n": int(self.x_hat.size),
            "x_hat": [[int(i), float(self.x_hat[i])] for i in nz],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "ls_solves": int(self.ls_solves),
            "active_history": [[int(i) for i in a] for a in self.active_history],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, obj: dict) -> "SolverReport":
        pairs = obj["x_hat"]
        n = obj.get("n", 1 + max((int(i) for i, _ in pairs), default=-1))
        x = np.zeros(n)
        for i, v in pairs:
            x[int(i)] = v
        return cls(
            x_hat=x,
            iterations=obj["iterations"],
            converged=obj["converged"],
            active_history=[tuple(a) for a in obj.get("active_history", [])],
            ls_solves=obj.get("ls_solves", 0),
            method=obj.get("method", "gna"),
        )


def _top_s(z, s):
    """Sorted indices of the ``s`` largest ``|z_i|``; ties go to smaller indices."""
    a = np.abs(z)
    n = a.size
    if not 1 <= s <= n:
        raise ValueError(f"s must lie in [1, {n}], got {s}")
    if s == n:
        return np.arange(n)
    t = np.partition(a, n - s)[n - s]
    above = np.flatnonzero(a > t)
    ties = np.flatnonzero(a == t)[: s - above.size]
    return np.sort(np.concatenate([above, ties]))


def hard_threshold(z, s: int) -> np.ndarray:
    """Keep the ``s`` largest-magnitude entries of ``z`` and zero the rest."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    idx = _top_s(z, s)
    out[idx] = z[idx]
    return out


def active_set(x, d, eta: float, s: int) -> np.ndarray:
    """Indices of the ``s`` largest ``|x_i + eta * d_i|``, ascending."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if x.shape != d.shape:
        raise ValueError(f"x and d must have the same shape, got {x.shape} and {d.shape}")
    return _top_s(x + eta * d, s)


def _solve_gram(gram, rhs, active, ridge):
    """Cholesky solve of ``gram u = rhs``; returns (u, ridged)."""
    for attempt in (0, 1):
        g = gram
        if attempt:
            floor = ridge if ridge > 0 else _RIDGE_SCALE * np.trace(gram) / max(len(active), 1)
            if not floor > 0:
                break
            g = gram + floor * np.eye(gram.shape[0])
        try:
            c, lower = cho_factor(g, check_finite=False)
        except LinAlgError:
            continue
        piv = np.abs(np.diag(c))
        if piv.min() <= _PIVOT_RTOL * piv.max():
            continue
        return cho_solve((c, lower), rhs, check_finite=False), bool(attempt)
    raise SingularGramError(active)


def restricted_least_squares(psi, y, active, ridge: float = 0.0) -> np.ndarray:
    """Least-squares coefficients of ``y`` on the columns ``psi[:, active]``.

    Solved through the normal equations with a Cholesky factorization. A
    ridge floor (``ridge`` or ``1e-10 * trace / |A|``) is added only if the
    Gram matrix is numerically singular.

    Raises
    ------
    SingularGramError
        If the Gram matrix stays singular after the ridge fallback.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    active = np.asarray(active, dtype=np.intp)
    cols = psi[:, active]
    u, _ = _solve_gram(cols.T @ cols, cols.T @ y, active, ridge)
    return u


def _check_problem(psi, y):
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    if psi.ndim != 2 or y.ndim != 1 or psi.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: Psi {psi.shape} vs y {y.shape}")
    return psi, y


def _update(psi, y, active, ridge):
    """Primal/dual update for a fixed active set; returns (x, d, ridged)."""
    m, n = psi.shape
    cols = psi[:, active]
    u, ridged = _solve_gram(cols.T @ cols, cols.T @ y, active, ridge)
    x = np.zeros(n)
    x[active] = u
    d = psi.T @ (y - cols @ u) / m
    d[active] = 0.0
    return x, d, ridged


def initial_state(psi, y, x0=None) -> SolverState:
    """Starting pair ``(x0, Psi^T (y - Psi x0) / m)``; ``x0`` defaults to zero."""
    psi, y = _check_problem(psi, y)
    m, n = psi.shape
    x0 = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"x0 must have shape ({n},), got {x0.shape}")
    return SolverState(x=x0, d=psi.T @ (y - psi @ x0) / m)


def gna_step(state: SolverState, psi, y, opts: SolverOptions) -> SolverState:
    """One GNA update of ``state``."""
    psi, y = _check_problem(psi, y)
    if state.x.shape != (psi.shape[1],) or state.d.shape != (psi.shape[1],):
        raise ValueError("state dimensions do not match Psi")
    active = active_set(state.x, state.d, opts.eta, opts.s)
    x, d, _ = _update(psi, y, active, opts.ls_ridge)
    return SolverState(x=x, d=d, active=active, k=state.k + 1)


def run_gna(psi, y, opts: SolverOptions, x0=None) -> SolverReport:
    """Run GNA from ``x0`` (zero by default) until the active set repeats.

    ``iterations`` counts executed primal/dual updates, including the one
    after which the repeated active set is detected. ``active_history``
    holds ``A^0, ..., A^{k+1}``.
    """
    psi, y = _check_problem(psi, y)
    n = psi.shape[1]
    if opts.s > n:
        raise ValueError(f"s={opts.s} exceeds the number of columns {n}")
    if x0 is not None and np.count_nonzero(x0) > opts.s:
        raise ValueError(f"warm start has more than s={opts.s} nonzeros")
    state = initial_state(psi, y, x0)
    active = active_set(state.x, state.d, opts.eta, opts.s)
    history = [tuple(int(i) for i in active)]
    x = state.x
    converged = False
    ridge_solves = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        try:
            x, d, ridged = _update(psi, y, active, opts.ls_ridge)
        except SingularGramError as exc:
            exc.iteration = it
            raise
        ridge_solves += ridged
        nxt = active_set(x, d, opts.eta, opts.s)
        history.append(tuple(int(i) for i in nxt))
        if np.array_equal(nxt, active):
            converged = True
            break
        active = nxt
    return SolverReport(
        x_hat=x,
        iterations=it,
        converged=converged,
        active_history=history,
        ls_solves=it,
        ridge_solves=ridge_solves,
    )


def kkt_residual(x, psi, y, eta: float, s: int) -> float:
    """``||x - H_s(x + eta * d)||_inf`` with ``d = Psi^T (y - Psi x) / m``."""
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    psi, y = _check_problem(psi, y)
    x = np.asarray(x, dtype=float)
    d = psi.T @ (y - psi @ x) / psi.shape[0]
    return float(np.max(np.abs(x - hard_threshold(x + eta * d, s))))


def newton_step(state: SolverState, psi, y, opts: SolverOptions) -> SolverState:
    """GNA update computed as a Newton step ``w+ = w - H^{-1} F(w)`` on ``w = (x; d)``.

    With ``A`` the active set of ``state`` and ``I`` its complement, the
    linearized KKT map is ``F = (-d_A; x_I; Psi^T Psi x + m d - Psi^T y)`` and

        H = [[diag(1_I), -diag(1_A)],
             [Psi^T Psi, m * I    ]].

    The dense system is assembled explicitly, so this is restricted to
    ``n <= 512``.
    """
    psi, y = _check_problem(psi, y)
    m, n = psi.shape
    if n > NEWTON_MAX_N:
        raise ValueError(f"newton_step is an oracle for n <= {NEWTON_MAX_N}, got n={n}")
    active = active_set(state.x, state.d, opts.eta, opts.s)
    in_a = np.zeros(n, dtype=bool)
    in_a[active] = True

    gram = psi.T @ psi
    h = np.zeros((2 * n, 2 * n))
    h[:n, :n] = np.diag((~in_a).astype(float))
    h[:n, n:] = -np.diag(in_a.astype(float))
    h[n:, :n] = gram
    h[n:, n:] = m * np.eye(n)

    f1 = np.where(in_a, -state.d, state.x)
    f2 = gram @ state.x + m * state.d - psi.T @ y
    f = np.concatenate([f1, f2])

    sub = gram[np.ix_(active, active)]
    piv = np.linalg.eigvalsh(sub)
    if piv[0] <= _PIVOT_RTOL**2 * max(piv[-1], 0.0):
        raise SingularGramError(active)
    step = np.linalg.solve(h, -f)
    w = np.concatenate([state.x, state.d]) + step
    return SolverState(x=w[:n], d=w[n:], active=active, k=state.k + 1)
