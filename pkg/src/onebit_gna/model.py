"""Synthetic data for 1-bit compressed sensing.

Ground-truth sparse signals, Gaussian sensing matrices with AR(1)-correlated
rows, sign measurements with additive noise and random sign flips, and the
orthonormal Haar operator used by the 1D wavelet experiment.

Sign convention throughout: ``sign(0) = +1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy.signal import lfilter
from scipy.sparse.linalg import LinearOperator

__all__ = [
    "ProblemConfig",
    "SparseSignal",
    "SensingEnsemble",
    "BinaryObservation",
    "EffectiveScale",
    "SIGNAL_VALUES",
    "make_signal",
    "sample_matrix",
    "observe",
    "sign",
    "effective_scale",
    "trial_rng",
    "haar_forward",
    "haar_inverse",
    "haar_synthesis",
]


def _readonly(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ProblemConfig:
    """One data-generating setting ``(m, n, s, nu, sigma, flip_prob)``.

    ``flip_prob`` is the probability that a recorded sign is flipped.
    """

    m: int
    n: int
    s: int
    nu: float = 0.0
    sigma: float = 0.0
    flip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not 1 <= int(self.s) <= int(self.n):
            raise ValueError(f"need 1 <= s <= n, got s={self.s}, n={self.n}")
        if not 0.0 <= self.nu < 1.0:
            raise ValueError(f"nu must lie in [0, 1), got {self.nu}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for name, kind in (("m", int), ("n", int), ("s", int), ("seed", int),
                           ("nu", float), ("sigma", float), ("flip_prob", float)):
            object.__setattr__(self, name, kind(getattr(self, name)))

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "ProblemConfig":
        known = {f.name for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            values[key] = float(value) if key in ("nu", "sigma", "flip_prob") else int(value)
        return cls(**values)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "ProblemConfig":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class SparseSignal:
    n: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = _readonly(self.support, dtype=np.intp)
        values = _readonly(self.values, dtype=float)
        if support.shape != values.shape:
            raise ValueError("support and values must have the same length")
        if support.size and (support[0] < 0 or support[-1] >= self.n
                             or np.any(np.diff(support) <= 0)):
            raise ValueError("support must be strictly increasing indices in [0, n)")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def s(self) -> int:
        return int(self.support.size)

    def to_dense(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.support] = self.values
        return x


@dataclass(frozen=True)
class SensingEnsemble:
    matrix: np.ndarray
    covariance_nu: float

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix, dtype=float))

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class BinaryObservation:
    """Sign measurements plus the realized flips and pre-quantization values.

    Decoders only ever see ``y``; ``flip_mask`` and ``pre_quant`` are kept
    for auditing.
    """

    y: np.ndarray
    flip_mask: np.ndarray
    pre_quant: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _readonly(self.y, dtype=np.int8))
        object.__setattr__(self, "flip_mask", _readonly(self.flip_mask, dtype=bool))
        object.__setattr__(self, "pre_quant", _readonly(self.pre_quant, dtype=float))


@dataclass(frozen=True)
class EffectiveScale:
    c: float


def trial_rng(seed: int, *indices: int) -> np.random.Generator:
    """Independent generator for a (seed, index...) cell.

    The stream depends only on the seed and the indices, so any cell can be
    regenerated in isolation regardless of execution order.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, indices)]))


SIGNAL_VALUES = ("gaussian", "sign")


def make_signal(n: int, s: int, rng: np.random.Generator, values: str = "gaussian",
                min_abs: float = 0.0) -> SparseSignal:
    """Unit-norm ``s``-sparse signal on a uniformly random support.

    Parameters
    ----------
    n, s : int
        Dimension and number of nonzeros.
    rng : numpy.random.Generator
    values : {"gaussian", "sign"}
        ``"gaussian"`` draws i.i.d. standard normal values; ``"sign"`` draws
        i.i.d. random signs, i.e. every nonzero has magnitude ``1/sqrt(s)``.
    min_abs : float
        Redraw the values until every normalized nonzero has magnitude at
        least ``min_abs``. Must not exceed ``1/sqrt(s)``.
    """
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    if values not in SIGNAL_VALUES:
        raise ValueError(f"values must be one of {SIGNAL_VALUES}, got {values!r}")
    if min_abs > 1.0 / math.sqrt(s):
        raise ValueError(f"min_abs={min_abs} is unreachable for s={s} unit-norm nonzeros")
    support = np.sort(rng.choice(n, size=s, replace=False))
    while True:
        if values == "sign":
            v = np.where(rng.random(s) < 0.5, -1.0, 1.0)
        else:
            v = rng.standard_normal(s)
        norm = np.linalg.norm(v)
        if norm > 0 and np.min(np.abs(v)) / norm >= min_abs:
            break
    return SparseSignal(n=n, support=support, values=v / norm)


def sample_matrix(m: int, n: int, nu: float, rng: np.random.Generator) -> SensingEnsemble:
    """Gaussian matrix whose rows are i.i.d. ``N(0, Sigma)``, ``Sigma_jk = nu**|j-k|``.

    Each row is a stationary AR(1) sequence
    ``z[0] = g[0]``, ``z[k] = nu * z[k-1] + sqrt(1 - nu**2) * g[k]``,
    which has exactly this covariance and costs O(mn).
    """
    if not 0.0 <= nu < 1.0:
        raise ValueError(f"nu must lie in [0, 1), got {nu}")
    if m < 1 or n < 1:
        raise ValueError(f"matrix dimensions must be positive, got {m}x{n}")
    g = rng.standard_normal((m, n))
    if nu == 0.0:
        return SensingEnsemble(matrix=g, covariance_nu=0.0)
    b = math.sqrt(1.0 - nu * nu)
    g[:, 0] /= b
    z = lfilter([b], [1.0, -nu], g, axis=1)
    return SensingEnsemble(matrix=z, covariance_nu=float(nu))


def sign(z) -> np.ndarray:
    """Elementwise sign with ``sign(0) = +1``, as int8."""
    return np.where(np.asarray(z) >= 0, 1, -1).astype(np.int8)


def observe(ensemble, signal, sigma: float, flip_prob: float,
            rng: np.random.Generator) -> BinaryObservation:
    """Draw ``y = eta * sign(Psi x + eps)`` with ``P[eta_i = -1] = flip_prob``.

    ``ensemble`` may be a :class:`SensingEnsemble` or a plain matrix and
    ``signal`` a :class:`SparseSignal` or a dense vector. Noise is drawn
    before flips, and both are always drawn so the stream consumption does
    not depend on ``sigma`` or ``flip_prob``.
    """
    psi = ensemble.matrix if isinstance(ensemble, SensingEnsemble) else np.asarray(ensemble, float)
    x = signal.to_dense() if isinstance(signal, SparseSignal) else np.asarray(signal, float)
    if psi.ndim != 2 or x.ndim != 1 or psi.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {psi.shape} vs signal {x.shape}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError(f"flip_prob must lie in [0, 1], got {flip_prob}")
    m = psi.shape[0]
    eps = rng.standard_normal(m)
    flips = rng.random(m) < flip_prob
    pre = psi @ x + sigma * eps
    y = sign(pre)
    y[flips] = -y[flips]
    return BinaryObservation(y=y, flip_mask=flips, pre_quant=pre)


def effective_scale(sigma: float, flip_prob: float) -> EffectiveScale:
    """Scale ``c`` such that the population least-squares fit equals ``c * x*``."""
    if sigma < 0 or not 0.0 <= flip_prob <= 1.0:
        raise ValueError("need sigma >= 0 and 0 <= flip_prob <= 1")
    return EffectiveScale(c=(1.0 - 2.0 * flip_prob) * math.sqrt(2.0 / (math.pi * (sigma**2 + 1.0))))


# Haar transform. Coefficient layout (last axis) for level L:
# [approx_L | detail_L | detail_{L-1} | ... | detail_1].

def _check_haar(level, length):
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    if length % (2**level):
        raise ValueError(f"length {length} is not divisible by 2**{level}")


def haar_forward(x, level: int = 1) -> np.ndarray:
    """Orthonormal Haar analysis along the last axis (rows of a matrix are transformed independently)."""
    x = np.asarray(x, dtype=float)
    _check_haar(level, x.shape[-1])
    out = x.copy()
    length = x.shape[-1]
    for _ in range(level):
        seg = out[..., :length]
        even, odd = seg[..., 0::2], seg[..., 1::2]
        approx = (even + odd) / math.sqrt(2.0)
        detail = (even - odd) / math.sqrt(2.0)
        half = length // 2
        out[..., :half] = approx
        out[..., half:length] = detail
        length = half
    return out


def haar_inverse(coef, level: int = 1) -> np.ndarray:
    """Inverse of :func:`haar_forward`."""
    c = np.asarray(coef, dtype=float)
    _check_haar(level, c.shape[-1])
    out = c.copy()
    length = c.shape[-1] // 2**level
    for _ in range(level):
        approx = out[..., :length].copy()
        detail = out[..., length:2 * length].copy()
        out[..., 0:2 * length:2] = (approx + detail) / math.sqrt(2.0)
        out[..., 1:2 * length:2] = (approx - detail) / math.sqrt(2.0)
        length *= 2
    return out


def haar_synthesis(level: int, length: int) -> LinearOperator:
    """Haar synthesis (coefficients -> signal) as a composable linear operator.

    The adjoint is the analysis transform. For a dense matrix ``G`` the
    composed sensing matrix ``G @ W`` is ``haar_forward(G, level)``.
    """
    _check_haar(level, length)

    def matmat(c):
        return haar_inverse(np.asarray(c).T, level).T

    def rmatmat(x):
        return haar_forward(np.asarray(x).T, level).T

    return LinearOperator(
        shape=(length, length),
        matvec=lambda c: haar_inverse(np.ravel(c), level),
        rmatvec=lambda x: haar_forward(np.ravel(x), level),
        matmat=matmat,
        rmatmat=rmatmat,
        dtype=float,
    )
