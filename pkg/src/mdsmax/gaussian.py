"""Gaussian sampling, anti-concentration and max-norm moment bounds.

Randomness always comes from a :class:`SeedStream`, a (seed, index path)
pair mapped to an independent Philox stream, so results do not depend on
the order in which streams are consumed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InputError

logger = logging.getLogger(__name__)

PSD_TOL = 1e-10
SYM_TOL = 1e-12
LEVY_MIN_REPLICATIONS = 100


def lnp(x: float) -> float:
    """Clamped logarithm max(1, log x)."""
    if x <= 0:
        return 1.0
    return max(1.0, math.log(x))


@dataclass(frozen=True)
class SeedStream:
    """Reproducible random stream keyed by a base seed and an index path."""

    seed: int
    index: tuple[int, ...] | int = ()

    def __post_init__(self):
        seed = int(self.seed)
        if not 0 <= seed < 2**64:
            raise InputError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        idx = (self.index,) if isinstance(self.index, (int, np.integer)) else tuple(self.index)
        idx = tuple(int(i) for i in idx)
        if any(i < 0 for i in idx):
            raise InputError(f"stream indices must be nonnegative, got {idx}")
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "index", idx)

    def child(self, *index: int) -> "SeedStream":
        return SeedStream(self.seed, self.index + tuple(index))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.index)
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric positive semidefinite covariance matrix.

    Symmetry is checked to ``SYM_TOL`` relative and the smallest eigenvalue
    may not fall below ``-PSD_TOL * ||entries||``.
    """

    entries: np.ndarray
    factorization: str = field(default="", init=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InputError(f"covariance must be a nonempty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("covariance has non-finite entries")
        scale = float(np.max(np.abs(a))) if a.size else 0.0
        if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL * max(scale, 1e-300):
            raise InputError("covariance is not symmetric")
        a = 0.5 * (a + a.T)
        if scale > 0:
            lam_min = float(np.linalg.eigvalsh(a)[0])
            if lam_min < -PSD_TOL * np.linalg.norm(a):
                raise InputError(f"covariance is not PSD: smallest eigenvalue {lam_min:.3e}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def diag(self) -> np.ndarray:
        return np.diag(self.entries)

    @property
    def sigma_min(self) -> float:
        return float(np.sqrt(self.diag.min()))

    @property
    def sigma_max(self) -> float:
        return float(np.sqrt(self.diag.max()))

    def require_positive_diagonal(self) -> None:
        if np.any(self.diag <= 0):
            raise InputError("covariance diagonal must be strictly positive")

    @cached_property
    def factor(self) -> np.ndarray:
        """Matrix L with L @ L.T equal to the entries."""
        a = self.entries
        try:
            fac = np.linalg.cholesky(a)
            object.__setattr__(self, "factorization", "cholesky")
            return fac
        except np.linalg.LinAlgError:
            pass
        lam, q = np.linalg.eigh(a)
        # Eigenvalues below the PSD tolerance are treated as exact zeros.
        cut = PSD_TOL * max(float(np.abs(lam).max()), 1e-300)
        lam = np.where(lam > cut, lam, 0.0)
        object.__setattr__(self, "factorization", "eigen")
        logger.warning("Cholesky failed for %dx%d covariance; using clipped eigendecomposition",
                       self.dim, self.dim)
        return q * np.sqrt(lam)

    def __eq__(self, other):
        return isinstance(other, CovMatrix) and np.array_equal(self.entries, other.entries)

    __hash__ = None


def as_cov(cov) -> CovMatrix:
    return cov if isinstance(cov, CovMatrix) else CovMatrix(cov)


def _as_stream(stream) -> SeedStream:
    return stream if isinstance(stream, SeedStream) else SeedStream(stream)


def sample_gaussian(cov, stream, count: int) -> np.ndarray:
    """Draw ``count`` rows from N(0, cov)."""
    cov = as_cov(cov)
    if int(count) < 1:
        raise InputError(f"count must be positive, got {count}")
    gen = _as_stream(stream).generator()
    return sample_gaussian_with(cov, gen, int(count))


def sample_gaussian_with(cov: CovMatrix, gen: np.random.Generator, count: int) -> np.ndarray:
    z = gen.standard_normal((count, cov.dim))
    return z @ cov.factor.T


def anti_concentration_value(epsilon, sigma_min, sigma_max, d, C=1.0) -> float:
    """C * eps * (sigma_max / sigma_min^2) * sqrt(lnp(sigma_min * d / eps))."""
    for name, val in (("epsilon", epsilon), ("sigma_min", sigma_min),
                      ("sigma_max", sigma_max), ("d", d), ("C", C)):
        if not val > 0:
            raise InputError(f"{name} must be positive, got {val!r}")
    if sigma_min > sigma_max:
        raise InputError("sigma_min must not exceed sigma_max")
    return C * epsilon * (sigma_max / sigma_min**2) * math.sqrt(lnp(sigma_min * d / epsilon))


def max_window_fraction(values, epsilon: float) -> float:
    """sup_r of the fraction of ``values`` in [r - eps, r + eps].

    The sup is attained with the window's left end on a sample point, so a
    sweep over the sorted sample is exact.
    """
    x = np.sort(np.asarray(values, dtype=float))
    right = np.searchsorted(x, x + 2.0 * epsilon, side="right")
    return float(np.max(right - np.arange(x.size))) / x.size


def estimate_levy_concentration(cov, epsilon: float, stream, replications: int):
    """Monte Carlo estimate of sup_r P(|M(Y) - r| <= eps) for Y ~ N(0, cov).

    Returns ``(estimate, halfwidth)``; the halfwidth is twice the 95% DKW
    band of the empirical cdf.
    """
    cov = as_cov(cov)
    cov.require_positive_diagonal()
    if replications < LEVY_MIN_REPLICATIONS:
        raise InputError(
            f"replications = {replications} below the minimum of {LEVY_MIN_REPLICATIONS}"
        )
    if epsilon < 0:
        raise InputError("epsilon must be nonnegative")
    m = sample_gaussian(cov, stream, replications).max(axis=1)
    est = max_window_fraction(m, epsilon)
    half = 2.0 * math.sqrt(math.log(2.0 / 0.05) / (2.0 * replications))
    return est, half


def max_moment_bound(r: float, sigma_max: float, p: int) -> float:
    """[log(sqrt(2) e^{c_r} p)]^{r/2} (2 sigma_max)^r with c_r = r/2 - 1.

    Explicit upper bound on E||Y||_inf^r for a centered Gaussian Y in R^p
    whose coordinate standard deviations are at most ``sigma_max``.
    """
    if not r >= 2:
        raise InputError(f"r must be at least 2, got {r!r}")
    if not sigma_max > 0 or not p >= 1:
        raise InputError("sigma_max must be positive and p at least 1")
    c_r = r / 2.0 - 1.0
    return math.log(math.sqrt(2.0) * math.exp(c_r) * p) ** (r / 2.0) * (2.0 * sigma_max) ** r


def estimate_max_moment(cov, r: float, stream, replications: int):
    """Sample mean of ||Y||_inf^r and its plain standard error."""
    cov = as_cov(cov)
    if replications < 2:
        raise InputError("need at least two replications")
    y = sample_gaussian(cov, stream, replications)
    vals = np.abs(y).max(axis=1) ** r
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replications))
