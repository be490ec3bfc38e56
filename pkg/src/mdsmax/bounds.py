"""Berry-Esseen bound evaluation for the maximum of a martingale sum.

All bounds carry an unspecified universal constant ``C`` (default 1).
Inputs are normalized by the diagonal extremes of V = sum_i Sigma_i:
tau = v_max / v_min, beta' = beta / v_min^2, Gamma' = Gamma / v_min^3.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, PreconditionError
from .gaussian import CovMatrix, as_cov, lnp

logger = logging.getLogger(__name__)

GAMMA_FLOOR_SLACK = 1e-12


def variance_stats(sigma_list) -> tuple[CovMatrix, float, float, float]:
    """V = sum of the step covariances and (v_min^2, v_max^2, tau) from its diagonal."""
    covs = [as_cov(c) for c in sigma_list]
    if not covs:
        raise InputError("sigma_list is empty")
    dims = {c.dim for c in covs}
    if len(dims) != 1:
        raise InputError(f"step covariances have mixed dimensions {sorted(dims)}")
    V = np.sum([c.entries for c in covs], axis=0)
    diag = np.diag(V)
    v_min_sq, v_max_sq = float(diag.min()), float(diag.max())
    if not v_min_sq > 0:
        raise PreconditionError(
            f"bound requires v_min > 0 almost surely; min diagonal of V is {v_min_sq!r}"
        )
    return CovMatrix(V), v_min_sq, v_max_sq, math.sqrt(v_max_sq / v_min_sq)


@dataclass(frozen=True)
class BoundInputs:
    d: int
    n: int
    v_min_sq: float
    v_max_sq: float
    beta: float
    gamma: float
    alpha: float = 0.0
    C: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise InputError("d and n must be positive")
        if not 0 < self.v_min_sq <= self.v_max_sq * (1 + 1e-15):
            raise InputError("need 0 < v_min_sq <= v_max_sq")
        if not self.beta >= 0:
            raise InputError(f"beta must be nonnegative, got {self.beta!r}")
        if not self.gamma > 0:
            raise InputError(f"gamma must be positive, got {self.gamma!r}")
        if not 0 <= self.alpha <= 0.25:
            raise InputError(f"alpha must lie in [0, 1/4], got {self.alpha!r}")
        if not self.C > 0:
            raise InputError("C must be positive")

    @property
    def v_min(self) -> float:
        return math.sqrt(self.v_min_sq)

    @property
    def tau(self) -> float:
        return math.sqrt(self.v_max_sq / self.v_min_sq)

    @property
    def beta_prime(self) -> float:
        return self.beta / self.v_min_sq

    @property
    def gamma_prime(self) -> float:
        return self.gamma / self.v_min_sq**1.5


def theorem1_terms(inputs: BoundInputs) -> tuple[float, float]:
    """The two summands of the main bound, each multiplied by C."""
    if inputs.d < 2:
        raise InputError("theorem1_bound needs d >= 2; use d1_bound for d = 1")
    ln_d = math.log(inputs.d)
    tau, bp, gp = inputs.tau, inputs.beta_prime, inputs.gamma_prime
    first = ln_d**inputs.alpha * bp * math.sqrt(tau / gp)
    second = math.log(inputs.d * inputs.n) ** (1.0 - inputs.alpha / 2.0) * (tau**3 * gp) ** 0.25
    return inputs.C * first, inputs.C * second


def theorem1_bound(inputs: BoundInputs) -> float:
    """C [ (ln d)^a beta' sqrt(tau/Gamma') + (ln dn)^{1-a/2} (tau^3 Gamma')^{1/4} ]."""
    first, second = theorem1_terms(inputs)
    return first + second


def corollary_bound(inputs: BoundInputs) -> float:
    """C (ln dn)^{7/8} (tau^3 Gamma')^{1/4}; valid when beta = 0."""
    if inputs.beta != 0:
        logger.warning("corollary bound evaluated with beta = %g != 0", inputs.beta)
    return _corollary(inputs)


def _corollary(inputs: BoundInputs) -> float:
    return inputs.C * math.log(inputs.d * inputs.n) ** 0.875 * (
        inputs.tau**3 * inputs.gamma_prime
    ) ** 0.25


def d1_bound(beta_prime: float, gamma_prime: float, C: float = 1.0) -> float:
    """One-dimensional bound C [beta' Gamma'^{-1/2} + Gamma'^{1/4}]."""
    if not gamma_prime > 0:
        raise InputError(f"gamma_prime must be positive, got {gamma_prime!r}")
    if beta_prime < 0:
        raise InputError("beta_prime must be nonnegative")
    return C * (beta_prime / math.sqrt(gamma_prime) + gamma_prime**0.25)


def optimal_epsilon(inputs: BoundInputs) -> tuple[float, float, float]:
    """Smoothing width eps, slack delta = eps and kappa = ln d / delta."""
    if inputs.d < 2:
        raise InputError("optimal_epsilon needs d >= 2")
    ln_d = math.log(inputs.d)
    eps = ln_d ** ((1.0 - inputs.alpha) / 2.0) * inputs.v_min * (
        inputs.gamma_prime / inputs.tau
    ) ** 0.25
    return eps, eps, ln_d / eps


def gamma_floor(d: int, n: int, v_max_sq: float) -> float:
    return lnp(d) ** 1.5 * v_max_sq**1.5 / math.sqrt(n)


def gamma_floor_check(gamma: float, d: int, n: int, v_max_sq: float) -> bool:
    """Gamma >= (lnp d)^{3/2} n^{-1/2} v_max^3, up to an absolute 1e-12."""
    return bool(gamma >= gamma_floor(d, n, v_max_sq) - GAMMA_FLOOR_SLACK)


@dataclass(frozen=True)
class BoundReport:
    v_min: float
    v_max: float
    tau: float
    beta: float
    gamma: float
    beta_prime: float
    gamma_prime: float
    alpha: float
    C: float
    theorem1_value: float | None
    theorem1_first: float | None
    corollary_value: float | None
    d1_value: float | None
    epsilon_opt: float | None
    kappa: float | None
    gamma_floor_ok: bool
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def headline(self) -> float:
        """Bound used for the implied constant: theorem 1 for d >= 2, else d = 1."""
        return self.theorem1_value if self.theorem1_value is not None else self.d1_value


def bound_report(inputs: BoundInputs) -> BoundReport:
    notes = []
    if inputs.d >= 2:
        first, second = theorem1_terms(inputs)
        t1 = first + second
        cor = _corollary(inputs)
        eps, _, kappa = optimal_epsilon(inputs)
        d1 = None
        if inputs.d == 2:
            notes.append("ln d < 1 at d = 2; bound uses ln d as written")
    else:
        first = t1 = cor = eps = kappa = None
        d1 = d1_bound(inputs.beta_prime, inputs.gamma_prime, inputs.C)
    if inputs.beta != 0:
        notes.append("beta > 0: corollary value reported but its hypothesis fails")
    return BoundReport(
        v_min=inputs.v_min,
        v_max=math.sqrt(inputs.v_max_sq),
        tau=inputs.tau,
        beta=inputs.beta,
        gamma=inputs.gamma,
        beta_prime=inputs.beta_prime,
        gamma_prime=inputs.gamma_prime,
        alpha=inputs.alpha,
        C=inputs.C,
        theorem1_value=t1,
        theorem1_first=first,
        corollary_value=cor,
        d1_value=d1,
        epsilon_opt=eps,
        kappa=kappa,
        gamma_floor_ok=gamma_floor_check(inputs.gamma, inputs.d, inputs.n, inputs.v_max_sq),
        notes=tuple(notes),
    )


def inputs_from_statistics(stats, d: int, n: int, alpha: float = 0.0,
                           C: float = 1.0) -> BoundInputs:
    """Assemble :class:`BoundInputs` from an ``AtomStatistics``."""
    _, v_min_sq, v_max_sq, _ = variance_stats(stats.sigma_list)
    return BoundInputs(d=d, n=n, v_min_sq=v_min_sq, v_max_sq=v_max_sq,
                       beta=stats.beta, gamma=stats.gamma, alpha=alpha, C=C)


def weighted_average(values, probabilities) -> float:
    """Probability-weighted mean over atoms (a reporting convenience)."""
    vals = np.asarray(values, dtype=float)
    probs = np.asarray(probabilities, dtype=float)
    return float(np.sum(vals * probs) / np.sum(probs))
