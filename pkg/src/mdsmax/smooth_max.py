"""Log-sum-exp smooth maximum, its directional derivatives, and the C^3 step.

All exponential sums are evaluated after subtracting the row maximum, so
nothing here overflows for finite input.  Functions accept a single vector
of length ``d`` or a stack of vectors with the coordinate axis last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InputError

EXPLICIT_COEFFICIENT_CAP = 8


@dataclass(frozen=True)
class SmoothMaxParams:
    """Smoothing scale ``kappa`` of G(x) = log(sum exp(kappa * x)) / kappa."""

    kappa: float

    def __post_init__(self):
        k = float(self.kappa)
        if not math.isfinite(k) or k <= 0.0:
            raise InputError(f"kappa must be positive and finite, got {self.kappa!r}")
        object.__setattr__(self, "kappa", k)


def _as_params(params) -> SmoothMaxParams:
    if isinstance(params, SmoothMaxParams):
        return params
    return SmoothMaxParams(params)


def _check_vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        raise InputError(f"{name} must be a vector, got a scalar")
    if arr.shape[-1] == 0:
        raise InputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


def _check_same_shape(ref: np.ndarray, *others: tuple[str, object]) -> list[np.ndarray]:
    out = []
    for name, val in others:
        arr = _check_vector(val, name)
        if arr.shape[-1] != ref.shape[-1]:
            raise InputError(
                f"dimension mismatch: {name} has length {arr.shape[-1]}, expected {ref.shape[-1]}"
            )
        out.append(arr)
    return out


def hard_max(x) -> np.ndarray | float:
    """M(x) = max_j x_j along the last axis."""
    arr = _check_vector(x)
    return arr.max(axis=-1)[()]


def smooth_max(x, params) -> np.ndarray | float:
    """Evaluate kappa^{-1} log sum_j exp(kappa x_j) with a max shift.

    The result satisfies ``M(x) <= G(x) <= M(x) + log(d) / kappa``.
    """
    p = _as_params(params)
    arr = _check_vector(x)
    m = arr.max(axis=-1, keepdims=True)
    s = np.exp(p.kappa * (arr - m)).sum(axis=-1)
    return (m[..., 0] + np.log(s) / p.kappa)[()]


def softmax_weights(v, params) -> np.ndarray:
    """Weights exp(kappa v_i) / p(v); each row sums to one."""
    p = _as_params(params)
    arr = _check_vector(v, "v")
    e = np.exp(p.kappa * (arr - arr.max(axis=-1, keepdims=True)))
    return e / e.sum(axis=-1, keepdims=True)


def _wmean(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.sum(w * u, axis=-1)


def directional_d1(v, x, params):
    """G'(v)(x) = E_w[x]."""
    varr = _check_vector(v, "v")
    (xarr,) = _check_same_shape(varr, ("x", x))
    w = softmax_weights(varr, params)
    return _wmean(w, xarr)[()]


def directional_d2(v, x, y, params):
    """G''(v)(x, y) = kappa * (E_w[xy] - E_w[x] E_w[y])."""
    p = _as_params(params)
    varr = _check_vector(v, "v")
    xarr, yarr = _check_same_shape(varr, ("x", x), ("y", y))
    w = softmax_weights(varr, p)
    ex, ey = _wmean(w, xarr), _wmean(w, yarr)
    return (p.kappa * (_wmean(w, xarr * yarr) - ex * ey))[()]


def directional_d3(v, x, y, z, params):
    """Third directional derivative G'''(v)(x, y, z) in weighted-moment form.

    kappa^2 * (E[xyz] - E[x]E[yz] - E[y]E[xz] - E[z]E[xy] + 2E[x]E[y]E[z]),
    all expectations under the softmax weights of ``v``.
    """
    p = _as_params(params)
    varr = _check_vector(v, "v")
    xarr, yarr, zarr = _check_same_shape(varr, ("x", x), ("y", y), ("z", z))
    w = softmax_weights(varr, p)
    ex, ey, ez = _wmean(w, xarr), _wmean(w, yarr), _wmean(w, zarr)
    exy = _wmean(w, xarr * yarr)
    exz = _wmean(w, xarr * zarr)
    eyz = _wmean(w, yarr * zarr)
    exyz = _wmean(w, xarr * yarr * zarr)
    val = exyz - ex * eyz - ey * exz - ez * exy + 2.0 * ex * ey * ez
    return (p.kappa**2 * val)[()]


@dataclass(frozen=True)
class ExplicitCoefficients:
    """Coefficient tables b_ij(v), c_ijk(v) in max-shifted coordinates.

    ``e`` holds exp(kappa (v_i - max v)) and ``p`` is its sum, so that
    G'' = kappa p^-2 sum e_i b_ij x_i y_j and
    G''' = kappa^2 p^-3 sum e_i c_ijk x_i y_j z_k.
    """

    e: np.ndarray
    p: float
    b: np.ndarray
    c: np.ndarray

    def weighted_b_sum(self) -> float:
        return float(np.sum(self.e[:, None] * np.abs(self.b)))

    def weighted_c_sum(self) -> float:
        return float(np.sum(self.e[:, None, None] * np.abs(self.c)))

    def d2(self, kappa: float, x, y) -> float:
        return float(kappa / self.p**2 * np.einsum("i,ij,i,j->", self.e, self.b, x, y))

    def d3(self, kappa: float, x, y, z) -> float:
        return float(
            kappa**2 / self.p**3 * np.einsum("i,ijk,i,j,k->", self.e, self.c, x, y, z)
        )


def explicit_coefficients(v, params, cap: int = EXPLICIT_COEFFICIENT_CAP) -> ExplicitCoefficients:
    """Build the b and c tables case by case (O(d^3), small d only).

    b_ii = p - e_i, b_ij = -e_j (i != j);
    c_ijk = b_ik (p - 2 e_j) if i == j or j == k,
            b_ij (p - 2 e_k) if i == k != j,
            2 b_ij b_ik      otherwise.
    """
    pr = _as_params(params)
    varr = _check_vector(v, "v")
    if varr.ndim != 1:
        raise InputError("explicit_coefficients takes a single vector")
    d = varr.shape[0]
    if d > cap:
        raise InputError(f"d = {d} exceeds the explicit-coefficient cap of {cap}")
    e = np.exp(pr.kappa * (varr - varr.max()))
    p = float(e.sum())
    b = np.where(np.eye(d, dtype=bool), p - e[:, None], -e[None, :])
    c = np.empty((d, d, d))
    for i in range(d):
        for j in range(d):
            for k in range(d):
                if i == j or j == k:
                    c[i, j, k] = b[i, k] * (p - 2.0 * e[j])
                elif i == k:
                    c[i, j, k] = b[i, j] * (p - 2.0 * e[k])
                else:
                    c[i, j, k] = 2.0 * b[i, j] * b[i, k]
    return ExplicitCoefficients(e=e, p=p, b=b, c=c)


# Degree-7 smoothstep S(t) = 35t^4 - 84t^5 + 70t^6 - 20t^7; the step is 1 - S(x/eps).
_SMOOTHSTEP = Polynomial([0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0])
_SMOOTHSTEP_DERIVS = tuple(_SMOOTHSTEP.deriv(j) for j in range(4))


def _max_abs_on_unit_interval(q: Polynomial) -> float:
    crit = q.deriv().roots()
    crit = crit[np.abs(crit.imag) < 1e-12].real
    pts = np.concatenate([[0.0, 1.0], crit[(crit >= 0.0) & (crit <= 1.0)]])
    return float(np.max(np.abs(q(pts))))


# max_{t in [0,1]} |S^{(j)}(t)| for j = 1, 2, 3: 35/16, 84/(5 sqrt 5), 105/2.
SMOOTHSTEP_DERIVATIVE_BOUNDS = tuple(
    _max_abs_on_unit_interval(_SMOOTHSTEP_DERIVS[j]) for j in (1, 2, 3)
)
SMOOTHSTEP_D = max(SMOOTHSTEP_DERIVATIVE_BOUNDS)


@dataclass(frozen=True)
class SmoothStepSpec:
    """Transition width of the step f: 1 on (-inf, 0], 0 on [eps, inf)."""

    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not math.isfinite(eps) or eps <= 0.0:
            raise InputError(f"epsilon must be positive and finite, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)

    @property
    def derivative_bound(self) -> float:
        return SMOOTHSTEP_D


def _as_step(spec) -> SmoothStepSpec:
    if isinstance(spec, SmoothStepSpec):
        return spec
    return SmoothStepSpec(spec)


def smooth_step(x, spec, order: int = 0):
    """Nonincreasing C^3 step and its derivatives up to order 3.

    |f^(j)(x)| <= D * eps^-j on (0, eps) and f^(j) = 0 elsewhere, with
    D = ``SMOOTHSTEP_D`` = 52.5.
    """
    if order not in (0, 1, 2, 3):
        raise InputError(f"order must be 0, 1, 2 or 3, got {order!r}")
    s = _as_step(spec)
    x = np.asarray(x, dtype=float)
    t = np.clip(x / s.epsilon, 0.0, 1.0)
    inside = (x > 0.0) & (x < s.epsilon)
    if order == 0:
        out = np.where(x <= 0.0, 1.0, np.where(x >= s.epsilon, 0.0, 1.0 - _SMOOTHSTEP(t)))
    else:
        vals = -_SMOOTHSTEP_DERIVS[order](t) / s.epsilon**order
        out = np.where(inside, vals, 0.0)
    return out[()]


def smoothed_indicator(s, r, params, spec):
    """g_r(s) = f(G(s) - r), a smooth surrogate for 1{M(s) <= r}."""
    return smooth_step(smooth_max(s, params) - np.asarray(r, dtype=float), spec, 0)
