"""Martingale-difference scenarios with a finite conditioning partition.

The conditioning sigma-field is a finite set of atoms; every conditional
quantity is computed per atom.  Three scenario kinds are available:

``iid_bounded``
    X_i = A xi_i / sqrt(n) with xi_i i.i.d. Rademacher vectors.  The atoms
    carry no state (the law is the same on every atom).
``cond_indep_gaussian_mixture``
    Given atom w, X_i = L_w U_i / sqrt(n) with L_w L_w^T = cov_w and U_i
    i.i.d. vectors of independent standard normals truncated to [-R, R] and
    rescaled to unit variance.  R = inf gives exact Gaussian increments.
``markov_volatility``
    X_i = sqrt(h_i) B eta_i / sqrt(n), h_i = 1 + a_w tanh(u^T X_{i-1}),
    X_0 = 0, eta_i i.i.d. Rademacher.  Because X_{i-1} is conditionally
    symmetric, E[h_i | F0] = 1 and Sigma_i = B B^T / n exactly; beta and the
    third moments still need Monte Carlo over histories.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InputError
from .gaussian import CovMatrix, SeedStream, lnp, sample_gaussian_with

KINDS = ("iid_bounded", "cond_indep_gaussian_mixture", "markov_volatility")
ENUMERATION_CAP = 12
MIN_MC_BUDGET = 1000
_ATOM_PROB_TOL = 1e-12


@dataclass(frozen=True)
class F0Atom:
    label: str
    probability: float
    state: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"label": self.label, "probability": self.probability}
        if self.state:
            out["state"] = _plain(self.state)
        return out


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """Immutable scenario description; build it with :func:`make_scenario`."""

    kind: str
    d: int
    n: int
    params: dict
    atoms: tuple[F0Atom, ...]

    def atom(self, label: str) -> F0Atom:
        for a in self.atoms:
            if a.label == label:
                return a
        raise InputError(f"scenario has no atom labelled {label!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "n": self.n,
            "params": _plain(self.params),
            "atoms": [a.to_dict() for a in self.atoms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        data = dict(data)
        unknown = set(data) - {"kind", "d", "n", "params", "atoms"}
        if unknown:
            raise InputError(f"unknown scenario key {sorted(unknown)[0]!r}")
        for key in ("kind", "d", "n"):
            if key not in data:
                raise InputError(f"scenario is missing {key!r}")
        atoms = data.get("atoms")
        if atoms is not None:
            parsed = []
            for a in atoms:
                extra = set(a) - {"label", "probability", "state"}
                if extra:
                    raise InputError(f"unknown atom key {sorted(extra)[0]!r}")
                parsed.append(F0Atom(str(a["label"]), float(a["probability"]),
                                     dict(a.get("state", {}))))
            atoms = parsed
        return make_scenario(data["kind"], data["d"], data["n"], data.get("params"), atoms)

    # Derived numeric parameters, cached on first use.

    @cached_property
    def _mix(self) -> np.ndarray:
        key = "A" if self.kind == "iid_bounded" else "B"
        return np.asarray(self.params[key], dtype=float)

    @cached_property
    def _shape_moment(self) -> tuple[float, float, bool]:
        """E||mix @ xi||_inf^3 for Rademacher xi, with its SE and an exactness flag."""
        mix = self._mix
        if self.d <= ENUMERATION_CAP:
            signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.d)))
            vals = np.abs(signs @ mix.T).max(axis=1) ** 3
            return float(vals.mean()), 0.0, True
        return math.nan, math.nan, False

    @cached_property
    def _atom_covs(self) -> dict[str, CovMatrix]:
        return {a.label: CovMatrix(a.state.get("cov", self.params["cov"])) for a in self.atoms}

    def _atom_chol(self, atom: F0Atom) -> CovMatrix:
        return self._atom_covs[atom.label]

    @cached_property
    def _trunc_scale(self) -> float:
        r = float(self.params["R"])
        if math.isinf(r):
            return 1.0
        var = 1.0 - 2.0 * r * math.exp(-0.5 * r * r) / math.sqrt(2 * math.pi) / (2 * ndtr(r) - 1)
        return 1.0 / math.sqrt(var)


def _square(name: str, val, d: int) -> list:
    arr = np.asarray(val, dtype=float)
    if arr.shape != (d, d) or not np.all(np.isfinite(arr)):
        raise InputError(f"{name} must be a finite {d}x{d} matrix")
    return arr.tolist()


def make_scenario(kind: str, d: int, n: int, params: dict | None = None,
                  atoms: list[F0Atom] | None = None) -> ScenarioSpec:
    """Validate parameters and build a scenario.

    ``params`` keys per kind: ``A`` (iid_bounded); ``cov`` and ``R``
    (cond_indep_gaussian_mixture, atoms may override ``cov``); ``a``, ``u``
    and ``B`` (markov_volatility, atoms may override ``a``).  Missing keys
    get identity matrices, ``R = inf``, ``a = 0.5`` and ``u = 1``.
    """
    if kind not in KINDS:
        raise InputError(f"unknown scenario kind {kind!r}; expected one of {KINDS}")
    d, n = int(d), int(n)
    if d < 1 or n < 1:
        raise InputError("d and n must be positive")
    params = dict(params or {})
    eye = np.eye(d).tolist()
    allowed = {"iid_bounded": {"A"},
               "cond_indep_gaussian_mixture": {"cov", "R"},
               "markov_volatility": {"a", "u", "B"}}[kind]
    unknown = set(params) - allowed
    if unknown:
        raise InputError(f"unknown parameter {sorted(unknown)[0]!r} for kind {kind}")

    state_keys: set[str] = set()
    if kind == "iid_bounded":
        params["A"] = _square("A", params.get("A", eye), d)
    elif kind == "cond_indep_gaussian_mixture":
        params["cov"] = _square("cov", params.get("cov", eye), d)
        CovMatrix(params["cov"])
        r = float(params.get("R", math.inf))
        if not r > 0:
            raise InputError(f"truncation radius R must be positive, got {r}")
        params["R"] = r
        state_keys = {"cov"}
    else:
        a = float(params.get("a", 0.5))
        if not abs(a) < 1:
            raise InputError(f"volatility feedback a must satisfy |a| < 1, got {a}")
        params["a"] = a
        u = np.asarray(params.get("u", np.ones(d)), dtype=float)
        if u.shape != (d,) or not np.all(np.isfinite(u)):
            raise InputError(f"u must be a finite vector of length {d}")
        params["u"] = u.tolist()
        params["B"] = _square("B", params.get("B", eye), d)
        state_keys = {"a"}

    if atoms is None:
        atoms = [F0Atom("w0", 1.0)]
    atoms = tuple(atoms)
    if not atoms:
        raise InputError("scenario needs at least one atom")
    labels = [a.label for a in atoms]
    if len(set(labels)) != len(labels):
        raise InputError("atom labels must be unique")
    for a in atoms:
        if not 0 < a.probability <= 1:
            raise InputError(f"atom {a.label!r} probability must be in (0, 1]")
        extra = set(a.state) - state_keys
        if extra:
            raise InputError(f"unknown state key {sorted(extra)[0]!r} for atom {a.label!r}")
        if "cov" in a.state:
            _square("cov", a.state["cov"], d)
            CovMatrix(a.state["cov"])
        if "a" in a.state and not abs(float(a.state["a"])) < 1:
            raise InputError(f"atom {a.label!r}: |a| must be < 1")
    total = math.fsum(a.probability for a in atoms)
    if abs(total - 1.0) > _ATOM_PROB_TOL:
        raise InputError(f"atom probabilities sum to {total!r}, not 1")
    return ScenarioSpec(kind, d, n, params, atoms)


def _atom_of(scenario: ScenarioSpec, atom) -> F0Atom:
    if isinstance(atom, F0Atom):
        if atom not in scenario.atoms:
            raise InputError(f"atom {atom.label!r} does not belong to the scenario")
        return atom
    return scenario.atom(atom)


def _vol_a(scenario: ScenarioSpec, atom: F0Atom) -> float:
    return float(atom.state.get("a", scenario.params["a"]))


def step_covariance(scenario: ScenarioSpec, atom) -> CovMatrix:
    """Sigma_i = E[X_i X_i^T | F0] on the atom; identical for every step i."""
    atom = _atom_of(scenario, atom)
    if scenario.kind == "cond_indep_gaussian_mixture":
        base = np.asarray(atom.state.get("cov", scenario.params["cov"]), dtype=float)
    else:
        mix = scenario._mix
        base = mix @ mix.T
    return CovMatrix(base / scenario.n)


def sigma_list(scenario: ScenarioSpec, atom) -> list[CovMatrix]:
    cov = step_covariance(scenario, atom)
    return [cov] * scenario.n


def _rademacher(gen: np.random.Generator, shape) -> np.ndarray:
    return 2.0 * gen.integers(0, 2, size=shape).astype(float) - 1.0


def draw_step(scenario: ScenarioSpec, atom, gen: np.random.Generator,
              prev: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Draw X_i given X_{i-1} = ``prev`` (rows are independent histories).

    Returns the increments and, for ``markov_volatility``, the volatility h_i.
    """
    atom = _atom_of(scenario, atom)
    count, d = prev.shape
    root_n = math.sqrt(scenario.n)
    if scenario.kind == "iid_bounded":
        return _rademacher(gen, (count, d)) @ scenario._mix.T / root_n, None
    if scenario.kind == "cond_indep_gaussian_mixture":
        r = scenario.params["R"]
        if math.isinf(r):
            u = gen.standard_normal((count, d))
        else:
            lo, hi = ndtr(-r), ndtr(r)
            u = ndtri(lo + (hi - lo) * gen.random((count, d))) * scenario._trunc_scale
        return u @ scenario._atom_chol(atom).factor.T / root_n, None
    u_vec = np.asarray(scenario.params["u"], dtype=float)
    h = 1.0 + _vol_a(scenario, atom) * np.tanh(prev @ u_vec)
    eta = _rademacher(gen, (count, d)) @ scenario._mix.T
    return np.sqrt(h)[:, None] * eta / root_n, h


def conditional_variance(scenario: ScenarioSpec, atom, h: np.ndarray | None) -> np.ndarray:
    """E[X_i X_i^T | F_{i-1}]; depends on the past only through h_i."""
    base = step_covariance(scenario, atom).entries
    if scenario.kind != "markov_volatility":
        return base
    return np.asarray(h)[..., None, None] * base


def sample_x(scenario: ScenarioSpec, atom, gen: np.random.Generator, count: int,
             keep_steps: bool = False):
    """Simulate ``count`` independent paths; return S (and the n steps if asked)."""
    s = np.zeros((count, scenario.d))
    prev = np.zeros((count, scenario.d))
    steps = np.empty((count, scenario.n, scenario.d)) if keep_steps else None
    for i in range(scenario.n):
        prev, _ = draw_step(scenario, atom, gen, prev)
        s += prev
        if keep_steps:
            steps[:, i] = prev
    return (s, steps) if keep_steps else s


def sample_y(scenario: ScenarioSpec, atom, gen: np.random.Generator, count: int,
             keep_steps: bool = False):
    """Independent Gaussian refresh Y_i ~ N(0, Sigma_i); return T (and steps)."""
    sig = sigma_list(scenario, atom)
    t = np.zeros((count, scenario.d))
    steps = np.empty((count, scenario.n, scenario.d)) if keep_steps else None
    for i, cov in enumerate(sig):
        y = sample_gaussian_with(cov, gen, count)
        t += y
        if keep_steps:
            steps[:, i] = y
    return (t, steps) if keep_steps else t


@dataclass(frozen=True)
class CoupledPath:
    x_steps: np.ndarray
    y_steps: np.ndarray
    s: np.ndarray
    t: np.ndarray
    max_s: float
    max_t: float


def sample_coupled_path(scenario: ScenarioSpec, atom, stream: SeedStream) -> CoupledPath:
    """One draw of (X_1..X_n, Y_1..Y_n) given the atom.

    The X path follows the scenario law; the Y path is drawn from separate
    child streams so it is conditionally independent of X given the atom.
    """
    atom = _atom_of(scenario, atom)
    _, xs = sample_x(scenario, atom, stream.child(0).generator(), 1, keep_steps=True)
    _, ys = sample_y(scenario, atom, stream.child(1).generator(), 1, keep_steps=True)
    xs, ys = xs[0], ys[0]
    s, t = xs.sum(axis=0), ys.sum(axis=0)
    return CoupledPath(xs, ys, s, t, float(s.max()), float(t.max()))


def sample_coupled_sums(scenario: ScenarioSpec, atom, stream: SeedStream, count: int):
    """Batch version of :func:`sample_coupled_path` returning only (S, T)."""
    atom = _atom_of(scenario, atom)
    s = sample_x(scenario, atom, stream.child(0).generator(), count)
    t = sample_y(scenario, atom, stream.child(1).generator(), count)
    return s, t


@dataclass(frozen=True)
class AtomStatistics:
    """Per-atom ingredients of the bounds.

    ``flags`` maps field names to ``"analytic"`` or ``"mc"``; MC fields come
    with standard errors (zero for analytic ones).
    """

    atom: str
    sigma_list: list[CovMatrix]
    sigma_bar_sq: np.ndarray
    third_moments: np.ndarray
    beta: float
    gamma: float
    beta_se: float = 0.0
    gamma_se: float = 0.0
    third_moments_se: np.ndarray | None = None
    flags: dict[str, str] = field(default_factory=dict)
    sigma_mc: list[np.ndarray] | None = None

    @property
    def V(self) -> np.ndarray:
        return np.sum([c.entries for c in self.sigma_list], axis=0)


def _require_budget(mc_budget: int | None, what: str) -> int:
    if mc_budget is None or mc_budget < MIN_MC_BUDGET:
        raise InputError(
            f"{what} needs Monte Carlo: mc_budget = {mc_budget} is below the minimum {MIN_MC_BUDGET}"
        )
    return int(mc_budget)


def _shape_third_moment(scenario: ScenarioSpec, gen, mc_budget):
    val, se, exact = scenario._shape_moment
    if exact:
        return val, 0.0, True
    budget = _require_budget(mc_budget, "third moment above the enumeration cap")
    vals = np.abs(_rademacher(gen, (budget, scenario.d)) @ scenario._mix.T).max(axis=1) ** 3
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(budget)), False


def compute_atom_statistics(scenario: ScenarioSpec, atom, stream: SeedStream,
                            mc_budget: int | None = None) -> AtomStatistics:
    """Sigma_i, sigma_bar_i^2, E[||X_i||^3 | F0], beta and Gamma on one atom.

    beta = sum_i E[ ||E[X_i X_i^T | F_{i-1}] - Sigma_i||_{e,1} | F0 ] and
    Gamma = sum_i (E[||X_i||_inf^3 | F0] + (sigma_bar_i^2 lnp d)^{3/2}).
    """
    atom = _atom_of(scenario, atom)
    n, d = scenario.n, scenario.d
    sig = sigma_list(scenario, atom)
    sbar2 = np.array([c.diag.max() for c in sig])
    scale3 = n ** -1.5
    flags = {"sigma": "analytic"}
    beta, beta_se = 0.0, 0.0
    third_se = np.zeros(n)
    sigma_mc = None
    gen = stream.generator()

    if scenario.kind == "iid_bounded":
        m3, se3, exact = _shape_third_moment(scenario, gen, mc_budget)
        third = np.full(n, m3 * scale3)
        third_se[:] = se3 * scale3
        flags["third_moments"] = "analytic" if exact else "mc"
        flags["beta"] = "analytic"
        gamma_se = n * se3 * scale3
    elif scenario.kind == "cond_indep_gaussian_mixture":
        flags["beta"] = "analytic"
        cov = scenario._atom_chol(atom)
        if d == 1 and math.isinf(scenario.params["R"]):
            m3 = 2.0 * math.sqrt(2.0 / math.pi) * cov.entries[0, 0] ** 1.5
            se3, flags["third_moments"] = 0.0, "analytic"
        else:
            budget = _require_budget(mc_budget, "third moment of truncated Gaussian steps")
            x, _ = draw_step(scenario, atom, gen, np.zeros((budget, d)))
            vals = np.abs(x).max(axis=1) ** 3 / scale3
            m3, se3 = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(budget))
            flags["third_moments"] = "mc"
        third = np.full(n, m3 * scale3)
        third_se[:] = se3 * scale3
        gamma_se = n * se3 * scale3
    else:
        budget = _require_budget(mc_budget, "markov_volatility statistics")
        m3, se_shape, _ = _shape_third_moment(scenario, gen, mc_budget)
        base = sig[0].entries
        base_l1 = float(np.abs(base).sum())
        prev = np.zeros((budget, d))
        abs_dev = np.zeros(budget)
        h32_total = np.zeros(budget)
        h_mean = np.empty(n)
        h32_mean = np.empty(n)
        h32_se = np.empty(n)
        for i in range(n):
            prev, h = draw_step(scenario, atom, gen, prev)
            abs_dev += np.abs(h - 1.0)
            h32 = h**1.5
            h32_total += h32
            h_mean[i] = h.mean()
            h32_mean[i] = h32.mean()
            h32_se[i] = h32.std(ddof=1) / math.sqrt(budget)
        per_hist = abs_dev * base_l1
        beta = float(per_hist.mean())
        beta_se = float(per_hist.std(ddof=1) / math.sqrt(budget))
        third = h32_mean * m3 * scale3
        third_se = np.hypot(h32_se * m3, h32_mean * se_shape) * scale3
        gamma_se = float(
            math.hypot(h32_total.std(ddof=1) / math.sqrt(budget) * m3,
                       h32_total.mean() * se_shape) * scale3
        )
        sigma_mc = [hm * base for hm in h_mean]
        flags["third_moments"] = "mc"
        flags["beta"] = "mc"

    gamma = float(np.sum(third) + np.sum((sbar2 * lnp(d)) ** 1.5))
    return AtomStatistics(
        atom=atom.label,
        sigma_list=sig,
        sigma_bar_sq=sbar2,
        third_moments=third,
        beta=beta,
        gamma=gamma,
        beta_se=beta_se,
        gamma_se=float(gamma_se),
        third_moments_se=third_se,
        flags=flags,
        sigma_mc=sigma_mc,
    )
