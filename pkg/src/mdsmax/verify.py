"""Property suites run by the ``verify`` and ``selftest`` commands.

Each suite returns a :class:`SuiteResult` carrying the worst-case margin:
the smallest slack (bound minus observed) over all checked instances.
Negative margin means failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bounds, gaussian, martingale
from .errors import InputError
from .smooth_max import (
    SmoothMaxParams,
    directional_d1,
    directional_d2,
    directional_d3,
    explicit_coefficients,
    smooth_max,
)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class VerifySettings:
    seed: int = 20240601
    scale: float = 1.0
    kappas: tuple[float, ...] = (0.1, 1.0, 10.0, 100.0)

    def __post_init__(self):
        for k in self.kappas:
            if not (isinstance(k, (int, float)) and math.isfinite(k) and k > 0):
                raise InputError(f"verify.kappas entries must be positive, got {k!r}")
        if not self.scale > 0:
            raise InputError("verify.scale must be positive")

    def count(self, base: int, floor: int = 10) -> int:
        return max(floor, int(base * self.scale))


def suite_sandwich(cfg: VerifySettings) -> SuiteResult:
    rng = np.random.default_rng([cfg.seed, 1])
    worst = math.inf
    for _ in range(cfg.count(10_000)):
        d = int(rng.integers(1, 1001))
        kappa = float(rng.choice(cfg.kappas))
        x = rng.normal(scale=rng.choice([0.01, 1.0, 100.0]), size=d)
        gap = smooth_max(x, SmoothMaxParams(kappa)) - x.max()
        worst = min(worst, gap, math.log(d) / kappa + 1e-12 - gap)
    return SuiteResult("sandwich", worst >= 0, worst)


def suite_derivatives(cfg: VerifySettings) -> SuiteResult:
    rng = np.random.default_rng([cfg.seed, 2])
    worst = math.inf
    for _ in range(cfg.count(1000)):
        d = int(rng.integers(1, 51))
        kappa = float(rng.choice(cfg.kappas))
        p = SmoothMaxParams(kappa)
        v = rng.normal(scale=2.0, size=d)
        x, y, z = rng.uniform(-1, 1, size=(3, d))
        nx, ny, nz = (np.abs(a).max() for a in (x, y, z))
        worst = min(
            worst,
            nx - abs(directional_d1(v, x, p)),
            2 * kappa * nx * ny - abs(directional_d2(v, x, y, p)),
            6 * kappa**2 * nx * ny * nz - abs(directional_d3(v, x, y, z, p)),
        )
    return SuiteResult("derivatives", worst >= -1e-12, worst)


def suite_coefficients(cfg: VerifySettings) -> SuiteResult:
    rng = np.random.default_rng([cfg.seed, 3])
    worst = math.inf
    for _ in range(cfg.count(1000)):
        d = int(rng.integers(1, 9))
        kappa = float(rng.choice(cfg.kappas))
        co = explicit_coefficients(rng.normal(scale=3.0, size=d), SmoothMaxParams(kappa))
        worst = min(worst,
                    1 - co.weighted_b_sum() / (2 * co.p**2),
                    1 - co.weighted_c_sum() / (6 * co.p**3))
    return SuiteResult("coefficients", worst >= -1e-12, worst, "relative slack")


def suite_moment_bound(cfg: VerifySettings) -> SuiteResult:
    reps = cfg.count(100_000, floor=2000)
    worst = math.inf
    idx = 0
    for p in (1, 10, 100):
        for r in (2, 3):
            for s in (0.5, 1.0, 2.0):
                idx += 1
                est, se = gaussian.estimate_max_moment(
                    np.eye(p) * s**2, r, gaussian.SeedStream(cfg.seed, (4, idx)), reps)
                bound = gaussian.max_moment_bound(r, s, p)
                worst = min(worst, (bound - (est + 3 * se)) / bound)
    return SuiteResult("moment_bound", worst >= 0, worst, "relative slack")


def suite_anti_concentration(cfg: VerifySettings) -> SuiteResult:
    reps = cfg.count(100_000, floor=2000)
    ratios = []
    idx = 0
    for eps in (0.01, 0.1):
        row = []
        for d in (2, 10, 100):
            idx += 1
            cov = np.full((d, d), 0.5) + 0.5 * np.eye(d)
            est, _ = gaussian.estimate_levy_concentration(
                cov, eps, gaussian.SeedStream(cfg.seed, (5, idx)), reps)
            row.append(est / gaussian.anti_concentration_value(eps, 1.0, 1.0, d, 1.0))
        ratios.append(row[-1] / row[0])
        if not all(np.isfinite(row)):
            return SuiteResult("anti_concentration", False, -math.inf, "non-finite constant")
    margin = 3.0 - max(ratios)
    return SuiteResult("anti_concentration", margin >= 0, margin,
                       "3 minus max growth ratio d=100 vs d=2")


def _catalog(n: int = 16) -> list[martingale.ScenarioSpec]:
    F0Atom = martingale.F0Atom
    return [
        martingale.make_scenario("iid_bounded", 1, n),
        martingale.make_scenario("iid_bounded", 3, n, {"A": [[1, 0.5, 0], [0, 1, 0], [0.2, 0, 2]]}),
        martingale.make_scenario(
            "cond_indep_gaussian_mixture", 2, n, {"R": 2.0},
            [F0Atom("lo", 0.5, {"cov": [[1, 0.3], [0.3, 1]]}),
             F0Atom("hi", 0.5, {"cov": [[4, 0], [0, 1]]})]),
        martingale.make_scenario("cond_indep_gaussian_mixture", 4, n),
        martingale.make_scenario("markov_volatility", 3, n, {"a": 0.8}),
        martingale.make_scenario("markov_volatility", 2, n, {"a": 0.0}),
    ]


def suite_martingale(cfg: VerifySettings) -> SuiteResult:
    """Zero conditional mean and declared step covariance, checked in 4 SE units."""
    reps = cfg.count(10_000, floor=2000)
    worst = math.inf
    for k, sc in enumerate(_catalog()):
        for j, atom in enumerate(sc.atoms):
            gen = gaussian.SeedStream(cfg.seed, (6, k, j)).generator()
            # advance one shared history to a random X_{i-1}, then branch
            prev = np.zeros((1, sc.d))
            for _ in range(3):
                prev, _ = martingale.draw_step(sc, atom, gen, prev)
            x, _ = martingale.draw_step(sc, atom, gen, np.repeat(prev, reps, axis=0))
            se = x.std(axis=0, ddof=1) / math.sqrt(reps)
            z = np.abs(x.mean(axis=0)) / np.where(se > 0, se, 1.0)
            worst = min(worst, 4.0 - float(z.max()))
            _, steps = martingale.sample_x(sc, atom, gen, reps, keep_steps=True)
            xi = steps[:, -1]
            outer = xi[:, :, None] * xi[:, None, :]
            sig = martingale.step_covariance(sc, atom).entries
            se = outer.std(axis=0, ddof=1) / math.sqrt(reps)
            dev = np.abs(outer.mean(axis=0) - sig)
            z = np.where(se > 0, dev / np.where(se > 0, se, 1.0), np.where(dev > 1e-12, np.inf, 0))
            worst = min(worst, 4.0 - float(z.max()))
    return SuiteResult("martingale", worst >= 0, worst, "4 minus worst |z|")


def suite_gamma_floor(cfg: VerifySettings) -> SuiteResult:
    worst = math.inf
    for k, sc in enumerate(_catalog()):
        for j, atom in enumerate(sc.atoms):
            st = martingale.compute_atom_statistics(
                sc, atom, gaussian.SeedStream(cfg.seed, (7, k, j)), 2000)
            _, _, v_max_sq, _ = bounds.variance_stats(st.sigma_list)
            floor = bounds.gamma_floor(sc.d, sc.n, v_max_sq)
            ok = bounds.gamma_floor_check(st.gamma, sc.d, sc.n, v_max_sq)
            worst = min(worst, st.gamma - floor)
            if not ok:
                return SuiteResult("gamma_floor", False, worst)
    return SuiteResult("gamma_floor", True, worst)


SUITES: dict[str, Callable[[VerifySettings], SuiteResult]] = {
    "sandwich": suite_sandwich,
    "derivatives": suite_derivatives,
    "coefficients": suite_coefficients,
    "moment_bound": suite_moment_bound,
    "anti_concentration": suite_anti_concentration,
    "martingale": suite_martingale,
    "gamma_floor": suite_gamma_floor,
}


def run_suites(cfg: VerifySettings, only: list[str] | None = None) -> list[SuiteResult]:
    names = list(SUITES) if not only else list(only)
    for name in names:
        if name not in SUITES:
            raise InputError(f"unknown suite {name!r}; available: {', '.join(SUITES)}")
    return [SUITES[name](cfg) for name in names]
