"""Monte Carlo estimation of the conditional Kolmogorov distance and sweeps.

Replications are drawn in fixed-size blocks, each from its own child
stream, so results are bit-identical whatever the thread count.
"""

from __future__ import annotations

import json
import logging
import math
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .errors import InputError, PreconditionError
from .gaussian import SeedStream, sample_gaussian_with
from .martingale import (
    AtomStatistics,
    MIN_MC_BUDGET,
    ScenarioSpec,
    compute_atom_statistics,
    make_scenario,
    sample_x,
    sample_y,
    sigma_list,
)
from .smooth_max import SmoothMaxParams, SmoothStepSpec, smooth_max, smooth_step

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "schema_version", "command", "kind", "d", "n", "atom", "atom_prob",
    "v_min", "v_max", "tau", "beta", "beta_se", "gamma", "gamma_se",
    "gamma_floor_ok", "alpha", "C", "bound_theorem1", "bound_corollary",
    "bound_d1", "epsilon_opt", "kappa", "dist_emp", "dist_band", "implied_C",
    "reps_x", "reps_y", "base_seed", "runtime_s", "error",
)
MIN_REPLICATIONS = 1000
BLOCK_SIZE = 1000
MODES = ("direct", "paths")


def dkw_halfwidth(replications: int, delta: float) -> float:
    """sqrt(log(2/delta) / (2 N)), the DKW band for one empirical cdf."""
    if replications < 1:
        raise InputError(f"replications must be at least 1, got {replications}")
    if not 0 < delta < 1:
        raise InputError(f"delta must lie in (0, 1), got {delta!r}")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * replications))


def two_sample_distance(x, y) -> float:
    """Exact sup_r |F_x(r) - F_y(r)| for two empirical cdfs."""
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    ys = np.sort(np.asarray(y, dtype=float).ravel())
    if xs.size == 0 or ys.size == 0:
        raise InputError("both samples must be nonempty")
    z = np.concatenate([xs, ys])
    fx = np.searchsorted(xs, z, side="right") / xs.size
    fy = np.searchsorted(ys, z, side="right") / ys.size
    return float(np.max(np.abs(fx - fy)))


@dataclass(frozen=True)
class KolmogorovEstimate:
    atom: str
    distance: float
    band_halfwidth: float
    replications_x: int
    replications_y: int


def _blocks(total: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK_SIZE, total - b * BLOCK_SIZE))
            for b in range(math.ceil(total / BLOCK_SIZE))]


def _map_blocks(fn, total: int, threads: int) -> np.ndarray:
    jobs = _blocks(total)
    if threads <= 1 or len(jobs) == 1:
        parts = [fn(b, size) for b, size in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    return np.concatenate(parts, axis=0)


def draw_sums(scenario: ScenarioSpec, atom, stream: SeedStream, reps_x: int,
              reps_y: int, mode: str = "direct", threads: int = 1):
    """Draw S (scenario law) and T (Gaussian analogue) vectors given the atom.

    ``mode="direct"`` samples T from N(0, V); ``mode="paths"`` sums independent
    Gaussian refreshes Y_i ~ N(0, Sigma_i).  Both give the same law.
    """
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}, got {mode!r}")
    sig = sigma_list(scenario, atom)
    V, _, _, _ = bounds.variance_stats(sig)
    s = _map_blocks(lambda b, k: sample_x(scenario, atom, stream.child(0, b).generator(), k),
                    reps_x, threads)
    if mode == "direct":
        t = _map_blocks(lambda b, k: sample_gaussian_with(V, stream.child(2, b).generator(), k),
                        reps_y, threads)
    else:
        t = _map_blocks(lambda b, k: sample_y(scenario, atom, stream.child(1, b).generator(), k),
                        reps_y, threads)
    return s, t


def _check_reps(reps_x: int, reps_y: int) -> None:
    for name, r in (("reps_x", reps_x), ("reps_y", reps_y)):
        if r < MIN_REPLICATIONS:
            raise InputError(f"{name} = {r} is below the minimum of {MIN_REPLICATIONS} replications")


def estimate_kolmogorov(scenario: ScenarioSpec, atom, stream: SeedStream, reps_x: int,
                        reps_y: int, mode: str = "direct", delta: float = 0.01,
                        threads: int = 1) -> KolmogorovEstimate:
    """Two-sample estimate of the Kolmogorov distance between M(S) and M(T) on an atom."""
    _check_reps(reps_x, reps_y)
    atom_label = atom if isinstance(atom, str) else atom.label
    s, t = draw_sums(scenario, atom, stream, reps_x, reps_y, mode, threads)
    dist = two_sample_distance(s.max(axis=1), t.max(axis=1))
    band = dkw_halfwidth(reps_x, delta) + dkw_halfwidth(reps_y, delta)
    return KolmogorovEstimate(atom_label, dist, band, reps_x, reps_y)


def smoothed_distance(s_vectors, t_vectors, epsilon: float, kappa: float,
                      delta: float | None = None) -> float:
    """sup over an r-grid of |mean g_r(S) - mean g_r(T)|, g_r = f(G_kappa(.) - r).

    The grid spans the pooled range of G_kappa padded by eps + delta with
    step eps / 4.  A diagnostic only; it is not a certified estimate.
    """
    delta = epsilon if delta is None else delta
    params = SmoothMaxParams(kappa)
    step = SmoothStepSpec(epsilon)
    gs = np.sort(np.atleast_1d(smooth_max(s_vectors, params)))
    gt = np.sort(np.atleast_1d(smooth_max(t_vectors, params)))
    lo = min(gs[0], gt[0]) - epsilon - delta
    hi = max(gs[-1], gt[-1]) + epsilon + delta
    count = int(math.ceil((hi - lo) / (epsilon / 4.0))) + 1
    grid = lo + np.arange(count) * (epsilon / 4.0)
    best = 0.0
    for chunk in np.array_split(grid, max(1, count // 256)):
        ms = smooth_step(gs[None, :] - chunk[:, None], step).mean(axis=1)
        mt = smooth_step(gt[None, :] - chunk[:, None], step).mean(axis=1)
        best = max(best, float(np.max(np.abs(ms - mt))))
    return best


def smoothed_distance_diagnostic(scenario: ScenarioSpec, atom, stream: SeedStream,
                                 reps: int, alpha: float = 0.0,
                                 mc_budget: int = MIN_MC_BUDGET, threads: int = 1) -> float:
    """Smoothed cdf-difference diagnostic with (eps, delta, kappa) from the bound."""
    _check_reps(reps, reps)
    stats = compute_atom_statistics(scenario, atom, stream.child(0), mc_budget)
    inputs = bounds.inputs_from_statistics(stats, scenario.d, scenario.n, alpha)
    eps, delta, kappa = bounds.optimal_epsilon(inputs)
    s, t = draw_sums(scenario, atom, stream.child(1), reps, reps, "direct", threads)
    return smoothed_distance(s, t, eps, kappa, delta)


@dataclass
class MCConfig:
    replications: int = 5000
    base_seed: int = 0
    delta: float = 0.01
    mode: str = "direct"
    mc_budget: int = 2000
    threads: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.delta < 1:
            raise InputError("delta must lie in (0, 1)")


@dataclass
class SweepResult:
    command: str
    kind: str
    d: int
    n: int
    atom: str
    atom_prob: float
    base_seed: int
    alpha: float
    C: float = 1.0
    stats: AtomStatistics | None = None
    report: bounds.BoundReport | None = None
    estimate: KolmogorovEstimate | None = None
    runtime_s: float | None = None
    error: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def implied_C(self) -> float | None:
        if self.estimate is None or self.report is None:
            return None
        bound = self.report.headline
        if bound is None or not bound > 0:
            return None
        return self.estimate.distance / bound * self.report.C

    @property
    def key(self) -> tuple:
        return (self.kind, str(self.d), str(self.n), self.atom, str(self.base_seed))

    def to_row(self) -> dict[str, str]:
        row = dict.fromkeys(CSV_COLUMNS, "")
        row.update(schema_version=str(SCHEMA_VERSION), command=self.command, kind=self.kind,
                   d=str(self.d), n=str(self.n), atom=self.atom,
                   atom_prob=_fmt(self.atom_prob), alpha=_fmt(self.alpha), C=_fmt(self.C),
                   base_seed=str(self.base_seed), error=self.error)
        if self.stats is not None:
            row.update(beta=_fmt(self.stats.beta), beta_se=_fmt(self.stats.beta_se),
                       gamma=_fmt(self.stats.gamma), gamma_se=_fmt(self.stats.gamma_se))
        rep = self.report
        if rep is not None:
            row.update(v_min=_fmt(rep.v_min), v_max=_fmt(rep.v_max), tau=_fmt(rep.tau),
                       gamma_floor_ok="true" if rep.gamma_floor_ok else "false",
                       bound_theorem1=_fmt(rep.theorem1_value),
                       bound_corollary=_fmt(rep.corollary_value),
                       bound_d1=_fmt(rep.d1_value), epsilon_opt=_fmt(rep.epsilon_opt),
                       kappa=_fmt(rep.kappa))
        est = self.estimate
        if est is not None:
            row.update(dist_emp=_fmt(est.distance), dist_band=_fmt(est.band_halfwidth),
                       reps_x=str(est.replications_x), reps_y=str(est.replications_y),
                       implied_C=_fmt(self.implied_C))
        if self.runtime_s is not None:
            row["runtime_s"] = f"{self.runtime_s:.3f}"
        return row


def _fmt(val) -> str:
    if val is None:
        return ""
    return repr(float(val))


def point_stream(base_seed: int, scenario: ScenarioSpec) -> SeedStream:
    """Stream keyed by the grid point's content, so reordering a grid keeps its draws."""
    blob = json.dumps(scenario.to_dict(), sort_keys=True, default=str).encode()
    return SeedStream(base_seed, (zlib.crc32(blob),))


def evaluate_point(scenario: ScenarioSpec, alpha: float, mc: MCConfig, command: str = "sweep",
                   simulate: bool = True, C: float = 1.0) -> list[SweepResult]:
    """Statistics, bounds and (optionally) the distance estimate for every atom."""
    out = []
    root = point_stream(mc.base_seed, scenario)
    for idx, atom in enumerate(scenario.atoms):
        res = SweepResult(command, scenario.kind, scenario.d, scenario.n, atom.label,
                          atom.probability, mc.base_seed, alpha, C)
        start = time.perf_counter()
        stream = root.child(idx)
        try:
            res.stats = compute_atom_statistics(scenario, atom, stream.child(0), mc.mc_budget)
            inputs = bounds.inputs_from_statistics(res.stats, scenario.d, scenario.n, alpha, C)
            res.report = bounds.bound_report(inputs)
            if simulate:
                res.estimate = estimate_kolmogorov(
                    scenario, atom, stream.child(1), mc.replications, mc.replications,
                    mc.mode, mc.delta, mc.threads)
        except (InputError, PreconditionError) as exc:
            res.error = str(exc)
        if mc.timing:
            res.runtime_s = time.perf_counter() - start
        out.append(res)
    return out


def run_sweep(grid, alpha: float, mc: MCConfig, progress: bool = False) -> list[SweepResult]:
    """Evaluate every grid point; per-point failures land in the ``error`` field.

    ``grid`` items are ``(kind, d, n, params)`` tuples or ready scenarios.
    """
    results = []
    for i, point in enumerate(grid):
        try:
            scenario = point if isinstance(point, ScenarioSpec) else make_scenario(*point)
        except InputError as exc:
            kind, d, n = point[0], point[1], point[2]
            results.append(SweepResult("sweep", str(kind), d, n, "", 1.0, mc.base_seed, alpha,
                                       error=str(exc)))
            continue
        if progress:
            print(f"[{i + 1}/{len(grid)}] {scenario.kind} d={scenario.d} n={scenario.n}",
                  file=sys.stderr)
        results.extend(evaluate_point(scenario, alpha, mc))
    return results
