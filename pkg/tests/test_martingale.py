import itertools
import math

import numpy as np
import pytest

from mdsmax import InputError
from mdsmax.bounds import gamma_floor_check, variance_stats
from mdsmax.gaussian import SeedStream
from mdsmax.harness import dkw_halfwidth, two_sample_distance
from mdsmax.martingale import (
    F0Atom,
    MIN_MC_BUDGET,
    ScenarioSpec,
    compute_atom_statistics,
    draw_step,
    make_scenario,
    sample_coupled_path,
    sample_x,
    sample_y,
    sigma_list,
    step_covariance,
)
from mdsmax.verify import _catalog


@pytest.fixture(scope="module")
def catalog():
    return _catalog()


class TestMakeScenario:
    def test_iid_sigma(self):
        sc = make_scenario("iid_bounded", 2, 4)
        for cov in sigma_list(sc, "w0"):
            np.testing.assert_array_equal(cov.entries, np.eye(2) / 4)

    @pytest.mark.parametrize("a", [1.0, -1.0, 2.5])
    def test_rejects_large_feedback(self, a):
        with pytest.raises(InputError, match=r"\|a\| < 1"):
            make_scenario("markov_volatility", 2, 4, {"a": a})

    def test_rejects_unknown_kind_and_param(self):
        with pytest.raises(InputError):
            make_scenario("garch", 2, 4)
        with pytest.raises(InputError, match="'b'"):
            make_scenario("iid_bounded", 2, 4, {"b": 1})

    def test_atom_probabilities_must_sum_to_one(self):
        with pytest.raises(InputError, match="sum"):
            make_scenario("iid_bounded", 1, 2, atoms=[F0Atom("a", 0.5), F0Atom("b", 0.4)])

    def test_roundtrip_dict(self, catalog):
        for sc in catalog:
            again = ScenarioSpec.from_dict(sc.to_dict())
            assert again.to_dict() == sc.to_dict()

    def test_foreign_atom_rejected(self):
        sc = make_scenario("iid_bounded", 1, 2)
        with pytest.raises(InputError):
            sigma_list(sc, F0Atom("other", 1.0))


class TestMartingaleProperty:
    def test_conditional_mean_zero(self, catalog):
        reps = 10_000
        for k, sc in enumerate(catalog):
            for atom in sc.atoms:
                gen = SeedStream(100, k).generator()
                prev = np.zeros((1, sc.d))
                for _ in range(4):
                    prev, _ = draw_step(sc, atom, gen, prev)
                x, _ = draw_step(sc, atom, gen, np.repeat(prev, reps, axis=0))
                se = x.std(axis=0, ddof=1) / math.sqrt(reps)
                assert np.all(np.abs(x.mean(axis=0)) <= 4 * se + 1e-15)

    def test_step_covariance_matches_declared(self, catalog):
        reps = 20_000
        for k, sc in enumerate(catalog):
            for atom in sc.atoms:
                _, steps = sample_x(sc, atom, SeedStream(101, k).generator(), reps, keep_steps=True)
                sig = step_covariance(sc, atom).entries
                for i in (0, sc.n // 2, sc.n - 1):
                    xi = steps[:, i]
                    outer = xi[:, :, None] * xi[:, None, :]
                    se = outer.std(axis=0, ddof=1) / math.sqrt(reps)
                    assert np.all(np.abs(outer.mean(axis=0) - sig) <= 4 * se + 1e-15)

    def test_truncated_steps_are_bounded(self):
        sc = make_scenario("cond_indep_gaussian_mixture", 1, 4, {"R": 1.5})
        x, _ = draw_step(sc, "w0", SeedStream(3).generator(), np.zeros((5000, 1)))
        scale = sc._trunc_scale
        assert np.all(np.abs(x) <= 1.5 * scale / 2 + 1e-12)


class TestCoupledPath:
    def test_bookkeeping(self, catalog):
        for k, sc in enumerate(catalog):
            path = sample_coupled_path(sc, sc.atoms[0], SeedStream(5, k))
            np.testing.assert_array_equal(path.s, path.x_steps.sum(axis=0))
            np.testing.assert_array_equal(path.t, path.y_steps.sum(axis=0))
            assert path.max_s == path.s.max() and path.max_t == path.t.max()
            assert path.x_steps.shape == (sc.n, sc.d)

    def test_exact_gaussian_scenario_has_matching_laws(self):
        sc = make_scenario("cond_indep_gaussian_mixture", 3, 5,
                           {"cov": [[1, 0.4, 0], [0.4, 2, 0.1], [0, 0.1, 1]]})
        reps = 5000
        s = sample_x(sc, "w0", SeedStream(7, 0).generator(), reps)
        t = sample_y(sc, "w0", SeedStream(7, 1).generator(), reps)
        dist = two_sample_distance(s.max(axis=1), t.max(axis=1))
        assert dist <= 2 * dkw_halfwidth(reps, 0.01)

    def test_iid_unit_variance(self):
        sc = make_scenario("iid_bounded", 1, 6)
        s = sample_x(sc, "w0", SeedStream(8).generator(), 100_000)[:, 0]
        se = (s**2).std(ddof=1) / math.sqrt(s.size)
        assert abs((s**2).mean() - 1.0) <= 3 * se

    def test_t_covariance_and_normality(self, catalog):
        reps = 20_000
        from scipy.stats import norm
        for k, sc in enumerate(catalog):
            atom = sc.atoms[-1]
            t = sample_y(sc, atom, SeedStream(9, k).generator(), reps)
            V, *_ = variance_stats(sigma_list(sc, atom))
            outer = t[:, :, None] * t[:, None, :]
            se = outer.std(axis=0, ddof=1) / math.sqrt(reps)
            assert np.all(np.abs(outer.mean(axis=0) - V.entries) <= 4 * se)
            z = np.sort(t[:, 0] / math.sqrt(V.entries[0, 0]))
            ecdf = np.arange(1, reps + 1) / reps
            assert np.max(np.abs(ecdf - norm.cdf(z))) <= dkw_halfwidth(reps, 0.01) + 1 / reps

    def test_degenerate_volatility_matches_iid(self):
        reps = 5000
        a = make_scenario("iid_bounded", 3, 16)
        c = make_scenario("markov_volatility", 3, 16, {"a": 0.0})
        ms = sample_x(a, "w0", SeedStream(11, 0).generator(), reps).max(axis=1)
        mc = sample_x(c, "w0", SeedStream(11, 1).generator(), reps).max(axis=1)
        assert two_sample_distance(ms, mc) <= 2 * dkw_halfwidth(reps, 0.01)


class TestAtomStatistics:
    def test_iid_beta_zero_and_analytic(self):
        st = compute_atom_statistics(make_scenario("iid_bounded", 3, 8), "w0", SeedStream(1))
        assert st.beta == 0.0
        assert st.flags == {"sigma": "analytic", "third_moments": "analytic", "beta": "analytic"}

    @pytest.mark.parametrize("n", [1, 4, 100])
    def test_iid_d1_gamma(self, n):
        # enumerate Rademacher signs: |X_i|^3 = n^{-3/2} on every pattern
        third = np.mean([abs(s / math.sqrt(n)) ** 3 for s in (-1, 1)])
        st = compute_atom_statistics(make_scenario("iid_bounded", 1, n), "w0", SeedStream(1))
        np.testing.assert_allclose(st.third_moments, third, rtol=1e-14)
        assert st.gamma == pytest.approx(2 / math.sqrt(n), rel=1e-14)

    def test_iid_third_moment_by_enumeration(self):
        A = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 0.5], [0.3, 0.0, 1.0]])
        n = 9
        sc = make_scenario("iid_bounded", 3, n, {"A": A})
        brute = np.mean([np.abs(A @ np.array(s)).max() ** 3
                         for s in itertools.product((-1, 1), repeat=3)]) / n**1.5
        st = compute_atom_statistics(sc, "w0", SeedStream(1))
        assert st.third_moments[0] == pytest.approx(brute, rel=1e-14)

    def test_iid_above_enumeration_cap_uses_mc(self):
        sc = make_scenario("iid_bounded", 13, 4)
        with pytest.raises(InputError, match=str(MIN_MC_BUDGET)):
            compute_atom_statistics(sc, "w0", SeedStream(1), mc_budget=10)
        st = compute_atom_statistics(sc, "w0", SeedStream(1), mc_budget=5000)
        assert st.flags["third_moments"] == "mc"
        assert abs(st.third_moments[0] - 4**-1.5) <= 1e-12  # identity A: max |xi_j| = 1 surely

    def test_gaussian_d1_analytic_third_moment(self):
        sc = make_scenario("cond_indep_gaussian_mixture", 1, 4, {"cov": [[4.0]]})
        st = compute_atom_statistics(sc, "w0", SeedStream(1))
        assert st.third_moments[0] == pytest.approx(2 * math.sqrt(2 / math.pi) * 8 / 8)
        assert st.beta == 0.0

    def test_gaussian_mc_third_moment(self):
        sc = make_scenario("cond_indep_gaussian_mixture", 1, 4, {"cov": [[1.0]], "R": 50.0})
        st = compute_atom_statistics(sc, "w0", SeedStream(2), mc_budget=100_000)
        exact = 2 * math.sqrt(2 / math.pi) / 8
        assert abs(st.third_moments[0] - exact) <= 3 * st.third_moments_se[0]

    def test_markov_zero_feedback(self):
        sc = make_scenario("markov_volatility", 2, 16, {"a": 0.0})
        st = compute_atom_statistics(sc, "w0", SeedStream(3), mc_budget=2000)
        assert st.beta <= 3 * st.beta_se
        assert st.beta == 0.0

    def test_markov_requires_budget(self):
        sc = make_scenario("markov_volatility", 2, 16)
        with pytest.raises(InputError, match="minimum 1000"):
            compute_atom_statistics(sc, "w0", SeedStream(3), mc_budget=999)

    def test_markov_beta_positive_and_sigma_consistent(self):
        sc = make_scenario("markov_volatility", 2, 32, {"a": 0.9, "u": [3.0, -2.0]})
        st = compute_atom_statistics(sc, "w0", SeedStream(4), mc_budget=20_000)
        assert st.beta > 4 * st.beta_se
        assert st.flags["beta"] == "mc"
        # nested-MC estimate of Sigma_i against the symmetry closed form B B^T / n
        for est, cov in zip(st.sigma_mc, st.sigma_list):
            assert np.all(np.abs(est - cov.entries) <= 5 * 0.9 / math.sqrt(20_000) * np.abs(cov.entries) + 1e-15)

    def test_markov_beta_against_direct_simulation(self):
        # independent estimate of sum_i E|h_i - 1| * ||B B^T / n||_{e,1}
        sc = make_scenario("markov_volatility", 2, 8, {"a": 0.7, "u": [2.0, 1.0]})
        st = compute_atom_statistics(sc, "w0", SeedStream(5), mc_budget=20_000)
        rng = np.random.default_rng(123)
        reps = 20_000
        prev = np.zeros((reps, 2))
        total = np.zeros(reps)
        for _ in range(8):
            h = 1 + 0.7 * np.tanh(prev @ np.array([2.0, 1.0]))
            total += np.abs(h - 1) * 2 / 8
            prev = np.sqrt(h)[:, None] * rng.choice([-1.0, 1.0], size=(reps, 2)) / math.sqrt(8)
        se = math.hypot(st.beta_se, total.std(ddof=1) / math.sqrt(reps))
        assert abs(st.beta - total.mean()) <= 4 * se

    def test_gamma_floor_and_definition(self, catalog):
        from mdsmax.gaussian import lnp
        for k, sc in enumerate(catalog):
            for atom in sc.atoms:
                st = compute_atom_statistics(sc, atom, SeedStream(6, k), mc_budget=2000)
                assert st.gamma >= np.sum((st.sigma_bar_sq * lnp(sc.d)) ** 1.5)
                np.testing.assert_allclose(st.sigma_bar_sq, [c.diag.max() for c in st.sigma_list])
                _, _, v_max_sq, _ = variance_stats(st.sigma_list)
                assert gamma_floor_check(st.gamma, sc.d, sc.n, v_max_sq)
