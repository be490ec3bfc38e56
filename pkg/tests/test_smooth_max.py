import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mdsmax import InputError
from mdsmax.smooth_max import (
    SMOOTHSTEP_D,
    SMOOTHSTEP_DERIVATIVE_BOUNDS,
    SmoothMaxParams,
    SmoothStepSpec,
    directional_d1,
    directional_d2,
    directional_d3,
    explicit_coefficients,
    hard_max,
    smooth_max,
    smooth_step,
    smoothed_indicator,
    softmax_weights,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = st.integers(1, 40).flatmap(lambda d: arrays(np.float64, d, elements=finite))
kappas = st.sampled_from([0.1, 1.0, 10.0, 100.0])


class TestSmoothMax:
    def test_all_equal(self):
        assert smooth_max(np.zeros(4), SmoothMaxParams(1.0)) == pytest.approx(math.log(4), abs=1e-15)

    def test_single_coordinate(self):
        for k in (0.1, 1.0, 37.0):
            assert smooth_max([5.0], SmoothMaxParams(k)) == 5.0

    def test_two_point_value(self):
        # log(1 + e)
        assert smooth_max([0.0, 1.0], SmoothMaxParams(1.0)) == pytest.approx(
            1.31326168751822283, rel=1e-15)

    def test_no_overflow(self):
        x = np.array([1e300, -1e300, 5e299])
        assert smooth_max(x, SmoothMaxParams(100.0)) == 1e300

    @pytest.mark.parametrize("bad", [[], [1.0, np.nan], [np.inf, 0.0]])
    def test_rejects_bad_vectors(self, bad):
        with pytest.raises(InputError):
            smooth_max(bad, SmoothMaxParams(1.0))

    @pytest.mark.parametrize("kappa", [0.0, -1.0, math.inf, math.nan])
    def test_rejects_bad_kappa(self, kappa):
        with pytest.raises(InputError):
            SmoothMaxParams(kappa)

    def test_batched_rows_match_single(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 7))
        p = SmoothMaxParams(3.0)
        np.testing.assert_array_equal(smooth_max(x, p), [smooth_max(r, p) for r in x])

    @given(vectors, kappas)
    def test_sandwich(self, x, kappa):
        g = smooth_max(x, SmoothMaxParams(kappa))
        m = hard_max(x)
        assert 0.0 <= g - m <= math.log(x.size) / kappa + 1e-12

    @given(vectors, kappas, st.floats(-1e3, 1e3))
    def test_translation_equivariance(self, x, kappa, c):
        p = SmoothMaxParams(kappa)
        assert smooth_max(x + c, p) == pytest.approx(smooth_max(x, p) + c, abs=1e-12 * (1 + abs(c) + np.abs(x).max()))
        np.testing.assert_allclose(softmax_weights(x + c, p), softmax_weights(x, p), atol=1e-12)


class TestSoftmaxWeights:
    def test_symmetric(self):
        np.testing.assert_array_equal(softmax_weights([0.0, 0.0], SmoothMaxParams(7.0)), [0.5, 0.5])

    def test_two_point(self):
        w = softmax_weights([0.0, 1.0], SmoothMaxParams(1.0))
        np.testing.assert_allclose(w, [0.26894142136999512, 0.73105857863000488], rtol=1e-14)

    def test_dominant_entry(self):
        v = np.zeros(5)
        v[2] = 40.0
        w = softmax_weights(v, SmoothMaxParams(1.0))
        assert w[2] == pytest.approx(1.0)
        assert np.all(np.delete(w, 2) < 1e-17)

    @given(vectors, kappas)
    def test_positive_and_normalized(self, v, kappa):
        w = softmax_weights(v, SmoothMaxParams(kappa))
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-12


def _fd_derivatives(v, x, kappa, h):
    """Central differences of t -> G(v + t x) up to third order."""
    p = SmoothMaxParams(kappa)
    f = lambda t: smooth_max(v + t * x, p)
    f0, fp, fm = f(0.0), f(h), f(-h)
    fp2, fm2 = f(2 * h), f(-2 * h)
    d1 = (fp - fm) / (2 * h)
    d2 = (fp - 2 * f0 + fm) / h**2
    d3 = (fp2 - 2 * fp + 2 * fm - fm2) / (2 * h**3)
    return d1, d2, d3


class TestDirectionalDerivatives:
    def test_uniform_weights_give_mean(self):
        x = np.array([1.0, -2.0, 4.0, 0.5])
        assert directional_d1(np.zeros(4), x, SmoothMaxParams(3.0)) == pytest.approx(x.mean())

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            directional_d2(np.zeros(3), np.zeros(3), np.zeros(4), SmoothMaxParams(1.0))

    @given(vectors, kappas, st.data())
    def test_second_derivative_nonnegative_on_diagonal(self, v, kappa, data):
        x = data.draw(arrays(np.float64, v.size, elements=st.floats(-10, 10)))
        assert directional_d2(v, x, x, SmoothMaxParams(kappa)) >= -1e-12 * kappa * (1 + np.abs(x).max() ** 2)

    def test_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            d = int(rng.integers(1, 51))
            kappa = float(rng.choice([0.1, 1.0, 10.0]))
            p = SmoothMaxParams(kappa)
            v = rng.normal(size=d) / kappa
            x = rng.uniform(-1, 1, size=d)
            # Third-order differences need a larger step than first order.
            a1, _, _ = _fd_derivatives(v, x, kappa, 1e-5 / kappa)
            _, a2, _ = _fd_derivatives(v, x, kappa, 1e-4 / kappa)
            _, _, a3 = _fd_derivatives(v, x, kappa, 2e-3 / kappa)
            e1 = directional_d1(v, x, p)
            e2 = directional_d2(v, x, x, p)
            e3 = directional_d3(v, x, x, x, p)
            assert abs(a1 - e1) <= 1e-6 * max(1.0, abs(e1))
            assert abs(a2 - e2) <= 1e-6 * max(kappa, abs(e2))
            assert abs(a3 - e3) <= 1e-6 * max(kappa**2, abs(e3))

    def test_mixed_third_derivative_by_polarization(self):
        # G'''(v)(x, y, z) from pure cubes via the polarization identity.
        rng = np.random.default_rng(5)
        p = SmoothMaxParams(2.0)
        v, x, y, z = rng.normal(size=(4, 6))
        cube = lambda u: directional_d3(v, u, u, u, p)
        pol = (cube(x + y + z) - cube(x + y) - cube(x + z) - cube(y + z)
               + cube(x) + cube(y) + cube(z)) / 6.0
        assert directional_d3(v, x, y, z, p) == pytest.approx(pol, rel=1e-10, abs=1e-12)

    def test_derivative_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            d = int(rng.integers(1, 30))
            kappa = float(rng.choice([0.1, 1.0, 10.0, 100.0]))
            p = SmoothMaxParams(kappa)
            v = rng.normal(scale=3.0, size=d)
            x, y, z = (u / np.abs(u).max() for u in rng.normal(size=(3, d)))
            assert abs(directional_d1(v, x, p)) <= 1 + 1e-12
            assert abs(directional_d2(v, x, y, p)) <= 2 * kappa * (1 + 1e-12)
            assert abs(directional_d3(v, x, y, z, p)) <= 6 * kappa**2 * (1 + 1e-12)


class TestExplicitCoefficients:
    def test_d1_is_zero(self):
        co = explicit_coefficients([0.7], SmoothMaxParams(2.0))
        assert co.b[0, 0] == 0.0
        assert co.c[0, 0, 0] == 0.0

    def test_d2_origin(self):
        co = explicit_coefficients([0.0, 0.0], SmoothMaxParams(1.0))
        assert co.p == 2.0
        np.testing.assert_array_equal(co.b, [[1.0, -1.0], [-1.0, 1.0]])

    def test_cap(self):
        with pytest.raises(InputError, match="cap of 8"):
            explicit_coefficients(np.zeros(9), SmoothMaxParams(1.0))

    def test_brute_force_c_table(self):
        # independent transcription of the case table, entry by entry
        rng = np.random.default_rng(9)
        kappa = 2.0
        v = rng.normal(size=4)
        e = np.exp(kappa * (v - v.max()))
        p = e.sum()

        def b(i, j):
            return p - e[i] if i == j else -e[j]

        def c(i, j, k):
            if i == j or j == k:
                return b(i, k) * (p - 2 * e[j])
            if i == k:
                return b(i, j) * (p - 2 * e[k])
            return 2 * b(i, j) * b(i, k)

        x, y, z = rng.normal(size=(3, 4))
        total = sum(e[i] * c(i, j, k) * x[i] * y[j] * z[k]
                    for i in range(4) for j in range(4) for k in range(4))
        brute = kappa**2 * total / p**3
        assert directional_d3(v, x, y, z, SmoothMaxParams(kappa)) == pytest.approx(brute, rel=1e-10)

    def test_factored_matches_explicit(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            d = int(rng.integers(1, 7))
            kappa = float(rng.choice([0.1, 1.0, 10.0]))
            p = SmoothMaxParams(kappa)
            v = rng.normal(size=d)
            x, y, z = rng.normal(size=(3, d))
            co = explicit_coefficients(v, p)
            f2, e2 = directional_d2(v, x, y, p), co.d2(kappa, x, y)
            f3, e3 = directional_d3(v, x, y, z, p), co.d3(kappa, x, y, z)
            # relative error, floored at 1e-3 of the natural scale for near-zero values
            nx, ny, nz = (np.abs(u).max() for u in (x, y, z))
            assert abs(f2 - e2) <= 1e-10 * max(abs(e2), 1e-3 * kappa * nx * ny)
            assert abs(f3 - e3) <= 1e-10 * max(abs(e3), 1e-3 * kappa**2 * nx * ny * nz)

    def test_weighted_sums(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            d = int(rng.integers(1, 9))
            co = explicit_coefficients(rng.normal(scale=2, size=d), SmoothMaxParams(1.5))
            assert co.weighted_b_sum() <= 2 * co.p**2 * (1 + 1e-12)
            assert co.weighted_c_sum() <= 6 * co.p**3 * (1 + 1e-12)


class TestSmoothStep:
    def test_recorded_constants(self):
        exact = (35 / 16, 84 / (5 * math.sqrt(5)), 52.5)
        np.testing.assert_allclose(SMOOTHSTEP_DERIVATIVE_BOUNDS, exact, rtol=1e-12)
        assert SMOOTHSTEP_D == pytest.approx(52.5)

    def test_plateaus_and_midpoint(self):
        assert smooth_step(-1.0, SmoothStepSpec(0.5)) == 1.0
        assert smooth_step(0.7, SmoothStepSpec(0.5)) == 0.0
        assert smooth_step(0.25, SmoothStepSpec(0.5)) == pytest.approx(0.5, abs=1e-15)

    def test_first_derivative_by_finite_difference(self):
        h = 1e-6
        fd = (smooth_step(0.3 + h, 1.0) - smooth_step(0.3 - h, 1.0)) / (2 * h)
        assert smooth_step(0.3, 1.0, order=1) == pytest.approx(fd, abs=1e-6)

    @pytest.mark.parametrize("order", [2, 3])
    def test_higher_derivatives_by_finite_difference(self, order):
        h = 1e-5
        eps = 0.4
        xs = np.linspace(0.01, 0.39, 17)
        fd = (smooth_step(xs + h, eps, order - 1) - smooth_step(xs - h, eps, order - 1)) / (2 * h)
        np.testing.assert_allclose(smooth_step(xs, eps, order), fd, rtol=1e-6, atol=1e-4)

    def test_bad_inputs(self):
        with pytest.raises(InputError):
            SmoothStepSpec(0.0)
        with pytest.raises(InputError):
            smooth_step(0.1, 1.0, order=4)

    @pytest.mark.parametrize("eps", [1e-3, 0.5, 7.0])
    def test_derivative_bound_on_grid(self, eps):
        xs = np.linspace(-0.1 * eps, 1.1 * eps, 100_000)
        for j in (1, 2, 3):
            assert np.max(np.abs(smooth_step(xs, eps, j))) * eps**j <= SMOOTHSTEP_D
            assert np.max(np.abs(smooth_step(xs, eps, j))) * eps**j <= SMOOTHSTEP_DERIVATIVE_BOUNDS[j - 1] * (1 + 1e-12)

    def test_monotone_and_bounded(self):
        xs = np.linspace(-1, 2, 10_001)
        f = smooth_step(xs, 1.0)
        assert np.all((f >= 0) & (f <= 1))
        assert np.all(np.diff(f) <= 0)

    def test_continuity_of_derivatives_at_edges(self):
        for j in (1, 2, 3):
            for x0 in (0.0, 1.0):
                assert abs(smooth_step(x0 + 1e-9, 1.0, j)) < 1e-6
                assert abs(smooth_step(x0 - 1e-9, 1.0, j)) < 1e-6


class TestSmoothedIndicator:
    def test_left_plateau(self):
        r = 3.0
        s = np.array([r - 10.0, r - 12.0])
        assert smoothed_indicator(s, r, SmoothMaxParams(1.0), SmoothStepSpec(0.1)) == 1.0

    def test_right_plateau(self):
        r = -2.0
        s = np.array([r + 10.0, r])
        assert smoothed_indicator(s, r, SmoothMaxParams(1.0), SmoothStepSpec(0.1)) == 0.0

    def test_left_plateau_boundary(self):
        val = smoothed_indicator([0.0, 0.0], math.log(2), SmoothMaxParams(1.0), SmoothStepSpec(1.0))
        assert val == 1.0

    @given(vectors, kappas, st.floats(-100, 100), st.floats(0.01, 10))
    @settings(max_examples=200)
    def test_plateau_conditions(self, s, kappa, r, eps):
        p, f = SmoothMaxParams(kappa), SmoothStepSpec(eps)
        m = hard_max(s)
        val = smoothed_indicator(s, r, p, f)
        if m <= r - math.log(s.size) / kappa - 1e-9:
            assert val == 1.0
        if m >= r + eps:
            assert val == 0.0
