import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import erfc

from gsfm.ddp import (
    AtomSet,
    baseline_curve,
    baseline_log_pdf,
    baseline_log_surv,
    design_one_way,
    design_two_way,
    log_pdf_lognormal,
    log_surv_lognormal,
    stick_break,
    stick_break_inverse,
)


def random_atoms(rng, L=3, q=1, sigma_range=(0.2, 3.0)):
    sticks = rng.uniform(0.05, 0.95, size=L - 1)
    return AtomSet(
        weights=stick_break(sticks),
        locations=rng.normal(size=(L, q)),
        scales=rng.uniform(*sigma_range, size=L),
    )


class TestStickBreak:
    def test_direct_product_formula(self):
        np.testing.assert_allclose(stick_break([0.5, 0.5]), [0.5, 0.25, 0.25])

    def test_first_stick_near_one(self):
        w = stick_break([1 - 1e-12, 0.5, 0.5])
        assert w[0] == pytest.approx(1.0, abs=1e-11)
        assert w[1:].sum() == pytest.approx(0.0, abs=1e-11)

    def test_beta_draws_sum_to_one(self):
        rng = np.random.default_rng(0)
        sticks = rng.beta(1.0, 1.0, size=11)
        assert abs(stick_break(sticks).sum() - 1.0) < 1e-12

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.3])
    def test_domain_error(self, bad):
        with pytest.raises(ValueError):
            stick_break([0.5, bad])

    @given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=15))
    def test_simplex_property(self, sticks):
        w = stick_break(sticks)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) < 1e-12

    @given(st.lists(st.floats(0.05, 0.95), min_size=1, max_size=10))
    def test_invertible_for_positive_weights(self, sticks):
        w = stick_break(sticks)
        np.testing.assert_allclose(stick_break_inverse(w), sticks, rtol=1e-9)


class TestDesigns:
    def test_one_way_is_identity(self):
        d = design_one_way(3)
        np.testing.assert_array_equal(d.rows, np.eye(3))

    def test_one_way_single_stratum(self):
        np.testing.assert_array_equal(design_one_way(1).rows, [[1.0]])

    def test_one_way_selects_coordinate(self):
        d = design_one_way(3)
        alpha = np.array([1.5, -2.0, 0.25])
        assert alpha @ d.vector(2) == -2.0

    def test_one_way_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            design_one_way(0)

    def test_two_way_shape_and_ones(self):
        d = design_two_way(2, 2)
        assert d.rows.shape == (4, 5)
        np.testing.assert_array_equal(d.rows.sum(axis=1), [3, 3, 3, 3])

    def test_two_way_single_cell(self):
        np.testing.assert_array_equal(design_two_way(1, 1).rows, [[1.0, 1.0, 1.0]])

    def test_two_way_selection_arithmetic(self):
        # effects (m, A_1, A_2, B_1, B_2); stratum (v=2, u=1) is row 3 of V=2, U=2
        d = design_two_way(2, 2)
        alpha = np.array([10.0, 1.0, 2.0, 30.0, 40.0])
        assert alpha @ d.vector(3) == 10.0 + 2.0 + 30.0

    def test_two_way_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            design_two_way(0, 2)


class TestLognormalKernels:
    def test_median_survival(self):
        assert log_surv_lognormal(1.0, 0.0, 1.0) == pytest.approx(math.log(0.5))

    def test_survival_limit_at_zero(self):
        assert log_surv_lognormal(1e-300, 0.0, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_survival_against_erfc_oracle(self):
        # Phi(-x) = erfc(x / sqrt 2) / 2, evaluated independently
        x = math.log(2.0)
        expected = math.log(0.5 * erfc(x / math.sqrt(2.0)))
        assert log_surv_lognormal(2.0, 0.0, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_survival_finite_deep_in_tail(self):
        val = log_surv_lognormal(math.exp(38.0), 0.0, 1.0)
        assert np.isfinite(val) and val < -500

    def test_pdf_at_median(self):
        assert log_pdf_lognormal(1.0, 0.0, 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi))

    def test_pdf_scale_invariance(self):
        t, mu, sigma, c = 1.7, 0.3, 0.8, 2.5
        lhs = log_pdf_lognormal(c * t, mu + math.log(c), sigma)
        rhs = log_pdf_lognormal(t, mu, sigma) - math.log(c)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_pdf_matches_cdf_finite_difference(self):
        t, mu, sigma = 2.0, 0.5, 2.0
        h = 1e-6
        fd = (
            math.exp(log_surv_lognormal(t - h, mu, sigma))
            - math.exp(log_surv_lognormal(t + h, mu, sigma))
        ) / (2 * h)
        assert math.exp(log_pdf_lognormal(t, mu, sigma)) == pytest.approx(fd, rel=1e-5)

    @pytest.mark.parametrize("func", [log_surv_lognormal, log_pdf_lognormal])
    def test_domain_errors(self, func):
        with pytest.raises(ValueError):
            func(-1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            func(1.0, 0.0, -1.0)


class TestBaselineMixture:
    def test_single_component_reduces_to_kernel(self):
        atoms = AtomSet(
            weights=[1.0, 0.0, 0.0],
            locations=[[0.3], [9.9], [-9.9]],
            scales=[0.7, 1.0, 1.0],
        )
        d = design_one_way(1)
        t = 1.4
        assert baseline_log_surv(t, 1, atoms, d) == pytest.approx(
            log_surv_lognormal(t, 0.3, 0.7), rel=1e-12
        )
        assert baseline_log_pdf(t, 1, atoms, d) == pytest.approx(
            log_pdf_lognormal(t, 0.3, 0.7), rel=1e-12
        )

    def test_survival_to_one_at_zero(self):
        rng = np.random.default_rng(5)
        atoms = random_atoms(rng)
        val = baseline_log_surv(1e-280, 1, atoms, design_one_way(1))
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_matches_naive_sum_oracle(self):
        rng = np.random.default_rng(11)
        atoms = random_atoms(rng, L=3)
        d = design_one_way(1)
        t = 1.7
        naive_s = sum(
            w * 0.5 * erfc((math.log(t) - mu[0]) / (s * math.sqrt(2)))
            for w, mu, s in zip(atoms.weights, atoms.locations, atoms.scales)
        )
        assert baseline_log_surv(t, 1, atoms, d) == pytest.approx(math.log(naive_s), abs=1e-12)
        naive_f = sum(
            w * math.exp(log_pdf_lognormal(t, mu[0], s))
            for w, mu, s in zip(atoms.weights, atoms.locations, atoms.scales)
        )
        assert baseline_log_pdf(t, 1, atoms, d) == pytest.approx(math.log(naive_f), abs=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_density_integrates_to_one(self, seed):
        rng = np.random.default_rng(seed)
        atoms = random_atoms(rng, L=4, sigma_range=(0.2, 3.0))
        d = design_one_way(1)
        total, _ = quad(
            lambda t: math.exp(baseline_log_pdf(t, 1, atoms, d)),
            1e-12,
            np.inf,
            limit=400,
        )
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_density_is_minus_survival_derivative(self):
        rng = np.random.default_rng(21)
        atoms = random_atoms(rng)
        d = design_one_way(1)
        t, h = 1.3, 1e-5
        fd = -(
            math.exp(baseline_log_surv(t + h, 1, atoms, d))
            - math.exp(baseline_log_surv(t - h, 1, atoms, d))
        ) / (2 * h)
        assert math.exp(baseline_log_pdf(t, 1, atoms, d)) == pytest.approx(fd, rel=1e-5)

    @pytest.mark.parametrize("seed", range(3))
    def test_survival_monotone_with_unit_limits(self, seed):
        rng = np.random.default_rng(100 + seed)
        atoms = random_atoms(rng, L=5)
        d = design_one_way(1)
        grid = np.logspace(-8, 8, 400)
        surv = np.exp(baseline_log_surv(grid, 1, atoms, d))
        assert np.all(np.diff(surv) <= 1e-14)
        assert surv[0] == pytest.approx(1.0, abs=1e-9)
        assert surv[-1] == pytest.approx(0.0, abs=1e-9)

    def test_strata_share_weights_one_way(self):
        # the per-stratum survival functions differ only through the selected
        # atom coordinate; the weight vector is structurally shared
        rng = np.random.default_rng(3)
        atoms = random_atoms(rng, L=4, q=3)
        d = design_one_way(3)
        t = np.array([0.6, 1.9])
        for j in (1, 2, 3):
            mu_j = atoms.locations[:, j - 1]
            manual = AtomSet(atoms.weights, mu_j[:, None], atoms.scales)
            np.testing.assert_allclose(
                baseline_log_surv(t, j, atoms, d),
                baseline_log_surv(t, 1, manual, design_one_way(1)),
                rtol=1e-12,
            )


class TestBaselineCurve:
    def test_single_draw_single_atom(self):
        atoms = AtomSet([1.0], [[0.0]], [1.0])
        grid = np.array([0.5, 1.0, 2.0])
        curve = baseline_curve(grid, 1, [atoms], design_one_way(1))
        np.testing.assert_allclose(
            curve["mean"], np.exp(log_surv_lognormal(grid, 0.0, 1.0)), rtol=1e-12
        )

    def test_identical_draws_zero_width_band(self):
        rng = np.random.default_rng(8)
        atoms = random_atoms(rng)
        curve = baseline_curve([1.0, 2.0], 1, [atoms] * 7, design_one_way(1))
        np.testing.assert_allclose(curve["q025"], curve["q975"], rtol=1e-12)

    def test_mean_matches_direct_averaging(self):
        rng = np.random.default_rng(17)
        draws = [random_atoms(rng) for _ in range(100)]
        grid = np.array([0.3, 1.1, 2.7])
        curve = baseline_curve(grid, 1, draws, design_one_way(1))
        direct = np.mean(
            [np.exp(baseline_log_surv(grid, 1, a, design_one_way(1))) for a in draws],
            axis=0,
        )
        np.testing.assert_allclose(curve["mean"], direct, rtol=1e-12)

    def test_empty_draws_error(self):
        with pytest.raises(ValueError):
            baseline_curve([1.0], 1, [], design_one_way(1))
