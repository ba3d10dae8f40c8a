import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sstats

from gsfm.data import validate
from gsfm.simgen import (
    MixtureBaseline,
    ScenarioConfig,
    gen_dataset,
    mixture_inverse_surv,
    mixture_surv,
    paper_scenario,
    replicate_study,
)

SINGLE_LN = MixtureBaseline(((1.0, 0.0, 1.0),))


class TestMixture:
    def test_single_lognormal_median(self):
        assert mixture_inverse_surv(0.5, SINGLE_LN) == pytest.approx(1.0, abs=1e-9)

    def test_inverse_property(self):
        rng = np.random.default_rng(0)
        mb = MixtureBaseline(((0.4, -0.5, 0.7), (0.6, 0.8, 1.3)))
        for u in rng.uniform(0.001, 0.999, 100):
            t = mixture_inverse_surv(u, mb)
            assert mixture_surv(t, mb) == pytest.approx(u, abs=1e-9)

    def test_symmetric_mixture_median(self):
        # the scenario's first baseline is symmetric around log t = 0, so
        # S(1) = (Phi(0.25) + Phi(-0.25)) / 2 = 1/2 exactly
        mb = MixtureBaseline(((0.5, -0.25, 1.0), (0.5, 0.25, 1.0)))
        oracle = 0.5 * (sstats.norm.cdf(0.25) + sstats.norm.cdf(-0.25))
        assert oracle == pytest.approx(0.5, abs=1e-15)
        assert mixture_surv(1.0, mb) == pytest.approx(0.5, abs=1e-12)
        assert mixture_inverse_surv(0.5, mb) == pytest.approx(1.0, abs=1e-8)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            mixture_inverse_surv(0.0, SINGLE_LN)
        with pytest.raises(ValueError):
            mixture_inverse_surv(1.0, SINGLE_LN)
        with pytest.raises(ValueError):
            mixture_surv(-1.0, SINGLE_LN)

    def test_invalid_mixtures(self):
        with pytest.raises(ValueError):
            MixtureBaseline(((0.5, 0.0, 1.0),))
        with pytest.raises(ValueError):
            MixtureBaseline(((1.0, 0.0, -1.0),))

    @given(st.floats(0.01, 0.99), st.floats(-1.0, 1.0))
    @settings(max_examples=40)
    def test_inverse_round_trip_property(self, u, mu):
        mb = MixtureBaseline(((1.0, mu, 1.0),))
        t = mixture_inverse_surv(u, mb)
        assert mixture_surv(t, mb) == pytest.approx(u, abs=1e-8)

    def test_monotone_decreasing(self):
        mb = MixtureBaseline(((0.5, -0.65, 1.0), (0.5, 1.25, 1.0)))
        grid = np.linspace(0.01, 20, 300)
        s = mixture_surv(grid, mb)
        assert np.all(np.diff(s) < 0)


class TestGenDataset:
    def test_equal_stratum_split(self):
        ds = gen_dataset(paper_scenario(), seed=1)
        counts = ds.subjects_per_stratum()
        assert counts == {1: 30, 2: 30, 3: 30}
        assert ds.n_subjects == 90

    def test_every_subject_has_both_records(self):
        ds = gen_dataset(paper_scenario(), seed=2)
        cells = ds.records_per_cell()
        assert all(cells[(k, j)] == 30 for k in (1, 2) for j in (1, 2, 3))
        assert validate(ds) == []

    def test_deterministic_given_seed(self):
        a = gen_dataset(paper_scenario(), seed=7)
        b = gen_dataset(paper_scenario(), seed=7)
        assert a == b

    def test_null_effects_recover_baseline_law(self):
        # beta=0 and zero frailty make the uncensored times follow the
        # baseline itself; against a wide censoring window almost every draw
        # is observed, and a KS test against the known law should pass
        cfg = ScenarioConfig(
            n_subjects=600,
            beta=(0.0, 0.0),
            frailty_sd=1e-12,
            censor_low=5e4,
            censor_high=6e4,
            baselines={(k, j): SINGLE_LN for k in (1, 2) for j in (1, 2, 3)},
            n_recurrences=2,
        )
        ds = gen_dataset(cfg, seed=3)
        times = np.array([o.gap_time for o in ds.observations if o.event == 1])
        assert times.size > 1100
        stat = sstats.kstest(np.log(times), "norm")
        assert stat.pvalue > 0.01

    def test_monotone_coupling_in_frailty(self):
        # with the uniform draw held fixed, a larger log-frailty shortens the
        # generated time
        mb = MixtureBaseline(((0.5, -0.25, 1.0), (0.5, 0.25, 1.0)))
        u = 0.37
        times = [
            mixture_inverse_surv(u ** (1.0 / np.exp(v)), mb) for v in (-1.0, 0.0, 1.5)
        ]
        assert times[0] > times[1] > times[2]

    def test_unequal_split_rejected(self):
        with pytest.raises(ValueError):
            ScenarioConfig(n_subjects=91)


def oracle_fitter(ds, seed):
    # returns the truth exactly, with a tight posterior sd
    return {
        "beta[1]": (1.0, 0.05, 1.0),
        "beta[2]": (1.0, 0.05, 1.0),
        "tau": (1.0, 0.05, 1.0),
    }


def noisy_fitter(ds, seed):
    rng = np.random.default_rng(seed)
    return {
        "beta[1]": (1.0 + rng.normal(0, 0.2), 0.2, 1.0),
        "beta[2]": (1.0 + rng.normal(0, 0.2), 0.2, 1.0),
        "tau": (1.0 + rng.normal(0, 0.2), 0.2, 1.0),
    }


class TestReplicateStudy:
    def test_oracle_fitter_zero_bias_full_coverage(self):
        study = replicate_study(paper_scenario(replications=5), oracle_fitter)
        for m in study.metrics:
            assert m.bias == 0.0
            assert m.rmse == 0.0
            assert m.coverage == 1.0
        assert study.flagged == []

    def test_zero_replications_rejected(self):
        with pytest.raises(ValueError):
            replicate_study(paper_scenario(), oracle_fitter, replications=0)

    def test_rmse_identity(self):
        study = replicate_study(paper_scenario(replications=12), noisy_fitter)
        R = 12
        for c, m in enumerate(study.metrics):
            sde_sq = np.var(study.estimates[:, c], ddof=1)
            assert m.rmse**2 == pytest.approx(m.bias**2 + sde_sq * (R - 1) / R, abs=1e-10)

    def test_bad_rhat_flagged_not_dropped(self):
        def flaky(ds, seed):
            out = oracle_fitter(ds, seed)
            if seed % 2 == 0:
                out["tau"] = (1.0, 0.05, 1.2)
            return out

        study = replicate_study(paper_scenario(replications=6), flaky)
        assert len(study.flagged) > 0
        assert study.estimates.shape == (6, 3)

    def test_deterministic_given_seed(self):
        a = replicate_study(paper_scenario(replications=4, seed=9), noisy_fitter)
        b = replicate_study(paper_scenario(replications=4, seed=9), noisy_fitter)
        np.testing.assert_array_equal(a.estimates, b.estimates)

    def test_csv_output(self, tmp_path):
        study = replicate_study(paper_scenario(replications=3), oracle_fitter)
        out = tmp_path / "metrics.csv"
        study.write_csv(out)
        header = out.read_text().splitlines()[0]
        assert header == "parameter,truth,bias,mse,rmse,esd,sde,cp"
