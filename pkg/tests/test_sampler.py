import math

import numpy as np
import pytest
from scipy.stats import halfcauchy, kstest, multivariate_normal

from nof1gait.data import Outcome
from nof1gait.design import (
    HalfCauchyPrior,
    ModelSpec,
    ModelVariant,
    NormalPrior,
    UniformPrior,
    default_priors,
)
from nof1gait.ar1 import ar1_covariance
from nof1gait.sampler import (
    SamplerConfig,
    chains_from_csv,
    chains_to_csv,
    gibbs_step_beta,
    log_likelihood,
    mh_step_phi,
    mh_step_sigma,
    run_sampler,
)
from nof1gait.synth import SynthSpec, generate_series


def conjugate_posterior(X, y, sigma, prior_means, prior_sds):
    """Independent closed-form conjugate posterior (dense linear algebra)."""
    P = X.T @ X / sigma**2 + np.diag(1.0 / np.asarray(prior_sds) ** 2)
    b = X.T @ y / sigma**2 + np.asarray(prior_means) / np.asarray(prior_sds) ** 2
    cov = np.linalg.inv(P)
    return cov @ b, cov


def small_model(variant=ModelVariant.BASIC, outcome=Outcome.STRIDE_LENGTH, informative=False):
    return ModelSpec(variant, outcome, default_priors(outcome, informative, variant))


class TestLogLikelihood:
    def test_standard_normal_at_mean(self):
        X = np.ones((1, 1))
        y = np.array([2.0])
        beta = np.array([2.0])
        assert log_likelihood(ModelVariant.BASIC, beta, 1.0, X, y) == pytest.approx(
            -0.5 * math.log(2 * math.pi)
        )

    def test_ar1_phi_zero_equals_basic(self, rng):
        X = rng.standard_normal((8, 3))
        y = rng.standard_normal(8)
        beta = rng.standard_normal(3)
        basic = log_likelihood(ModelVariant.BASIC, beta, 0.7, X, y)
        ar1 = log_likelihood(ModelVariant.AR1, beta, 0.7, X, y, phi=0.0)
        assert ar1 == pytest.approx(basic)

    def test_ar1_matches_dense_mvn(self, rng):
        n = 5
        X = rng.standard_normal((n, 2))
        y = rng.standard_normal(n)
        beta = rng.standard_normal(2)
        phi, sigma = 0.6, 1.3
        got = log_likelihood(ModelVariant.AR1, beta, sigma, X, y, phi=phi)
        dense = multivariate_normal(mean=X @ beta, cov=ar1_covariance(phi, sigma, n)).logpdf(y)
        assert got == pytest.approx(float(dense))

    def test_reversal_invariance(self, rng):
        n = 12
        X = rng.standard_normal((n, 2))
        y = rng.standard_normal(n)
        beta = rng.standard_normal(2)
        forward = log_likelihood(ModelVariant.AR1, beta, 0.9, X, y, phi=0.45)
        backward = log_likelihood(ModelVariant.AR1, beta, 0.9, X[::-1].copy(), y[::-1].copy(), phi=0.45)
        assert forward == pytest.approx(backward)

    def test_invalid_parameters(self):
        X, y, beta = np.ones((2, 1)), np.zeros(2), np.zeros(1)
        with pytest.raises(ValueError):
            log_likelihood(ModelVariant.BASIC, beta, 0.0, X, y)
        with pytest.raises(ValueError):
            log_likelihood(ModelVariant.AR1, beta, 1.0, X, y, phi=1.0)


class TestGibbsStepBeta:
    def test_matches_conjugate_posterior(self, rng):
        X = np.column_stack([np.ones(4), [0.0, 1.0, 0.0, 1.0]])
        y = np.array([1.0, 2.0, 1.2, 2.3])
        sigma = 0.5
        priors = (NormalPrior(0.0, 2.0), NormalPrior(0.5, 1.0))
        mean, cov = conjugate_posterior(X, y, sigma, [0.0, 0.5], [2.0, 1.0])
        draws = np.array(
            [gibbs_step_beta(rng, X, y, sigma, priors) for _ in range(20000)]
        )
        assert np.allclose(draws.mean(axis=0), mean, atol=4 * np.sqrt(np.diag(cov) / 20000) + 1e-3)
        assert np.allclose(np.cov(draws.T), cov, rtol=0.1)

    def test_degenerate_concentration(self, rng):
        X = np.ones((6, 1))
        y = np.full(6, 3.7)
        draw = gibbs_step_beta(rng, X, y, 1e-8, (NormalPrior(0.0, 100.0),))
        assert draw[0] == pytest.approx(3.7, abs=1e-6)

    def test_no_data_draws_from_prior(self, rng):
        X = np.zeros((0, 2))
        y = np.zeros(0)
        priors = (NormalPrior(1.5, 0.3), NormalPrior(-2.0, 0.7))
        draws = np.array([gibbs_step_beta(rng, X, y, 1.0, priors) for _ in range(5000)])
        assert draws[:, 0].mean() == pytest.approx(1.5, abs=0.02)
        assert draws[:, 0].std() == pytest.approx(0.3, rel=0.05)
        assert draws[:, 1].mean() == pytest.approx(-2.0, abs=0.05)


class TestMhSteps:
    def test_prior_only_sigma_matches_half_cauchy(self):
        rng = np.random.default_rng(11)
        prior = HalfCauchyPrior(2.5)
        resid = np.zeros(0)
        sigma = 1.0
        draws = []
        for _ in range(40000):
            sigma, _ = mh_step_sigma(rng, sigma, 2.0, prior, resid)
            draws.append(sigma)
        draws = np.array(draws[2000::5])
        stat = kstest(draws, halfcauchy(scale=2.5).cdf).statistic
        assert stat < 0.03

    def test_uniform_prior_never_exceeds_upper_bound(self):
        rng = np.random.default_rng(5)
        prior = UniformPrior(0.0, 100.0)
        sigma = 95.0
        for _ in range(2000):
            sigma, _ = mh_step_sigma(rng, sigma, 1.0, prior, np.zeros(0))
            assert sigma < 100.0

    def test_prior_only_phi_stays_in_support(self):
        rng = np.random.default_rng(3)
        prior = UniformPrior(-1.0, 1.0)
        phi = 0.0
        draws = []
        for _ in range(5000):
            phi, _ = mh_step_phi(rng, phi, 1.0, prior, np.zeros(0), 1.0)
            draws.append(phi)
        draws = np.array(draws)
        assert np.all(np.abs(draws) < 1.0)
        # uniform target: mean near 0
        assert abs(draws[1000:].mean()) < 0.1

    def test_phi_recovery_on_synthetic_ar1(self):
        spec = SynthSpec(
            beta_true=(1.4, -0.1, -0.05, -0.15),
            phi_true=0.6,
            sigma_true=0.05,
            strides_per_condition=125,
            seed=99,
        )
        series = generate_series(spec, "p1")
        model = small_model(ModelVariant.AR1)
        config = SamplerConfig(n_chains=2, n_iterations=2000, burn_in=1000, seed=17)
        chains = run_sampler(model, series, config)
        phi_mean = float(np.mean(chains.pooled("phi")))
        assert phi_mean == pytest.approx(0.6, abs=0.1)


@pytest.fixture(scope="module")
def basic_fit():
    spec = SynthSpec(
        beta_true=(1.4, -0.09, -0.03, -0.12),
        phi_true=0.0,
        sigma_true=0.05,
        strides_per_condition=30,
        seed=21,
    )
    series = generate_series(spec, "p1")
    config = SamplerConfig(n_chains=2, n_iterations=2500, burn_in=1000, seed=5)
    return spec, series, run_sampler(small_model(), series, config)


class TestRunSampler:
    def test_shapes_and_support(self, basic_fit):
        _, _, chains = basic_fit
        assert chains.draws.shape == (2, 2500, 5)
        assert np.all(chains.pooled("sigma") > 0)

    def test_recovers_truth(self, basic_fit):
        spec, _, chains = basic_fit
        for i, true in enumerate(spec.beta_true):
            pooled = chains.pooled(f"beta{i + 1}")
            assert abs(pooled.mean() - true) < 3 * pooled.std()

    def test_same_seed_is_bit_identical(self, basic_fit):
        _, series, chains = basic_fit
        config = SamplerConfig(n_chains=2, n_iterations=2500, burn_in=1000, seed=5)
        again = run_sampler(small_model(), series, config)
        assert np.array_equal(chains.draws, again.draws)

    def test_different_seed_differs(self, basic_fit):
        _, series, chains = basic_fit
        config = SamplerConfig(n_chains=2, n_iterations=2500, burn_in=1000, seed=6)
        other = run_sampler(small_model(), series, config)
        assert not np.array_equal(chains.draws, other.draws)

    def test_default_config_dimensions(self):
        config = SamplerConfig(seed=1)
        assert config.n_chains == 2
        assert config.n_iterations == 10000
        assert config.burn_in == 5000
        assert config.thinning == 1

    def test_thinning_counts(self, basic_fit):
        _, series, _ = basic_fit
        config = SamplerConfig(n_chains=1, n_iterations=100, burn_in=50, thinning=3, seed=2)
        chains = run_sampler(small_model(), series, config)
        assert chains.n_kept == 100

    def test_ar1_phi_support(self):
        spec = SynthSpec(
            beta_true=(1.4, -0.1, 0.0, -0.1),
            phi_true=0.4,
            sigma_true=0.05,
            strides_per_condition=20,
            seed=8,
        )
        series = generate_series(spec, "p1")
        config = SamplerConfig(n_chains=2, n_iterations=500, burn_in=300, seed=3)
        chains = run_sampler(small_model(ModelVariant.AR1), series, config)
        phi = chains.pooled("phi")
        assert np.all(np.abs(phi) < 1)
        assert np.all(chains.pooled("sigma") > 0)

    def test_outcome_mismatch_rejected(self, basic_fit):
        _, series, _ = basic_fit
        model = small_model(outcome=Outcome.STRIDE_TIME)
        with pytest.raises(Exception, match="outcome"):
            run_sampler(model, series, SamplerConfig(n_chains=1, n_iterations=10, burn_in=0, seed=1))


class TestChainCsvRoundTrip:
    def test_round_trip(self):
        spec = SynthSpec(
            beta_true=(1.4, -0.1, 0.0, -0.1),
            phi_true=0.0,
            sigma_true=0.05,
            strides_per_condition=10,
            seed=4,
        )
        series = generate_series(spec, "p9")
        config = SamplerConfig(n_chains=2, n_iterations=50, burn_in=20, seed=13)
        chains = run_sampler(small_model(), series, config)
        restored = chains_from_csv(chains_to_csv(chains))
        assert restored.parameter_names == chains.parameter_names
        assert np.array_equal(restored.draws, chains.draws)
        assert restored.participant_id == "p9"
        assert restored.n_obs == chains.n_obs
        assert restored.config == chains.config
