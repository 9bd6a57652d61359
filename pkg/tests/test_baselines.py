import numpy as np
import pytest
from scipy import stats
from scipy.special import gammaln

from efi.core.errors import ConfigError, DataError, DomainError
from efi.core.rng import make_generator
from efi.services.baselines import (
    GaussianCd,
    MonteCarloCd,
    MultivariateTCd,
    ScaledInvChi2Cd,
    bivariate_fiducial_closed_form,
    bivariate_rho_draws,
    efd_linear,
    gfi_accept_reject,
    logistic_mle,
    mediation_tests,
    nls_fit,
    ols_fit,
    ols_intervals,
    run_baseline,
    two_sample_tests,
    welch_df,
)
from efi.services.models import (
    GAUSS2_CERTIFIED,
    BehrensFisher,
    BivariateNormal,
    Dataset,
    Gauss2,
    LinearKnownSigma,
    LogisticBinary,
    Mediation,
    gauss2_reference,
    mediation_truth,
    simulate,
)

LEVEL = 0.95
Z975 = stats.norm.ppf(0.975)


def _linear(n=100, p=3, sigma=1.0, seed=0):
    family = LinearKnownSigma(p, sigma)
    return simulate(family, family.default_truth(), n, seed)


def _location_data(n, seed):
    """Location model whose residual sum of squares is exactly n - 1."""
    r = make_generator(seed).standard_normal(n)
    r -= r.mean()
    r *= np.sqrt(n - 1) / np.linalg.norm(r)
    return 2.0 + r, np.ones((n, 1))


def _chi2_cdf_series(x, df):
    """Regularized lower incomplete gamma P(df/2, x/2) by its power series."""
    a, t = df / 2.0, x / 2.0
    term = 1.0 / a
    total = term
    for k in range(1, 2000):
        term *= t / (a + k)
        total += term
        if term < 1e-17 * total:
            break
    return float(np.exp(a * np.log(t) - t - gammaln(a)) * total)


class TestLeastSquares:
    def test_two_point_mean(self):
        fit = ols_fit(np.array([1.0, 3.0]), np.ones((2, 1)))
        assert fit.beta[0] == pytest.approx(2.0)
        assert fit.rss == pytest.approx(2.0)

    def test_perfect_fit(self):
        X = np.column_stack([np.ones(5), np.arange(5.0)])
        fit = ols_fit(X @ [1.0, 2.0], X)
        np.testing.assert_allclose(fit.beta, [1.0, 2.0])
        assert fit.rss == pytest.approx(0.0, abs=1e-20)

    def test_matches_lstsq(self):
        data = _linear(n=40, p=4)
        fit = ols_fit(data.Y, data.X)
        expected = np.linalg.lstsq(data.X, data.Y[:, 0], rcond=None)[0]
        np.testing.assert_allclose(fit.beta, expected)

    def test_rank_deficient(self):
        with pytest.raises(DomainError):
            ols_fit(np.zeros(4), np.ones((4, 2)))

    def test_known_sigma_interval(self):
        data = _linear()
        fit = ols_fit(data.Y, data.X)
        lo, hi = ols_intervals(data.Y, data.X, LEVEL, sigma=1.0)["beta1"]
        assert hi - lo == pytest.approx(2 * Z975 * np.sqrt(fit.cov_unscaled[1, 1]))

    def test_unknown_sigma_intervals(self):
        data = _linear()
        out = ols_intervals(data.Y, data.X, LEVEL)
        assert set(out) == {"beta0", "beta1", "beta2", "sigma_sq"}
        lo, hi = out["sigma_sq"]
        assert 0.0 < lo < hi

    def test_chi2_quantiles_agree_with_series(self):
        # the sigma_sq endpoints are chi-squared quantiles; check scipy against a direct series
        for df in (3, 20, 97):
            for q in (0.025, 0.5, 0.975):
                assert _chi2_cdf_series(stats.chi2.ppf(q, df), df) == pytest.approx(q, rel=1e-9)


class TestExactFiducial:
    def test_known_sigma_is_gaussian(self):
        data = _linear(sigma=2.0)
        cds = efd_linear(data.Y, data.X, sigma_known=2.0)
        fit = ols_fit(data.Y, data.X)
        assert isinstance(cds["beta"], GaussianCd)
        lo, hi = cds["beta2"].interval(LEVEL)
        assert (lo + hi) / 2 == pytest.approx(fit.beta[2])
        assert hi - lo == pytest.approx(2 * Z975 * 2.0 * np.sqrt(fit.cov_unscaled[2, 2]))

    def test_unknown_sigma_degrees_of_freedom(self):
        data = _linear(n=50, p=3)
        cds = efd_linear(data.Y, data.X)
        assert isinstance(cds["sigma_sq"], ScaledInvChi2Cd)
        assert cds["sigma_sq"].df == 48
        assert cds["sigma_sq"].scale == pytest.approx(ols_fit(data.Y, data.X).rss)
        assert isinstance(cds["beta0"], MultivariateTCd) and cds["beta0"].df == 48

    def test_unbias_shrinks_scale(self):
        data = _linear(n=50, p=3)
        plain = efd_linear(data.Y, data.X)["sigma_sq"].scale
        shrunk = efd_linear(data.Y, data.X, unbias=True)["sigma_sq"].scale
        assert shrunk == pytest.approx(plain * 44 / 46)

    def test_t_marginal_is_a_scale_mixture(self):
        data = _linear(n=100, p=3, seed=4)
        cds = efd_linear(data.Y, data.X)
        fit = ols_fit(data.Y, data.X)
        rng = make_generator(1)
        sigma_sq = cds["sigma_sq"].sample(rng, 1_000_000)[:, 0]
        beta1 = fit.beta[1] + np.sqrt(sigma_sq * fit.cov_unscaled[1, 1]) * rng.standard_normal(
            sigma_sq.size
        )
        lo, hi = cds["beta1"].interval(LEVEL)
        mc_lo, mc_hi = np.quantile(beta1, [0.025, 0.975])
        assert mc_lo == pytest.approx(lo, abs=2e-3)
        assert mc_hi == pytest.approx(hi, abs=2e-3)

    def test_needs_more_rows_than_columns(self):
        with pytest.raises(DomainError):
            efd_linear(np.arange(3.0), np.column_stack([np.ones(3), [0.0, 1.0, 3.0], [1.0, 0.0, 2.0]]))

    def test_known_sigma_width_at_reference_design(self):
        widths = []
        for seed in range(20):
            data = _linear(n=500, p=10, seed=seed)
            cds = efd_linear(data.Y, data.X, sigma_known=1.0)
            widths += [np.diff(cds[f"beta{j}"].interval(LEVEL))[0] for j in range(10)]
        assert np.mean(widths) == pytest.approx(0.177, abs=0.01)

    def test_unknown_sigma_variance_width(self):
        family_data = [
            simulate(LinearKnownSigma(10), LinearKnownSigma(10).default_truth(), 500, s)
            for s in range(20)
        ]
        widths = [
            np.diff(efd_linear(d.Y, d.X)["sigma_sq"].interval(LEVEL))[0] for d in family_data
        ]
        assert np.mean(widths) == pytest.approx(0.252, abs=0.015)


class TestDistributionObjects:
    def test_bad_scaled_inverse_chi2(self):
        with pytest.raises(DomainError):
            ScaledInvChi2Cd(0.5, 1.0)
        with pytest.raises(DomainError):
            ScaledInvChi2Cd(5, 0.0)

    def test_not_positive_definite(self):
        with pytest.raises(DomainError):
            GaussianCd(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_monte_carlo_needs_two_draws(self):
        with pytest.raises(DomainError):
            MonteCarloCd(np.array([1.0]))

    def test_bad_level(self):
        with pytest.raises(DomainError):
            GaussianCd(0.0, 1.0).interval(1.0)


class TestAcceptReject:
    def test_infinite_tolerance_accepts_everything(self):
        data = _linear(n=20, p=2)
        result = gfi_accept_reject(data.Y, data.X, 1.0, eps=np.inf, n_proposals=5000, seed=1)
        assert result.acceptance_rate == 1.0
        assert result.accepted.shape == (5000, 2)

    def test_saturated_design_always_accepts(self):
        result = gfi_accept_reject(np.array([2.0]), np.ones((1, 1)), 1.0, eps=1e-6, n_proposals=1000)
        assert result.acceptance_rate == 1.0

    def test_acceptance_falls_with_n(self):
        rates = []
        for n in (5, 20, 100):
            y, X = _location_data(n, seed=n)
            result = gfi_accept_reject(y, X, 1.0, eps=1.2, norm="rms", n_proposals=100_000, seed=2)
            rates.append(result.acceptance_rate)
        assert rates[0] > rates[1] > rates[2]

    def test_no_acceptance_at_reference_size(self):
        data = _linear(n=500, p=10)
        result = gfi_accept_reject(data.Y, data.X, 1.0, eps=5.0, n_proposals=1_000_000, seed=3)
        assert result.accepted.shape == (0, 10)
        assert result.acceptance_rate == 0.0

    def test_accepted_draws_follow_exact_fiducial(self):
        y, X = _location_data(5, seed=9)
        result = gfi_accept_reject(y, X, 1.0, eps=2.5, n_proposals=100_000, seed=4)
        draws = result.accepted[:, 0]
        assert draws.size > 5000
        fit = ols_fit(y, X)
        sd = np.sqrt(fit.cov_unscaled[0, 0])
        assert abs(draws.mean() - fit.beta[0]) < 4 * sd / np.sqrt(draws.size)
        assert draws.std() == pytest.approx(sd, rel=0.05)

    @pytest.mark.parametrize("norm", ["l2", "rms", "linf"])
    def test_norms(self, norm):
        data = _linear(n=10, p=2)
        result = gfi_accept_reject(data.Y, data.X, 1.0, eps=3.0, norm=norm, n_proposals=2000)
        assert 0.0 <= result.acceptance_rate <= 1.0

    def test_bad_arguments(self):
        data = _linear(n=10, p=2)
        with pytest.raises(DomainError):
            gfi_accept_reject(data.Y, data.X, 1.0, eps=0.0, n_proposals=10)
        with pytest.raises(DomainError):
            gfi_accept_reject(data.Y, data.X, 1.0, norm="l1", n_proposals=10)

    def test_run_baseline_reports_empty_acceptance(self):
        family = LinearKnownSigma(10)
        data = simulate(family, family.default_truth(), 60, 0)
        with pytest.raises(DataError):
            run_baseline("gfi_ar", family, data)


class TestBivariate:
    def test_rho_draws_centered_at_zero(self):
        draws = bivariate_rho_draws(0.0, 100, 1_000_000, make_generator(0))
        assert abs(np.median(draws)) < 0.01
        assert np.all(np.abs(draws) < 1.0)

    def test_rho_domain(self):
        with pytest.raises(DomainError):
            bivariate_rho_draws(1.0, 10, 5, make_generator(0))

    def test_closed_form(self):
        data = simulate(BivariateNormal(), BivariateNormal().default_truth(), 100, 2)
        cds = bivariate_fiducial_closed_form(data.Y, seed=1)
        assert set(cds) == {"mu1", "mu2", "sigma1_sq", "sigma2_sq", "rho"}
        s = data.Y.std(axis=0, ddof=1)
        lo, hi = cds["mu1"].interval(LEVEL)
        assert hi - lo == pytest.approx(2 * stats.t.ppf(0.975, 98) * s[0] / 10)
        r = np.corrcoef(data.Y.T)[0, 1]
        lo, hi = cds["rho"].interval(LEVEL)
        assert -1.0 < lo < r < hi < 1.0

    def test_needs_four_rows(self):
        with pytest.raises(DomainError):
            bivariate_fiducial_closed_form(np.arange(6.0).reshape(3, 2))

    def test_run_baseline_adds_standard_deviations(self):
        family = BivariateNormal()
        data = simulate(family, family.default_truth(), 50, 1)
        result = run_baseline("bivariate_fiducial", family, data)
        lo, hi = result.intervals["sigma1_sq"]
        assert result.intervals["sigma1"] == pytest.approx((np.sqrt(lo), np.sqrt(hi)))


class TestTwoSample:
    def test_welch_df_for_equal_groups(self, rng):
        g1 = rng.standard_normal(30)
        g2 = g1 + 3.0
        assert welch_df(g1, g2) == pytest.approx(58.0)

    def test_identical_groups_center_on_zero(self, rng):
        g = rng.standard_normal(25)
        out = two_sample_tests(g, g.copy(), seed=1)
        for name in ("welch", "hsu_scheffe"):
            lo, hi = out[name].ci
            assert (lo + hi) / 2 == pytest.approx(0.0, abs=1e-12)
            assert not out[name].reject
        lo, hi = out["behrens_fisher_mc"].ci
        assert abs(lo + hi) < 0.05 * (hi - lo)

    def test_hsu_scheffe_is_wider(self, rng):
        out = two_sample_tests(rng.normal(0, 0.5, 12), rng.normal(0, 2.0, 40))
        width = {name: np.diff(res.ci)[0] for name, res in out.items()}
        assert width["hsu_scheffe"] >= width["welch"]
        assert out["hsu_scheffe"].df == 11

    def test_large_shift_rejects(self, rng):
        out = two_sample_tests(rng.standard_normal(50), rng.standard_normal(50) + 5.0)
        assert all(res.reject for res in out.values())

    def test_constant_group(self):
        with pytest.raises(DomainError):
            two_sample_tests(np.ones(5), np.arange(5.0))

    def test_run_baseline_splits_groups(self):
        family = BehrensFisher((20, 30))
        data = simulate(family, family.default_truth(), 50, 3)
        result = run_baseline("welch", family, data)
        assert set(result.intervals) == {"mu_diff"}
        assert result.reject is not None


class TestMediation:
    def test_zero_gamma_hat_never_rejects(self, rng):
        n = 100
        t = rng.standard_normal(n)
        x = rng.standard_normal((n, 2))
        m = rng.standard_normal(n)
        design = np.column_stack([t, x])
        # residualize m on (t, x) so gamma_hat is exactly zero
        m = m - design @ np.linalg.lstsq(design, m, rcond=None)[0]
        y = 0.5 * m + t + rng.standard_normal(n)
        out = mediation_tests(Dataset(Y=np.column_stack([y, m]), X=design))
        assert abs(out["sobel"].statistic) < 1e-8
        assert not out["sobel"].reject
        assert not out["maxp"].reject

    def test_strong_effect_rejects(self):
        data = simulate(Mediation(), mediation_truth(0.5, 0.5), 500, 1)
        out = mediation_tests(data)
        assert out["sobel"].reject and out["maxp"].reject

    def test_run_baseline_returns_decision(self):
        family = Mediation()
        data = simulate(family, mediation_truth(0.0, 0.0), 200, 2)
        result = run_baseline("maxp", family, data)
        assert result.reject in (True, False)
        assert result.intervals == {}


class TestNonlinearAndLogistic:
    def test_nls_recovers_certified_values(self):
        result = nls_fit(gauss2_reference(seed=3))
        se = np.sqrt(np.diag(result.cov))
        assert np.all(np.abs(result.params - GAUSS2_CERTIFIED) < 5 * se)
        assert result.sigma_hat == pytest.approx(2.5, rel=0.15)
        lo, hi = result.intervals["b1"]
        assert lo < result.params[0] < hi

    def test_logistic_mle(self):
        family = LogisticBinary(3)
        data = simulate(family, np.array([0.5, 1.0, -1.0]), 2000, 5)
        intervals = logistic_mle(data)
        for j, truth in enumerate([0.5, 1.0, -1.0]):
            lo, hi = intervals[f"theta{j}"]
            assert lo - 0.2 < truth < hi + 0.2


class TestDispatch:
    def test_unsupported_pair(self):
        family = Gauss2()
        data = gauss2_reference(seed=0)
        with pytest.raises(ConfigError):
            run_baseline("welch", family, data)

    def test_efd_reports_estimates(self):
        family = LinearKnownSigma(3)
        data = simulate(family, family.default_truth(), 50, 0)
        result = run_baseline("efd", family, data)
        assert set(result.intervals) == {"beta0", "beta1", "beta2"}
        np.testing.assert_allclose(
            [result.estimates[f"beta{j}"] for j in range(3)], ols_fit(data.Y, data.X).beta
        )
