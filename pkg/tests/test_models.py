import numpy as np
import pandas as pd
import pytest

from efi.core.errors import ConfigError, DataError, DomainError
from efi.schemas.experiment import FamilyConfig
from efi.services.models import (
    GAUSS2_CERTIFIED,
    BehrensFisher,
    BivariateNormal,
    Dataset,
    Gauss2,
    LinearKnownSigma,
    LinearUnknownSigma,
    LogisticBinary,
    LogisticMulticlass,
    Mediation,
    SSLLogistic,
    analytic_inverse_linear,
    bivariate_from_moments,
    derived_quantities,
    family_truth,
    forward_model,
    gauss2_jacobian,
    gauss2_reference,
    make_family,
    mediation_truth,
    read_csv,
    simulate,
    split_groups,
    write_csv,
)

from tests.helpers import central_difference, relative_error

ALL_FAMILIES = [
    LinearKnownSigma(3),
    LinearUnknownSigma(3),
    Gauss2(),
    BehrensFisher((6, 4)),
    BivariateNormal(),
    Mediation(),
    LogisticBinary(4),
    LogisticMulticlass(3, 3),
    SSLLogistic(3, 0.5),
]


@pytest.mark.parametrize("family", ALL_FAMILIES, ids=lambda f: f.name)
class TestSimulation:
    def test_shapes(self, family):
        dataset = simulate(family, family.default_truth(), 10, seed=3)
        assert dataset.n == 10
        assert dataset.Y.shape == (10, family.y_dim)
        assert dataset.X.shape == (10, family.x_dim)
        assert dataset.truth.Z.shape == (10, family.n_latent)
        family.check_dataset(dataset)

    def test_deterministic_in_seed(self, family):
        a = simulate(family, family.default_truth(), 10, seed=5)
        b = simulate(family, family.default_truth(), 10, seed=5)
        c = simulate(family, family.default_truth(), 10, seed=6)
        np.testing.assert_array_equal(a.Y, b.Y)
        np.testing.assert_array_equal(a.X, b.X)
        assert not np.array_equal(a.truth.Z, c.truth.Z)

    def test_parameterization_round_trip(self, family):
        theta = family.default_truth()
        np.testing.assert_allclose(family.to_natural(family.to_unconstrained(theta)), theta)

    def test_wrong_truth_length(self, family):
        with pytest.raises(DomainError):
            simulate(family, np.zeros(family.d_theta + 1), 5, seed=0)


@pytest.mark.parametrize(
    "family",
    [LinearKnownSigma(3), LinearUnknownSigma(3), Gauss2(), BivariateNormal(), Mediation()],
    ids=lambda f: f.name,
)
def test_simulated_responses_follow_forward_model(family):
    dataset = simulate(family, family.default_truth(), 15, seed=2)
    expected = forward_model(family, dataset.X, dataset.truth.Z, dataset.truth.theta)
    np.testing.assert_allclose(dataset.Y, expected)


@pytest.mark.parametrize(
    "family",
    [LinearKnownSigma(2), LinearUnknownSigma(2), BivariateNormal(), Mediation()],
    ids=lambda f: f.name,
)
def test_predict_jacobians(family, rng):
    dataset = simulate(family, family.default_truth(), 5, seed=1)
    Z = rng.standard_normal((5, family.n_latent))
    Theta = np.tile(family.to_unconstrained(family.default_truth()), (5, 1))
    Theta = Theta + 0.1 * rng.standard_normal(Theta.shape)
    _, J_theta, J_z = family.predict(dataset.X, Z, Theta, dataset.Y)
    for q in range(family.y_dim):
        def along_theta(T, q=q):
            return float(np.sum(family.predict(dataset.X, Z, T, dataset.Y)[0][:, q]))

        def along_z(V, q=q):
            return float(np.sum(family.predict(dataset.X, V, Theta, dataset.Y)[0][:, q]))

        assert relative_error(J_theta[:, q, :], central_difference(along_theta, Theta)) < 1e-6
        assert relative_error(J_z[:, q, :], central_difference(along_z, Z)) < 1e-6


def test_gauss2_jacobian(rng):
    x = np.arange(1.0, 11.0)
    b = GAUSS2_CERTIFIED + rng.normal(0.0, 0.01, 8)
    B = np.tile(b, (x.size, 1))

    def curve_sum(params):
        return float(np.sum(Gauss2().forward_model(x[:, None], np.zeros(x.size), params)))

    numeric = central_difference(curve_sum, b, h=1e-5)
    assert relative_error(gauss2_jacobian(x, B).sum(axis=0), numeric) < 1e-6


def test_gauss2_reference_uses_certified_values():
    dataset = gauss2_reference(seed=1)
    assert dataset.n == 250
    np.testing.assert_array_equal(dataset.X[:, 0], np.arange(1.0, 251.0))
    np.testing.assert_array_equal(dataset.truth.theta, GAUSS2_CERTIFIED)


class TestLinear:
    def test_analytic_inverse_recovers_truth(self):
        family = LinearKnownSigma(4, sigma=0.5)
        dataset = simulate(family, family.default_truth(), 30, seed=8)
        beta = analytic_inverse_linear(dataset.Y, dataset.X, dataset.truth.Z, 0.5)
        np.testing.assert_allclose(beta, dataset.truth.theta, atol=1e-10)

    def test_analytic_inverse_singular(self):
        X = np.ones((5, 2))
        with pytest.raises(DomainError):
            analytic_inverse_linear(np.zeros(5), X, np.zeros(5), 1.0)

    def test_outliers_shift_tail_errors(self):
        family = LinearKnownSigma(2, outlier_fraction=0.2, outlier_shift=50.0)
        dataset = simulate(family, family.default_truth(), 10, seed=4)
        assert np.all(dataset.truth.Z[-2:, 0] > 40.0)
        assert np.all(np.abs(dataset.truth.Z[:-2, 0]) < 10.0)

    def test_sigma_squared_is_derived(self):
        out = derived_quantities(LinearUnknownSigma(2), np.array([0.0, 1.0, 1.5]))
        assert out["sigma_sq"] == pytest.approx(2.25)

    def test_report_groups(self):
        targets = LinearKnownSigma(3).report_targets(np.array([1.0, 0.0, 2.0]))
        assert [group for _, group, _ in targets] == ["signal", "noise", "signal"]


class TestTwoGroupAndBivariate:
    def test_split_groups(self):
        family = BehrensFisher((6, 4))
        dataset = simulate(family, family.default_truth(), 10, seed=0)
        g1, g2 = split_groups(dataset)
        assert (g1.n, g2.n) == (6, 4)
        assert g1.X.shape == (6, 0)
        np.testing.assert_array_equal(g2.truth.theta, family.default_truth()[2:])

    def test_group_sizes_must_sum_to_n(self):
        with pytest.raises(DomainError):
            simulate(BehrensFisher((6, 4)), BehrensFisher().default_truth(), 11, seed=0)

    def test_split_needs_two_per_group(self):
        dataset = Dataset(Y=np.arange(4.0), X=np.array([[1.0], [1.0], [1.0], [2.0]]))
        with pytest.raises(DataError):
            split_groups(dataset)

    def test_mean_difference(self):
        out = derived_quantities(BehrensFisher(), np.array([1.5, 1.0, 0.25, 2.0]))
        assert out["mu_diff"] == pytest.approx(1.25)

    @pytest.mark.parametrize("rho", [-0.7, 0.0, 0.5])
    def test_moments_round_trip(self, rho):
        theta = bivariate_from_moments(1.0, -1.0, 2.0, 0.5, rho)
        out = derived_quantities(BivariateNormal(), theta)
        assert out["sigma1"] == pytest.approx(2.0)
        assert out["sigma2"] == pytest.approx(0.5)
        assert out["rho"] == pytest.approx(rho, abs=1e-12)
        assert out["sigma2_sq"] == pytest.approx(0.25)

    def test_moments_domain(self):
        with pytest.raises(DomainError):
            bivariate_from_moments(0.0, 0.0, 1.0, 1.0, 1.0)

    def test_sample_covariance(self):
        theta = bivariate_from_moments(0.0, 0.0, 1.0, 2.0, 0.6)
        dataset = simulate(BivariateNormal(), theta, 20000, seed=2)
        cov = np.cov(dataset.Y.T)
        np.testing.assert_allclose(cov, [[1.0, 1.2], [1.2, 4.0]], atol=0.15)


class TestMediation:
    def test_truth_layout(self):
        theta = mediation_truth(0.2, 0.3)
        assert Mediation().param_names[1] == "beta" and theta[1] == 0.2
        assert Mediation().param_names[5] == "gamma" and theta[5] == 0.3
        assert derived_quantities(Mediation(), theta)["mediation_effect"] == pytest.approx(0.06)

    def test_predict_needs_observed_mediator(self):
        family = Mediation()
        with pytest.raises(DomainError):
            family.predict(np.zeros((2, 3)), np.zeros((2, 2)), np.zeros((2, 9)))


class TestClassification:
    def test_logistic_labels(self):
        family = LogisticBinary(3)
        dataset = simulate(family, family.default_truth(), 50, seed=1)
        assert set(np.unique(dataset.Y)) <= {0.0, 1.0}
        np.testing.assert_array_equal(
            dataset.Y, family.forward_model(dataset.X, dataset.truth.Z, dataset.truth.theta)
        )

    def test_logistic_rejects_other_labels(self):
        with pytest.raises(DataError):
            LogisticBinary(1).check_dataset(Dataset(Y=[0.0, 2.0], X=[[1.0], [1.0]]))

    def test_multiclass_labels(self):
        family = LogisticMulticlass(3, 4)
        dataset = simulate(family, family.default_truth(), 100, seed=1)
        assert set(np.unique(dataset.Y)) <= {0.0, 1.0, 2.0, 3.0}
        assert len(np.unique(dataset.Y)) > 1
        theta = dataset.truth.theta
        np.testing.assert_array_equal(dataset.Y, family.forward_model(dataset.X, dataset.truth.Z, theta))
        own = family.class_scores(dataset.X, theta)[np.arange(100), dataset.Y[:, 0].astype(int)]
        assert np.all(dataset.truth.Z[:, 0] <= own)

    def test_ssl_latent_sign_matches_hidden_label(self):
        family = SSLLogistic(3, 0.5)
        dataset = simulate(family, family.default_truth(), 40, seed=2)
        v = dataset.truth.Z[:, 1]
        np.testing.assert_array_equal(v > 0, dataset.truth.labels == 1.0)

    def test_ssl_mask(self):
        family = SSLLogistic(3, 0.3)
        dataset = simulate(family, family.default_truth(), 20, seed=0)
        assert dataset.label_mask.sum() == 6
        assert np.all(dataset.Y[dataset.label_mask, 0] == 0.0)
        labelled = ~dataset.label_mask
        np.testing.assert_array_equal(dataset.Y[labelled, 0], dataset.truth.labels[labelled])

    def test_ssl_soft_labels(self):
        family = SSLLogistic(2, 0.5)
        dataset = simulate(family, family.default_truth(), 10, seed=0)
        Z = np.zeros((10, 2))
        Z[:, 1] = 5.0
        inputs = family.build_inputs(dataset, Z, tau=0.1)
        assert inputs.shape == (10, family.input_width)
        np.testing.assert_allclose(inputs[dataset.label_mask, 0], 1.0)

    def test_non_ssl_rejects_mask(self):
        dataset = Dataset(Y=[0.0, 1.0], X=[[1.0], [1.0]], label_mask=[True, False])
        with pytest.raises(DataError):
            LogisticBinary(1).check_dataset(dataset)


class TestFactory:
    def test_make_family(self):
        family = make_family(FamilyConfig(name="linear_known_sigma", p=4, sigma=2.0))
        assert isinstance(family, LinearKnownSigma)
        assert family.sigma == 2.0 and family.p == 4

    def test_family_truth_default_and_override(self):
        cfg = FamilyConfig(name="logistic_binary", p=3)
        family = make_family(cfg)
        np.testing.assert_array_equal(family_truth(family, cfg), family.default_truth())
        cfg = FamilyConfig(name="logistic_binary", p=3, truth=[0.5, 0.5, 0.5])
        np.testing.assert_array_equal(family_truth(family, cfg), [0.5, 0.5, 0.5])

    def test_bad_truth_is_config_error(self):
        cfg = FamilyConfig(name="mediation", truth=[1.0, 2.0])
        with pytest.raises(ConfigError):
            family_truth(make_family(cfg), cfg)

    def test_negative_n(self):
        with pytest.raises(DomainError):
            simulate(LinearKnownSigma(2), np.ones(2), -1, seed=0)

    def test_empty_dataset(self):
        dataset = simulate(LinearKnownSigma(2), np.ones(2), 0, seed=0)
        assert dataset.n == 0


class TestCsv:
    @pytest.mark.parametrize(
        "family", [LinearKnownSigma(3), BivariateNormal(), Mediation(), SSLLogistic(2, 0.5)],
        ids=lambda f: f.name,
    )
    def test_round_trip(self, family, tmp_path):
        dataset = simulate(family, family.default_truth(), 12, seed=1)
        path = tmp_path / "data.csv"
        write_csv(dataset, path)
        loaded = read_csv(path, family)
        np.testing.assert_array_equal(loaded.Y, dataset.Y)
        np.testing.assert_array_equal(loaded.X, dataset.X)
        if dataset.label_mask is not None:
            np.testing.assert_array_equal(loaded.label_mask, dataset.label_mask)

    def test_header(self, tmp_path):
        dataset = simulate(Mediation(), Mediation().default_truth(), 3, seed=1)
        path = tmp_path / "m.csv"
        write_csv(dataset, path)
        assert list(pd.read_csv(path).columns) == ["y", "y2", "x1", "x2", "x3"]

    def test_unknown_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y,x1,z\n1,2,3\n")
        with pytest.raises(DataError):
            read_csv(path)

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y,x1\n1,abc\n")
        with pytest.raises(DataError):
            read_csv(path)

    def test_missing_response(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y,x1\n,1\n2,1\n")
        with pytest.raises(DataError):
            read_csv(path)

    def test_family_mismatch(self, tmp_path):
        dataset = simulate(LinearKnownSigma(3), np.ones(3), 5, seed=0)
        path = tmp_path / "d.csv"
        write_csv(dataset, path)
        with pytest.raises(DataError):
            read_csv(path, LinearKnownSigma(2))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_csv(tmp_path / "absent.csv")
