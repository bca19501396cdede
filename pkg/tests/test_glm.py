import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from scipy.stats import binom, norm

from biointeract import _families as fam
from biointeract.glm import (
    ConvergenceFailure,
    ModelSpec,
    SingularDesignError,
    cell_design,
    design_matrix,
    deviance,
    fit,
    predict_cells,
    score,
)
from biointeract.tabular import CELL_KEYS, ExposureTable, IndividualRecord, expand_to_records

from conftest import interior_tables, observed

STRATEGIES = {
    "identity-binomial": ModelSpec("identity", "binomial"),
    "log-binomial": ModelSpec("log", "binomial"),
    "logit-binomial": ModelSpec("logit", "binomial"),
    "identity-poisson": ModelSpec("identity", "poisson"),
    "ols": ModelSpec("identity", estimation="ols"),
}


def _statsmodels_fit(table, link, interaction=False):
    """Independent fit of the same grouped-binomial model."""
    X = cell_design(interaction)
    ev = np.array([table[k].events for k in CELL_KEYS], float)
    n = np.array([table[k].total for k in CELL_KEYS], float)
    links = {"log": sm.families.links.Log(), "logit": sm.families.links.Logit(),
             "identity": sm.families.links.Identity()}
    model = sm.GLM(np.column_stack([ev, n - ev]), X, family=sm.families.Binomial(links[link]))
    return model.fit(tol=1e-14, maxiter=200)


class TestModelSpec:
    def test_defaults(self):
        s = ModelSpec()
        assert (s.link, s.distribution, s.estimation) == ("identity", "binomial", "mle_irls")
        assert (s.max_iterations, s.tolerance, s.step_halving_max) == (100, 1e-10, 30)

    @pytest.mark.parametrize("kwargs", [
        {"link": "probit"},
        {"distribution": "gamma"},
        {"estimation": "ols", "link": "log"},
        {"link": "logit", "distribution": "poisson"},
        {"max_iterations": 0},
        {"tolerance": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelSpec(**kwargs)


class TestDesign:
    def test_columns(self, hammond):
        dm = design_matrix(hammond)
        np.testing.assert_array_equal(dm.X[:, 3], dm.X[:, 1] * dm.X[:, 2])
        assert np.linalg.matrix_rank(dm.X) == 4

    def test_missing_cell_rejected(self):
        records = [IndividualRecord(0, 0, 1), IndividualRecord(1, 0, 0), IndividualRecord(0, 1, 1)]
        with pytest.raises(SingularDesignError):
            fit(records)


class TestHammondFits:
    def test_identity_coefficients(self, hammond):
        r = fit(hammond, ModelSpec("identity"))
        np.testing.assert_allclose(r.beta * 1e5, [11.298, 109.750, 43.322, 437.557], atol=1e-3)
        assert r.converged and not r.boundary_flag

    @pytest.mark.parametrize("link,p", [("log", 0.9637), ("logit", 0.9581)])
    def test_product_term_p(self, hammond, link, p):
        r = fit(hammond, ModelSpec(link))
        z = r.beta[3] / np.sqrt(r.cov_model[3, 3])
        assert 2 * norm.sf(abs(z)) == pytest.approx(p, abs=5e-5)

    def test_poisson_matches_binomial(self, hammond):
        b = fit(hammond, STRATEGIES["identity-binomial"]).beta
        p = fit(hammond, STRATEGIES["identity-poisson"]).beta
        np.testing.assert_allclose(p, b, atol=1e-8)

    def test_ols_on_records_matches(self, hammond):
        records = list(expand_to_records(hammond))
        o = fit(records, STRATEGIES["ols"]).beta
        p = observed(hammond)
        oracle = np.array([p[0], p[1] - p[0], p[2] - p[0], p[3] - p[1] - p[2] + p[0]])
        np.testing.assert_allclose(o, oracle, atol=1e-10)
        np.testing.assert_allclose(o, fit(hammond).beta, atol=1e-10)

    @pytest.mark.parametrize("name", list(STRATEGIES))
    def test_converges_quickly(self, hammond, name):
        assert fit(hammond, STRATEGIES[name]).iterations < 10

    @pytest.mark.parametrize("link", ["identity", "log", "logit"])
    def test_records_match_table(self, hammond, link):
        records = list(expand_to_records(hammond))
        a = fit(hammond, ModelSpec(link))
        b = fit(records, ModelSpec(link))
        np.testing.assert_allclose(b.beta, a.beta, rtol=0, atol=1e-12)
        np.testing.assert_allclose(b.cov_robust, a.cov_robust, rtol=1e-12)

    @pytest.mark.parametrize("link", ["identity", "log", "logit"])
    def test_record_rows_give_same_covariances(self, hammond, link):
        # the covariance code accumulated over 91k uncollapsed rows
        from biointeract.variance import model_covariance, robust_covariance

        r = fit(hammond, ModelSpec(link))
        dm = design_matrix(list(expand_to_records(hammond)))
        assert dm.X.shape[0] == hammond.n
        np.testing.assert_allclose(robust_covariance(r.beta, dm, r.spec), r.cov_robust, rtol=1e-9)
        np.testing.assert_allclose(model_covariance(r.beta, dm, r.spec), r.cov_model, rtol=1e-9)

    def test_predictions_per_100k(self, hammond):
        pred = predict_cells(fit(hammond)).as_dict()
        expected = {(0, 0): 11.298, (1, 0): 121.048, (0, 1): 54.619, (1, 1): 601.926}
        for k, v in expected.items():
            assert pred[k] * 1e5 == pytest.approx(v, abs=5e-4)

    def test_logit_predictions_equal_observed(self, hammond):
        np.testing.assert_allclose(predict_cells(fit(hammond, ModelSpec("logit"))).response,
                                   observed(hammond), atol=1e-8)

    def test_link_coherence(self, hammond):
        p = observed(hammond)
        odds = p / (1 - p)
        lg = fit(hammond, ModelSpec("logit"))
        assert np.exp(lg.beta[3]) == pytest.approx(odds[3] * odds[0] / (odds[1] * odds[2]), rel=1e-8)
        lo = fit(hammond, ModelSpec("log"))
        assert np.exp(lo.beta[1]) == pytest.approx(p[1] / p[0], rel=1e-8)
        assert np.exp(lo.beta[2]) == pytest.approx(p[2] / p[0], rel=1e-8)

    @pytest.mark.parametrize("name", [n for n in STRATEGIES if n != "ols"])
    def test_saturated_deviance_zero(self, hammond, name):
        r = fit(hammond, STRATEGIES[name])
        assert abs(deviance(r, hammond)) < 1e-8

    def test_ols_deviance_is_rss(self, hammond):
        r = fit(hammond, STRATEGIES["ols"])
        p = observed(hammond)
        n = np.array([hammond[k].total for k in CELL_KEYS])
        assert deviance(r, hammond) == pytest.approx(np.sum(n * p * (1 - p)), rel=1e-10)


class TestReducedModel:
    def test_identity_reduced_positive(self, hammond):
        r = fit(hammond, ModelSpec("identity"), interaction=False)
        assert r.beta.shape == (3,)
        assert deviance(r, hammond) > 0

    def test_log_reduced_deviance_against_likelihood(self, hammond):
        red = fit(hammond, ModelSpec("log"), interaction=False)
        full = fit(hammond, ModelSpec("log"))
        ev = np.array([hammond[k].events for k in CELL_KEYS])
        n = np.array([hammond[k].total for k in CELL_KEYS])

        def loglik(mu):
            return binom.logpmf(ev, n, mu).sum()

        lr = 2 * (loglik(predict_cells(full).response) - loglik(predict_cells(red).response))
        assert deviance(red, hammond) == pytest.approx(lr, rel=1e-6)
        wald_chi2 = full.beta[3] ** 2 / full.cov_model[3, 3]
        assert deviance(red, hammond) == pytest.approx(wald_chi2, rel=0.2)
        assert 0.001 < wald_chi2 < 0.003

    @pytest.mark.parametrize("link", ["log", "logit", "identity"])
    def test_matches_statsmodels(self, hammond, link):
        ours = fit(hammond, ModelSpec(link), interaction=False)
        ref = _statsmodels_fit(hammond, link)
        # identity-link Fisher scoring converges linearly; the deviance-change rule stops it at ~1e-5
        rtol = 1e-4 if link == "identity" else 1e-6
        np.testing.assert_allclose(ours.beta, ref.params, rtol=rtol, atol=1e-12)
        np.testing.assert_allclose(ours.cov_model, ref.cov_params(), rtol=10 * rtol, atol=1e-16)

    @pytest.mark.parametrize("link", ["log", "logit", "identity"])
    def test_score_zero_and_monotone(self, hammond, link):
        r = fit(hammond, ModelSpec(link), interaction=False)
        assert np.max(np.abs(score(r, hammond))) / hammond.n < 1e-6
        assert all(b <= a + 1e-12 for a, b in zip(r.deviance_history, r.deviance_history[1:]))


@settings(max_examples=60, deadline=None)
@given(interior_tables())
def test_saturated_fits_reproduce_proportions(table):
    p = observed(table)
    for name, spec in STRATEGIES.items():
        r = fit(table, spec)
        np.testing.assert_allclose(predict_cells(r).response, p, atol=1e-8, err_msg=name)
        assert np.max(np.abs(score(r, table))) / table.n < 1e-6


@settings(max_examples=40, deadline=None)
@given(interior_tables(max_total=200))
def test_iterates_stay_feasible(table):
    for link in ("identity", "log", "logit"):
        try:
            r = fit(table, ModelSpec(link), interaction=False)
        except ConvergenceFailure as exc:
            # additive identity/log models can have their MLE on the boundary
            assert link != "logit" and exc.reason in ("max_iterations", "boundary_stall")
            continue
        for b in r.beta_history:
            mu = fam.linkinv(link, design_matrix(table, False).X @ b)
            assert np.all((mu >= 1e-12) & (mu <= 1 - 1e-12))
        assert all(b <= a + 1e-9 for a, b in zip(r.deviance_history, r.deviance_history[1:]))


@pytest.mark.parametrize("c", [0.01, 0.3, 0.77])
@pytest.mark.parametrize("link", ["identity", "log", "logit"])
def test_homogeneous_table(c, link):
    n = 1000
    t = ExposureTable.from_counts({k: (int(c * n), n) for k in CELL_KEYS})
    r = fit(t, ModelSpec(link))
    np.testing.assert_allclose(r.beta[1:], 0, atol=1e-10)
    np.testing.assert_allclose(predict_cells(r).response, c, atol=1e-12)
    if link == "identity":
        assert r.beta[0] == pytest.approx(c)


class TestBoundaries:
    zero = ExposureTable.from_counts({(0, 0): (0, 50), (1, 0): (10, 50), (0, 1): (20, 50), (1, 1): (30, 50)})
    full = ExposureTable.from_counts({(0, 0): (5, 50), (1, 0): (10, 50), (0, 1): (20, 50), (1, 1): (50, 50)})

    def test_log_zero_cell_is_separation(self):
        with pytest.raises(ConvergenceFailure) as info:
            fit(self.zero, ModelSpec("log"))
        assert info.value.reason == "separation"
        assert info.value.to_dict()["reason"] == "separation"

    @pytest.mark.parametrize("link", ["identity", "logit"])
    def test_zero_cell_proceeds_with_flag(self, link):
        r = fit(self.zero, ModelSpec(link))
        assert r.converged and r.boundary_flag
        np.testing.assert_allclose(predict_cells(r).response, observed(self.zero), atol=1e-8)

    def test_full_cell_identity(self):
        r = fit(self.full, ModelSpec("identity"))
        assert r.boundary_flag
        np.testing.assert_allclose(predict_cells(r).response, observed(self.full), atol=1e-5)

    def test_iteration_cap(self):
        with pytest.raises(ConvergenceFailure) as info:
            fit(self.full, ModelSpec("identity", max_iterations=5))
        assert info.value.reason == "max_iterations"
        assert info.value.last_beta is not None

    def test_poisson_identity_handles_certain_cell(self):
        r = fit(self.full, ModelSpec("identity", "poisson", max_iterations=5))
        np.testing.assert_allclose(r.beta, [0.1, 0.1, 0.3, 0.5], atol=1e-12)
