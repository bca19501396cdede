import json

import numpy as np
import pytest
from hypothesis import given, settings

from biointeract.effects import (
    ContrastSpec,
    EffectError,
    additivity_verdict,
    cell_contrast,
    compute_ic,
    compute_reri,
    effect_report,
    homogeneity_forms,
    interaction_contrast,
    is_additive,
    is_multiplicative,
    multiplicativity_test,
    render_table,
    reri_from_table,
    reri_gradient,
    reri_value,
)
from biointeract.glm import ConvergenceFailure, ModelSpec, fit
from biointeract.tabular import CELL_KEYS, ExposureTable

from conftest import interior_tables, observed, random_interior_table

N = 100000
ADDITIVE = ExposureTable.from_counts({(0, 0): (10000, N), (1, 0): (20000, N), (0, 1): (30000, N), (1, 1): (40000, N)})
MULTIPLICATIVE = ExposureTable.from_counts({(0, 0): (1000, N), (1, 0): (2000, N), (0, 1): (3000, N), (1, 1): (6000, N)})
HOMOGENEOUS = ExposureTable.from_counts({k: (50, 1000) for k in CELL_KEYS})


def central_difference(f, beta, h=1e-5):
    g = np.zeros_like(beta)
    for j in range(len(beta)):
        up, dn = beta.copy(), beta.copy()
        up[j] += h
        dn[j] -= h
        g[j] = (f(up) - f(dn)) / (2 * h)
    return g


class TestInteractionContrast:
    def test_hammond(self, hammond):
        w = compute_ic(fit(hammond)).scaled(1e5)
        assert w.estimate == pytest.approx(437.557, abs=5e-4)
        assert (w.ci_low, w.ci_high) == (pytest.approx(213.768, abs=5e-4), pytest.approx(661.345, abs=5e-4))
        assert w.p_two_sided == pytest.approx(0.00012702, abs=1e-6)

    def test_additive_table(self):
        assert compute_ic(fit(ADDITIVE)).estimate == pytest.approx(0, abs=1e-12)
        assert is_additive(ADDITIVE)
        assert interaction_contrast(ADDITIVE) == pytest.approx(0, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(interior_tables())
    def test_homogeneity_forms(self, table):
        ic = interaction_contrast(table)
        for v in homogeneity_forms(table).values():
            assert v == pytest.approx(ic, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(interior_tables())
    def test_contrast_spec_equivalence(self, table):
        r = fit(table)
        a = compute_ic(r)
        b = cell_contrast(r, ContrastSpec())
        assert a.estimate == r.beta[3]
        assert b.estimate == a.estimate
        assert b.p_two_sided == a.p_two_sided
        assert a.estimate == pytest.approx(interaction_contrast(table), abs=1e-12)

    def test_contrast_spec_length(self):
        with pytest.raises(ValueError):
            ContrastSpec((1, -1, 1))

    def test_other_contrast(self, hammond):
        r = fit(hammond)
        w = cell_contrast(r, ContrastSpec((1, 0, 0, -1)))
        assert w.estimate == pytest.approx(hammond.risk(1, 1) - hammond.risk(0, 0), abs=1e-15)

    @pytest.mark.parametrize("link", ["log", "logit"])
    def test_rejects_link_scale(self, hammond, link):
        with pytest.raises(EffectError):
            compute_ic(fit(hammond, ModelSpec(link)))

    @pytest.mark.parametrize("spec", [ModelSpec("identity", "poisson"), ModelSpec("identity", estimation="ols")])
    def test_identity_variants(self, hammond, spec):
        assert compute_ic(fit(hammond, spec), "robust").estimate == pytest.approx(fit(hammond).beta[3], abs=1e-12)


class TestReri:
    def test_hammond_log(self, hammond):
        r = compute_reri(fit(hammond, ModelSpec("log")))
        assert r.estimate == pytest.approx(38.7, abs=0.1)
        assert not r.approximation and r.source_model == "binomial-log"
        assert r.wald.ci_low < r.estimate < r.wald.ci_high

    def test_from_table(self, hammond):
        oracle = (601.926 - 54.619 - 121.048) / 11.298 + 1
        assert reri_from_table(hammond) == pytest.approx(oracle, abs=5e-3)
        model = compute_reri(fit(hammond, ModelSpec("log"))).estimate
        assert reri_from_table(hammond) == pytest.approx(model, rel=1e-8)

    def test_additive_rrs(self):
        assert reri_from_table(ADDITIVE) == pytest.approx(0, abs=1e-12)
        assert compute_reri(fit(ADDITIVE, ModelSpec("log"))).estimate == pytest.approx(0, abs=1e-10)

    def test_logit_needs_flag(self, hammond):
        lg = fit(hammond, ModelSpec("logit"))
        with pytest.raises(EffectError):
            compute_reri(lg)
        r = compute_reri(lg, allow_odds_ratio=True)
        assert r.approximation
        p = observed(hammond)
        oracle = (p[3] - p[2] - p[1]) / p[0] + 1
        assert r.estimate == pytest.approx(oracle, rel=0.01)

    def test_zero_reference(self):
        t = ExposureTable.from_counts({(0, 0): (0, 10), (1, 0): (1, 10), (0, 1): (1, 10), (1, 1): (1, 10)})
        with pytest.raises(EffectError, match="reference risk zero"):
            reri_from_table(t)

    def test_rejects_identity(self, hammond):
        with pytest.raises(EffectError):
            compute_reri(fit(hammond))

    def test_gradient_hammond(self, hammond):
        beta = fit(hammond, ModelSpec("log")).beta
        np.testing.assert_allclose(reri_gradient(beta), central_difference(reri_value, beta), rtol=1e-6, atol=1e-9)

    def test_gradient_random(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            t = random_interior_table(rng)
            for link in ("log", "logit"):
                beta = fit(t, ModelSpec(link)).beta
                np.testing.assert_allclose(reri_gradient(beta), central_difference(reri_value, beta),
                                           rtol=1e-6, atol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(interior_tables())
    def test_reri_is_ic_over_baseline(self, table):
        assert reri_from_table(table) == pytest.approx(interaction_contrast(table) / table.risk(0, 0), rel=1e-10,
                                                       abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(interior_tables())
    def test_label_symmetry(self, table):
        s = table.swapped()
        assert interaction_contrast(s) == pytest.approx(interaction_contrast(table), abs=1e-14)
        assert reri_from_table(s) == pytest.approx(reri_from_table(table), rel=1e-12)
        # swapping permutes the design; IRLS weights can span 1e5, so solve roundoff reaches ~1e-12
        assert compute_ic(fit(s)).estimate == pytest.approx(compute_ic(fit(table)).estimate, abs=1e-10)


class TestMultiplicativity:
    @pytest.mark.parametrize("link,p", [("log", 0.9637), ("logit", 0.9581)])
    def test_hammond(self, hammond, link, p):
        m = multiplicativity_test(fit(hammond, ModelSpec(link)))
        assert m.wald.p_two_sided == pytest.approx(p, abs=5e-5)
        assert m.ratio_of_ratios == pytest.approx(np.exp(m.wald.estimate))

    def test_multiplicative_table(self):
        assert is_multiplicative(MULTIPLICATIVE)
        m = multiplicativity_test(fit(MULTIPLICATIVE, ModelSpec("log")))
        assert m.wald.estimate == pytest.approx(0, abs=1e-10)
        assert m.wald.p_two_sided == pytest.approx(1, abs=1e-9)

    def test_rejects_identity(self, hammond):
        with pytest.raises(EffectError):
            multiplicativity_test(fit(hammond))


class TestReport:
    def test_hammond_verdict(self, hammond):
        report = effect_report(hammond)
        v = additivity_verdict(report, 0.05)
        assert v.departure_from_additivity is True
        assert v.departure_from_multiplicativity == {"binomial-log": False, "binomial-logit": False}
        assert report.reri.estimate == pytest.approx(38.7, abs=0.1)
        assert report.strategy == "binomial_identity"

    def test_homogeneous(self):
        report = effect_report(HOMOGENEOUS)
        assert report.ic.estimate == pytest.approx(0, abs=1e-12)
        assert report.reri.estimate == pytest.approx(0, abs=1e-10)
        v = additivity_verdict(report)
        assert not v.departure_from_additivity
        assert not any(v.departure_from_multiplicativity.values())

    def test_multiplicative_large_n(self):
        report = effect_report(MULTIPLICATIVE)
        assert report.ic.estimate == pytest.approx(2 * 0.01, abs=1e-12)
        v = additivity_verdict(report)
        assert v.departure_from_additivity
        assert not any(v.departure_from_multiplicativity.values())

    def test_ic_matches_predicted_cells(self, hammond):
        r = effect_report(hammond)
        p = {k: w.estimate for k, w in r.cell_risks.items()}
        assert r.ic.estimate == pytest.approx(p[1, 1] - p[1, 0] - p[0, 1] + p[0, 0], abs=1e-12)

    def test_scale_only_changes_display(self, hammond):
        a = effect_report(hammond, scale=1.0).to_dict()
        b = effect_report(hammond).to_dict()
        assert a["ic"]["p"] == b["ic"]["p"] and a["ic"]["z"] == b["ic"]["z"]
        assert b["ic"]["estimate"] == pytest.approx(a["ic"]["estimate"] * 1e5)

    def test_json_shape(self, hammond):
        d = json.loads(effect_report(hammond).to_json())
        assert d["schema_version"] == "1.0" and d["scale"] == 100000.0
        assert set(d["cell_risks"]) == {"p00", "p10", "p01", "p11"}
        assert d["ic"]["estimate"] == pytest.approx(437.557, abs=5e-4)
        assert d["reri"]["ratio_type"] == "relative_risk"

    def test_render_table(self, hammond):
        text = render_table(effect_report(hammond))
        assert "437.557" in text and "213.768" in text and "601.926" in text

    def test_zero_cell_report(self):
        t = ExposureTable.from_counts({(0, 0): (0, 50), (1, 0): (10, 50), (0, 1): (20, 50), (1, 1): (30, 50)})
        report = effect_report(t)
        assert report.reri is None and report.failures["binomial-log"] == "separation"
        assert report.multiplicativity["binomial-log"] is None


class TestFallback:
    crafted = ExposureTable.from_counts({(0, 0): (5, 50), (1, 0): (10, 50), (0, 1): (20, 50), (1, 1): (50, 50)})

    def test_without_fallback_fails(self):
        with pytest.raises(ConvergenceFailure):
            effect_report(self.crafted, max_iterations=5)

    def test_ladder(self):
        messages = []
        report = effect_report(self.crafted, max_iterations=5, fallback=True, log=messages.append)
        assert report.strategy == "poisson_robust" and report.covariance == "robust"
        p = observed(self.crafted)
        assert report.ic.estimate == pytest.approx(p[3] - p[1] - p[2] + p[0], abs=1e-12)
        assert report.risk_differences["x_effect_z0"].estimate == pytest.approx(p[1] - p[0], abs=1e-12)
        assert messages and "binomial_identity" in messages[0]
