import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import expit

from blamebench.core import ValidationError
from blamebench.synthdata import (ClusterSpec, LINEAR_2X0_MINUS_X1, PolynomialSpec, Term,
                                  TRANSFORMS, generate, generate_gaussian_clusters,
                                  generate_nonlinear_additive, generate_orange_skin,
                                  generate_seneca_rc, generate_switch, generate_xor,
                                  nonlinear_additive_score, orange_skin_score, switch_score,
                                  xor_score)

CHEN = [(generate_xor, xor_score, [1, 1] + [0] * 8),
        (generate_orange_skin, orange_skin_score, [1] * 4 + [0] * 6),
        (generate_nonlinear_additive, nonlinear_additive_score, [1] * 4 + [0] * 6)]


def label_law_pvalue(score, y, bins=10):
    """Chi-square over score deciles: observed positives vs sum of sigmoid(score)."""
    p = expit(score)
    edges = np.quantile(score, np.linspace(0, 1, bins + 1))
    which = np.clip(np.searchsorted(edges, score, side="right") - 1, 0, bins - 1)
    chi2, dof = 0.0, 0
    for b in range(bins):
        sel = which == b
        var = np.sum(p[sel] * (1 - p[sel]))
        if var < 1e-9:
            continue
        chi2 += (y[sel].sum() - p[sel].sum()) ** 2 / var
        dof += 1
    return stats.chi2.sf(chi2, dof)


class TestChenGenerators:
    @pytest.mark.parametrize("gen,score,mask", CHEN)
    def test_gt_rows_constant(self, gen, score, mask):
        ds = gen(200, seed=1)
        assert ds.n_features == 10
        assert np.all(ds.ground_truth == np.array(mask, dtype=float))

    @pytest.mark.parametrize("gen,score,mask", CHEN)
    def test_label_law_fidelity(self, gen, score, mask):
        ds = gen(100_000, seed=11)
        assert label_law_pvalue(score(ds.features), ds.labels) > 1e-3

    def test_xor_marginal_balanced(self):
        ds = generate_xor(1000, seed=5)
        assert 0.4 <= ds.labels.mean() <= 0.6

    def test_xor_zero_rows(self):
        with pytest.raises(ValidationError):
            generate_xor(0, seed=1)

    def test_orange_skin_feature_5_never_important(self):
        ds = generate_orange_skin(50, seed=2)
        assert np.all(ds.ground_truth[:, 4] == 0)

    def test_orange_skin_single_row(self):
        ds = generate_orange_skin(1, seed=2)
        assert ds.features.shape == (1, 10)

    def test_nonlinear_additive_deterministic(self):
        a = generate_nonlinear_additive(100, seed=9)
        b = generate_nonlinear_additive(100, seed=9)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_nonlinear_additive_score_formula(self):
        X = np.zeros((1, 10))
        X[0, :4] = [0.3, -1.2, 0.7, 0.4]
        expected = -100 * np.sin(0.6) + 2 * 1.2 + 0.7 + np.exp(-0.4)
        assert nonlinear_additive_score(X)[0] == pytest.approx(expected, abs=1e-12)


class TestSwitch:
    def test_gt_follows_component(self):
        ds = generate_switch(2000, seed=3)
        comp = np.array(ds.provenance["component"])
        on = ds.ground_truth[comp == 1]
        off = ds.ground_truth[comp == 0]
        assert np.all(on[:, 1:5] == 1) and np.all(on[:, 5:9] == 0)
        assert np.all(off[:, 5:9] == 1) and np.all(off[:, 1:5] == 0)
        assert np.all(ds.ground_truth[:, 0] == 1)
        assert len(np.unique(ds.ground_truth, axis=0)) == 2

    def test_components_centered_at_plus_minus_three(self):
        ds = generate_switch(20_000, seed=3)
        comp = np.array(ds.provenance["component"])
        assert ds.features[comp == 1, 0].mean() == pytest.approx(3.0, abs=0.05)
        assert ds.features[comp == 0, 0].mean() == pytest.approx(-3.0, abs=0.05)

    def test_strict_masks(self):
        ds = generate_switch(500, seed=3, mark_switch=False)
        assert np.all(ds.ground_truth[:, 0] == 0)
        assert set(map(tuple, ds.ground_truth)) == {
            (0, 1, 1, 1, 1, 0, 0, 0, 0, 0), (0, 0, 0, 0, 0, 1, 1, 1, 1, 0)}

    def test_label_law(self):
        ds = generate_switch(100_000, seed=4)
        comp = np.array(ds.provenance["component"])
        assert label_law_pvalue(switch_score(ds.features, comp), ds.labels) > 1e-3


class TestPolynomial:
    def test_linear_gradient_constant(self):
        for x in np.random.default_rng(0).normal(size=(5, 2)):
            np.testing.assert_array_equal(LINEAR_2X0_MINUS_X1.gradient(x), [2.0, -1.0])

    def test_scaled_sin_derivative(self):
        spec = PolynomialSpec((Term(-100.0, 0, "sin", 2.0),))
        assert spec.gradient([0.0])[0] == pytest.approx(-200.0)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.tuples(st.floats(-3, 3), st.integers(0, 3), st.sampled_from(TRANSFORMS),
                              st.floats(0.2, 2.0)), min_size=1, max_size=6),
           st.integers(0, 10_000))
    def test_gradient_matches_central_differences(self, terms, seed):
        spec = PolynomialSpec(tuple(Term(*t) for t in terms))
        rng = np.random.default_rng(seed)
        h = 1e-5
        for x in rng.normal(size=(100, spec.n_features)):
            g = spec.gradient(x)
            for j in range(spec.n_features):
                e = np.zeros_like(x)
                e[j] = h
                if any(t.transform == "abs" and t.feature_index == j
                       and abs(t.scale * x[j]) < 1e-3 for t in spec.terms):
                    continue
                fd = (spec.evaluate(x + e)[0] - spec.evaluate(x - e)[0]) / (2 * h)
                assert abs(fd - g[j]) <= 1e-6 * max(1.0, abs(g[j]))

    def test_empty_spec_rejected(self):
        with pytest.raises(ValidationError):
            PolynomialSpec(())

    def test_dict_round_trip(self):
        spec = PolynomialSpec((Term(1.5, 2, "cos", 0.5),), intercept=0.25)
        assert PolynomialSpec.from_dict(spec.to_dict()) == spec


class TestSenecaRC:
    def test_linear_dataset(self):
        ds = generate_seneca_rc(LINEAR_2X0_MINUS_X1, 1000, 0.3, seed=0)
        assert ds.features.shape == (1000, 2)
        assert np.all(ds.ground_truth == [2.0, -1.0])
        # labels follow the noisy linear law: agreement with the noiseless sign is high
        agree = np.mean((2 * ds.features[:, 0] - ds.features[:, 1] > 0) == ds.labels)
        assert agree > 0.9

    def test_redundant_features_get_zero(self):
        ds = generate_seneca_rc(LINEAR_2X0_MINUS_X1, 100, 0.3, n_redundant=3, seed=0)
        assert ds.n_features == 5
        assert np.all(ds.ground_truth[:, 2:] == 0)

    def test_zero_noise_is_deterministic_sign(self):
        ds = generate_seneca_rc(LINEAR_2X0_MINUS_X1, 500, 0.0, seed=1)
        np.testing.assert_array_equal(ds.labels, (2 * ds.features[:, 0] - ds.features[:, 1] > 0))

    def test_negative_noise_rejected(self):
        with pytest.raises(ValidationError):
            generate_seneca_rc(LINEAR_2X0_MINUS_X1, 10, -1.0)


class TestGaussianClusters:
    def spec4(self):
        return ClusterSpec(centers=[[-3, 3], [3, 3], [-3, -3], [3, -3]], scales=1.0,
                           masks=[[0, 1], [1, 0], [1, 1], [1, 0]],
                           weights=[[1, 1], [1, -1], [1, 1], [-1, 1]])

    def test_cluster_members_share_gt(self):
        ds = generate_gaussian_clusters(self.spec4(), 800, seed=0)
        cluster = np.array(ds.provenance["cluster"])
        for c in range(4):
            rows = ds.ground_truth[cluster == c]
            assert len(rows) > 0 and len(np.unique(rows, axis=0)) == 1

    def test_masked_feature_gets_zero(self):
        ds = generate_gaussian_clusters(self.spec4(), 800, seed=0)
        cluster = np.array(ds.provenance["cluster"])
        assert np.all(ds.ground_truth[cluster == 0, 0] == 0)

    def test_label_from_masked_score(self):
        spec = self.spec4()
        ds = generate_gaussian_clusters(spec, 300, seed=1)
        cluster = np.array(ds.provenance["cluster"])
        score = np.sum(spec.weights[cluster] * spec.masks[cluster]
                       * (ds.features - spec.centers[cluster]), axis=1)
        np.testing.assert_array_equal(ds.labels, (score > 0).astype(int))

    def test_fixed_labels(self):
        spec = ClusterSpec([[0, 0], [5, 5]], 1.0, [[1, 0], [0, 1]], 1.0, cluster_labels=[0, 1])
        ds = generate_gaussian_clusters(spec, 100, seed=1)
        np.testing.assert_array_equal(ds.labels, ds.provenance["cluster"])

    def test_single_cluster_rejected(self):
        with pytest.raises(ValidationError):
            ClusterSpec([[0, 0]], 1.0, [[1, 1]], 1.0)

    def test_degenerate_scales_rejected(self):
        with pytest.raises(ValidationError):
            ClusterSpec([[0, 0], [1, 1]], 0.0, [[1, 1], [1, 1]], 1.0)


def test_generate_dispatch():
    ds = generate("gaussian_clusters", 50, 3)
    assert ds.n_features == 2
    with pytest.raises(ValidationError):
        generate("nope", 10, 0)
