import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_score

from mgmae.errors import ConfigurationError, ContractError, ShapeError
from mgmae.gmm import (VAR_FLOOR, GaussianComponent, GmmModel, assign, component_log_density, fit_em,
                       mixture_log_density, posterior, silhouette, silhouette_samples)


def random_model(rng, M, L):
    w = rng.uniform(0.1, 1, M)
    return GmmModel(rng.uniform(-3, 3, (M, L)), rng.uniform(0.2, 2, (M, L)), w / w.sum())


def blobs(rng, centers, n_each, sigma=1.0):
    X = np.vstack([c + sigma * rng.standard_normal((n_each, len(c))) for c in centers])
    return X, np.repeat(np.arange(len(centers)), n_each)


def accuracy_up_to_permutation(pred, truth, M):
    return max(np.mean(np.array(perm)[pred] == truth) for perm in itertools.permutations(range(M)))


class TestDensity:
    def test_standard_normal_at_origin(self):
        c = GaussianComponent(np.zeros(2), np.ones(2), 1.0)
        assert component_log_density(c, np.zeros(2)) == pytest.approx(-math.log(2 * math.pi), rel=1e-15)

    def test_one_dimensional_unit_distance(self):
        c = GaussianComponent(np.zeros(1), np.ones(1), 1.0)
        assert component_log_density(c, [1.0]) == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5, rel=1e-15)

    def test_high_dimension_stays_finite(self):
        c = GaussianComponent(np.zeros(200), np.full(200, 0.01), 1.0)
        assert math.isfinite(component_log_density(c, np.full(200, 3.0)))

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            component_log_density(GaussianComponent(np.zeros(2), np.ones(2), 1.0), np.zeros(3))

    def test_variance_below_floor(self):
        with pytest.raises(ContractError):
            component_log_density(GaussianComponent(np.zeros(2), np.full(2, 1e-9), 1.0), np.zeros(2))

    def test_mixture_matches_extended_precision(self, rng):
        mpmath.mp.dps = 40
        m = random_model(rng, 3, 4)
        x = rng.uniform(-3, 3, 4)
        terms = []
        for i in range(3):
            s = mpmath.log(mpmath.mpf(m.weights[i]))
            for j in range(4):
                v = mpmath.mpf(m.variances[i, j])
                d = mpmath.mpf(x[j]) - mpmath.mpf(m.means[i, j])
                s += -0.5 * mpmath.log(2 * mpmath.pi * v) - d * d / (2 * v)
            terms.append(s)
        total = mpmath.log(mpmath.fsum(mpmath.exp(t) for t in terms))
        assert mixture_log_density(m, x) == pytest.approx(float(total), rel=1e-13)
        np.testing.assert_allclose(posterior(m, x), [float(mpmath.exp(t - total)) for t in terms], rtol=1e-12)

    def test_posterior_of_equal_components_is_weights(self, rng):
        m = GmmModel(np.zeros((3, 2)), np.ones((3, 2)), np.array([0.2, 0.3, 0.5]))
        np.testing.assert_allclose(posterior(m, rng.standard_normal(2)), m.weights, rtol=1e-14)

    def test_matrix_and_point_forms_agree(self, rng):
        m = random_model(rng, 3, 4)
        X = rng.standard_normal((7, 4))
        np.testing.assert_allclose(mixture_log_density(m, X), [mixture_log_density(m, x) for x in X], rtol=1e-14)
        np.testing.assert_array_equal(assign(m, X), [assign(m, x) for x in X])

    def test_assign_is_posterior_argmax(self, rng):
        m = random_model(rng, 4, 3)
        X = rng.uniform(-4, 4, (1000, 3))
        np.testing.assert_array_equal(assign(m, X), np.argmax(posterior(m, X), axis=1))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_posterior_is_a_distribution(self, M, L, seed):
        r = np.random.default_rng(seed)
        m = random_model(r, M, L)
        p = posterior(m, r.uniform(-50, 50, (5, L)))
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


class TestFitEm:
    def test_single_component_is_closed_form(self, rng):
        X = rng.standard_normal((50, 3)) * [1, 2, 3] + [5, -1, 0]
        m = fit_em(X, 1)
        np.testing.assert_allclose(m.means[0], X.mean(axis=0), atol=1e-9)
        np.testing.assert_allclose(m.variances[0], X.var(axis=0), atol=1e-9)
        assert m.weights[0] == pytest.approx(1.0, abs=1e-15)

    def test_separated_blobs_are_recovered(self, rng):
        centers = [np.zeros(2), np.array([10.0, 0.0]), np.array([0.0, 10.0])]
        X, truth = blobs(rng, centers, 100, sigma=1.0)
        m = fit_em(X, 3, seed=0)
        assert accuracy_up_to_permutation(assign(m, X), truth, 3) == 1.0

    def test_log_likelihood_never_decreases(self):
        for trial in range(20):
            r = np.random.default_rng(trial)
            N, L, M = int(r.integers(20, 501)), int(r.integers(1, 11)), int(r.integers(1, 5))
            m = fit_em(r.standard_normal((N, L)) * r.uniform(0.5, 3, L), M, seed=trial)
            assert np.all(np.diff(m.history) >= -1e-9)

    def test_weights_sum_to_one_and_variances_floored(self, rng):
        X = np.vstack([np.zeros((10, 2)), np.ones((10, 2))])   # two zero-variance clusters
        m = fit_em(X, 2)
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(m.variances >= VAR_FLOOR)
        assert np.all(np.isfinite(m.means))

    def test_too_few_points(self):
        with pytest.raises(ConfigurationError):
            fit_em(np.zeros((2, 3)), 3)

    def test_bad_shape(self):
        with pytest.raises(ShapeError):
            fit_em(np.zeros(5), 1)

    def test_deterministic(self, rng):
        X = rng.standard_normal((60, 4))
        a, b = fit_em(X, 3, seed=9), fit_em(X, 3, seed=9)
        assert a.means.tobytes() == b.means.tobytes() and a.history == b.history

    def test_state_round_trip(self, rng):
        m = fit_em(rng.standard_normal((30, 2)), 2)
        back = GmmModel.from_state(m.to_state())
        assert back.means.tobytes() == m.means.tobytes() and back.history == m.history

    def test_components_view(self, rng):
        m = random_model(rng, 2, 3)
        c = m.components[1]
        assert c.weight == m.weights[1]
        np.testing.assert_array_equal(c.mu, m.means[1])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**31 - 1))
    def test_fit_invariants(self, M, L, seed):
        r = np.random.default_rng(seed)
        X = r.standard_normal((40, L))
        m = fit_em(X, M, seed=seed, max_iter=50)
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(m.variances >= VAR_FLOOR)
        assert np.all(np.diff(m.history) >= -1e-9)


class TestSilhouette:
    def test_coincident_pairs(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
        assert silhouette(X, [0, 0, 1, 1]) == pytest.approx(1.0, abs=1e-9)

    def test_hand_computed_square(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        expected = 1 - 2 / (10 + math.sqrt(101))
        assert silhouette(X, [0, 0, 1, 1]) == pytest.approx(expected, abs=1e-12)

    def test_singleton_scores_zero(self):
        X = np.array([[0.0], [1.0], [5.0]])
        assert silhouette_samples(X, [0, 0, 1])[2] == 0.0

    def test_single_cluster_rejected(self):
        with pytest.raises(ContractError):
            silhouette(np.zeros((3, 2)), [1, 1, 1])

    def test_matches_reference_implementation(self, rng):
        X = rng.standard_normal((300, 5))
        labels = rng.integers(0, 4, 300)
        assert silhouette(X, labels) == pytest.approx(silhouette_score(X, labels), abs=1e-12)

    def test_chunking_does_not_change_values(self, rng):
        X = rng.standard_normal((50, 3))
        labels = rng.integers(0, 3, 50)
        np.testing.assert_allclose(silhouette_samples(X, labels, chunk=7), silhouette_samples(X, labels),
                                   rtol=1e-13, atol=1e-15)

    def test_random_labels_near_zero(self, rng):
        X = rng.standard_normal((500, 4))
        assert abs(silhouette(X, rng.integers(0, 3, 500))) < 0.2

    @settings(max_examples=40, deadline=None)
    @given(st.integers(4, 40), st.integers(2, 4), st.integers(0, 2**31 - 1))
    def test_bounded_and_label_invariant(self, N, K, seed):
        r = np.random.default_rng(seed)
        X = r.standard_normal((N, 3))
        labels = np.arange(N) % K
        s = silhouette(X, labels)
        assert -1 - 1e-12 <= s <= 1 + 1e-12
        relabel = r.permutation(K)[labels] + 7
        assert silhouette(X, relabel) == pytest.approx(s, abs=1e-12)
