import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grader_audit.data import Dataset
from grader_audit.design import ParameterVector, preset
from grader_audit.errors import (
    InvalidScore,
    InvalidValue,
    NonFiniteDensity,
    NonPositiveScale,
)
from grader_audit.likelihoods import (
    bernoulli_logit_logpmf,
    compile_model,
    cutpoints_from_unconstrained,
    cutpoints_to_unconstrained,
    joint_log_density,
    ordered_logistic_logpmf,
    ordered_logistic_pmf,
    prior_logpdf,
    sample_ordered_logistic,
)
from grader_audit.inference import rng_stream
from grader_audit.simulate import default_scenario, simulate

from conftest import two_grader_empty_dataset

LOG_HALF = -0.6931471805599453


class TestOrderedLogisticLogpmf:
    def test_k2_center(self):
        assert ordered_logistic_logpmf(1, 0.0, [0.0]) == pytest.approx(LOG_HALF)
        assert ordered_logistic_logpmf(2, 0.0, [0.0]) == pytest.approx(LOG_HALF)

    def test_k3_middle_cell(self):
        # frozen: log(sigma(1) - sigma(-1)) computed at 40-digit precision
        assert ordered_logistic_logpmf(2, 0.0, [-1.0, 1.0]) == pytest.approx(
            -0.77193683290530472507, abs=1e-14
        )

    def test_invalid_score(self):
        with pytest.raises(InvalidScore):
            ordered_logistic_logpmf(4, 0.0, [-1.0, 1.0])
        with pytest.raises(InvalidScore):
            ordered_logistic_logpmf(0, 0.0, [-1.0, 1.0])

    def test_decreasing_cutpoints_rejected(self):
        with pytest.raises(InvalidValue):
            ordered_logistic_logpmf(1, 0.0, [1.0, -1.0])

    @given(
        st.floats(min_value=-30, max_value=30),
        st.lists(st.floats(min_value=0.31, max_value=2.0), min_size=1, max_size=9),
    )
    @settings(max_examples=100, deadline=None)
    def test_partition_of_unity(self, phi, gaps):
        cut = -3.0 + np.concatenate([[0.0], np.cumsum(gaps)])
        total = sum(
            math.exp(ordered_logistic_logpmf(k, phi, cut)) for k in range(1, cut.size + 2)
        )
        assert total == pytest.approx(1.0, abs=1e-12)


class TestBernoulliLogpmf:
    def test_center(self):
        assert bernoulli_logit_logpmf(1, 0.0) == pytest.approx(LOG_HALF)
        assert bernoulli_logit_logpmf(0, 0.0) == pytest.approx(LOG_HALF)

    @given(st.floats(min_value=-30, max_value=30))
    @settings(max_examples=60, deadline=None)
    def test_flip_symmetry(self, eta):
        assert bernoulli_logit_logpmf(1, eta) == pytest.approx(
            bernoulli_logit_logpmf(0, -eta), rel=1e-12, abs=1e-300
        )

    def test_invalid_outcome(self):
        with pytest.raises(InvalidScore):
            bernoulli_logit_logpmf(2, 0.0)


class TestCutpointTransform:
    def test_hand_example(self):
        c, log_jac = cutpoints_from_unconstrained([-4.0, 0.0, 0.0])
        assert c == pytest.approx([-4.0, -2.7, -1.4])
        assert log_jac == pytest.approx(0.0)

    @given(st.lists(st.floats(min_value=-3, max_value=3), min_size=1, max_size=9))
    @settings(max_examples=100, deadline=None)
    def test_monotone_with_min_gap(self, z):
        c, _ = cutpoints_from_unconstrained(z)
        gaps = np.diff(c)
        assert np.all(gaps >= 0.3)

    @given(st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=9))
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, z):
        z = np.asarray(z)
        c, _ = cutpoints_from_unconstrained(z)
        back = cutpoints_to_unconstrained(c)
        np.testing.assert_allclose(back, z, atol=1e-10)

    def test_jacobian_is_sum_of_tail_coords(self):
        z = np.array([-4.0, 0.3, -0.7, 1.1])
        _, log_jac = cutpoints_from_unconstrained(z)
        assert log_jac == pytest.approx(0.3 - 0.7 + 1.1)

    def test_inverse_rejects_small_gaps(self):
        with pytest.raises(InvalidValue):
            cutpoints_to_unconstrained([0.0, 0.2])


class TestPriorLogpdf:
    def test_intercept_only_standard_normal_at_zero(self):
        ds = two_grader_empty_dataset(k=3)
        spec = preset("q1_1_null")
        model = compile_model(spec, ds)
        values = model.constrain_array(model.initialize(jitter=False))
        values[model.layout.param_index("intercept")] = 0.0
        # isolate the intercept block: subtract the cutpoint prior contribution
        full = prior_logpdf(ParameterVector(model.layout, values), spec)
        no_intercept = full - (-0.5 * math.log(2 * math.pi))
        values2 = values.copy()
        values2[model.layout.param_index("intercept")] = 1.0
        shifted = prior_logpdf(ParameterVector(model.layout, values2), spec)
        assert full - shifted == pytest.approx(0.5)  # N(0,1): logpdf(0)-logpdf(1)
        assert no_intercept == pytest.approx(shifted + 0.5 - (-0.5 - 0.5 * math.log(2 * math.pi)))

    def test_half_cauchy_at_one(self):
        # log density of half-Cauchy(1) at sigma=1 is log(1/pi)
        from grader_audit.likelihoods import half_cauchy_logpdf

        assert half_cauchy_logpdf(1.0, 1.0) == pytest.approx(-1.1447298858494001741)

    def test_non_positive_scale(self):
        ds, _ = simulate(default_scenario("q3", seed=0))
        spec = preset("q3_hier")
        model = compile_model(spec, ds)
        values = model.constrain_array(model.initialize(jitter=False))
        block = model.layout.block("grader_sigma")
        values[block.offset] = -0.1
        with pytest.raises(NonPositiveScale):
            prior_logpdf(ParameterVector(model.layout, values), spec)


class TestJointLogDensity:
    def test_empty_dataset_is_prior_plus_jacobian(self):
        ds = two_grader_empty_dataset(k=4)
        spec = preset("q1_2")
        model = compile_model(spec, ds)
        rng = rng_stream(1, 0)
        u = model.initialize(rng)
        value, _ = model.value_grad(u)
        c = model.constrain_array(u)
        prior = prior_logpdf(ParameterVector(model.layout, c), spec)
        assert value == pytest.approx(prior + model.log_jacobian(u), rel=1e-12)

    def test_duplicated_records_double_likelihood(self):
        ds, _ = simulate(default_scenario("q1_1", seed=5))
        spec = preset("q1_1")
        model1 = compile_model(spec, ds)
        doubled = Dataset(
            kind=ds.kind,
            records=ds.records + ds.records,
            factors=ds.factors,
            n_categories=ds.n_categories,
            grader_types=ds.grader_types,
        )
        model2 = compile_model(spec, doubled)
        rng = rng_stream(2, 0)
        u = model1.initialize(rng)
        v1, _ = model1.value_grad(u)
        v2, _ = model2.value_grad(u)
        c = model1.constrain_array(u)
        prior_jac = prior_logpdf(ParameterVector(model1.layout, c), spec) + model1.log_jacobian(u)
        assert v2 - prior_jac == pytest.approx(2.0 * (v1 - prior_jac), rel=1e-12)

    def test_raises_on_nonfinite(self):
        ds, _ = simulate(default_scenario("q1_1", seed=5))
        spec = preset("q1_1")
        model = compile_model(spec, ds)
        u = model.initialize(jitter=False)
        u[model.layout.block("cutpoints").offset + 1] = 1e4  # exp overflow
        with pytest.raises(NonFiniteDensity):
            joint_log_density(spec, ds, u)

    def test_gradient_matches_finite_differences_small(self):
        ds, _ = simulate(default_scenario("q1_2", seed=5))
        spec = preset("q1_2")
        model = compile_model(spec, ds)
        rng = rng_stream(3, 0)
        h = 1e-5
        for _ in range(3):
            u = model.initialize(rng) + 0.05 * rng.standard_normal(model.dim)
            value, grad = joint_log_density(spec, ds, u)
            for j in range(model.dim):
                e = np.zeros(model.dim)
                e[j] = h
                fd = (model.value_grad(u + e)[0] - model.value_grad(u - e)[0]) / (2 * h)
                assert grad[j] == pytest.approx(fd, rel=1e-6, abs=1e-7)


class TestConstrainedSampling:
    def test_sampled_scores_match_pmf(self):
        cut = np.array([-1.0, 0.0, 1.5])
        rng = rng_stream(9, 0)
        phi = np.full(100_000, 0.4)
        scores = sample_ordered_logistic(phi, cut, rng)
        pmf = ordered_logistic_pmf(0.4, cut)
        freq = np.bincount(scores, minlength=5)[1:] / phi.size
        np.testing.assert_allclose(freq, pmf, atol=0.01)

    def test_saturation_at_extreme_phi(self):
        cut = np.array([-1.0, 0.0, 1.5])
        rng = rng_stream(9, 1)
        scores = sample_ordered_logistic(np.full(1000, -30.0), cut, rng)
        assert np.all(scores == 1)
