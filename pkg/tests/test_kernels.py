import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grader_audit import kernels


def random_cutpoints(rng, k=10):
    gaps = rng.uniform(0.3, 1.5, size=k - 2)
    return np.concatenate([[-4.0], -4.0 + np.cumsum(gaps)])


class TestBackendAgreement:
    """The numba and numpy paths must compute the same quantities."""

    def test_ordered_value_and_grads(self):
        rng = np.random.default_rng(0)
        cut = random_cutpoints(rng)
        scores = rng.integers(1, 11, size=400)
        phi = rng.normal(0, 6, size=400)
        results = {}
        for name, fns in kernels.backend_pair():
            results[name] = fns["ordered"](scores, phi, cut)
        if len(results) < 2:
            pytest.skip("single backend available")
        (ll_a, dphi_a, dcut_a), (ll_b, dphi_b, dcut_b) = results.values()
        assert ll_a == pytest.approx(ll_b, rel=1e-10)
        np.testing.assert_allclose(dphi_a, dphi_b, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(dcut_a, dcut_b, rtol=1e-9, atol=1e-12)

    def test_bernoulli(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 2, size=300)
        eta = rng.normal(0, 8, size=300)
        results = [fns["bernoulli"](y, eta) for _, fns in kernels.backend_pair()]
        if len(results) < 2:
            pytest.skip("single backend available")
        assert results[0][0] == pytest.approx(results[1][0], rel=1e-12)
        np.testing.assert_allclose(results[0][1], results[1][1], rtol=1e-10)

    def test_rows(self):
        rng = np.random.default_rng(2)
        cut = random_cutpoints(rng)
        scores = rng.integers(1, 11, size=200)
        phi = rng.normal(0, 10, size=200)
        rows = [fns["ordered_rows"](scores, phi, cut) for _, fns in kernels.backend_pair()]
        if len(rows) < 2:
            pytest.skip("single backend available")
        np.testing.assert_allclose(rows[0], rows[1], rtol=1e-9, atol=1e-12)


class TestStability:
    @pytest.mark.parametrize("phi", [-30.0, -20.0, 0.0, 20.0, 30.0])
    def test_pmf_sums_to_one(self, phi):
        rng = np.random.default_rng(3)
        cut = random_cutpoints(rng)
        scores = np.arange(1, 11, dtype=np.int64)
        rows = kernels.ordered_logistic_rows(scores, np.full(10, phi), cut)
        assert np.exp(rows).sum() == pytest.approx(1.0, abs=1e-12)

    def test_extreme_phi_finite(self):
        cut = np.array([-1.0, 1.0])
        for phi in (-300.0, 300.0):
            ll, dphi, dcut = kernels.ordered_logistic_ll_grad(
                np.array([2], dtype=np.int64), np.array([phi]), cut
            )
            assert np.isfinite(ll)
            assert np.all(np.isfinite(dphi))
            assert np.all(np.isfinite(dcut))

    def test_bernoulli_extremes(self):
        y = np.array([1, 0], dtype=np.int64)
        eta = np.array([35.0, -35.0])
        ll, deta = kernels.bernoulli_logit_ll_grad(y, eta)
        assert np.isfinite(ll)
        assert np.all(np.isfinite(deta))


class TestGradients:
    def test_ordered_fd(self):
        rng = np.random.default_rng(4)
        cut = random_cutpoints(rng, k=5)
        scores = rng.integers(1, 6, size=50)
        phi = rng.normal(0, 2, size=50)
        ll, dphi, dcut = kernels.ordered_logistic_ll_grad(scores, phi, cut)
        h = 1e-6
        for j in range(phi.size):
            up, dn = phi.copy(), phi.copy()
            up[j] += h
            dn[j] -= h
            fd = (
                kernels.ordered_logistic_ll_grad(scores, up, cut)[0]
                - kernels.ordered_logistic_ll_grad(scores, dn, cut)[0]
            ) / (2 * h)
            assert dphi[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)
        for j in range(cut.size):
            up, dn = cut.copy(), cut.copy()
            up[j] += h
            dn[j] -= h
            fd = (
                kernels.ordered_logistic_ll_grad(scores, phi, up)[0]
                - kernels.ordered_logistic_ll_grad(scores, phi, dn)[0]
            ) / (2 * h)
            assert dcut[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)

    @given(st.floats(min_value=-25, max_value=25))
    @settings(max_examples=60, deadline=None)
    def test_bernoulli_symmetry(self, eta):
        one = kernels.bernoulli_logit_rows(np.array([1]), np.array([eta]))[0]
        zero = kernels.bernoulli_logit_rows(np.array([0]), np.array([-eta]))[0]
        assert one == pytest.approx(zero, rel=1e-12, abs=1e-300)


def test_monotonicity_in_phi():
    # larger latent value shifts mass to higher scores
    cut = np.array([-2.0, -0.5, 1.0, 2.5])
    scores = np.arange(1, 6, dtype=np.int64)

    def upper_tail(phi, j):
        rows = kernels.ordered_logistic_rows(scores, np.full(5, phi), cut)
        return np.exp(rows)[j - 1 :].sum()

    for j in range(2, 6):
        tails = [upper_tail(p, j) for p in (-2.0, -0.5, 1.0, 3.0)]
        assert all(a < b for a, b in zip(tails, tails[1:]))


def test_location_shift_invariance():
    # shifting phi and all cutpoints together leaves every probability unchanged
    cut = np.array([-1.5, 0.0, 2.0])
    scores = np.arange(1, 5, dtype=np.int64)
    base = kernels.ordered_logistic_rows(scores, np.full(4, 0.3), cut)
    for shift in (-7.0, 2.5):
        moved = kernels.ordered_logistic_rows(scores, np.full(4, 0.3 + shift), cut + shift)
        np.testing.assert_allclose(moved, base, rtol=1e-12, atol=1e-12)


def test_active_backend_reports():
    assert kernels.active_backend() in ("numba", "numpy")
