import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import X1, random_dataset
from loadshare.estimators import (
    EstimationError,
    exposure_stats,
    failure_counts,
    fit_location,
    mle_location_scale,
    mle_order_restricted,
    mle_pooled_sos,
    mle_scale_family,
    mle_unrestricted,
    mle_unrestricted_sequence,
    order_restrict,
    ratio_estimates,
)
from loadshare.isotonic import pooled_blocks
from loadshare.model import (
    BaselineSpec,
    Dataset,
    Identity,
    Log,
    ParamTable,
    Power,
    exponential,
    log_likelihood,
)
from oracles import reference_hand_sums

EXP3 = BaselineSpec.identical(3)


class TestFailureCounts:
    def test_reference_level1(self, ref):
        m = failure_counts(ref).m
        assert (m[0, 0], m[1, 0], m[2, 0]) == (6, 3, 1)

    def test_reference_level2(self, ref):
        m = failure_counts(ref).m
        assert m[2, 1] == 2
        assert m[:, 0].sum() == m[:, 1].sum() == 10

    def test_indicators(self, ref):
        c = failure_counts(ref)
        assert np.all(c.alive[:, 0, :] == 1)
        assert np.all(np.diff(c.alive, axis=1) <= 0)
        # trial 1: component 1 then 2
        np.testing.assert_array_equal(c.alive[0], [[1, 1, 1], [0, 1, 1], [0, 0, 1]])

    def test_sequence_counts(self, ref):
        seq = failure_counts(ref).sequence
        assert seq[(3, (1,))] == 2
        assert seq[(1, ())] == 6
        assert sum(v for (j, p), v in seq.items() if len(p) == 1) == 10


class TestUnrestricted:
    def test_reference_oracle(self, ref):
        oracle, _, _ = reference_hand_sums()
        a = mle_unrestricted(ref, EXP3).params.alpha
        for (j, k), v in oracle.items():
            assert a[j - 1, k - 1] == pytest.approx(v, abs=1e-9)

    def test_reference_closed_forms(self, ref):
        a = mle_unrestricted(ref, EXP3).params.alpha
        expected = {(1, 1): 6 / 1.64, (2, 1): 3 / 1.64, (3, 1): 1 / 1.64,
                    (1, 2): 3 / 0.89, (2, 2): 5 / 2.80, (3, 2): 2 / 2.47}
        for (j, k), v in expected.items():
            assert a[j - 1, k - 1] == pytest.approx(v, abs=1e-9)

    def test_single_trial(self):
        d = Dataset(1, [[1.0]], [[1]])
        assert mle_unrestricted(d, BaselineSpec.identical(1)).params.alpha[0, 0] == pytest.approx(1.0)

    def test_missing_is_nan(self):
        d = Dataset(3, [[0.1], [0.2]], [[1], [1]])
        res = mle_unrestricted(d, EXP3)
        assert np.isnan(res.params.alpha[1, 0]) and np.isnan(res.params.alpha[2, 0])
        np.testing.assert_array_equal(res.exists[:, 0], [True, False, False])

    def test_zero_exposure_guard(self):
        with pytest.raises(EstimationError):
            ratio_estimates(np.array([1]), np.array([0.0]))

    @given(st.floats(0.1, 10), st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_scale_equivariance(self, c, seed):
        d = random_dataset(np.random.default_rng(seed), 3, 2, 15)
        a1 = mle_unrestricted(d, EXP3).params.alpha
        ac = mle_unrestricted(d, BaselineSpec.identical(3, exponential(c))).params.alpha
        np.testing.assert_allclose(ac, a1 / c, rtol=1e-12)

    def test_dominance_over_perturbations(self, ref):
        a = mle_unrestricted(ref, EXP3).params
        best = log_likelihood(ref, a, EXP3)
        rng = np.random.default_rng(1)
        for _ in range(200):
            p = ParamTable(a.alpha * np.exp(rng.normal(0, 0.3, a.alpha.shape)))
            assert log_likelihood(ref, p, EXP3) <= best + 1e-12


class TestSequence:
    def test_reference_prefix(self, ref):
        res = mle_unrestricted_sequence(ref, EXP3)
        assert res.params.sequence[(3, (1,))] == pytest.approx(2 / 2.19, abs=1e-9)

    def test_level1_matches(self, ref):
        seq = mle_unrestricted_sequence(ref, EXP3).params.sequence
        a = mle_unrestricted(ref, EXP3).params.alpha
        for j in (1, 2, 3):
            assert seq[(j, ())] == pytest.approx(a[j - 1, 0], abs=1e-12)

    def test_unobserved_prefix_missing(self, ref):
        seq = mle_unrestricted_sequence(ref, EXP3).params.sequence
        # only one trial starts with component 3 and component 2 fails next
        assert (1, (3,)) not in seq

    def test_single_prefix_reduces(self):
        rng = np.random.default_rng(4)
        times = np.cumsum(rng.exponential(1.0, (20, 3)), axis=1)
        d = Dataset(4, times, np.tile([2, 4, 1], (20, 1)))
        seq = mle_unrestricted_sequence(d, BaselineSpec.identical(4)).params.sequence
        a = mle_unrestricted(d, BaselineSpec.identical(4)).params.alpha
        for (j, prefix), v in seq.items():
            assert v == pytest.approx(a[j - 1, len(prefix)], rel=1e-12)


class TestOrderRestricted:
    def test_pooled_pair(self):
        out = order_restrict(np.array([[4.0, 2.0]]), np.array([[3, 1]]))
        np.testing.assert_allclose(out, [[3.2, 3.2]])

    def test_ordered_unchanged(self):
        out = order_restrict(np.array([[1.0, 2.0, 3.0]]), np.array([[5, 1, 2]]))
        np.testing.assert_array_equal(out, [[1.0, 2.0, 3.0]])

    def test_tab_first_case5(self):
        out = order_restrict(np.array([[2.19, 3.01, 2.96]]), np.array([[4, 3, 3]]))
        pooled = 2 / (1 / 3.01 + 1 / 2.96)
        np.testing.assert_allclose(out, [[2.19, pooled, pooled]], rtol=1e-12)
        # two-decimal reported values
        np.testing.assert_allclose(out, [[2.19, 2.99, 2.99]], atol=0.04)

    def test_reference(self, ref):
        res = mle_order_restricted(ref, EXP3)
        a = res.params.alpha
        # component 1 violates the order: 6/1.64 > 3/0.89, pooled reciprocal (1.64+0.89)/9
        np.testing.assert_allclose(a[0], [9 / 2.53, 9 / 2.53], rtol=1e-12)
        np.testing.assert_allclose(a[2], [1 / 1.64, 2 / 2.47], rtol=1e-12)
        assert res.component_exists.all()

    def test_missing_component(self):
        d = Dataset(3, [[0.1, 0.3], [0.2, 0.4]], [[1, 2], [1, 3]])
        res = mle_order_restricted(d, EXP3)
        assert np.isnan(res.params.alpha[0]).all()  # never fails at level 2
        np.testing.assert_array_equal(res.component_exists, [False, False, False])


@st.composite
def small_dataset(draw):
    n = draw(st.integers(1, 4))
    s = draw(st.integers(1, min(n, 3)))
    r = draw(st.integers(1, 30))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_dataset(np.random.default_rng(seed), n, s, r), seed


class TestOrderRestrictedProperties:
    @settings(max_examples=150, deadline=None)
    @given(small_dataset())
    def test_or_properties(self, ds):
        d, _ = ds
        b = BaselineSpec.identical(d.n)
        res = mle_order_restricted(d, b)
        unres, a = res.unrestricted.alpha, res.params.alpha
        m = res.counts.m
        for j in range(d.n):
            if not res.component_exists[j]:
                assert np.isnan(a[j]).all()
                continue
            assert np.all(np.diff(a[j]) >= -1e-12)
            if np.all(np.diff(unres[j]) >= 0):
                np.testing.assert_array_equal(a[j], unres[j])
            # reciprocal pooling within blocks
            for blk in pooled_blocks(a[j]):
                lhs = 1 / a[j, blk][0]
                rhs = np.sum(m[j, blk] / unres[j, blk]) / np.sum(m[j, blk])
                assert lhs == pytest.approx(rhs, rel=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(small_dataset())
    def test_likelihood_dominance(self, ds):
        d, seed = ds
        b = BaselineSpec.identical(d.n)
        res = mle_order_restricted(d, b)
        if not res.component_exists.all():
            return
        best = log_likelihood(d, res.params, b)
        rng = np.random.default_rng(seed + 1)
        for _ in range(50):
            cand = np.sort(rng.exponential(2.0, (d.n, d.s)) + 1e-6, axis=1)
            assert log_likelihood(d, ParamTable(cand), b) <= best + 1e-9


class TestPooled:
    def test_reference(self, ref):
        p = mle_pooled_sos(ref, EXP3)
        np.testing.assert_allclose(p.unrestricted, [10 / 4.92, 10 / 6.16], rtol=1e-12)
        np.testing.assert_allclose(p.restricted, [2 / (0.492 + 0.616)] * 2, rtol=1e-12)
        assert p.restricted[0] == pytest.approx(1.805, abs=5e-4)

    def test_ordered_unchanged(self):
        d = Dataset(2, [[1.0, 1.1], [2.0, 2.05]], [[1, 2], [2, 1]])
        p = mle_pooled_sos(d, BaselineSpec.identical(2))
        assert np.all(np.diff(p.unrestricted) > 0)
        np.testing.assert_array_equal(p.restricted, p.unrestricted)


class TestScaleFamily:
    def test_identity_matches_exponential(self, ref):
        a = mle_scale_family(ref, Identity())
        b = mle_unrestricted(ref, EXP3)
        np.testing.assert_array_equal(a.params.alpha, b.params.alpha)
        assert a.targets == "rate*alpha"

    def test_log_single(self):
        d = Dataset(1, [[math.e]], [[1]])
        assert mle_scale_family(d, Log()).params.alpha[0, 0] == pytest.approx(1.0)

    def test_power_single(self):
        d = Dataset(1, [[2.0]], [[1]])
        assert mle_scale_family(d, Power(2.0)).params.alpha[0, 0] == pytest.approx(0.25)


class TestLocationScale:
    def test_reference_mu(self, ref):
        res = mle_location_scale(ref, Identity())
        assert res.mu[0] == pytest.approx(0.01, abs=1e-15)
        assert fit_location(ref, Identity()) == min(X1)

    def test_log_single(self):
        d = Dataset(1, [[2.0]], [[1]])
        res = mle_location_scale(d, Log())
        assert res.mu[0] == pytest.approx(math.log(2))
        assert np.isnan(res.params.alpha[0, 0])  # zero exposure: no MLE

    def test_min_trial_zero_increment(self, ref):
        res = mle_location_scale(ref, Identity())
        b = BaselineSpec.identical(3, __import__("loadshare").location_scale(Identity(), res.mu[0]))
        _, D = exposure_stats(ref.times, ref.sources, b)
        expect = sum(x - 0.01 for x in X1)
        assert D[:, 0] == pytest.approx([expect] * 3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([Identity(), Power(0.5), Power(2.0), Log()]))
    def test_mu_exact(self, seed, g):
        rng = np.random.default_rng(seed)
        times = np.cumsum(rng.uniform(0.1, 2.0, (12, 2)), axis=1) + 1.0
        d = Dataset(3, times, np.array([rng.permutation(3)[:2] + 1 for _ in range(12)]))
        res = mle_location_scale(d, g)
        assert res.mu[0] == np.min(g(times[:, 0]))
        a = res.params.alpha
        for j in range(3):
            if res.component_exists[j]:
                assert np.all(np.diff(a[j]) >= -1e-12)


@pytest.mark.parametrize("g,rate", [(Power(1.7), 2.0), (Power(0.6), 0.5), (Log(), 1.5)])
def test_scale_family_z_calibration(g, rate):
    # across independent datasets the standardised errors should look standard normal
    from loadshare.model import scale_family
    from loadshare.simulator import ScenarioSpec, sample_dataset, substream

    alpha = np.array([[1.0, 1.5, 2.5], [0.6, 1.2, 1.2], [1.4, 2.0, 3.0]])
    spec = ScenarioSpec(3, 3, BaselineSpec.identical(3, scale_family(g, rate)), alpha=alpha, seed=31)
    zs = []
    for rep in range(20):
        res = mle_scale_family(sample_dataset(spec, 2000, substream(31, rep)), g)
        est = res.params.alpha
        zs.extend(((est - rate * alpha) / (est / np.sqrt(res.counts.m))).ravel())
    zs = np.array(zs)
    assert abs(zs.mean()) < 3 / np.sqrt(zs.size)
    assert 0.8 < zs.std() < 1.2
