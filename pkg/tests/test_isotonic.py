import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadshare.isotonic import isotonic_nondecreasing, pooled_blocks
from oracles import grid_isotonic, maxmin_isotonic

values = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=12)


@st.composite
def weighted_series(draw, max_size=12):
    g = draw(st.lists(st.floats(-100, 100), min_size=1, max_size=max_size))
    w = draw(st.lists(st.floats(0.01, 50), min_size=len(g), max_size=len(g)))
    return np.array(g), np.array(w)


class TestExamples:
    def test_already_isotone(self):
        np.testing.assert_array_equal(isotonic_nondecreasing([1, 2, 3]), [1, 2, 3])

    def test_violating_pair(self):
        np.testing.assert_allclose(isotonic_nondecreasing([0.5, 0.25]), [0.375, 0.375])

    def test_weighted_pair(self):
        np.testing.assert_allclose(isotonic_nondecreasing([0.5, 0.25], [1, 3]), [0.3125, 0.3125])

    def test_ties_merged(self):
        fit = isotonic_nondecreasing([1.0, 1.0, 0.0, 2.0])
        assert [b.stop - b.start for b in pooled_blocks(fit)] == [3, 1]

    def test_empty(self):
        with pytest.raises(ValueError):
            isotonic_nondecreasing([])

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            isotonic_nondecreasing([1, 2], [1, 0])
        with pytest.raises(ValueError):
            isotonic_nondecreasing([1, 2], [1])

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            isotonic_nondecreasing([1, np.nan])


class TestProperties:
    @given(weighted_series())
    def test_nondecreasing(self, gw):
        fit = isotonic_nondecreasing(*gw)
        assert np.all(np.diff(fit) >= -1e-12)

    @given(weighted_series())
    def test_idempotent(self, gw):
        g, w = gw
        fit = isotonic_nondecreasing(g, w)
        np.testing.assert_allclose(isotonic_nondecreasing(fit, w), fit, rtol=0, atol=1e-10)

    @given(weighted_series())
    def test_weighted_mean_preserved(self, gw):
        g, w = gw
        fit = isotonic_nondecreasing(g, w)
        assert np.sum(w * fit) == pytest.approx(np.sum(w * g), abs=1e-8)
        for blk in pooled_blocks(fit):
            assert np.sum(w[blk] * fit[blk]) == pytest.approx(np.sum(w[blk] * g[blk]), abs=1e-8)

    @given(weighted_series())
    def test_matches_maxmin(self, gw):
        g, w = gw
        np.testing.assert_allclose(isotonic_nondecreasing(g, w), maxmin_isotonic(g, w), rtol=0, atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0]), min_size=1, max_size=5),
        st.data(),
    )
    def test_matches_grid_search(self, g, data):
        w = data.draw(st.lists(st.sampled_from([1.0, 2.0, 3.0]), min_size=len(g), max_size=len(g)))
        grid = np.round(np.arange(0, 2.0001, 0.125), 10)
        best_f, best_loss = grid_isotonic(g, w, grid)
        fit = isotonic_nondecreasing(g, w)
        loss = float(np.sum(np.asarray(w) * (fit - g) ** 2))
        # the exact projection can only beat the grid, and by no more than grid resolution
        assert loss <= best_loss + 1e-12
        np.testing.assert_allclose(fit, best_f, atol=0.125 / 2 + 1e-12)
