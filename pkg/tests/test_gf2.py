import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gandec import gf2
from gandec.errors import RankDeficient


class TestRref:
    def test_identity_is_its_own_rref(self):
        eye = np.eye(3, dtype=np.uint8)
        r, pivots = gf2.rref(eye)
        assert np.array_equal(r, eye)
        assert pivots == [0, 1, 2]

    def test_zero_matrix_has_no_pivots(self):
        z = np.zeros((2, 4), dtype=np.uint8)
        r, pivots = gf2.rref(z)
        assert np.array_equal(r, z)
        assert pivots == []

    def test_dependent_rows_reduce(self):
        r, pivots = gf2.rref([[1, 1], [1, 1]])
        assert np.array_equal(r, [[1, 1], [0, 0]])
        assert pivots == [0]

    @given(
        st.integers(1, 6), st.integers(1, 8),
        st.integers(0, 2**30),
    )
    @settings(max_examples=50, deadline=None)
    def test_row_space_preserved(self, rows, cols, seed):
        rng = np.random.default_rng(seed)
        m = rng.integers(0, 2, size=(rows, cols)).astype(np.uint8)
        r, pivots = gf2.rref(m)
        # every original row is a combination of the reduced rows: reducing
        # the stack [m; r] cannot increase the rank
        assert gf2.rank(np.vstack([m, r])) == len(pivots)
        assert gf2.rank(m) == len(pivots)


class TestGeneratorFromParity:
    def test_hamming_generator_annihilates_h(self, hamming):
        g = gf2.generator_from_parity(hamming.H)
        assert not gf2.mat_mul(g, hamming.H.T).any()
        assert gf2.rank(g) == hamming.k

    def test_length_two_parity_code(self):
        g = gf2.generator_from_parity([[1, 1]])
        assert np.array_equal(g, [[1, 1]])

    def test_rank_deficient_rejected(self):
        with pytest.raises(RankDeficient):
            gf2.generator_from_parity([[1, 1, 0], [1, 1, 0]])

    def test_all_row_combinations_satisfy_parity(self, hamming):
        g = gf2.generator_from_parity(hamming.H)
        k = g.shape[0]
        msgs = ((np.arange(1 << k)[:, None] >> np.arange(k)) & 1).astype(np.uint8)
        words = gf2.mat_mul(msgs, g)
        assert not gf2.mat_mul(words, hamming.H.T).any()
