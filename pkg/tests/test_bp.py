import math

import numpy as np
import pytest

from gandec.bp import (
    BpConfig,
    BpDecoder,
    bp_iteration_residual,
    bp_message_state,
    check_update_minsum,
    check_update_sumproduct,
    decode_bp,
    marginal_output,
    variable_update,
)
from gandec.codes import LinearCode, encode
from gandec.errors import InvalidParameters
from gandec.tanner import build_tanner


def single_check_graph(degree: int):
    """One check over ``degree`` variables: edges 0..degree-1."""
    return build_tanner(np.ones((1, degree), dtype=np.uint8))


def exact_posterior_llr(code: LinearCode, llr: np.ndarray) -> np.ndarray:
    """Brute-force bitwise posterior log-odds over all codewords."""
    words = code.codewords.astype(np.float64)
    scores = words @ llr
    m = scores.max()
    out = np.zeros(code.n)
    for v in range(code.n):
        on = scores[words[:, v] == 1]
        off = scores[words[:, v] == 0]
        out[v] = (m + np.log(np.exp(on - m).sum())) - (
            m + np.log(np.exp(off - m).sum())
        )
    return out


class TestVariableUpdate:
    def test_all_zero_in_all_zero_out(self, hamming):
        g = hamming.graph
        out = variable_update(g, np.zeros(7), np.zeros(g.n_edges))
        assert not out.any()

    def test_exclusion_sum(self):
        # variable 0 on three checks; for the edge to check 0 the update is
        # l + incoming from checks 1 and 2 = 0.5 + 1.0 - 2.0
        g = build_tanner(np.ones((3, 1), dtype=np.uint8))
        out = variable_update(g, np.array([0.5]), np.array([9.0, 1.0, -2.0]))
        assert out[0, 0] == pytest.approx(0.5 + 1.0 - 2.0)

    def test_truncation_boundary(self):
        g = build_tanner(np.array([[1]], dtype=np.uint8))
        out = variable_update(g, np.array([20.0]), np.zeros(1), clamp=10.0)
        assert out[0, 0] == 10.0


class TestCheckUpdateSumProduct:
    def test_zero_annihilates(self):
        g = single_check_graph(3)
        out = check_update_sumproduct(g, np.array([5.0, 0.0, 2.0]))
        assert out[0, 2] == 0.0  # product over edges 0 and 1 includes a zero

    def test_handworked_product(self):
        g = single_check_graph(3)
        out = check_update_sumproduct(g, np.array([0.0, 2.0, -1.0]))
        expected = 2.0 * math.atanh(math.tanh(1.0) * math.tanh(-0.5))
        assert out[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_saturated_inputs_stay_finite(self):
        g = single_check_graph(6)
        out = check_update_sumproduct(g, np.full(6, 10.0), clamp=10.0)
        assert np.isfinite(out).all()
        assert (np.abs(out) <= 10.0).all()


class TestCheckUpdateMinSum:
    def test_handworked_value(self):
        g = single_check_graph(3)
        out = check_update_minsum(g, np.array([0.0, 2.0, -1.0]))
        assert out[0, 0] == pytest.approx(-1.0)

    def test_offset_floors_at_zero(self):
        g = single_check_graph(3)
        out = check_update_minsum(g, np.array([0.0, 2.0, -1.0]), offset=1.5)
        assert out[0, 0] == 0.0

    def test_single_contributor_passes_through(self):
        g = single_check_graph(2)
        out = check_update_minsum(g, np.array([-3.5, 0.0]))
        assert out[0, 1] == pytest.approx(-3.5)

    def test_sign_of_zero_is_positive(self):
        g = single_check_graph(3)
        out = check_update_minsum(g, np.array([0.0, -2.0, 0.0]))
        # contributor set {0.0, -2.0}: min magnitude 0, sign(0)*sign(-2) = -1
        assert out[0, 2] == 0.0 and math.copysign(1, out[0, 2]) == -1.0


class TestMarginalOutput:
    def test_zero_messages_reproduce_llr(self, hamming):
        g = hamming.graph
        l = np.linspace(-1, 1, 7)
        np.testing.assert_allclose(marginal_output(g, l, np.zeros(g.n_edges))[0], l)

    def test_single_incoming_sum(self):
        g = build_tanner(np.array([[1]], dtype=np.uint8))
        out = marginal_output(g, np.zeros(1), np.array([3.0]))
        assert out[0, 0] == 3.0

    def test_consistent_with_variable_update_plus_own_edge(self, bch15):
        g = bch15.graph
        rng = np.random.default_rng(0)
        l = rng.normal(size=15)
        msgs = rng.normal(size=g.n_edges)
        vu = variable_update(g, l, msgs, clamp=1e9)
        marg = marginal_output(g, l, msgs)
        np.testing.assert_allclose(
            marg[0, g.edge_var], vu[0] + msgs, atol=1e-9
        )


class TestDecodeBp:
    def test_noiseless_all_zero(self, bch15):
        res = decode_bp(bch15, np.full(15, -8.0), BpConfig(iterations=5))
        assert not res.bits.any()
        assert res.converged_at == 1

    def test_single_flip_correction_exhaustive(self, bch15):
        """BP at +-4 corrects exactly the flips this H can correct.

        Degree-1 parity variables (positions 11-14) receive one check
        message bounded below their own wrong prior, and the degree-4
        variable 8 pollutes every check at once, so those five positions
        are unrecoverable; the remaining 10 decode exactly. The ML rate
        over the same patterns is 15/15 (minimum distance 3).
        """
        rng = np.random.default_rng(42)
        cfg = BpConfig(iterations=100)
        expected_fail = {8, 11, 12, 13, 14}
        for _ in range(10):
            cw = encode(bch15, rng.integers(0, 2, size=11))
            failed = set()
            for pos in range(15):
                word = cw.copy()
                word[pos] ^= 1
                got = decode_bp(bch15, np.where(word == 1, 4.0, -4.0), cfg)
                if not np.array_equal(got.bits, cw):
                    failed.add(pos)
            assert failed == expected_fail

    def test_deterministic(self, bch15):
        rng = np.random.default_rng(9)
        l = rng.normal(size=(4, 15)) * 3
        a = decode_bp(bch15, l, BpConfig(iterations=20))
        b = decode_bp(bch15, l, BpConfig(iterations=20))
        np.testing.assert_array_equal(a.soft, b.soft)
        np.testing.assert_array_equal(a.bits, b.bits)

    def test_one_iteration_equals_composed_primitives(self, bch15):
        g = bch15.graph
        rng = np.random.default_rng(3)
        l = rng.normal(size=15) * 2
        cfg = BpConfig(iterations=1)
        res = decode_bp(bch15, l, cfg)
        vc = variable_update(g, l, np.zeros(g.n_edges), cfg.clamp)
        cv = check_update_sumproduct(g, vc, cfg.clamp, cfg.atanh_eps)
        np.testing.assert_allclose(res.soft, marginal_output(g, l, cv)[0], atol=1e-12)

    def test_tie_decodes_to_zero(self, hamming):
        res = decode_bp(hamming, np.zeros(7), BpConfig(iterations=3))
        assert not res.bits.any()

    def test_early_exit_matches_full_run_on_clean_frames(self, bch15):
        llr = np.full(15, -8.0)
        full = decode_bp(bch15, llr, BpConfig(iterations=50))
        early = decode_bp(bch15, llr, BpConfig(iterations=50, early_exit=True))
        np.testing.assert_array_equal(full.bits, early.bits)
        assert early.converged_at == full.converged_at == 1

    def test_invalid_config(self):
        with pytest.raises(InvalidParameters):
            BpConfig(iterations=0)
        with pytest.raises(InvalidParameters):
            BpConfig(clamp=-1.0)
        with pytest.raises(InvalidParameters):
            BpConfig(variant="bogus")
        with pytest.raises(InvalidParameters):
            BpConfig(atanh_eps=0.5)


class TestTreeExactness:
    def test_sum_product_matches_brute_force_posterior(self, tree_code):
        rng = np.random.default_rng(1)
        for _ in range(100):
            l = rng.normal(0, 1.5, size=7)
            res = decode_bp(tree_code, l, BpConfig(iterations=6))
            np.testing.assert_allclose(
                res.soft, exact_posterior_llr(tree_code, l), atol=1e-6
            )


class TestMessageProperties:
    def test_messages_bounded_under_fuzzing(self, bch15):
        g = bch15.graph
        rng = np.random.default_rng(5)
        for _ in range(200):
            l = rng.uniform(-100, 100, size=15)
            msgs = rng.uniform(-100, 100, size=g.n_edges)
            vc = variable_update(g, l, msgs, clamp=10.0)
            assert np.isfinite(vc).all() and (np.abs(vc) <= 10).all()
            cv = check_update_sumproduct(g, vc[0], clamp=10.0)
            assert np.isfinite(cv).all() and (np.abs(cv) <= 10).all()
            ms = check_update_minsum(g, vc[0], clamp=10.0)
            assert np.isfinite(ms).all() and (np.abs(ms) <= 10).all()

    def test_sumproduct_minsum_sign_agreement(self, bch15):
        g = bch15.graph
        rng = np.random.default_rng(8)
        for _ in range(1000):
            msgs = rng.uniform(-5, 5, size=g.n_edges)
            sp = check_update_sumproduct(g, msgs)[0]
            ms = check_update_minsum(g, msgs)[0]
            live = (sp != 0) & (ms != 0)
            assert (np.sign(sp[live]) == np.sign(ms[live])).all()

    def test_normalization_flag_keeps_messages_bounded(self, bch15):
        cfg = BpConfig(iterations=10, normalize=True)
        rng = np.random.default_rng(2)
        res = decode_bp(bch15, rng.normal(size=15) * 30, cfg)
        assert np.isfinite(res.soft).all()


class TestFixedPointHelpers:
    def test_saturated_state_is_stable(self, tree_code):
        # strong LLRs drive the tree code to a hard fixed point
        l = np.full(7, -9.0)
        vc, cv = bp_message_state(tree_code, l, BpConfig(iterations=12))
        assert bp_iteration_residual(tree_code.graph, l, vc, cv) < 1e-12

    def test_generic_state_is_not_stable(self, bch15):
        rng = np.random.default_rng(4)
        l = rng.normal(size=15)
        vc, cv = bp_message_state(bch15, l, BpConfig(iterations=1))
        assert bp_iteration_residual(bch15.graph, l, vc, cv) > 1e-6


class TestBpDecoderEstimator:
    def test_predict_matches_decode(self, bch15):
        rng = np.random.default_rng(0)
        frames = rng.normal(size=(8, 15)) * 2
        dec = BpDecoder(bch15, iterations=10)
        np.testing.assert_array_equal(
            dec.predict(frames), decode_bp(bch15, frames, BpConfig(iterations=10)).bits
        )

    def test_get_set_params(self, bch15):
        dec = BpDecoder(bch15, iterations=10)
        params = dec.get_params()
        assert params["iterations"] == 10
        dec.set_params(iterations=25)
        assert dec.tag == "bp10"  # tag was fixed at construction
        assert dec.iterations == 25
        with pytest.raises(ValueError):
            dec.set_params(bogus=1)
