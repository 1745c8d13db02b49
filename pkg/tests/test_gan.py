import math

import numpy as np
import pytest

from gandec import autodiff as ad
from gandec.autodiff import AdamState, Tape, adam_step, backward, finite_diff_check
from gandec.channel import Rng
from gandec.codes import encode
from gandec.errors import InvalidParameters
from gandec.gan import (
    GanTrainConfig,
    NON_SATURATING,
    d_ml_closed_form,
    deserialize_discriminator,
    disc_forward,
    init_discriminator,
    loss_f_gd,
    serialize_discriminator,
    train_offline,
    train_online,
    train_step_decoder,
    train_step_discriminator,
)
from gandec.unfolded import UnfoldedBpDecoder


def small_cfg(**kw):
    base = dict(n_train_frames=320, batch_size=32, snr_train_db=4.0, seed=0)
    base.update(kw)
    return GanTrainConfig(**base)


class TestDiscForward:
    def test_zero_weights_output_half(self, hamming):
        disc = init_discriminator(7, (8, 8), Rng(0))
        for key in disc.values:
            disc.values[key] = np.zeros_like(disc.values[key])
        out = disc_forward(disc, np.random.default_rng(0).normal(size=(5, 7)),
                           Tape())
        np.testing.assert_allclose(out.value, 0.5)

    def test_output_strictly_inside_unit_interval(self):
        disc = init_discriminator(7, (16, 16), Rng(3))
        words = np.random.default_rng(1).normal(size=(10000, 7)) * 5
        out = disc_forward(disc, words, Tape()).value
        assert (out > 0).all() and (out < 1).all()

    def test_gradients_match_finite_differences(self):
        base = init_discriminator(4, (8, 8), Rng(7))
        words = np.random.default_rng(2).normal(size=(3, 4))

        def build(tape, params):
            from gandec.gan import _mlp_apply

            bound = {k: tape.param(v, k) for k, v in params.items()}
            out = _mlp_apply(bound, tape.const(words))
            return ad.mean_all(ad.log(out))

        assert finite_diff_check(build, base.values, h=1e-4) < 1e-4


class TestLossFGd:
    def test_constant_half_discriminator(self, hamming):
        disc = init_discriminator(7, (8, 8), Rng(0))
        for key in disc.values:
            disc.values[key] = np.zeros_like(disc.values[key])
        real = hamming.codewords[:8].astype(np.float64)
        fake = np.full((8, 7), 0.5)
        f = loss_f_gd(disc, real, fake, Tape())
        assert float(f.value) == pytest.approx(2 * math.log(0.5), abs=1e-12)

    def test_perfect_discriminator_limit(self, hamming):
        # saturate the output neuron towards D=1 on everything it sees
        disc = init_discriminator(7, (8, 8), Rng(0))
        for key in disc.values:
            disc.values[key] = np.zeros_like(disc.values[key])
        disc.values["b3"] = np.full(1, 60.0)
        real = hamming.codewords[:4].astype(np.float64)
        f_real_term = loss_f_gd(disc, real, real, Tape())
        # log D -> 0, log(1 - D) -> clipped floor
        assert float(f_real_term.value) == pytest.approx(
            math.log(1e-12), rel=1e-3
        )


class TestDmlClosedForm:
    def test_equal_masses_give_half(self):
        u = {(0, 1): 0.5, (1, 0): 0.5}
        assert d_ml_closed_form(u, dict(u)) == {(0, 1): 0.5, (1, 0): 0.5}

    def test_unmatched_support(self):
        d = d_ml_closed_form({(0,): 1.0}, {(1,): 1.0})
        assert d[(0,)] == 1.0 and d[(1,)] == 0.0

    def test_empty_mass_defaults_half(self):
        d = d_ml_closed_form({(0,): 1.0, (1, 1): 0.0}, {(0,): 1.0, (1, 1): 0.0})
        assert d[(1, 1)] == 0.5


class TestTrainSteps:
    def test_zero_lr_keeps_discriminator(self, bch15):
        disc = init_discriminator(15, (8, 8), Rng(1))
        before = {k: v.copy() for k, v in disc.values.items()}
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        train_step_discriminator(disc, dec, bch15, small_cfg(), Rng(0),
                                 AdamState(lr=0.0))
        for key in before:
            np.testing.assert_array_equal(disc.values[key], before[key])

    def test_zero_lr_keeps_decoder(self, bch15):
        disc = init_discriminator(15, (8, 8), Rng(1))
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        before = {k: v.copy() for k, v in dec.ensure_weights().values.items()}
        train_step_decoder(dec, disc, bch15, small_cfg(), Rng(0),
                           AdamState(lr=0.0))
        for key in before:
            np.testing.assert_array_equal(dec.weights_.values[key], before[key])

    def test_discriminator_improves_against_frozen_decoder(self, bch15):
        """-f falls (10-step moving average) while D trains alone."""
        rng_w = np.random.default_rng(5)
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        w = dec.ensure_weights()
        for key in w.values:
            w.values[key] = 1.0 + rng_w.normal(0, 0.4, size=w.values[key].shape)
        disc = init_discriminator(15, (32, 32), Rng(2))
        adam = AdamState(lr=1e-3)
        rng = Rng(0)
        losses = [
            train_step_discriminator(disc, dec, bch15, small_cfg(), rng, adam)
            for _ in range(50)
        ]
        ma = np.convolve(losses, np.ones(10) / 10, mode="valid")
        assert ma[-1] < ma[0]

    def test_decoder_outputs_equal_codewords_plateaus_at_equilibrium(self, bch15):
        """When both batches come from the same distribution the best
        achievable f stays near 2 log(1/2)."""
        disc = init_discriminator(15, (32, 32), Rng(4))
        adam = AdamState(lr=1e-3)
        rng = Rng(1)
        last_f = None
        for step in range(120):
            msgs = np.array([[rng.bit() for _ in range(11)] for _ in range(32)])
            real = encode(bch15, msgs).astype(np.float64)
            msgs2 = np.array([[rng.bit() for _ in range(11)] for _ in range(32)])
            fake = encode(bch15, msgs2).astype(np.float64)
            tape = Tape()
            f = loss_f_gd(disc, real, fake, tape, param_prefix="disc/")
            grads = backward(tape, ad.neg(f))
            disc.values = adam_step(
                adam, disc.values,
                {k.removeprefix("disc/"): g for k, g in grads.items()},
            )
            last_f = float(f.value)
        assert last_f == pytest.approx(2 * math.log(0.5), abs=0.35)

    def test_supervised_only_training_reduces_bce(self, bch15):
        from gandec.channel import ChannelConfig, frame_llrs
        from gandec.unfolded import Tape, forward, supervised_loss

        chan = ChannelConfig(snr_db=2.0, rate=bch15.rate)
        _, held_cw, held_llrs = frame_llrs(
            bch15.k, bch15.n, chan, seed=99,
            frame_indices=np.arange(512), generator=bch15.G,
        )

        def held_out_bce(dec):
            tape = Tape()
            out = forward(dec.ensure_weights(), bch15, held_llrs, tape)
            return float(supervised_loss(out, held_cw, tape).value)

        cfg = small_cfg(lambda_adv=0.0, snr_train_db=2.0, epochs=4)
        dec = UnfoldedBpDecoder(bch15, n_layers=3, mode="offset-min-sum")
        disc = init_discriminator(15, (8, 8), Rng(1))
        disc_before = {k: v.copy() for k, v in disc.values.items()}
        before = held_out_bce(dec)
        train_offline(dec, disc, bch15, cfg)
        for key in disc_before:  # adversarial side untouched
            np.testing.assert_array_equal(disc.values[key], disc_before[key])
        assert held_out_bce(dec) < before

    def test_online_batches_require_zero_sup_weight(self, bch15):
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        disc = init_discriminator(15, (8, 8), Rng(1))
        with pytest.raises(InvalidParameters):
            train_step_decoder(dec, disc, bch15, small_cfg(lambda_sup=1.0),
                               Rng(0), llr_batch=np.zeros((4, 15)))

    def test_non_saturating_objective_runs(self, bch15):
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        disc = init_discriminator(15, (8, 8), Rng(1))
        cfg = small_cfg(generator_loss=NON_SATURATING)
        sup, adv = train_step_decoder(dec, disc, bch15, cfg, Rng(0))
        assert np.isfinite(sup) and np.isfinite(adv)

    def test_snr_range_training(self, bch15):
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        disc = init_discriminator(15, (8, 8), Rng(1))
        cfg = small_cfg(snr_train_db=(2.0, 6.0))
        sup, adv = train_step_decoder(dec, disc, bch15, cfg, Rng(0))
        assert np.isfinite(sup) and np.isfinite(adv)
        with pytest.raises(InvalidParameters):
            small_cfg(snr_train_db=(6.0, 2.0))


class TestTrainOffline:
    def test_zero_steps_leave_decoder_unchanged(self, bch15):
        cfg = small_cfg(n_train_frames=32, batch_size=32, epochs=0)
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        before = {k: v.copy() for k, v in dec.ensure_weights().values.items()}
        log = train_offline(dec, init_discriminator(15, (8, 8), Rng(0)),
                            bch15, cfg)
        assert log.rows == []
        for key in before:
            np.testing.assert_array_equal(dec.weights_.values[key], before[key])

    def test_deterministic_logs(self, bch15):
        def run():
            dec = UnfoldedBpDecoder(bch15, n_layers=2)
            disc = init_discriminator(15, (16, 16), Rng(2))
            return train_offline(dec, disc, bch15,
                                 small_cfg(n_train_frames=160)), dec

        log_a, dec_a = run()
        log_b, dec_b = run()
        for ra, rb in zip(log_a.rows, log_b.rows):
            assert (ra.step, ra.d_loss, ra.g_sup_loss, ra.g_adv_loss,
                    ra.val_fer) == (rb.step, rb.d_loss, rb.g_sup_loss,
                                    rb.g_adv_loss, rb.val_fer)
        for key in dec_a.weights_.values:
            np.testing.assert_array_equal(dec_a.weights_.values[key],
                                          dec_b.weights_.values[key])

    def test_csv_shape(self, bch15):
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        log = train_offline(dec, init_discriminator(15, (8, 8), Rng(0)),
                            bch15, small_cfg(n_train_frames=96, batch_size=32))
        lines = log.to_csv().splitlines()
        assert lines[0] == "step,d_loss,g_sup_loss,g_adv_loss,val_fer,wall_ms"
        assert len(lines) == 4


class TestTrainOnline:
    def _source(self, bch15, batches, seed=0):
        from gandec.channel import ChannelConfig, frame_llrs

        cfg = ChannelConfig(snr_db=4.0, rate=bch15.rate)
        for i in range(batches):
            idx = np.arange(i * 32, (i + 1) * 32, dtype=np.uint64)
            yield frame_llrs(bch15.k, bch15.n, cfg, seed, idx, bch15.G)[2]

    def test_runs_one_step_per_batch(self, bch15):
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        disc = init_discriminator(15, (8, 8), Rng(1))
        log = train_online(dec, disc, bch15, small_cfg(batch_size=32),
                           self._source(bch15, 5))
        assert len(log.rows) == 5
        assert all(r.g_sup_loss == 0.0 for r in log.rows)

    def test_sup_weight_forced_to_zero(self, bch15):
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        disc = init_discriminator(15, (8, 8), Rng(1))
        # lambda_sup=1 in the config must be overridden, not an error
        log = train_online(dec, disc, bch15,
                           small_cfg(batch_size=32, lambda_sup=1.0),
                           self._source(bch15, 2))
        assert all(r.g_sup_loss == 0.0 for r in log.rows)

    def test_online_runs_are_deterministic(self, bch15):
        def run():
            dec = UnfoldedBpDecoder(bch15, n_layers=2)
            disc = init_discriminator(15, (16, 16), Rng(3))
            log = train_online(dec, disc, bch15, small_cfg(batch_size=32),
                               self._source(bch15, 4))
            return log, dec

        log_a, dec_a = run()
        log_b, dec_b = run()
        for ra, rb in zip(log_a.rows, log_b.rows):
            assert (ra.d_loss, ra.g_adv_loss) == (rb.d_loss, rb.g_adv_loss)
        for key in dec_a.weights_.values:
            np.testing.assert_array_equal(dec_a.weights_.values[key],
                                          dec_b.weights_.values[key])

    def test_adversarial_disabled_leaves_weights(self, bch15):
        dec = UnfoldedBpDecoder(bch15, n_layers=2)
        before = {k: v.copy() for k, v in dec.ensure_weights().values.items()}
        disc = init_discriminator(15, (8, 8), Rng(1))
        train_online(dec, disc, bch15,
                     small_cfg(batch_size=32, lambda_adv=0.0),
                     self._source(bch15, 3))
        for key in before:
            np.testing.assert_array_equal(dec.weights_.values[key], before[key])


class TestDiscriminatorSerialization:
    def test_round_trip(self):
        disc = init_discriminator(15, (16, 8), Rng(9))
        back = deserialize_discriminator(serialize_discriminator(disc))
        assert back.n_in == 15 and back.hidden == (16, 8)
        for key in disc.values:
            np.testing.assert_array_equal(back.values[key], disc.values[key])

    def test_blob_starts_with_magic(self):
        blob = serialize_discriminator(init_discriminator(7, (4, 4), Rng(0)))
        assert blob[:4] == b"GDSC"


class TestCheckpoints:
    def test_round_trip_with_discriminator(self, bch15, tmp_path):
        from gandec.gan import load_checkpoint, save_checkpoint
        from gandec.unfolded import init_unfolded

        weights = init_unfolded(bch15, 3, "simplified")
        weights.values["w_layer"] = np.array([0.5, 1.5, 2.5])
        disc = init_discriminator(15, (8, 8), Rng(2))
        path = tmp_path / "model.gdec"
        save_checkpoint(path, weights, disc)
        back_w, back_d = load_checkpoint(path, bch15)
        np.testing.assert_array_equal(back_w.values["w_layer"], [0.5, 1.5, 2.5])
        assert back_d is not None and back_d.hidden == (8, 8)

    def test_weights_only_checkpoint(self, bch15, tmp_path):
        from gandec.gan import load_checkpoint, save_checkpoint
        from gandec.unfolded import init_unfolded

        path = tmp_path / "plain.gdec"
        save_checkpoint(path, init_unfolded(bch15, 2, "full"))
        back_w, back_d = load_checkpoint(path, bch15)
        assert back_d is None and back_w.n_layers == 2
