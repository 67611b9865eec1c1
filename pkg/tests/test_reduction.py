import numpy as np
import pytest

from gslosh import ndgrad
from gslosh.reduction import (
    AutoencoderBank,
    AutoencoderSpec,
    GroupAutoencoder,
    SOURCE_AE_DEFAULTS,
    ae_loss,
    group_reconstruction_error,
    select_active_latents,
    train_autoencoder,
)
from gslosh.state import GROUP_NAMES

from gradcheck import assert_gradients_close


class TestAeLoss:
    def test_perfect_reconstruction_and_silent_code(self):
        s = np.array([[1.0, 2.0]])
        assert float(ae_loss(s, s, np.zeros((1, 3)), 0.001).data) == 0.0

    def test_hand_evaluated_value(self):
        # Mean over the two entries of (1,0) vs (0,0) is 0.5; the code L1
        # adds 0.001 * |2| for the single sample.
        s = np.array([[1.0, 0.0]])
        s_hat = np.zeros((1, 2))
        code = np.array([[2.0]])
        assert float(ae_loss(s, s_hat, code, 0.001).data) == pytest.approx(0.502)

    def test_zero_weight_reduces_to_mse(self):
        rng = np.random.default_rng(0)
        s, s_hat = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
        code = rng.normal(size=(4, 2))
        expected = np.mean((s - s_hat) ** 2)
        assert float(ae_loss(s, s_hat, code, 0.0).data) == pytest.approx(expected)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        spec = AutoencoderSpec("q", [5], 3, epochs=1)
        data = rng.normal(size=(6, 4))
        ae = GroupAutoencoder.build(rng, 4, spec, data.mean(axis=0), 1.0)

        def loss():
            code, recon = ae.forward(data)
            return ae_loss(data, recon, code, 0.002)

        assert_gradients_close(loss, ae.params)


class TestGroupAutoencoder:
    def test_zero_weights_give_constant_output(self):
        rng = np.random.default_rng(2)
        spec = AutoencoderSpec("q", [4], 2, epochs=1)
        ae = GroupAutoencoder.build(rng, 5, spec, np.zeros(5), 1.0)
        for name in ae.params.names():
            if not ae.params.is_frozen(name):
                ae.params[name].data[:] = 0.0
        a = ae.forward(rng.normal(size=(3, 5)))
        b = ae.forward(rng.normal(size=(3, 5)))
        np.testing.assert_array_equal(a[1].data, b[1].data)
        np.testing.assert_array_equal(a[0].data, np.zeros((3, 2)))

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        ae = GroupAutoencoder.build(rng, 5, AutoencoderSpec("q", [4], 2), np.zeros(5), 1.0)
        with pytest.raises(ndgrad.ShapeError):
            ae.encode(np.zeros((2, 7)))

    def test_overfits_a_tiny_dataset(self):
        # Capacity matching the data: 3 samples must be reconstructable
        # almost exactly after enough epochs.
        rng = np.random.default_rng(4)
        data = rng.normal(size=(3, 6))
        spec = AutoencoderSpec("q", [6], 3, l1_weight=0.0, lr=3e-3, wd=0.0,
                               epochs=3000)
        ae, history = train_autoencoder(data, spec, seed=5)
        _, recon = ae.forward(data)
        assert np.abs(recon.data - data).max() <= 1e-3
        assert history[-1] < history[0] / 10.0

    def test_decode_is_deterministic(self):
        rng = np.random.default_rng(6)
        ae = GroupAutoencoder.build(rng, 4, AutoencoderSpec("q", [3], 2), np.zeros(4), 2.0)
        code = rng.normal(size=(2, 2))
        assert ae.decode(code).data.tobytes() == ae.decode(code).data.tobytes()

    def test_architecture_recovered_from_params(self):
        rng = np.random.default_rng(7)
        ae = GroupAutoencoder.build(rng, 9, AutoencoderSpec("q", [7, 5], 3), np.zeros(9), 1.0)
        back = GroupAutoencoder.from_params(ae.params)
        assert back.widths == [7, 5] and back.bottleneck == 3


class TestActiveLatentSelection:
    def _codes(self, means, n=50):
        rng = np.random.default_rng(8)
        out = {}
        for g, m in means.items():
            m = np.asarray(m, dtype=np.float64)
            signs = rng.choice([-1.0, 1.0], size=(n, m.size))
            out[g] = signs * m
        return out

    def test_threshold_keeps_dominant_units(self):
        codes = self._codes({
            "q": [10.0, 9.0, 0.01, 0.02],
            "v": [0.0], "e": [0.0], "sigma": [0.0], "tau": [0.0],
        })
        lm = select_active_latents(codes, threshold=0.1)
        assert lm.active["q"].tolist() == [0, 1]
        assert lm.dim == 2

    def test_identically_zero_unit_excluded(self):
        codes = self._codes({
            "q": [1.0, 0.0], "v": [0.5], "e": [0.2], "sigma": [0.1], "tau": [0.3],
        })
        lm = select_active_latents(codes, threshold=0.01)
        assert 1 not in lm.active["q"].tolist()

    def test_sweep_hits_requested_total(self):
        rng = np.random.default_rng(9)
        codes = {g: rng.normal(size=(40, 8)) * rng.uniform(0.01, 1.0, size=8)
                 for g in GROUP_NAMES}
        lm = select_active_latents(codes, threshold=0.0, target_total=13)
        assert lm.dim == 13

    def test_impossible_total_reported(self):
        codes = self._codes({g: [1.0] for g in GROUP_NAMES})
        with pytest.raises(ValueError, match="active units"):
            select_active_latents(codes, 0.1, target_total=10)

    def test_slices_partition_the_latent(self):
        rng = np.random.default_rng(10)
        codes = {g: rng.normal(size=(30, 5)) for g in GROUP_NAMES}
        lm = select_active_latents(codes, threshold=0.0, target_total=9)
        stops = [lm.slices[g].stop - lm.slices[g].start for g in GROUP_NAMES]
        assert sum(stops) == 9 == lm.dim


class TestBank:
    def _tiny_bank(self, seed=11):
        rng = np.random.default_rng(seed)
        aes = {}
        codes = {}
        data = {}
        for g in GROUP_NAMES:
            spec = AutoencoderSpec(g, [6], 3, l1_weight=0.0, lr=5e-3, epochs=400)
            data[g] = rng.normal(size=(40, 8)) * 0.3 + rng.normal(size=8)
            aes[g], _ = train_autoencoder(data[g], spec, seed=seed + hash(g) % 100)
            codes[g] = aes[g].encode(data[g]).data
        lm = select_active_latents(codes, threshold=0.0, target_total=8)
        return AutoencoderBank(aes, lm), data

    def test_checkpoint_round_trip_bit_exact(self, tmp_path):
        bank, data = self._tiny_bank()
        path = tmp_path / "ae.gsnn"
        bank.save(path)
        back = AutoencoderBank.load(path)
        assert back.to_params().equal_bits(bank.to_params())
        x = bank.encode_state(data)
        np.testing.assert_array_equal(back.encode_state(data), x)
        for g in GROUP_NAMES:
            np.testing.assert_array_equal(
                back.decode_state(x)[g], bank.decode_state(x)[g]
            )

    def test_truncated_reconstruction_stays_close(self):
        bank, data = self._tiny_bank()
        errors = group_reconstruction_error(bank, data)
        assert max(errors.values()) < 0.5  # smoke level; tuned runs do better


def test_source_defaults_follow_the_reference_table():
    assert SOURCE_AE_DEFAULTS["q"].widths == [120, 120]
    assert SOURCE_AE_DEFAULTS["q"].wd == 1e-6
    assert SOURCE_AE_DEFAULTS["v"].widths == [200] * 4
    assert SOURCE_AE_DEFAULTS["e"].bottleneck == 10
    assert SOURCE_AE_DEFAULTS["tau"].lr == 1e-3
    for spec in SOURCE_AE_DEFAULTS.values():
        assert spec.epochs == 10000
        assert 0.001 <= spec.l1_weight <= 0.005
