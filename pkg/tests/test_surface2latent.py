import numpy as np
import pytest

from gslosh import ndgrad
from gslosh.state import SurfaceObservation
from gslosh.surface2latent import (
    GruConfig,
    ObservationSequence,
    SurfaceEncoder,
    encode_sequence,
    gru_loss,
    make_windows,
    train_surface_encoder,
)

from gradcheck import assert_gradients_close


def tiny_config(**kw):
    base = dict(input_dim=6, hidden=5, n_layers=2, latent_dim=3, window=4,
                lr=3e-3, wd=0.0, epochs=300)
    base.update(kw)
    return GruConfig(**base)


def build_encoder(cfg, seed=0, center=None, scale=1.0):
    rng = np.random.default_rng(seed)
    center = np.zeros(cfg.input_dim) if center is None else center
    return SurfaceEncoder.build(rng, cfg, center, scale)


class TestEncoder:
    def test_zero_weights_give_zero_latent(self):
        cfg = tiny_config()
        enc = build_encoder(cfg)
        for name in enc.params.names():
            if not enc.params.is_frozen(name):
                enc.params[name].data[:] = 0.0
        out = enc.encode(np.random.default_rng(1).normal(size=(3, 4, 6)))
        np.testing.assert_array_equal(out.data, np.zeros((3, 3)))

    def test_wrong_window_length_rejected(self):
        enc = build_encoder(tiny_config())
        with pytest.raises(ndgrad.ShapeError):
            enc.encode(np.zeros((2, 5, 6)))

    def test_order_sensitivity(self):
        enc = build_encoder(tiny_config(), seed=3)
        rng = np.random.default_rng(4)
        w = rng.normal(size=(1, 4, 6))
        forward = enc.encode(w).data
        backward = enc.encode(w[:, ::-1, :].copy()).data
        assert np.abs(forward - backward).max() > 1e-6

    def test_config_recovered_from_params(self):
        enc = build_encoder(tiny_config(hidden=7, n_layers=3, window=5))
        back = SurfaceEncoder.from_params(enc.params)
        assert back.config == GruConfig(
            input_dim=6, hidden=7, n_layers=3, latent_dim=3, window=5
        )

    def test_gradients_match_finite_differences(self):
        cfg = tiny_config(window=3)
        enc = build_encoder(cfg, seed=5)
        rng = np.random.default_rng(6)
        windows = rng.normal(size=(4, 3, 6))
        targets = ndgrad.Tensor(rng.normal(size=(4, 3)))

        def loss():
            return gru_loss(enc.encode(windows), targets)

        assert_gradients_close(loss, enc.params)


class TestGruLoss:
    def test_perfect_prediction_is_zero(self):
        x = np.random.default_rng(0).normal(size=(5, 13))
        assert float(gru_loss(x, x).data) == 0.0

    def test_single_unit_error_over_13_dims(self):
        x = np.zeros(13)
        x_hat = np.zeros(13)
        x_hat[0] = 1.0
        assert float(gru_loss(x_hat, x).data) == pytest.approx(1.0 / 13.0)

    def test_quadratic_scaling(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 6))
        r = rng.normal(size=(4, 6))
        one = float(gru_loss(x + r, x).data)
        two = float(gru_loss(x + 2 * r, x).data)
        assert two == pytest.approx(4.0 * one, rel=1e-12)


class TestWindows:
    def test_windows_cover_the_series(self):
        series = np.arange(20).reshape(10, 2).astype(float)
        wins, ends = make_windows(series, window=4)
        assert wins.shape == (7, 4, 2)
        assert ends.tolist() == list(range(3, 10))
        np.testing.assert_array_equal(wins[0], series[0:4])

    def test_horizon_reserves_targets(self):
        series = np.zeros((10, 2))
        _, ends = make_windows(series, window=4, horizon=1)
        assert ends.tolist() == list(range(3, 9))

    def test_run_bounds_are_respected(self):
        series = np.arange(16).reshape(8, 2).astype(float)
        wins, ends = make_windows(series, window=3, run_bounds=[0, 4, 8])
        assert ends.tolist() == [2, 3, 6, 7]
        np.testing.assert_array_equal(wins[2], series[4:7])


class TestObservationSequence:
    def test_mixed_station_counts_rejected(self):
        a = SurfaceObservation(np.linspace(0, 1, 5), np.zeros(5))
        b = SurfaceObservation(np.linspace(0, 1, 7), np.zeros(7))
        with pytest.raises(ValueError):
            ObservationSequence([a, b], dt=0.005)

    def test_encode_sequence_validates_window(self):
        enc = build_encoder(tiny_config(input_dim=10, window=4))
        obs = [SurfaceObservation(np.linspace(0, 1, 5), np.full(5, 0.1))
               for _ in range(3)]
        with pytest.raises(ValueError, match="expects"):
            encode_sequence(ObservationSequence(obs, dt=0.005), enc)

    def test_encode_sequence_matches_batch_path(self):
        cfg = tiny_config(input_dim=10, window=4)
        enc = build_encoder(cfg, seed=9)
        obs = [SurfaceObservation(np.linspace(0, 1, 5),
                                  np.random.default_rng(i).normal(size=5))
               for i in range(4)]
        seq = ObservationSequence(obs, dt=0.005)
        single = encode_sequence(seq, enc)
        batch = enc.encode(seq.as_array()[None]).data[0]
        np.testing.assert_array_equal(single, batch)


class TestTraining:
    def test_encoder_learns_a_linear_readout(self):
        # Synthetic task: the latent is a linear function of the last
        # snapshot in the window, easily reachable for the GRU stack.
        rng = np.random.default_rng(11)
        cfg = tiny_config(epochs=500, lr=5e-3)
        series = rng.normal(size=(60, 6)) * 0.5
        wins, ends = make_windows(series, cfg.window)
        proj = rng.normal(size=(6, 3))
        targets = series[ends] @ proj
        enc, history = train_surface_encoder(wins, targets, cfg, seed=12)
        assert history[-1] < history[0] / 10.0

    def test_default_config_follows_the_reference_table(self):
        cfg = GruConfig()
        assert (cfg.input_dim, cfg.hidden, cfg.n_layers) == (42, 26, 3)
        assert (cfg.latent_dim, cfg.window) == (13, 16)
        assert (cfg.lr, cfg.wd, cfg.epochs) == (1e-3, 1e-5, 10000)
