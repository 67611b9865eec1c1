import math

import numpy as np
import pytest

from gslosh import ndgrad
from gslosh.ndgrad import (
    Adam,
    ParameterSet,
    Tensor,
    dense_forward,
    gru_cell_forward,
    gru_cell_init,
)

from gradcheck import assert_gradients_close


class TestDenseForward:
    def test_identity(self):
        y = dense_forward([1.0, 2.0, 3.0], np.eye(3), np.zeros(3), "linear")
        np.testing.assert_array_equal(y.data, [1.0, 2.0, 3.0])

    def test_relu_clamps(self):
        y = dense_forward([-1.0, 0.0, 2.0], np.eye(3), np.zeros(3), "relu")
        np.testing.assert_array_equal(y.data, [0.0, 0.0, 2.0])

    def test_hand_evaluated_relu_case(self):
        w = np.array([[1.0, 1.0], [1.0, -1.0]])
        y = dense_forward([1.0, 2.0], w, np.zeros(2), "relu")
        np.testing.assert_array_equal(y.data, [3.0, 0.0])

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        w, b = rng.normal(size=(3, 4)), rng.normal(size=3)
        xs = rng.normal(size=(5, 4))
        batch = dense_forward(xs, w, b, "tanh").data
        for i, x in enumerate(xs):
            np.testing.assert_allclose(
                batch[i], dense_forward(x, w, b, "tanh").data, rtol=1e-13
            )

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ndgrad.ShapeError, match=r"\(3,\).*\(2, 2\)"):
            dense_forward([1.0, 2.0, 3.0], np.eye(2), np.zeros(2))


class TestGruCell:
    def test_zero_weights_halve_hidden_state(self):
        # z = sigmoid(0) = 0.5 and the candidate is tanh(0) = 0, so the
        # update keeps exactly half of the previous hidden state.
        p = {k: np.zeros((2, 2)) if k[0] in "wu" else np.zeros(2)
             for k in ndgrad.GRU_PARAM_KEYS}
        h = np.array([0.4, -1.2])
        out = gru_cell_forward(np.zeros(2), h, p)
        np.testing.assert_allclose(out.data, 0.5 * h, rtol=0, atol=1e-15)

    def test_zero_hidden_and_weights_stay_zero(self):
        p = {k: np.zeros((3, 3)) if k[0] in "wu" else np.zeros(3)
             for k in ndgrad.GRU_PARAM_KEYS}
        out = gru_cell_forward(np.zeros(3), np.zeros(3), p)
        np.testing.assert_array_equal(out.data, np.zeros(3))

    def test_scalar_cell_against_hand_computation(self):
        p = {
            "wz": [[0.5]], "uz": [[0.25]], "bz": [0.1],
            "wr": [[-0.3]], "ur": [[0.2]], "br": [0.05],
            "wn": [[0.8]], "un": [[-0.4]], "bn": [0.2],
        }
        x, h = 1.0, 0.5
        sig = lambda a: 1.0 / (1.0 + math.exp(-a))
        z = sig(0.5 * x + 0.25 * h + 0.1)
        r = sig(-0.3 * x + 0.2 * h + 0.05)
        n = math.tanh(0.8 * x - 0.4 * (r * h) + 0.2)
        expected = (1 - z) * n + z * h
        out = gru_cell_forward(np.array([x]), np.array([h]), p)
        np.testing.assert_allclose(out.data, [expected], rtol=1e-15)

    def test_shape_mismatch_rejected(self):
        p = gru_cell_init(np.random.default_rng(0), 3, 4)
        with pytest.raises(ndgrad.ShapeError):
            gru_cell_forward(np.zeros(5), np.zeros(4), p)


class TestBackward:
    def test_square_gradient(self):
        ps = ParameterSet()
        x = ps.add("x", np.array(3.0))
        with ndgrad.trace() as tape:
            loss = ndgrad.mul(x, x)
            grads = tape.gradients(loss, ps)
        assert grads["x"] == pytest.approx(6.0)

    def test_non_scalar_loss_rejected(self):
        ps = ParameterSet()
        x = ps.add("x", np.array([1.0, 2.0]))
        with ndgrad.trace() as tape:
            y = ndgrad.square(x)
            with pytest.raises(ndgrad.GradientError):
                tape.gradients(y, ps)

    def test_frozen_parameter_gets_no_gradient(self):
        ps = ParameterSet()
        x = ps.add("x", np.array(2.0))
        ps.add("y", np.array(5.0), frozen=True)
        with ndgrad.trace() as tape:
            loss = ndgrad.add(ndgrad.square(x), ndgrad.square(ps["y"]))
            grads = tape.gradients(loss, ps)
        assert set(grads) == {"x"}

    def test_reused_node_accumulates(self):
        ps = ParameterSet()
        x = ps.add("x", np.array(2.0))
        with ndgrad.trace() as tape:
            y = ndgrad.add(ndgrad.mul(x, x), x)  # x^2 + x
            grads = tape.gradients(y, ps)
        assert grads["x"] == pytest.approx(5.0)

    def test_untraced_ops_keep_no_parents(self):
        x = Tensor([1.0, 2.0])
        y = ndgrad.square(x)
        assert y._parents == () and y._vjp is None


class TestAdam:
    def test_first_step_moves_by_lr(self):
        ps = ParameterSet()
        ps.add("w", np.array(1.0))
        opt = Adam(ps, lr=1e-3)
        opt.step({"w": np.array(0.37)})
        # Bias correction makes the first update lr * g / (|g| + eps).
        assert ps["w"].data == pytest.approx(1.0 - 1e-3, rel=1e-6)

    def test_zero_gradient_leaves_parameter(self):
        ps = ParameterSet()
        ps.add("w", np.array([1.0, -2.0]))
        opt = Adam(ps, lr=1e-2)
        opt.step({"w": np.zeros(2)})
        np.testing.assert_array_equal(ps["w"].data, [1.0, -2.0])

    def test_frozen_parameter_is_bit_identical(self):
        ps = ParameterSet()
        ps.add("w", np.array([0.1, 0.2]), frozen=True)
        before = ps["w"].data.tobytes()
        opt = Adam(ps, lr=0.1)
        opt.step({"w": np.ones(2)})
        assert ps["w"].data.tobytes() == before

    def test_decoupled_weight_decay(self):
        ps = ParameterSet()
        ps.add("w", np.array(2.0))
        opt = Adam(ps, lr=0.1, weight_decay=0.5)
        opt.step({"w": np.array(0.0)})
        # Zero gradient: only the decay term lr * wd * theta applies.
        assert ps["w"].data == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


class TestDeterminism:
    def test_identical_runs_bit_identical(self):
        def run():
            rng = np.random.default_rng(1234)
            ps = ParameterSet()
            ps.add("w", ndgrad.xavier_uniform(rng, 4, 3))
            ps.add("b", np.zeros(4))
            opt = Adam(ps, lr=1e-2, weight_decay=1e-4)
            x = rng.normal(size=(8, 3))
            target = rng.normal(size=(8, 4))
            for _ in range(5):
                with ndgrad.trace() as tape:
                    y = dense_forward(x, ps["w"], ps["b"], "tanh")
                    loss = ndgrad.mean_all(ndgrad.square(ndgrad.sub(y, target)))
                    grads = tape.gradients(loss, ps)
                opt.step(grads)
            return ps["w"].data.tobytes(), ps["b"].data.tobytes()

        assert run() == run()


class TestCheckpointFormat:
    def _sample_params(self):
        ps = ParameterSet()
        rng = np.random.default_rng(7)
        ps.add("layer.w", rng.normal(size=(3, 2)))
        ps.add("layer.b", rng.normal(size=3), frozen=True)
        ps.add("scalar", np.array(2.5))
        return ps

    def test_round_trip_bit_exact(self, tmp_path):
        ps = self._sample_params()
        path = tmp_path / "model.gsnn"
        ndgrad.save_params(path, ps)
        back = ndgrad.load_params(path)
        assert back.names() == ps.names()
        assert back.equal_bits(ps)
        assert back.is_frozen("layer.b") and not back.is_frozen("layer.w")

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "model.gsnn"
        ndgrad.save_params(path, self._sample_params())
        blob = bytearray(path.read_bytes())
        blob[:8] = b"XXXX0000"
        path.write_bytes(bytes(blob))
        with pytest.raises(ndgrad.CheckpointError, match="magic"):
            ndgrad.load_params(path)

    def test_truncation_rejected_with_offset(self, tmp_path):
        path = tmp_path / "model.gsnn"
        ndgrad.save_params(path, self._sample_params())
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 5])
        with pytest.raises(ndgrad.CheckpointError, match="offset"):
            ndgrad.load_params(path)


class TestGradientsAgainstFiniteDifferences:
    """Every layer and primitive op, on small random instances."""

    def test_dense_layers(self):
        rng = np.random.default_rng(42)
        for act in ("linear", "relu", "tanh", "sigmoid"):
            ps = ParameterSet()
            ps.add("w", rng.normal(size=(3, 4)) * 0.7)
            ps.add("b", rng.normal(size=3) * 0.3)
            x = rng.normal(size=(6, 4)) + 0.1
            t = rng.normal(size=(6, 3))

            def loss():
                y = dense_forward(x, ps["w"], ps["b"], act)
                return ndgrad.mean_all(ndgrad.square(ndgrad.sub(y, t)))

            assert_gradients_close(loss, ps)

    def test_gru_cell(self):
        rng = np.random.default_rng(43)
        ps = ParameterSet()
        init = gru_cell_init(rng, 3, 4)
        for k, v in init.items():
            ps.add(k, v)
        x = rng.normal(size=(5, 3))
        h = rng.normal(size=(5, 4)) * 0.5
        t = rng.normal(size=(5, 4))

        def loss():
            out = gru_cell_forward(x, h, {k: ps[k] for k in ndgrad.GRU_PARAM_KEYS})
            return ndgrad.mean_all(ndgrad.square(ndgrad.sub(out, t)))

        assert_gradients_close(loss, ps)

    def test_gru_cell_input_and_state_gradients(self):
        rng = np.random.default_rng(44)
        init = gru_cell_init(rng, 2, 3)
        weights = {k: Tensor(v) for k, v in init.items()}
        ps = ParameterSet()
        ps.add("x", rng.normal(size=(4, 2)))
        ps.add("h", rng.normal(size=(4, 3)))
        t = rng.normal(size=(4, 3))

        def loss():
            out = gru_cell_forward(ps["x"], ps["h"], weights)
            return ndgrad.mean_all(ndgrad.square(ndgrad.sub(out, t)))

        assert_gradients_close(loss, ps)

    def test_structured_ops(self):
        rng = np.random.default_rng(45)
        d = 4
        n_skew = d * (d - 1) // 2
        n_tri = d * (d + 1) // 2
        ps = ParameterSet()
        ps.add("p", rng.normal(size=(3, n_skew + n_tri + 2 * d)))
        x = rng.normal(size=(3, d))

        def loss():
            p = ps["p"]
            a = ndgrad.fill_tril(ndgrad.slice_last(p, 0, n_skew), d, strict=True)
            l = ndgrad.sub(a, ndgrad.transpose_last2(a))
            b = ndgrad.fill_tril(
                ndgrad.slice_last(p, n_skew, n_skew + n_tri), d, strict=False
            )
            m = ndgrad.matmul(b, ndgrad.transpose_last2(b))
            de = ndgrad.slice_last(p, n_skew + n_tri, n_skew + n_tri + d)
            ds = ndgrad.slice_last(p, n_skew + n_tri + d, n_skew + n_tri + 2 * d)
            step = ndgrad.add(ndgrad.matvec(l, de), ndgrad.matvec(m, ds))
            drift = ndgrad.sum_all(ndgrad.square(ndgrad.sub(step, x)))
            pen = ndgrad.add(
                ndgrad.sum_all(ndgrad.square(ndgrad.matvec(l, ds))),
                ndgrad.sum_all(ndgrad.square(ndgrad.matvec(m, de))),
            )
            return ndgrad.add(drift, ndgrad.scale(pen, 0.5))

        assert_gradients_close(loss, ps)

    def test_gather_scatter_and_l1(self):
        rng = np.random.default_rng(46)
        ps = ParameterSet()
        ps.add("v", rng.normal(size=(4, 5)) + 0.2)
        idx = np.array([3, 0, 4])
        base = rng.normal(size=7)

        def loss():
            picked = ndgrad.gather_last(ps["v"], idx)
            spread = ndgrad.scatter_into(picked, np.array([1, 2, 6]), base)
            return ndgrad.add(
                ndgrad.mean_all(ndgrad.square(spread)),
                ndgrad.scale(ndgrad.l1_sum(picked), 0.01),
            )

        assert_gradients_close(loss, ps)
