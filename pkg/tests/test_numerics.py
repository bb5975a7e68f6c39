import numpy as np
import pytest

from docevents.numerics import (MlpParams, NumericError, OptimState, finite_diff_check,
                                load_checkpoint, mlp_backward, mlp_forward, mlp_init,
                                optim_step, save_checkpoint, softmax)


def scalar_loop_forward(params, x):
    """Independent re-implementation of the MLP evaluated term by term."""
    h = [list(row) for row in x]
    last = len(params.weights) - 1
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        out = []
        for row in h:
            new = []
            for j in range(w.shape[1]):
                z = b[j]
                for i in range(w.shape[0]):
                    z += row[i] * w[i, j]
                if li < last:
                    z = max(z, 0.0)
                elif params.output_activation == "logistic":
                    z = 1.0 / (1.0 + np.exp(-z))
                new.append(z)
            out.append(new)
        h = out
    return np.array(h)


class TestForward:
    def test_identity_single_layer(self):
        p = MlpParams(weights=[np.eye(3)], biases=[np.zeros(3)])
        x = np.random.default_rng(0).standard_normal((4, 3))
        y, _ = mlp_forward(p, x)
        assert np.array_equal(y, x)

    def test_zero_weights_yield_bias(self):
        b = np.array([1.0, -2.0])
        p = MlpParams(weights=[np.zeros((3, 2))], biases=[b])
        y, _ = mlp_forward(p, np.ones((5, 3)))
        assert np.allclose(y, b)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(4)
        p = mlp_init(rng, [5, 7, 3])
        x = rng.standard_normal((6, 5))
        y, _ = mlp_forward(p, x)
        assert np.allclose(y, scalar_loop_forward(p, x), atol=1e-12)

    def test_logistic_output_matches_scalar_loop(self):
        rng = np.random.default_rng(5)
        p = mlp_init(rng, [4, 6, 2], output_activation="logistic")
        x = rng.standard_normal((3, 4))
        y, _ = mlp_forward(p, x)
        assert np.allclose(y, scalar_loop_forward(p, x), atol=1e-12)

    def test_shape_mismatch_raises(self):
        p = mlp_init(np.random.default_rng(0), [4, 2])
        with pytest.raises(NumericError, match="shape"):
            mlp_forward(p, np.zeros((3, 5)))

    def test_deterministic_within_build(self):
        rng = np.random.default_rng(9)
        p = mlp_init(rng, [4, 8, 2])
        x = rng.standard_normal((10, 4))
        y1, _ = mlp_forward(p, x)
        y2, _ = mlp_forward(p, x)
        assert np.array_equal(y1, y2)


class TestBackward:
    def test_linear_layer_closed_form(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal((3, 4))
        p = MlpParams(weights=[w], biases=[np.zeros(4)])
        x = rng.standard_normal((5, 3))
        _, cache = mlp_forward(p, x)
        grads, grad_x = mlp_backward(p, cache, np.ones((5, 4)))
        assert np.allclose(grads.biases[0], 5.0)
        assert np.allclose(grad_x, np.repeat(w.sum(axis=1)[None, :], 5, axis=0))

    def test_zero_grad_y_gives_zero_gradients(self):
        rng = np.random.default_rng(2)
        p = mlp_init(rng, [3, 5, 2])
        x = rng.standard_normal((4, 3))
        _, cache = mlp_forward(p, x)
        grads, grad_x = mlp_backward(p, cache, np.zeros((4, 2)))
        assert all(np.all(g == 0) for g in grads.weights)
        assert np.all(grad_x == 0)

    def test_stale_cache_rejected(self):
        rng = np.random.default_rng(3)
        p1 = mlp_init(rng, [3, 2])
        p2 = mlp_init(rng, [3, 2])
        _, cache = mlp_forward(p1, rng.standard_normal((2, 3)))
        with pytest.raises(NumericError, match="stale"):
            mlp_backward(p2, cache, np.zeros((2, 2)))

    @pytest.mark.parametrize("seed", range(10))
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        dims = [int(rng.integers(2, 5)) for _ in range(3)]
        p = mlp_init(rng, dims)
        x0 = rng.standard_normal((3, dims[0]))
        w_shape = p.weights[0].shape

        def f_of_w(w_flat):
            p.weights[0][...] = w_flat.reshape(w_shape)
            y, cache = mlp_forward(p, x0)
            loss = float((y ** 2).sum())
            grads, _ = mlp_backward(p, cache, 2.0 * y)
            return loss, grads.weights[0].reshape(-1)

        err = finite_diff_check(f_of_w, p.weights[0].reshape(-1).copy(), eps=1e-5)
        assert err < 1e-4

        def f_of_x(x):
            y, cache = mlp_forward(p, x)
            loss = float((y ** 2).sum())
            _, grad_x = mlp_backward(p, cache, 2.0 * y)
            return loss, grad_x

        assert finite_diff_check(f_of_x, x0, eps=1e-5) < 1e-4


class TestOptimizer:
    def test_zero_grads_zero_decay_leave_params_unchanged(self):
        state = OptimState(lr=1e-3, weight_decay=0.0)
        params = {"w": np.array([1.0, -2.0])}
        optim_step(state, params, {"w": np.zeros(2)})
        assert np.array_equal(params["w"], [1.0, -2.0])
        assert state.step_count == 1

    def test_descent_direction_on_square(self):
        state = OptimState(lr=1e-2, weight_decay=0.0)
        params = {"w": np.array([1.0])}
        optim_step(state, params, {"w": np.array([2.0])})  # d(w^2)/dw at w=1
        assert params["w"][0] < 1.0

    def test_converges_on_convex_quadratic(self):
        rng = np.random.default_rng(8)
        a = rng.uniform(0.5, 2.0, size=6)
        w_star = rng.uniform(-1.0, 1.0, size=6)
        params = {"w": np.zeros(6)}
        state = OptimState(lr=0.05, weight_decay=0.0)
        for _ in range(500):
            grad = a * (params["w"] - w_star)
            optim_step(state, params, {"w": grad})
        assert np.max(np.abs(params["w"] - w_star)) < 1e-3

    def test_non_finite_gradient_names_the_tensor(self):
        state = OptimState()
        params = {"layer/w": np.zeros(2)}
        with pytest.raises(NumericError, match="layer/w"):
            optim_step(state, params, {"layer/w": np.array([np.nan, 0.0])})


class TestFiniteDiffCheck:
    def test_quadratic_is_nearly_exact(self):
        def f(x):
            return float((x ** 2).sum()), 2.0 * x

        err = finite_diff_check(f, np.array([1.0, -0.5, 2.0]), eps=1e-5)
        assert err < 1e-8

    def test_mlp_scalar_output(self):
        rng = np.random.default_rng(11)
        p = mlp_init(rng, [4, 6, 1])
        x0 = rng.standard_normal((2, 4))

        def f(x):
            y, cache = mlp_forward(p, x)
            _, gx = mlp_backward(p, cache, np.ones_like(y))
            return float(y.sum()), gx

        assert finite_diff_check(f, x0, eps=1e-5) < 1e-4

    def test_zero_eps_rejected(self):
        with pytest.raises(ValueError):
            finite_diff_check(lambda x: (0.0, x), np.ones(2), eps=0.0)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(12)
        arrays = {"a/w0": rng.standard_normal((3, 4)),
                  "b": rng.standard_normal(7),
                  "c/deep/x": np.array([[1e-300, -0.0], [np.pi, 2.0 ** 52]])}
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, arrays, meta={"mode": "base", "seed": 3})
        loaded, meta = load_checkpoint(path)
        assert meta == {"mode": "base", "seed": 3}
        assert set(loaded) == set(arrays)
        for name in arrays:
            assert loaded[name].tobytes() == arrays[name].tobytes()

    def test_byte_deterministic(self, tmp_path):
        arrays = {"x": np.arange(6, dtype=np.float64).reshape(2, 3)}
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, arrays, meta={"k": 1})
        save_checkpoint(p2, arrays, meta={"k": 1})
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(NumericError):
            load_checkpoint(path)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(13)
    probs = softmax(rng.standard_normal((20, 6)) * 10, axis=1)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
