import math

import numpy as np
import pytest

from sevae import autodiff as ad
from sevae.errors import ConfigError, DimensionError, TrainingError
from sevae.nn import (Adam, AdamState, LinearLayer, Mlp, adam_step, init_mlp, load_params,
                      mlp_forward, save_params)

from oracles import central_fd, rel_error


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_mlp([6, 64, 64, 1], 7)
        b = init_mlp([6, 64, 64, 1], 7)
        for (na, pa), (nb, pb) in zip(a.parameters().items(), b.parameters().items()):
            assert na == nb
            assert pa.value.tobytes() == pb.value.tobytes()

    def test_different_seed_differs(self):
        a = init_mlp([6, 8], 1).layers[0].weight.value
        b = init_mlp([6, 8], 2).layers[0].weight.value
        assert not np.array_equal(a, b)

    def test_kaiming_bound(self):
        w = init_mlp([4, 8], 0).layers[0].weight.value
        assert np.all(np.abs(w) <= math.sqrt(6 / 4))
        # the uniform draw should actually use most of the range
        assert np.abs(w).max() > 0.5 * math.sqrt(6 / 4)

    @pytest.mark.parametrize("dims", [[3, 5], [6, 64, 64, 1], [2, 4, 4, 4, 2]])
    def test_biases_zero(self, dims):
        for layer in init_mlp(dims, 3).layers:
            assert np.all(layer.bias.value == 0.0)

    def test_parameter_names(self):
        names = list(init_mlp([3, 4, 2], 0, "enc").parameters())
        assert names == ["enc.0.weight", "enc.0.bias", "enc.1.weight", "enc.1.bias"]

    @pytest.mark.parametrize("dims", [[3], [3, 0, 2], [], [4, -1]])
    def test_bad_dims(self, dims):
        with pytest.raises(ConfigError):
            init_mlp(dims, 0)

    def test_layers_must_chain(self):
        l1 = LinearLayer(ad.Parameter(np.ones((2, 3)), "a"), ad.Parameter(np.zeros((1, 3)), "b"))
        l2 = LinearLayer(ad.Parameter(np.ones((4, 1)), "c"), ad.Parameter(np.zeros((1, 1)), "d"))
        with pytest.raises(DimensionError):
            Mlp([l1, l2])


class TestForward:
    def test_identity_layer(self):
        layer = LinearLayer(ad.Parameter(np.eye(3), "w"), ad.Parameter(np.zeros((1, 3)), "b"))
        x = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_array_equal(mlp_forward(Mlp([layer]), ad.const(x)).value, x)

    def test_dead_relu_leaves_bias_path(self):
        mlp = init_mlp([3, 4, 2], 0)
        mlp.layers[0].weight.value = -np.ones((3, 4))
        mlp.layers[0].bias.value = np.full((1, 4), -1.0)
        mlp.layers[1].bias.value = np.array([[0.25, -0.5]])
        x = np.abs(np.random.default_rng(1).normal(size=(6, 3)))
        out = mlp_forward(mlp, ad.const(x)).value
        np.testing.assert_array_equal(out, np.tile([[0.25, -0.5]], (6, 1)))

    def test_three_layer_gradient(self):
        mlp = init_mlp([4, 5, 5, 2], 3, activation="tanh")
        x = np.random.default_rng(2).normal(size=(6, 4))
        loss = ad.mean(ad.square(mlp(ad.const(x))))
        grads = ad.backward(loss, mlp.parameters())
        for name, p in mlp.parameters().items():
            orig = p.value

            def f(v, p=p):
                p.value = v
                out = float(ad.mean(ad.square(mlp(ad.const(x)))).value[0, 0])
                return out

            numeric = central_fd(f, orig.copy())
            p.value = orig
            assert rel_error(grads[name], numeric) < 1e-6, name

    def test_input_width_checked(self):
        with pytest.raises(DimensionError):
            init_mlp([3, 2], 0)(ad.const(np.ones((2, 4))))

    def test_unknown_activation(self):
        with pytest.raises(ConfigError):
            init_mlp([3, 2], 0, activation="gelu")


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = ad.Parameter([[1.0, -2.0]], "p")
        state = adam_step({"p": p}, {"p": np.zeros((1, 2))}, AdamState())
        np.testing.assert_array_equal(p.value, [[1.0, -2.0]])
        assert state.t == 1

    @pytest.mark.parametrize("g", [1e-6, 0.3, 250.0, -4.0])
    def test_first_step_is_lr_sign(self, g):
        # m_hat = g and v_hat = g^2 at t=1, so the step is lr * g / (|g| + eps)
        p = ad.Parameter([[0.0]], "p")
        adam_step({"p": p}, {"p": np.array([[g]])}, AdamState(lr=0.01))
        expected = -0.01 * g / (abs(g) + 1e-8)
        assert p.value[0, 0] == pytest.approx(expected, rel=1e-12)
        if abs(g) > 1e-3:
            assert p.value[0, 0] == pytest.approx(-0.01 * np.sign(g), rel=1e-6)

    def test_scalar_quadratic_descent(self):
        theta = ad.Parameter([[5.0]], "theta")
        opt = Adam({"theta": theta}, lr=0.1)
        losses = []
        for _ in range(200):
            loss = ad.sum_(ad.square(theta))
            losses.append(loss.item())
            opt.step(ad.backward(loss))
        assert abs(theta.value[0, 0]) < 0.1
        # monotone over a trailing window once the transient has passed
        window = losses[60:80]
        assert all(b < a for a, b in zip(window, window[1:]))

    def test_convex_quadratic_monotone_after_transient(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(5, 5))
        H = A @ A.T + np.eye(5)
        theta = ad.Parameter(rng.normal(size=(5, 1)), "theta")
        opt = Adam({"theta": theta}, lr=0.01)
        losses = []
        for _ in range(120):
            loss = ad.scale(ad.matmul(ad.transpose(theta), ad.matmul(ad.const(H), theta)), 0.5)
            losses.append(loss.item())
            opt.step(ad.backward(loss))
        window = losses[-20:]
        assert all(b < a for a, b in zip(window, window[1:]))

    def test_non_finite_gradient_names_parameter(self):
        p = ad.Parameter([[1.0]], "enc.0.weight")
        with pytest.raises(TrainingError, match="enc.0.weight"):
            adam_step({"enc.0.weight": p}, {"enc.0.weight": np.array([[np.nan]])}, AdamState())
        assert p.value[0, 0] == 1.0

    def test_shape_mismatch(self):
        p = ad.Parameter([[1.0, 2.0]], "p")
        with pytest.raises(DimensionError):
            adam_step({"p": p}, {"p": np.zeros((2, 1))}, AdamState())

    def test_full_cycle_reproducible(self):
        def run():
            mlp = init_mlp([3, 8, 1], 5)
            opt = Adam(mlp.parameters())
            x = np.random.default_rng(9).normal(size=(16, 3))
            for _ in range(5):
                opt.step(ad.backward(ad.mean(ad.square(mlp(ad.const(x)))), mlp.parameters()))
            return b"".join(p.value.tobytes() for p in mlp.parameters().values())

        assert run() == run()


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        a = init_mlp([3, 4, 2], 1)
        b = init_mlp([3, 4, 2], 2)
        save_params(a.parameters(), tmp_path / "p.json")
        load_params(b.parameters(), tmp_path / "p.json")
        for pa, pb in zip(a.parameters().values(), b.parameters().values()):
            assert pa.value.tobytes() == pb.value.tobytes()

    def test_shape_mismatch(self, tmp_path):
        save_params(init_mlp([3, 4, 2], 1).parameters(), tmp_path / "p.json")
        with pytest.raises(DimensionError):
            load_params(init_mlp([3, 5, 2], 1).parameters(), tmp_path / "p.json")

    def test_missing_parameter(self, tmp_path):
        save_params(init_mlp([3, 2], 1, "a").parameters(), tmp_path / "p.json")
        with pytest.raises(ConfigError):
            load_params(init_mlp([3, 2], 1, "b").parameters(), tmp_path / "p.json")
