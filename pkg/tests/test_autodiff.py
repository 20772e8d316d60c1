import numpy as np
import pytest

from app.core import autodiff as ad
from app.core.autodiff import AdamState, ParameterSet, Tape
from app.errors import ContractError, ShapeError, TrainingDivergenceError
from app.schemas import AdamHyper, MlpSpec

SMOOTH = ["tanh", "sigmoid", "softplus"]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def numeric_gradient(fn, flat: np.ndarray, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (fn(up) - fn(down)) / (2.0 * step)
    return grad


def ce_loss(spec: MlpSpec, params: ParameterSet, x: np.ndarray, y: np.ndarray):
    out, tape = ad.mlp_forward(spec, params, x)
    with tape:
        loss = ad.cross_entropy(out, y)
    return loss, tape


def penalty_value(spec: MlpSpec, params: ParameterSet, x: np.ndarray):
    g, tape = ad.grad_input_differentiable(spec, params, x)
    with tape:
        penalty = ad.sum(ad.square(g))
    return penalty, tape, g


class TestForward:

    def test_zero_network_outputs_activation_of_zero(self):
        spec = MlpSpec(widths=[3, 4, 2], hidden_activation="sigmoid", output_activation="tanh")
        params = ad.init_mlp(spec, np.random.default_rng(0)).zeros_like()
        out, _ = ad.mlp_forward(spec, params, np.array([[1.0, -2.0, 3.0]]))
        assert np.array_equal(out.value, np.zeros((1, 2)))

    def test_identity_layer(self):
        spec = MlpSpec(widths=[2, 2], output_activation="identity")
        params = ParameterSet({"layers.0.weight": np.eye(2), "layers.0.bias": np.zeros((1, 2))})
        out, _ = ad.mlp_forward(spec, params, [0.3, -0.7])
        assert np.array_equal(out.value, np.array([[0.3, -0.7]]))

    def test_matches_straight_line_forward(self, rng):
        spec = MlpSpec(widths=[5, 7, 3], hidden_activation="leaky_relu", output_activation="tanh", leaky_slope=0.2)
        params = ad.init_mlp(spec, rng)
        x = rng.standard_normal((4, 5))
        hidden = x @ params["layers.0.weight"].T + params["layers.0.bias"]
        hidden = np.where(hidden > 0, hidden, 0.2 * hidden)
        expected = np.tanh(hidden @ params["layers.1.weight"].T + params["layers.1.bias"])
        out, _ = ad.mlp_forward(spec, params, x)
        assert np.max(np.abs(out.value - expected)) < 1e-12

    def test_wrong_input_width_names_layer(self, rng):
        spec = MlpSpec(widths=[3, 2])
        with pytest.raises(ShapeError, match="layer 0"):
            ad.mlp_forward(spec, ad.init_mlp(spec, rng), np.zeros((1, 4)))

    def test_depth_truncates_after_hidden_activation(self, rng):
        spec = MlpSpec(widths=[3, 4, 2], hidden_activation="relu")
        params = ad.init_mlp(spec, rng)
        x = rng.standard_normal((2, 3))
        out, _ = ad.mlp_forward(spec, params, x, depth=1)
        expected = np.maximum(x @ params["layers.0.weight"].T + params["layers.0.bias"], 0.0)
        assert np.array_equal(out.value, expected)


class TestReverseMode:

    def test_linear_layer_weight_gradient_is_input(self):
        spec = MlpSpec(widths=[3, 2], output_activation="identity")
        params = ParameterSet({"layers.0.weight": np.ones((2, 3)), "layers.0.bias": np.zeros((1, 2))})
        x = np.array([[0.5, -1.0, 2.0]])
        out, tape = ad.mlp_forward(spec, params, x)
        with tape:
            loss = ad.sum(out)
        grads = ad.grad_params(tape, root=loss)
        assert np.array_equal(grads["layers.0.weight"], np.repeat(x, 2, axis=0))
        assert np.array_equal(grads["layers.0.bias"], np.ones((1, 2)))

    def test_unused_parameter_block_gets_zero_gradient(self, rng):
        spec = MlpSpec(widths=[3, 4, 2])
        params = ad.init_mlp(spec, rng)
        out, tape = ad.mlp_forward(spec, params, rng.standard_normal((2, 3)), depth=1)
        with tape:
            loss = ad.sum(out)
        grads = ad.grad_params(tape, root=loss)
        assert not np.any(grads["layers.1.weight"])
        assert not np.any(grads["layers.1.bias"])
        assert grads.shapes() == params.shapes()

    def test_non_scalar_root_is_rejected(self, rng):
        spec = MlpSpec(widths=[3, 2])
        _, tape = ad.mlp_forward(spec, ad.init_mlp(spec, rng), np.zeros((2, 3)))
        with pytest.raises(ContractError):
            ad.grad_params(tape)

    def test_parameter_gradients_match_finite_differences(self, rng):
        for trial in range(20):
            depth = int(rng.integers(1, 4))
            widths = [int(w) for w in rng.integers(1, 5, size=depth + 1)]
            widths[-1] = max(widths[-1], 2)
            spec = MlpSpec(widths=widths, hidden_activation=SMOOTH[trial % 3], output_activation="identity")
            params = ad.init_mlp(spec, rng).map(lambda b: b + 0.1 * rng.standard_normal(b.shape))
            x = rng.standard_normal((3, widths[0]))
            y = rng.integers(widths[-1], size=3)

            loss, tape = ce_loss(spec, params, x, y)
            analytic = ad.grad_params(tape, root=loss).flatten()
            numeric = numeric_gradient(
                lambda flat: float(ce_loss(spec, params.unflatten(flat), x, y)[0].value[0, 0]),
                params.flatten())
            assert relative_error(analytic, numeric) < 1e-6, f"trial {trial}: widths {widths}"

    def test_elementwise_primitives_match_finite_differences(self, rng):
        x0 = rng.uniform(0.5, 2.0, size=(2, 3))
        ops = {
            "exp": ad.exp, "log": ad.log, "sqrt": ad.sqrt, "tanh": ad.tanh, "sigmoid": ad.sigmoid,
            "softplus": ad.softplus, "reciprocal": ad.reciprocal, "square": ad.square,
        }
        for name, op in ops.items():
            def value(flat):
                tape = Tape()
                with tape:
                    return float(ad.sum(op(tape.constant(flat.reshape(2, 3)))).value[0, 0])
            tape = Tape()
            with tape:
                leaf = tape.variable(x0)
                root = ad.sum(op(leaf))
            (g,) = ad.gradients(root, [leaf])
            numeric = numeric_gradient(value, x0.ravel()).reshape(2, 3)
            assert relative_error(g.value, numeric) < 1e-6, name

    def test_bilinear_gradient_is_transposed_map(self, rng):
        left, right = rng.standard_normal((3, 3)), rng.standard_normal((2, 2))
        x0 = rng.standard_normal((2, 6))
        weights = rng.standard_normal((2, 6))
        tape = Tape()
        with tape:
            leaf = tape.variable(x0)
            root = ad.sum(ad.mul(ad.bilinear(leaf, left, right), tape.constant(weights)))
        (g,) = ad.gradients(root, [leaf])
        expected = np.stack([(left.T @ w.reshape(3, 2) @ right).ravel() for w in weights])
        assert np.max(np.abs(g.value - expected)) < 1e-12


class TestTape:

    def test_replay_reproduces_forward_values(self, rng):
        spec = MlpSpec(widths=[4, 6, 3], hidden_activation="tanh", output_activation="tanh")
        params = ad.init_mlp(spec, rng)
        out, tape = ad.mlp_forward(spec, params, rng.standard_normal((5, 4)))
        values = tape.replay()
        assert np.array_equal(values[out.id], out.value)
        assert all(np.array_equal(values[node.id], node.value) for node in tape.nodes)

    def test_replay_with_new_input(self, rng):
        spec = MlpSpec(widths=[4, 6, 3], hidden_activation="leaky_relu")
        params = ad.init_mlp(spec, rng)
        x, x_new = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
        tape = Tape()
        with tape:
            x_node = tape.variable(x, name="input")
        out, _ = ad.mlp_forward(spec, params, x_node, tape=tape)
        expected, _ = ad.mlp_forward(spec, params, x_new)
        assert np.array_equal(tape.replay({x_node.id: x_new})[out.id], expected.value)

    def test_stop_gradient_blocks_the_second_path(self, rng):
        v = rng.standard_normal((2, 3))
        tape = Tape()
        with tape:
            x = tape.variable(v)
            loss = ad.sum(ad.mul(x, ad.stop_gradient(x)))
        (grad,) = ad.gradients(loss, [x])
        assert np.array_equal(grad.value, v)

    def test_stop_gradient_of_array_is_constant(self):
        tape = Tape()
        with tape:
            node = ad.stop_gradient(np.array([1.0, 2.0]))
        assert not node.requires_grad
        assert np.array_equal(node.value, np.array([[1.0, 2.0]]))


class TestParameterSet:

    def test_flatten_round_trip(self, rng):
        spec = MlpSpec(widths=[5, 7, 4, 2])
        params = ad.init_mlp(spec, rng)
        flat = params.flatten()
        assert flat.size == params.size == 5 * 7 + 7 + 7 * 4 + 4 + 4 * 2 + 2
        assert params.unflatten(flat) == params
        assert np.array_equal(params.unflatten(flat).flatten(), flat)

    def test_unflatten_of_any_vector_round_trips(self, rng):
        params = ad.init_mlp(MlpSpec(widths=[3, 4, 2]), rng)
        flat = rng.standard_normal(params.size)
        assert np.array_equal(params.unflatten(flat).flatten(), flat)
        assert params.unflatten(flat).shapes() == params.shapes()

    def test_unflatten_rejects_wrong_length(self, rng):
        params = ad.init_mlp(MlpSpec(widths=[3, 2]), rng)
        with pytest.raises(ShapeError):
            params.unflatten(np.zeros(params.size + 1))


class TestDoubleBackprop:

    def test_linear_critic_input_gradient_is_weight(self):
        w = np.array([[0.5, -2.0, 1.5]])
        spec = MlpSpec(widths=[3, 1], output_activation="identity")
        params = ParameterSet({"layers.0.weight": w, "layers.0.bias": np.zeros((1, 1))})
        g, _ = ad.grad_input_differentiable(spec, params, np.random.default_rng(1).standard_normal((4, 3)))
        assert np.array_equal(g.value, np.repeat(w, 4, axis=0))

    def test_constant_critic_input_gradient_is_zero(self):
        spec = MlpSpec(widths=[3, 1], output_activation="identity")
        params = ParameterSet({"layers.0.weight": np.zeros((1, 3)), "layers.0.bias": np.full((1, 1), 4.0)})
        g, _ = ad.grad_input_differentiable(spec, params, np.ones((2, 3)))
        assert not np.any(g.value)

    def test_non_scalar_critic_is_rejected(self, rng):
        spec = MlpSpec(widths=[3, 2])
        with pytest.raises(ContractError):
            ad.grad_input_differentiable(spec, ad.init_mlp(spec, rng), np.zeros((1, 3)))

    def test_penalty_gradient_matches_nested_finite_differences(self, rng):
        spec = MlpSpec(widths=[4, 5, 1], hidden_activation="tanh", output_activation="identity")
        params = ad.init_mlp(spec, rng)
        x = rng.standard_normal((3, 4))

        g, _ = ad.grad_input_differentiable(spec, params, x)

        def critic_sum(flat_x):
            out, _ = ad.mlp_forward(spec, params, flat_x.reshape(3, 4))
            return float(out.value.sum())
        assert relative_error(g.value.ravel(), numeric_gradient(critic_sum, x.ravel())) < 1e-6

        penalty, tape, _ = penalty_value(spec, params, x)
        analytic = ad.grad_params(tape, root=penalty).flatten()
        numeric = numeric_gradient(
            lambda flat: float(penalty_value(spec, params.unflatten(flat), x)[0].value[0, 0]),
            params.flatten())
        assert relative_error(analytic, numeric) < 1e-4


class TestAdam:

    def test_zero_gradient_keeps_parameters(self, rng):
        params = ParameterSet({"w": rng.standard_normal((2, 3))})
        new, state = ad.adam_step(params, params.zeros_like(), AdamState.zeros(params), AdamHyper())
        assert new == params
        assert state.step == 1

    def test_first_step_without_momentum(self):
        hyper = AdamHyper(step_size=0.1, beta1=0.0, beta2=0.0, eps=1e-8)
        params = ParameterSet({"w": np.array([[1.0, -2.0]])})
        g = np.array([[0.5, -4.0]])
        new, _ = ad.adam_step(params, ParameterSet({"w": g}), AdamState.zeros(params), hyper)
        expected = params["w"] - 0.1 * g / (np.abs(g) + 1e-8)
        assert np.allclose(new["w"], expected, rtol=0, atol=1e-15)

    def test_two_identical_steps_follow_hand_trace(self):
        # with bias correction both steps move by step_size * g / (|g| + eps)
        hyper = AdamHyper(step_size=0.01, beta1=0.9, beta2=0.999, eps=1e-8)
        params = ParameterSet({"w": np.array([[0.0]])})
        grads = ParameterSet({"w": np.array([[2.0]])})
        state = AdamState.zeros(params)
        params, state = ad.adam_step(params, grads, state, hyper)
        params, state = ad.adam_step(params, grads, state, hyper)
        step = 0.01 * 2.0 / (2.0 + 1e-8)
        assert params["w"][0, 0] == pytest.approx(-2.0 * step, rel=1e-12)
        assert state.m["w"][0, 0] == pytest.approx(0.19 * 2.0, rel=1e-12)
        assert state.v["w"][0, 0] == pytest.approx(0.001999 * 4.0, rel=1e-12)
        assert state.step == 2

    def test_non_finite_gradient_diverges(self):
        params = ParameterSet({"w": np.zeros((1, 2))})
        with pytest.raises(TrainingDivergenceError):
            ad.adam_step(params, ParameterSet({"w": np.array([[np.nan, 0.0]])}),
                         AdamState.zeros(params), AdamHyper())


def test_same_seed_gives_identical_parameters():
    spec = MlpSpec(widths=[6, 4, 2])
    a = ad.init_mlp(spec, np.random.default_rng(5))
    b = ad.init_mlp(spec, np.random.default_rng(5))
    assert a.checksum() == b.checksum()
