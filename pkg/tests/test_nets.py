import numpy as np
import pytest

from forgetbench import nets
from forgetbench.errors import ConfigurationError, ShapeError
from forgetbench.nets import (
    NetworkParams,
    NetworkSpec,
    batch_hidden,
    batch_losses,
    batch_outputs,
    finite_difference_check,
    forward,
    hidden_activations,
    init_network,
    loss_and_gradient,
)

MNIST_SPEC = NetworkSpec((784, 100, 4))
MC_SPEC = NetworkSpec((2, 50, 1), output_kind=nets.VALUE, init_scheme=nets.XAVIER)
ACROBOT_SPEC = NetworkSpec((6, 32, 256, 1), output_kind=nets.VALUE, init_scheme=nets.HE)


def zero_params(spec):
    p = init_network(spec, 0)
    return NetworkParams(spec, [np.zeros_like(w) for w in p.weights],
                         [np.zeros_like(b) for b in p.biases])


class TestSpecValidation:
    def test_needs_hidden_layer(self):
        with pytest.raises(ConfigurationError):
            NetworkSpec((784, 4))

    def test_positive_sizes(self):
        with pytest.raises(ConfigurationError):
            NetworkSpec((784, 0, 4))

    def test_classification_needs_two_outputs(self):
        with pytest.raises(ConfigurationError):
            NetworkSpec((10, 5, 1), output_kind=nets.CLASSIFICATION)

    def test_value_output_is_single(self):
        with pytest.raises(ConfigurationError):
            NetworkSpec((10, 5, 3), output_kind=nets.VALUE)

    def test_hidden_unit_count(self):
        assert MNIST_SPEC.n_hidden_units == 100
        assert ACROBOT_SPEC.n_hidden_units == 288


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_network(MNIST_SPEC, 42)
        b = init_network(MNIST_SPEC, 42)
        for x, y in zip(a.arrays(), b.arrays()):
            assert np.array_equal(x, y)

    def test_different_seed_differs(self):
        a = init_network(MNIST_SPEC, 1)
        b = init_network(MNIST_SPEC, 2)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_gaussian_std(self):
        # ~10^6 draws: sample std of N(0, 0.1) lands in [0.099, 0.101]
        spec = NetworkSpec((1000, 1000, 2))
        p = init_network(spec, 7)
        std = p.weights[0].std()
        assert 0.099 <= std <= 0.101

    def test_xavier_variance(self):
        # uniform(-L, L) with L = sqrt(6/(in+out)) has variance L^2/3 = 2/(in+out)
        p = init_network(NetworkSpec((784, 100, 1), output_kind=nets.VALUE,
                                     init_scheme=nets.XAVIER), 3)
        got = p.weights[0].var()
        want = 2.0 / (784 + 100)
        assert abs(got - want) / want < 0.05
        limit = np.sqrt(6.0 / (784 + 100))
        assert np.abs(p.weights[0]).max() <= limit

    def test_he_std(self):
        p = init_network(ACROBOT_SPEC, 11)
        got = p.weights[1].std()  # 32 -> 256 layer
        want = np.sqrt(2.0 / 32)
        assert abs(got - want) / want < 0.05

    def test_bias_gaussian_under_all_schemes(self):
        for spec in (MNIST_SPEC, MC_SPEC, ACROBOT_SPEC):
            p = init_network(NetworkSpec((500, 500, spec.layer_sizes[-1]),
                                         output_kind=spec.output_kind,
                                         init_scheme=spec.init_scheme), 5)
            assert 0.08 <= p.biases[0].std() <= 0.12


class TestForward:
    def test_zero_classification_net_is_uniform(self):
        p = zero_params(NetworkSpec((8, 3, 4)))
        trace = forward(p, np.ones(8))
        np.testing.assert_allclose(trace.output, [0.25, 0.25, 0.25, 0.25])

    def test_relu_zeroes_negative_preactivations(self):
        spec = NetworkSpec((1, 1, 2))
        p = zero_params(spec)
        p.weights[0][0, 0] = 1.0
        trace = forward(p, np.array([-3.0]))
        assert trace.pre_activations[0][0] == -3.0
        assert trace.hidden_activations[0][0] == 0.0

    def test_hand_evaluated_chain(self):
        # 1-1-1 net, weight 2 and bias 0 everywhere, input 3: hidden 6, output 12
        spec = NetworkSpec((1, 1, 1), output_kind=nets.VALUE)
        p = zero_params(spec)
        p.weights[0][0, 0] = 2.0
        p.weights[1][0, 0] = 2.0
        trace = forward(p, np.array([3.0]))
        assert trace.hidden_activations[0][0] == 6.0
        assert trace.output[0] == 12.0

    def test_softmax_normalized(self):
        p = init_network(MNIST_SPEC, 0)
        trace = forward(p, np.random.default_rng(0).random(784))
        assert abs(trace.output.sum() - 1.0) < 1e-9

    def test_dimension_mismatch(self):
        p = init_network(MNIST_SPEC, 0)
        with pytest.raises(ShapeError):
            forward(p, np.ones(10))


class TestHiddenActivations:
    def test_all_negative_preactivations_give_zero_vector(self):
        spec = NetworkSpec((2, 3, 2))
        p = zero_params(spec)
        p.weights[0][:] = -1.0
        h = hidden_activations(p, np.ones(2))
        assert np.array_equal(h, np.zeros(3))

    def test_lengths_match_architectures(self):
        assert hidden_activations(init_network(MNIST_SPEC, 0), np.zeros(784)).shape == (100,)
        assert hidden_activations(init_network(ACROBOT_SPEC, 0), np.zeros(6)).shape == (288,)

    def test_layer_major_ordering(self):
        p = init_network(ACROBOT_SPEC, 5)
        x = np.random.default_rng(1).random(6)
        h = hidden_activations(p, x)
        trace = forward(p, x)
        np.testing.assert_array_equal(h[:32], trace.hidden_activations[0])
        np.testing.assert_array_equal(h[32:], trace.hidden_activations[1])

    def test_nonnegative(self):
        p = init_network(MNIST_SPEC, 9)
        h = hidden_activations(p, np.random.default_rng(2).random(784))
        assert (h >= 0).all()


class TestLossAndGradient:
    def test_squared_error_hand_case(self):
        # value 3 against target 1: loss (3-1)^2 = 4, d(loss)/d(value) = 4
        spec = NetworkSpec((1, 1, 1), output_kind=nets.VALUE)
        p = zero_params(spec)
        p.weights[0][0, 0] = 1.0
        p.weights[1][0, 0] = 1.0
        g = loss_and_gradient(p, np.array([3.0]), 1.0, nets.SQUARED_ERROR)
        assert g.loss == 4.0
        # output-layer bias gradient is exactly d(loss)/d(value)
        assert g.biases[1][0] == 4.0

    def test_near_one_hot_output_has_near_zero_gradient(self):
        # drive one logit far up so softmax is ~the one-hot target
        spec = NetworkSpec((2, 2, 3))
        p = zero_params(spec)
        p.weights[0][:] = 1.0
        p.weights[1][:, 1] = 30.0
        g = loss_and_gradient(p, np.ones(2), 1, nets.CROSS_ENTROPY)
        assert g.loss < 1e-9
        assert max(np.abs(a).max() for a in g.arrays()) < 1e-8

    def test_incompatible_loss_rejected(self):
        p = init_network(MNIST_SPEC, 0)
        with pytest.raises(ConfigurationError):
            loss_and_gradient(p, np.zeros(784), 1.0, nets.SQUARED_ERROR)
        v = init_network(MC_SPEC, 0)
        with pytest.raises(ConfigurationError):
            loss_and_gradient(v, np.zeros(2), 1, nets.CROSS_ENTROPY)

    @pytest.mark.parametrize(
        "spec,loss_kind,target",
        [
            (MNIST_SPEC, nets.CROSS_ENTROPY, 2),
            (MC_SPEC, nets.SQUARED_ERROR, -37.5),
            (ACROBOT_SPEC, nets.SQUARED_ERROR, -100.0),
        ],
    )
    def test_matches_central_differences(self, spec, loss_kind, target):
        rng = np.random.default_rng(17)
        p = init_network(spec, 17)
        x = rng.random(spec.input_size)
        assert finite_difference_check(p, x, target, loss_kind, n_sample=150) < 1e-6

    def test_checker_catches_a_corrupted_gradient(self):
        p = init_network(NetworkSpec((4, 3, 2)), 1)
        x = np.random.default_rng(3).random(4)
        good = finite_difference_check(p, x, 0, nets.CROSS_ENTROPY)
        assert good < 1e-6

        real = nets.loss_and_gradient

        def corrupted(params, xx, target, kind):
            g = real(params, xx, target, kind)
            g.weights[0] = g.weights[0].copy()
            g.weights[0][0, 0] += 0.1
            return g

        nets.loss_and_gradient = corrupted
        try:
            assert finite_difference_check(p, x, 0, nets.CROSS_ENTROPY) > 1e-2
        finally:
            nets.loss_and_gradient = real

    def test_zero_network_still_differentiable(self):
        p = zero_params(NetworkSpec((4, 3, 2)))
        assert finite_difference_check(p, np.ones(4), 0, nets.CROSS_ENTROPY) < 1e-6

    def test_pure_function(self):
        p = init_network(MNIST_SPEC, 4)
        x = np.random.default_rng(4).random(784)
        snapshot = [a.copy() for a in p.arrays()]
        loss_and_gradient(p, x, 3, nets.CROSS_ENTROPY)
        forward(p, x)
        for before, after in zip(snapshot, p.arrays()):
            assert np.array_equal(before, after)


class TestBatchedPaths:
    def test_batch_outputs_match_forward(self):
        p = init_network(MNIST_SPEC, 8)
        X = np.random.default_rng(8).random((5, 784))
        batched = batch_outputs(p, X)
        for i in range(5):
            np.testing.assert_allclose(batched[i], forward(p, X[i]).output, atol=1e-12)

    def test_batch_hidden_matches_flat_activations(self):
        p = init_network(ACROBOT_SPEC, 2)
        X = np.random.default_rng(5).random((4, 6))
        batched = batch_hidden(p, X)
        for i in range(4):
            np.testing.assert_allclose(batched[i], hidden_activations(p, X[i]), atol=1e-12)

    def test_batch_losses_match_single(self):
        p = init_network(MNIST_SPEC, 3)
        X = np.random.default_rng(6).random((6, 784))
        y = np.array([0, 1, 2, 3, 1, 0])
        batched = batch_losses(p, X, y, nets.CROSS_ENTROPY)
        for i in range(6):
            single = loss_and_gradient(p, X[i], int(y[i]), nets.CROSS_ENTROPY).loss
            assert abs(batched[i] - single) < 1e-12
