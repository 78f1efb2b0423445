import numpy as np
import pytest

from tnneig import subnet
from tnneig.errors import NonFiniteError


def linear_net(weight, bias):
    return subnet.SubnetParams([np.array([[weight]])], [np.array([bias])], "sin")


class TestForwardBatch:
    def test_zero_weights_constant_output(self):
        rng = np.random.default_rng(0)
        stack = subnet.init_stack(1, depth=0, width=0, p=3, activation="sin", rng=rng)
        stack.weights[0][:] = 0.0
        stack.biases[0][0] = [1.0, -2.0, 0.5]
        ev = subnet.forward_batch(stack.select(0), np.linspace(-1, 1, 7))
        assert np.allclose(ev.values, np.array([[1.0], [-2.0], [0.5]]))
        assert np.allclose(ev.input_derivs, 0.0)

    def test_linear_network(self):
        nodes = np.array([-0.5, 0.0, 2.0])
        ev = subnet.forward_batch(linear_net(3.0, 0.0), nodes)
        assert np.allclose(ev.values[0], 3.0 * nodes)
        assert np.allclose(ev.input_derivs[0], 3.0)

    def test_input_derivative_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        stack = subnet.init_stack(1, depth=3, width=20, p=5, activation="sin", rng=rng)
        params = stack.select(0)
        nodes = rng.uniform(-2, 2, 40)
        h = 1e-5
        ev = subnet.forward_batch(params, nodes)
        up = subnet.forward_batch(params, nodes + h)
        down = subnet.forward_batch(params, nodes - h)
        fd = (up.values - down.values) / (2 * h)
        rel = np.abs(ev.input_derivs - fd) / (np.abs(ev.input_derivs) + 1e-8)
        assert rel.max() <= 1e-6

    def test_second_derivative_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        stack = subnet.init_stack(2, depth=2, width=10, p=4, activation="sin", rng=rng)
        args = rng.uniform(-2, 2, (2, 15))
        _, derivs, second = subnet.forward_stack(stack, args, order=2)
        h = 1e-5
        _, dp = subnet.forward_stack(stack, args + h)
        _, dm = subnet.forward_stack(stack, args - h)
        fd = (dp - dm) / (2 * h)
        assert np.max(np.abs(second - fd) / (np.abs(second) + 1e-8)) <= 1e-6

    def test_overflow_reported_with_node_index(self):
        params = linear_net(1.0, 0.0)
        with pytest.raises(NonFiniteError):
            subnet.forward_batch(params, np.array([0.0, np.inf]))


class TestBackprop:
    def test_zero_adjoints(self):
        rng = np.random.default_rng(1)
        stack = subnet.init_stack(1, depth=2, width=6, p=2, activation="sin", rng=rng)
        nodes = rng.uniform(-1, 1, 9)
        zero = np.zeros((2, 9))
        gw, gb = subnet.backprop(stack.select(0), nodes, zero, zero)
        assert all(np.all(g == 0.0) for g in gw)
        assert all(np.all(g == 0.0) for g in gb)

    def test_single_linear_layer_hand_values(self):
        nodes = np.array([0.3, -1.2, 2.5, 0.0])
        ones = np.ones((1, 4))
        zeros = np.zeros((1, 4))
        gw, gb = subnet.backprop(linear_net(2.0, 0.5), nodes, ones, zeros)
        assert abs(gw[0][0, 0] - nodes.sum()) < 1e-14
        assert abs(gb[0][0] - 4.0) < 1e-14

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        stack = subnet.init_stack(1, depth=3, width=8, p=3, activation="sin", rng=rng)
        params = stack.select(0)
        nodes = rng.uniform(-2, 2, 12)
        adj_v = rng.standard_normal((3, 12))
        adj_d = rng.standard_normal((3, 12))
        gw, gb = subnet.backprop(params, nodes, adj_v, adj_d)

        def objective():
            ev = subnet.forward_batch(params, nodes)
            return float(np.sum(adj_v * ev.values) + np.sum(adj_d * ev.input_derivs))

        worst = 0.0
        for layer in range(len(params.weights)):
            for arr, grad in ((params.weights[layer], gw[layer]),
                              (params.biases[layer], gb[layer])):
                flat = arr.ravel()
                gflat = np.asarray(grad).ravel()
                for t in range(flat.size):
                    old = flat[t]
                    flat[t] = old + 1e-6
                    up = objective()
                    flat[t] = old - 1e-6
                    down = objective()
                    flat[t] = old
                    fd = (up - down) / 2e-6
                    worst = max(worst, abs(fd - gflat[t]) / (abs(gflat[t]) + 1e-8))
        assert worst <= 1e-5

    def test_tanh_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(23)
        stack = subnet.init_stack(1, depth=2, width=5, p=2, activation="tanh", rng=rng)
        params = stack.select(0)
        nodes = rng.uniform(-1.5, 1.5, 8)
        adj_v = rng.standard_normal((2, 8))
        adj_d = rng.standard_normal((2, 8))
        gw, gb = subnet.backprop(params, nodes, adj_v, adj_d)

        def objective():
            ev = subnet.forward_batch(params, nodes)
            return float(np.sum(adj_v * ev.values) + np.sum(adj_d * ev.input_derivs))

        for layer in range(len(params.weights)):
            flat = params.weights[layer].ravel()
            gflat = gw[layer].ravel()
            for t in range(flat.size):
                old = flat[t]
                flat[t] = old + 1e-6
                up = objective()
                flat[t] = old - 1e-6
                down = objective()
                flat[t] = old
                fd = (up - down) / 2e-6
                assert abs(fd - gflat[t]) / (abs(gflat[t]) + 1e-8) <= 1e-5

    def test_linearity_in_adjoints(self):
        rng = np.random.default_rng(3)
        stack = subnet.init_stack(1, depth=2, width=7, p=2, activation="sin", rng=rng)
        params = stack.select(0)
        nodes = rng.uniform(-1, 1, 10)
        adj_v = rng.standard_normal((2, 10))
        adj_d = rng.standard_normal((2, 10))
        gw1, gb1 = subnet.backprop(params, nodes, adj_v, adj_d)
        gw2, gb2 = subnet.backprop(params, nodes, 3.5 * adj_v, 3.5 * adj_d)
        for g1, g2 in zip(gw1 + gb1, gw2 + gb2):
            denom = np.max(np.abs(g1)) or 1.0
            assert np.max(np.abs(g2 - 3.5 * np.asarray(g1))) <= 1e-13 * 3.5 * denom

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(5)
        stack = subnet.init_stack(1, depth=1, width=4, p=2, activation="sin", rng=rng)
        with pytest.raises(ValueError):
            subnet.backprop(stack.select(0), np.zeros(5), np.zeros((2, 4)),
                            np.zeros((2, 4)))


def test_stack_select_consistent_with_stacked_forward():
    rng = np.random.default_rng(17)
    stack = subnet.init_stack(4, depth=2, width=6, p=3, activation="sin", rng=rng)
    args = rng.uniform(-1, 1, (4, 11))
    vals, derivs = subnet.forward_stack(stack, args)
    for ell in range(4):
        ev = subnet.forward_batch(stack.select(ell), args[ell])
        assert np.allclose(ev.values, vals[ell], atol=1e-15)
        assert np.allclose(ev.input_derivs, derivs[ell], atol=1e-15)
