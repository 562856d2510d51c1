"""Forward pass, gradients, training and weight files of the dense networks."""

import tempfile
import unittest
from pathlib import Path

import numpy as np

from rlrrt.neuralnet import (
    Activation,
    NetworkError,
    NeuralNet,
    TrainConfig,
    l2_loss_grad,
    load_network,
    save_network,
    train,
)


def numeric_grads(net: NeuralNet, inputs, targets, eps: float = 1e-6) -> list[np.ndarray]:
    grads = []
    for param in net.parameters():
        grad = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            saved = param[idx]
            param[idx] = saved + eps
            up, _ = l2_loss_grad(net, inputs, targets)
            param[idx] = saved - eps
            down, _ = l2_loss_grad(net, inputs, targets)
            param[idx] = saved
            grad[idx] = (up - down) / (2 * eps)
        grads.append(grad)
    return grads


class TestForward(unittest.TestCase):
    def test_zero_weights(self):
        net = NeuralNet(
            (3, 4, 2),
            [np.zeros((3, 4)), np.zeros((4, 2))],
            [np.zeros(4), np.zeros(2)],
        )

        np.testing.assert_array_equal(net.forward(np.array([1.0, -2.0, 3.0])), np.zeros(2))

    def test_identity_layer(self):
        net = NeuralNet((3, 3), [np.eye(3)], [np.zeros(3)])
        x = np.array([[0.5, -1.5, 2.0], [1.0, 0.0, -3.0]])

        np.testing.assert_array_equal(net.forward(x), x)

    def test_tanh_output_is_bounded(self):
        net = NeuralNet.create((4, 8, 2), seed=0, output_activation=Activation.TANH)
        out = net.forward(np.random.default_rng(0).normal(scale=100.0, size=(20, 4)))

        self.assertTrue(np.all(np.abs(out) <= 1.0))

    def test_dropout_is_seeded(self):
        net = NeuralNet.create((4, 16, 1), seed=0, dropout_p=0.5)
        x = np.ones((3, 4))

        a = net.forward(x, train_mode=True, rng=np.random.default_rng(1))
        b = net.forward(x, train_mode=True, rng=np.random.default_rng(1))

        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(net.forward(x), net.forward(x))

    def test_dropout_needs_rng(self):
        net = NeuralNet.create((4, 16, 1), seed=0, dropout_p=0.5)

        with self.assertRaises(NetworkError):
            net.forward(np.ones(4), train_mode=True)

    def test_wrong_input_size(self):
        net = NeuralNet.create((4, 2), seed=0)

        with self.assertRaises(NetworkError):
            net.forward(np.ones(5))

    def test_invalid_shapes(self):
        with self.assertRaises(NetworkError):
            NeuralNet((3, 2), [np.zeros((2, 3))], [np.zeros(2)])
        with self.assertRaises(NetworkError):
            NeuralNet.create((3,), seed=0)


class TestGradients(unittest.TestCase):
    def test_finite_differences(self):
        """Backprop agrees with central differences on small random networks."""
        for seed in range(10):
            with self.subTest(seed=seed):
                rng = np.random.default_rng(seed)
                activation = Activation.TANH if seed % 2 else Activation.IDENTITY
                net = NeuralNet.create((3, 5, 4, 2), seed=seed, output_activation=activation)
                for b in net.biases:
                    b += rng.normal(scale=0.1, size=b.shape)
                inputs = rng.normal(size=(4, 3))
                targets = rng.normal(size=(4, 2))

                _, grads = l2_loss_grad(net, inputs, targets)

                for analytic, numeric in zip(grads, numeric_grads(net, inputs, targets)):
                    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)

    def test_l2_penalty_gradient(self):
        net = NeuralNet.create((2, 3, 1), seed=0)
        inputs = np.ones((2, 2))
        targets = np.zeros(2)

        base, base_grads = l2_loss_grad(net, inputs, targets)
        loss, grads = l2_loss_grad(net, inputs, targets, l2_weight=0.1)

        self.assertAlmostEqual(loss - base, 0.1 * sum(float(np.sum(w**2)) for w in net.weights))
        np.testing.assert_allclose(grads[0] - base_grads[0], 0.2 * net.weights[0])
        np.testing.assert_array_equal(grads[1], base_grads[1])

    def test_empty_batch(self):
        net = NeuralNet.create((3, 2), seed=0)

        with self.assertRaises(NetworkError):
            l2_loss_grad(net, np.zeros((0, 3)), np.zeros((0, 2)))


class TestTraining(unittest.TestCase):
    def test_same_seed_same_weights(self):
        a = NeuralNet.create((5, 7, 3), seed=4)
        b = NeuralNet.create((5, 7, 3), seed=4)

        for wa, wb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(wa, wb)

    def test_zero_learning_rate(self):
        net = NeuralNet.create((2, 8, 1), seed=0)
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(32, 2)), rng.normal(size=32)

        result = train(net, x, y, TrainConfig(learning_rate=0.0, epochs=2, batch_size=8))

        for before, after in zip(net.parameters(), result.net.parameters()):
            np.testing.assert_array_equal(before, after)
        self.assertEqual(len(result.loss_curve), 2)

    def test_train_leaves_input_untouched(self):
        net = NeuralNet.create((2, 4, 1), seed=0)
        before = [p.copy() for p in net.parameters()]
        x = np.random.default_rng(0).normal(size=(16, 2))

        train(net, x, x[:, 0], TrainConfig(learning_rate=1e-2, epochs=1))

        for a, b in zip(before, net.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_fit_norm(self):
        """Learn ||x|| on the unit square well below the initial error."""
        rng = np.random.default_rng(0)
        x = rng.uniform(-1.0, 1.0, size=(256, 2))
        y = np.linalg.norm(x, axis=1)
        net = NeuralNet.create((2, 32, 32, 1), seed=0)

        initial, _ = l2_loss_grad(net, x, y)
        result = train(net, x, y, TrainConfig(learning_rate=1e-2, epochs=200, batch_size=32))
        final, _ = l2_loss_grad(result.net, x, y)

        self.assertLess(final, 0.1 * initial)
        self.assertLess(result.loss_curve[-1], result.loss_curve[0])

    def test_soft_update(self):
        a = NeuralNet.create((3, 2), seed=0)
        b = NeuralNet.create((3, 2), seed=1)

        target = a.copy()
        target.soft_update(b, 1.0)
        np.testing.assert_allclose(target.weights[0], b.weights[0])

        target = a.copy()
        target.soft_update(b, 0.5)
        np.testing.assert_allclose(target.weights[0], (a.weights[0] + b.weights[0]) / 2)


class TestWeightFiles(unittest.TestCase):
    def test_save_load_exact(self):
        net = NeuralNet.create((6, 5, 1), seed=3, output_activation="tanh", dropout_p=0.25)

        with tempfile.TemporaryDirectory() as tmp:
            path = save_network(net, Path(tmp) / "net", {"note": "unit"})
            loaded, meta = load_network(path)

        self.assertEqual(path.suffix, ".npz")
        self.assertEqual(loaded.layer_dims, net.layer_dims)
        self.assertIs(loaded.output_activation, Activation.TANH)
        self.assertEqual(loaded.dropout_p, 0.25)
        self.assertEqual(meta["note"], "unit")
        for a, b in zip(net.parameters(), loaded.parameters()):
            np.testing.assert_array_equal(a, b)


if __name__ == "__main__":
    unittest.main()
