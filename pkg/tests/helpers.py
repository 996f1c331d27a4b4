"""Shared oracles for the engine tests and the acceptance gate."""

import numpy as np

from ddsr.network import ConvLayer, loss_and_gradients


def random_tiny_layers(rng):
    """A 1 -> 2 -> 2 -> 1 stack with kernels 3/1/3, the gradcheck workhorse."""

    def mk(out_c, in_c, k, act):
        return ConvLayer(
            weights=rng.normal(0.0, 0.5, (out_c, in_c, k, k)),
            bias=rng.normal(0.0, 0.1, out_c),
            activation=act,
        )

    return [mk(2, 1, 3, "relu"), mk(2, 2, 1, "relu"), mk(1, 2, 3, "linear")]


def gradcheck_worst_error(n_units, seed=100, eps=1e-5):
    """Max relative error between backprop and central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_units):
        layers = random_tiny_layers(rng)
        h = int(rng.integers(7, 10))
        w = int(rng.integers(7, 10))
        batch = [
            (rng.normal(0.5, 0.25, (h, w)), rng.normal(0.5, 0.25, (h - 4, w - 4)))
            for _ in range(int(rng.integers(1, 4)))
        ]
        _, grads = loss_and_gradients(batch, layers)
        for li, layer in enumerate(layers):
            for arr, grad in ((layer.weights, grads[li][0]), (layer.bias, grads[li][1])):
                it = np.nditer(arr, flags=["multi_index"])
                for _ in it:
                    ix = it.multi_index
                    keep = arr[ix]
                    arr[ix] = keep + eps
                    up, _ = loss_and_gradients(batch, layers)
                    arr[ix] = keep - eps
                    dn, _ = loss_and_gradients(batch, layers)
                    arr[ix] = keep
                    fd = (up - dn) / (2.0 * eps)
                    denom = max(abs(fd), abs(grad[ix]), 1e-8)
                    worst = max(worst, abs(fd - grad[ix]) / denom)
    return worst
