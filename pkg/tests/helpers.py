import numpy as np

from contextual_rnn.cells import init_params


def randomized(kind, N=5, D=4, seed=0, scale=1.0, pad_id=None):
    """Parameters with every array (biases and h0 included) drawn from N(0, scale^2)."""
    p = init_params(kind, N, D, seed, pad_id)
    rng = np.random.default_rng(seed + 1)
    for k, v in p.arrays.items():
        p.arrays[k] = np.asarray(scale * rng.standard_normal(v.shape))
    return p


def operating_point(kind, N=4, D=3, seed=0):
    """Random parameters and a random (h, x) in the regime trained networks visit.

    Weights are fan-in scaled (twice the init range), biases are N(0, 0.5^2),
    hidden activations lie in (-1, 1), LSTM cell states are N(0, 1) and the
    input is a random dense vector.
    """
    p = init_params(kind, N, D, seed)
    rng = np.random.default_rng(seed + 7919)
    for k, v in p.arrays.items():
        if k[0] in "WU":
            p.arrays[k] = 2 * v
        elif k[0] == "b":
            p.arrays[k] = np.asarray(0.5 * rng.standard_normal(v.shape))
    h = rng.uniform(-1, 1, p.state_size)
    if kind == "lstm":
        h[N:] = rng.standard_normal(N)
    x = rng.standard_normal(D)
    return p, h, x
