import numpy as np
import pytest

from blindrestore.numerics.tensor import Tensor, backward


def fd_rel_error(fn, arrays, rng, coords=8, h=1e-3):
    """Worst ``max|a-b| / max(1,|a|,|b|)`` between analytic and central-difference gradients.

    ``fn`` maps a list of Tensors to a scalar Tensor.  A random subset of
    ``coords`` entries per input is probed numerically.
    """
    arrays = [np.asarray(a, dtype=np.float32) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    backward(fn(leaves))
    worst = 0.0
    for i, a in enumerate(arrays):
        flat = a.reshape(-1)
        picks = rng.choice(flat.size, size=min(coords, flat.size), replace=False)
        for j in picks:
            vals, points = [], []
            for sign in (1, -1):
                b = flat.copy()
                b[j] += np.float32(sign * h)
                points.append(float(b[j]))  # the step actually representable in f32
                args = [Tensor(x) for x in arrays]
                args[i] = Tensor(b.reshape(a.shape))
                vals.append(float(np.float64(fn(args).data)))
            num = (vals[0] - vals[1]) / (points[0] - points[1])
            ana = float(leaves[i].grad.reshape(-1)[j])
            worst = max(worst, abs(ana - num) / max(1.0, abs(ana), abs(num)))
    return worst


def weighted_sum(out, weights):
    """Scalar probe ``sum(out * w) / sqrt(n)`` so every output element matters.

    The scaling keeps the f32 loss near unit size, where its rounding error
    stays well below the central-difference tolerance.
    """
    w = np.asarray(weights, dtype=np.float32) / np.float32(np.sqrt(np.size(weights)))
    return (out * Tensor(w)).sum()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
