import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fd_rel_error, weighted_sum
from blindrestore.numerics import (
    Adam,
    AdamState,
    ContractError,
    DimensionError,
    Parameter,
    SeededRng,
    Tensor,
    adam_step,
    backward,
    conv2d,
    no_grad,
)
from blindrestore.numerics import functional as F
from blindrestore.numerics.checkpoint import (
    CheckpointError,
    load_checkpoint,
    read_loss_csv,
    save_checkpoint,
    write_loss_csv,
)
from blindrestore.numerics.tensor import concat, exp, getitem, matmul, roll, take_rows


def loop_conv(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))).astype(np.float64)
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for ni in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = b[oi]
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[ni, ci, i * stride + u, j * stride + v] * w[oi, ci, u, v]
                    out[ni, oi, i, j] = acc
    return out


# -- conv2d -------------------------------------------------------------------

def test_conv_zero_input_gives_zero():
    w = np.random.default_rng(0).normal(size=(2, 1, 3, 3)).astype(np.float32)
    out = conv2d(Tensor(np.zeros((1, 1, 3, 3))), Tensor(w), Tensor(np.zeros(2)), padding=1)
    assert np.all(out.data == 0)


def test_conv_identity_kernel(rng):
    x = rng.normal(size=(2, 1, 5, 6)).astype(np.float32)
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    assert np.array_equal(out.data, x)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv_matches_loop_oracle(rng, stride, pad):
    x = rng.normal(size=(1, 2, 5, 5)).astype(np.float32)
    w = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
    b = rng.normal(size=3).astype(np.float32)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride, pad).data
    assert np.max(np.abs(out - loop_conv(x, w, b, stride, pad))) <= 1e-5


def test_conv_linearity(rng):
    x, y = rng.normal(size=(2, 1, 3, 6, 6)).astype(np.float32)
    w = Tensor(rng.normal(size=(4, 3, 3, 3)).astype(np.float32))
    a, b = 0.7, -1.3
    lhs = conv2d(Tensor(a * x + b * y), w, padding=1).data
    rhs = a * conv2d(Tensor(x), w, padding=1).data + b * conv2d(Tensor(y), w, padding=1).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-5


def test_conv_channel_mismatch_names_axis():
    with pytest.raises(DimensionError, match="axis"):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


def test_conv_gradient(rng):
    x = rng.normal(size=(1, 2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3)) * 0.5
    b = rng.normal(size=3)
    probe = rng.normal(size=(1, 3, 3, 3)).astype(np.float32)
    err = fd_rel_error(lambda t: weighted_sum(conv2d(t[0], t[1], t[2], 2, 1), probe), [x, w, b], rng)
    assert err <= 1e-3


# -- autograd ------------------------------------------------------------------

def test_backward_sum_gives_ones(rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    backward(x.sum())
    assert np.array_equal(x.grad, np.ones((3, 4), np.float32))


def test_backward_square():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    backward((x * x).sum())
    assert np.array_equal(x.grad, np.array([2.0, 4.0, 6.0], np.float32))


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        backward(x * 2.0)


def test_tape_consumed():
    x = Tensor(np.ones(3), requires_grad=True)
    y = (x * 3.0).sum()
    backward(y)
    first = x.grad.copy()
    backward(y)  # graph released: second call only touches y itself
    assert np.array_equal(x.grad, first)


def test_shared_subexpression_visited_once():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x
    backward((y + y).sum())
    assert x.grad[0] == pytest.approx(8.0)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad


@pytest.mark.parametrize("name", ["add", "mul", "div", "exp", "matmul", "getitem", "take_rows", "concat", "roll",
                                  "transpose", "mean"])
def test_elementary_gradients(rng, name):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4)) + 3.0
    m = rng.normal(size=(4, 2))
    probe = rng.normal(size=(3, 4)).astype(np.float32)
    fns = {
        "add": (lambda t: weighted_sum(t[0] + t[1], probe), [a, b]),
        "mul": (lambda t: weighted_sum(t[0] * t[1], probe), [a, b]),
        "div": (lambda t: weighted_sum(t[0] / t[1], probe), [a, b]),
        "exp": (lambda t: weighted_sum(exp(t[0] * 0.3), probe), [a]),
        "matmul": (lambda t: matmul(t[0], t[1]).sum(), [a, m]),
        "getitem": (lambda t: getitem(t[0], (slice(None), [0, 2, 2])).sum(), [a]),
        "take_rows": (lambda t: take_rows(t[0], np.array([0, 2, 0, 1])).sum(), [a]),
        "concat": (lambda t: weighted_sum(concat([t[0], t[1]], axis=0)[:3], probe), [a, b]),
        "roll": (lambda t: weighted_sum(roll(t[0], (1, -1), (0, 1)), probe), [a]),
        "transpose": (lambda t: weighted_sum(t[0].transpose(1, 0), probe.T), [a]),
        "mean": (lambda t: (t[0].mean(axis=1) * Tensor(np.arange(3.0))).sum(), [a]),
    }
    fn, args = fns[name]
    assert fd_rel_error(fn, args, rng) <= 1e-3


def test_broadcast_gradient_reduces(rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4,)), requires_grad=True)
    backward((x + b).sum())
    assert b.grad.shape == (4,)
    assert np.allclose(b.grad, 3.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, width=32), min_size=1, max_size=20))
def test_public_ops_keep_finite(values):
    x = Tensor(np.array(values), requires_grad=True)
    y = F.softmax(x.reshape(1, -1), axis=-1)
    z = F.layer_norm(x.reshape(1, -1), Tensor(np.ones(len(values))), Tensor(np.zeros(len(values))))
    backward((y * z).sum())
    assert np.all(np.isfinite(y.data)) and np.all(np.isfinite(x.grad))


# -- Adam -----------------------------------------------------------------------

def test_adam_zero_grad_leaves_param():
    p = Parameter(np.array([1.5, -2.0]))
    s = AdamState.fresh(p, lr=1e-2)
    p.grad = np.zeros(2, np.float32)
    adam_step(p, s)
    assert np.array_equal(p.data, np.array([1.5, -2.0], np.float32))
    assert p.grad is None and s.step_count == 1


def test_adam_first_step_moves_lr():
    p = Parameter(np.array([0.0]))
    s = AdamState.fresh(p, lr=1e-3)
    p.grad = np.array([-5.0], np.float32)
    adam_step(p, s)
    assert p.data[0] == pytest.approx(1e-3, rel=1e-4)


def test_adam_missing_grad():
    p = Parameter(np.zeros(1))
    with pytest.raises(ContractError):
        adam_step(p, AdamState.fresh(p))


def test_adam_state_roundtrip(rng):
    p = Parameter(rng.normal(size=(3,)))
    opt = Adam([("w", p)], lr=0.1)
    p.grad = np.ones(3, np.float32)
    opt.step()
    arrays = opt.state_arrays()
    other = Adam([("w", Parameter(np.zeros(3)))], lr=0.1)
    other.load_state_arrays(arrays)
    assert other.states["w"].step_count == 1
    assert np.array_equal(other.states["w"].m, opt.states["w"].m)


# -- RNG ---------------------------------------------------------------------------

def test_rng_determinism():
    a = SeededRng(42, 0).normal(1000)
    b = SeededRng(42, 0).normal(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, SeededRng(42, 1).normal(1000))


def test_rng_normal_moments():
    x = SeededRng(7, 3).normal(10**6, dtype=np.float64)
    assert abs(x.mean()) <= 0.01
    assert abs(x.var() - 1.0) <= 0.02


def test_rng_poisson_mean():
    x = SeededRng(7, 4).poisson(4.0, 10**6)
    assert 3.99 <= x.mean() <= 4.01


def test_rng_thread_independent():
    def draw(out, k):
        out[k] = SeededRng.for_item(5, "t", k).normal(64)

    serial = {k: SeededRng.for_item(5, "t", k).normal(64) for k in range(8)}
    par = {}
    threads = [threading.Thread(target=draw, args=(par, k)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(np.array_equal(serial[k], par[k]) for k in range(8))


def test_rng_integers_inclusive():
    vals = SeededRng(1).integers(30, 95, size=20000)
    assert vals.min() == 30 and vals.max() == 95


# -- checkpoint container -----------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    tensors = {"a.weight": rng.normal(size=(2, 3)).astype(np.float32), "b": np.arange(4, dtype=np.float32)}
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {"stage": "restore", "iteration": 7}, tensors)
    cfg, back = load_checkpoint(path)
    assert cfg == {"iteration": "7", "stage": "restore"}
    assert all(np.array_equal(back[k], v) for k, v in tensors.items())
    assert not list(tmp_path.glob("*.tmp"))


def test_checkpoint_little_endian_layout(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {}, {"w": np.array([1.0], np.float32)})
    raw = path.read_bytes()
    assert raw.startswith(b"BRCKPT")
    assert raw.endswith(np.array([1.0], "<f4").tobytes())


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {"k": 1}, {"w": np.ones((4, 4), np.float32)})
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_loss_csv(tmp_path):
    p = tmp_path / "loss.csv"
    write_loss_csv(p, [0.5, 0.25])
    assert p.read_text().splitlines()[0] == "iteration,loss"
    assert read_loss_csv(p) == [0.5, 0.25]
