import itertools

import numpy as np
import pytest

from lidarsot.numerics import BatchNorm, Conv, ConvBlock, Linear, Tensor, grad_check
from lidarsot.numerics import functional as F


def conv_reference(x, w, b):
    """Direct nested-loop same-padded correlation, channels last."""
    B, *S, cin = x.shape
    cout, _, *K = w.shape
    pads = [(k - 1) // 2 for k in K]
    xp = np.pad(x, [(0, 0)] + [(p, p) for p in pads] + [(0, 0)])
    out = np.zeros((B, *S, cout))
    for bi in range(B):
        for pos in itertools.product(*[range(s) for s in S]):
            for tap in itertools.product(*[range(k) for k in K]):
                src = tuple(p + t for p, t in zip(pos, tap))
                out[(bi, *pos)] += w[(slice(None), slice(None), *tap)] @ xp[(bi, *src)]
            out[(bi, *pos)] += b
    return out


@pytest.mark.parametrize("dims", [1, 2, 3])
def test_conv_matches_loop_reference(dims):
    rng = np.random.default_rng(dims)
    x = rng.normal(size=(2,) + (4,) * dims + (3,))
    w = rng.normal(size=(5, 3) + (3,) * dims)
    b = rng.normal(size=5)
    got = F.conv(Tensor(x), Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(got, conv_reference(x, w, b), atol=1e-12)


def test_conv_rejects_even_kernel():
    with pytest.raises(Exception):
        F.conv(Tensor(np.zeros((1, 4, 2))), Tensor(np.zeros((1, 2, 2))))


def test_linear_identity_and_constant():
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(F.linear(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3))).data, x)
    c = np.array([1.0, -2.0])
    out = F.linear(Tensor(x), Tensor(np.zeros((2, 3))), Tensor(c)).data
    np.testing.assert_array_equal(out, np.tile(c, (2, 1)))


def test_one_by_one_identity_conv():
    rng = np.random.default_rng(0)
    conv = Conv(3, 3, (1, 1), rng)
    conv.weight.data = np.eye(3).reshape(3, 3, 1, 1)
    conv.bias.data[:] = 0
    x = rng.normal(size=(1, 4, 5, 3))
    np.testing.assert_allclose(conv(Tensor(x)).data, x)


def test_batchnorm_eval_identity_at_init():
    bn = BatchNorm(4).eval()
    x = np.random.default_rng(1).normal(size=(6, 4))
    np.testing.assert_allclose(bn(Tensor(x)).data, x / np.sqrt(1 + 1e-5))


def test_batchnorm_train_normalizes_and_updates_buffers():
    bn = BatchNorm(2, momentum=0.1)
    x = np.random.default_rng(2).normal(loc=3.0, scale=2.0, size=(50, 2))
    y = bn(Tensor(x)).data
    np.testing.assert_allclose(y.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=0), 1, atol=1e-3)
    np.testing.assert_allclose(bn._buffers["running_mean"], 0.1 * x.mean(axis=0))


def test_conv_block_identity_on_nonnegative_input():
    rng = np.random.default_rng(0)
    blk = ConvBlock(2, 2, (1, 1), rng).eval()
    blk.conv.weight.data = np.eye(2).reshape(2, 2, 1, 1)
    blk.conv.bias.data[:] = 0
    blk.bn.eps = 0.0
    x = np.abs(rng.normal(size=(1, 3, 3, 2)))
    np.testing.assert_allclose(blk(Tensor(x)).data, x)


def test_scatter_mean_averages_and_counts():
    vals = Tensor(np.array([[1.0], [3.0], [5.0]]))
    out, counts = F.scatter_mean(vals, np.array([0, 0, 2]), 3)
    np.testing.assert_array_equal(out.data[:, 0], [2.0, 0.0, 5.0])
    np.testing.assert_array_equal(counts, [2, 0, 1])


def test_random_linear_and_conv2d_gradcheck():
    rng = np.random.default_rng(3)
    lin = Linear(4, 3, rng)
    x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    w = rng.normal(size=(5, 3))
    assert grad_check(lambda: (lin(x) * w).sum(), [x, lin.weight, lin.bias]) < 1e-4
    conv = Conv(2, 3, (3, 3), rng)
    xi = Tensor(rng.normal(size=(1, 4, 4, 2)), requires_grad=True)
    wo = rng.normal(size=(1, 4, 4, 3))
    assert grad_check(lambda: (conv(xi) * wo).sum(), [xi, conv.weight, conv.bias]) < 1e-4


def test_eval_forward_is_bit_deterministic():
    rng = np.random.default_rng(4)
    blk = ConvBlock(3, 4, (3, 3), rng).eval()
    x = Tensor(rng.normal(size=(1, 5, 5, 3)))
    assert np.array_equal(blk(x).data, blk(x).data)
