import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lidarsot.numerics import (
    DimensionError,
    NumericError,
    Tensor,
    concat,
    gather,
    grad_check,
    log,
    matmul,
    no_grad,
    relu,
    sigmoid,
    softmax,
)
from lidarsot.numerics import tensor as T

finite = st.floats(-5, 5, allow_nan=False, width=64)


def test_softmax_uniform():
    out = softmax(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3])


def test_matmul_identity():
    a = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(matmul(Tensor(np.eye(3)), Tensor(a)).data, a)


def test_relu_forward_and_mask():
    x = Tensor([-1.0, 2.0], requires_grad=True)
    y = relu(x)
    y.sum().backward()
    np.testing.assert_array_equal(y.data, [0.0, 2.0])
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_broadcast_gradient_is_reduced():
    a = Tensor(np.ones((3, 4)), requires_grad=True)
    b = Tensor(np.ones(4), requires_grad=True)
    (a * b).sum().backward()
    np.testing.assert_array_equal(b.grad, np.full(4, 3.0))
    assert a.grad.shape == (3, 4)


def test_shape_mismatch_raises_dimension_error():
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4, 3)))
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_output_raises():
    with pytest.raises(NumericError):
        log(Tensor([0.0]))


def test_no_grad_builds_no_graph():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        y = (x * 3.0).sum()
    assert not y.requires_grad


def test_shared_subexpression_accumulates():
    x = Tensor([2.0], requires_grad=True)
    y = x * x + x
    y.backward()
    np.testing.assert_allclose(x.grad, [5.0])


def test_gather_repeated_index_sums():
    a = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    out = gather(a, np.array([[0, 0], [2, 0]]))
    assert out.shape == (2, 2, 2)
    out.sum().backward()
    np.testing.assert_array_equal(a.grad, [[3, 3], [0, 0], [1, 1]])


def test_gather_rejects_out_of_range():
    with pytest.raises(DimensionError):
        gather(Tensor(np.zeros((3, 2))), np.array([3]))


def test_max_gradient_goes_to_first_maximum():
    x = Tensor([[1.0, 3.0, 3.0]], requires_grad=True)
    x.max(axis=1).sum().backward()
    np.testing.assert_array_equal(x.grad, [[0, 1, 0]])


def test_sigmoid_is_stable_for_large_inputs():
    out = sigmoid(Tensor([-800.0, 0.0, 800.0]))
    np.testing.assert_allclose(out.data, [0.0, 0.5, 1.0])


def test_quadratic_gradcheck_is_exact():
    x = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
    assert grad_check(lambda: (x * x).sum(), [x], eps=1e-5) < 1e-8


def test_concat_backward_splits():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 3)), requires_grad=True)
    (concat([a, b], axis=1) * np.arange(5.0)).sum().backward()
    np.testing.assert_array_equal(a.grad, [[0, 1], [0, 1]])
    np.testing.assert_array_equal(b.grad, [[2, 3, 4], [2, 3, 4]])


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 5), elements=finite))
def test_softmax_rows_sum_to_one(x):
    out = softmax(Tensor(x), axis=1).data
    np.testing.assert_allclose(out.sum(axis=1), 1.0)
    assert np.all(out >= 0)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, (2, 3), elements=finite))
def test_elementwise_ops_match_numpy(a, b):
    ta, tb = Tensor(a), Tensor(b)
    np.testing.assert_array_equal((ta + tb).data, a + b)
    np.testing.assert_array_equal((ta * tb).data, a * b)
    np.testing.assert_array_equal(T.tabs(ta).data, np.abs(a))


@settings(max_examples=15, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite))
def test_softmax_gradcheck_property(x):
    t = Tensor(x.copy(), requires_grad=True)
    w = np.linspace(-1, 1, 12).reshape(3, 4)
    assert grad_check(lambda: (softmax(t, axis=0) * w).sum(), [t]) < 1e-6
