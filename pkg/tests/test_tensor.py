import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lightcts import tensor as T
from lightcts.errors import ContractError, DegenerateMaskError, ShapeError
from lightcts.tensor import Tensor

from gradcheck import CASES, check
from oracles import naive_conv, naive_matmul

finite = st.floats(-1, 1, allow_nan=False, allow_infinity=False)


# ------------------------------------------------------------------ matmul


def test_matmul_identity():
    out = T.matmul(np.eye(2), np.array([[5.0, 6], [7, 8]]))
    assert np.array_equal(out.data, [[5, 6], [7, 8]])


def test_matmul_row_by_column():
    assert np.array_equal(T.matmul(np.array([[1.0, 2]]), np.array([[3.0], [4]])).data, [[11.0]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    np.testing.assert_allclose(T.matmul(a, b).data, naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(3, 4\).*\(3, 2\)"):
        T.matmul(np.zeros((3, 4)), np.zeros((3, 2)))


# ------------------------------------------------------------- elementwise


def test_elementwise_examples():
    assert T.elementwise("sigmoid", Tensor(0.0)).item() == 0.5
    assert T.elementwise("relu", Tensor(-3.0)).item() == 0.0
    assert T.elementwise("relu", Tensor(3.0)).item() == 3.0
    assert abs(T.elementwise("tanh", Tensor(0.7)).item() - math.tanh(0.7)) <= 1e-12
    assert np.array_equal(T.elementwise("scale", Tensor([1.0, -2.0]), 3.0).data, [3.0, -6.0])
    assert np.array_equal(T.elementwise("add", Tensor([1.0]), Tensor([2.0])).data, [3.0])


def test_tanh_against_series():
    # tanh(x) = (e^{2x} - 1) / (e^{2x} + 1) with e^{2x} from its power series
    x = 0.7
    e2x = math.fsum((2 * x) ** k / math.factorial(k) for k in range(40))
    assert abs(T.tanh(Tensor(x)).item() - (e2x - 1) / (e2x + 1)) <= 1e-12


def test_non_broadcastable_is_shape_error():
    with pytest.raises(ShapeError):
        T.add(np.zeros((3, 4)), np.zeros((2, 4)))


def test_sigmoid_saturates_without_overflow():
    y = T.sigmoid(Tensor([-1000.0, 1000.0])).data
    assert np.array_equal(y, [0.0, 1.0])


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4,), elements=finite))
def test_broadcast_gradient_sums_to_operand_shape(a, b):
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    T.backward(T.sum_(T.mul(ta, tb)))
    np.testing.assert_allclose(tb.grad, a.sum(axis=0), atol=1e-12)
    np.testing.assert_allclose(ta.grad, np.broadcast_to(b, a.shape), atol=0)


# ----------------------------------------------------------------- softmax


def test_softmax_examples():
    np.testing.assert_allclose(T.softmax_rows(np.zeros(3)).data, [1 / 3] * 3, atol=1e-15)
    y = T.softmax_rows(np.array([-np.inf, 0.0])).data
    assert y[0] == 0.0 and y[1] == 1.0
    e = np.exp([1.0, 2.0, 3.0])
    oracle = e / e.sum()
    np.testing.assert_allclose(T.softmax_rows(np.array([1.0, 2.0, 3.0])).data, oracle, atol=1e-12)
    np.testing.assert_allclose(oracle, [0.09003057, 0.24472847, 0.66524096], atol=5e-9)


def test_softmax_all_masked_row_raises():
    with pytest.raises(DegenerateMaskError):
        T.softmax_rows(np.array([[0.0, 1.0], [-np.inf, -np.inf]]))


@given(arrays(np.float64, (4, 5), elements=st.floats(-30, 30)), st.floats(-50, 50))
def test_softmax_rows_sum_to_one_and_shift_invariant(x, c):
    y = T.softmax_rows(x).data
    assert (y >= 0).all()
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-9)
    np.testing.assert_allclose(T.softmax_rows(x + c).data, y, atol=1e-12)


def test_masked_entries_are_exactly_zero():
    rng = np.random.default_rng(0)
    keep = rng.random((5, 5)) < 0.5
    np.fill_diagonal(keep, True)
    y = T.softmax_rows(T.masked_fill_neginf(rng.normal(size=(5, 5)), keep)).data
    assert (y[~keep] == 0.0).all()
    assert not np.isnan(y).any()


# -------------------------------------------------------------------- conv


def test_conv_identity_kernel():
    h = np.random.default_rng(1).normal(size=(3, 5, 4))
    w = np.eye(4)[:, :, None]
    assert np.array_equal(T.dilated_causal_conv1d(h, w, 1).data, h)


def test_conv_zero_input_zero_output():
    w = np.random.default_rng(2).normal(size=(3, 2, 2))
    assert not T.dilated_causal_conv1d(np.zeros((2, 6, 2)), w, 2).data.any()


def test_conv_hand_example():
    h = np.array([1.0, 2, 3, 4]).reshape(1, 4, 1)
    w = np.ones((1, 1, 2))  # tap 0 is the current step, tap 1 is lag 2
    assert np.array_equal(T.dilated_causal_conv1d(h, w, 2).data.ravel(), [1, 2, 4, 6])
    assert np.array_equal(naive_conv(h, w, 2).ravel(), [1, 2, 4, 6])


@pytest.mark.parametrize("dilation,k", [(1, 1), (1, 2), (2, 3), (4, 2), (8, 2)])
def test_conv_matches_naive_loop(dilation, k):
    rng = np.random.default_rng(dilation * 10 + k)
    h, w, b = rng.normal(size=(2, 9, 3)), rng.normal(size=(4, 3, k)), rng.normal(size=4)
    np.testing.assert_allclose(T.dilated_causal_conv1d(h, w, dilation, b).data, naive_conv(h, w, dilation, b), atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        T.dilated_causal_conv1d(np.zeros((1, 4, 3)), np.zeros((2, 2, 2)), 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 9), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_conv_is_causal(t0, dilation, k, seed):
    rng = np.random.default_rng(seed)
    h, w = rng.normal(size=(1, 10, 2)), rng.normal(size=(2, 2, k))
    y0 = T.dilated_causal_conv1d(h, w, dilation).data
    h2 = h.copy()
    h2[0, t0, :] += 1.0
    y1 = T.dilated_causal_conv1d(h2, w, dilation).data
    assert np.array_equal(y0[:, :t0], y1[:, :t0])


# ---------------------------------------------------------------- backward


def test_backward_square_sum():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    T.backward(T.sum_(T.mul(x, x)))
    assert np.array_equal(x.grad, [2.0, -4.0, 6.0])


def test_constant_loss_gives_zero_gradient():
    p = Tensor(np.ones(3), requires_grad=True)
    q = Tensor(np.ones(2), requires_grad=True)
    (gp,) = T.backward(T.sum_(T.mul(q, 2.0)), [p])
    assert np.array_equal(gp, np.zeros(3))


def test_backward_contract_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        T.backward(T.mul(x, 2.0))
    with pytest.raises(ContractError):
        T.backward(T.sum_(Tensor(np.ones(3))))
    with T.no_grad():
        y = T.sum_(x)
    with pytest.raises(ContractError):
        T.backward(y)


def test_shared_subgraph_visited_once():
    x = Tensor(2.0, requires_grad=True)
    y = T.mul(x, x)
    z = T.add(y, y)  # dz/dx = 4x
    T.backward(z)
    assert x.grad == 8.0


def test_deep_chain_does_not_recurse():
    x = Tensor(1.0, requires_grad=True)
    y = x
    for _ in range(5000):
        y = T.add(y, 0.0)
    T.backward(y)
    assert x.grad == 1.0


def test_two_layer_composition_gradient():
    rng = np.random.default_rng(7)

    def fn(x, w1, w2):
        return T.matmul(T.tanh(T.matmul(x, w1)), w2)

    arrays_ = [rng.uniform(-1, 1, s) for s in ((3, 4), (4, 5), (5, 2))]
    assert check(fn, arrays_, 7) < 1e-6


@pytest.mark.parametrize("name", sorted(CASES))
def test_gradients_over_seeds(name):
    for seed in range(20):
        fn, arrays_ = CASES[name](np.random.default_rng(seed))
        check(fn, arrays_, seed)


def test_no_nan_on_finite_inputs():
    rng = np.random.default_rng(0)
    for name, build in CASES.items():
        fn, arrays_ = build(rng)
        assert not np.isnan(fn(*[Tensor(a) for a in arrays_]).data).any(), name


def test_forward_is_deterministic():
    fn, arrays_ = CASES["local_block"](np.random.default_rng(5))
    a = fn(*[Tensor(x) for x in arrays_]).data
    b = fn(*[Tensor(x) for x in arrays_]).data
    assert np.array_equal(a, b)


def test_count_macs_matches_matmul_formula():
    with T.count_macs() as c:
        T.matmul(np.zeros((3, 4)), np.zeros((4, 2)))
    assert c[0] == 48


def test_grad_shape_matches_data():
    fn, arrays_ = CASES["conv_k3_d2_grouped"](np.random.default_rng(0))
    ts = [Tensor(a, requires_grad=True) for a in arrays_]
    T.backward(T.sum_(fn(*ts)))
    for t in ts:
        assert t.grad.shape == t.shape and t.data.size == math.prod(t.shape)
