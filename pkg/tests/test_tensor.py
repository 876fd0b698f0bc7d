import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mrnlg import tensor as T
from mrnlg.errors import ContractError, ShapeError
from mrnlg.tensor import Tensor


def param(values):
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True)


def test_matmul_identity_and_hand_product():
    b = Tensor([[5.0, 6.0], [7.0, 8.0]])
    assert T.matmul(Tensor(np.eye(2)), b).values == [5, 6, 7, 8]
    assert T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), b).values == [19, 22, 43, 50]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


def test_elementwise_examples():
    assert T.sigmoid(Tensor([0.0])).values == [0.5]
    assert T.tanh(Tensor([0.0])).values == [0.0]
    assert T.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).values == [4.0, 6.0]
    assert T.sub(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).values == [-2.0, -2.0]
    assert T.mul(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).values == [3.0, 8.0]
    assert T.scale(Tensor([1.0, -2.0]), 3.0).values == [3.0, -6.0]


def test_bias_add_is_the_only_broadcast():
    out = T.add(Tensor(np.zeros((2, 3))), Tensor([1.0, 2.0, 3.0]))
    assert out.values == [1, 2, 3, 1, 2, 3]
    with pytest.raises(ShapeError):
        T.add(Tensor(np.zeros((2, 3))), Tensor([1.0, 2.0]))
    with pytest.raises(ShapeError):
        T.mul(Tensor(np.zeros((2, 3))), Tensor([1.0, 2.0, 3.0]))


def test_bias_add_gradient_sums_rows():
    x = param(np.arange(6.0).reshape(2, 3))
    b = param([0.0, 0.0, 0.0])
    T.backward(T.sum(T.add(x, b)))
    assert b.grad.tolist() == [2.0, 2.0, 2.0]


def test_softmax_examples():
    assert T.softmax(Tensor([0.0, 0.0])).values == [0.5, 0.5]
    out = T.softmax(Tensor([math.log(2.0), 0.0])).values
    assert out[0] == pytest.approx(2 / 3, abs=1e-12)
    assert out[1] == pytest.approx(1 / 3, abs=1e-12)
    with pytest.raises(ShapeError):
        T.softmax(Tensor([1.0, 2.0]), axis=1)


def test_softmax_mask_gives_exact_zero():
    out = T.softmax(Tensor([[1.0, 2.0, 3.0]]), axis=1, mask=np.array([[True, False, True]]))
    assert out.data[0, 1] == 0.0
    assert out.data.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.isfinite(out.data).all()


@given(arrays(np.float64, st.integers(1, 6), elements=st.floats(-30, 30)), st.floats(-50, 50))
def test_softmax_shift_invariance_and_simplex(x, c):
    a = T.softmax(Tensor(x)).data
    b = T.softmax(Tensor(x + c)).data
    assert np.allclose(a, b, atol=1e-12)
    assert abs(a.sum() - 1.0) < 1e-9
    assert ((a >= 0) & (a <= 1)).all()


def test_softmax_large_inputs_are_finite():
    out = T.softmax(Tensor([1000.0, 0.0, -1000.0]))
    assert np.isfinite(out.data).all()


def test_concat_examples():
    out = T.concat([Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0]])], axis=0)
    assert out.shape == (2, 2) and out.values == [1, 2, 3, 4]
    m = Tensor(np.ones((2, 3)))
    assert T.concat([m, m, m], axis=1).shape == (2, 9)
    with pytest.raises(ShapeError):
        T.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=1)


def test_concat_gradient_splits():
    a, b = param([[1.0, 2.0]]), param([[3.0]])
    out = T.concat([a, b], axis=1)
    T.backward(T.sum(T.mul(out, Tensor([[1.0, 2.0, 3.0]]))))
    assert a.grad.tolist() == [[1.0, 2.0]]
    assert b.grad.tolist() == [[3.0]]


def test_backward_square_and_constant():
    x = param([3.0])
    T.backward(T.sum(T.mul(x, x)))
    assert x.grad.tolist() == [6.0]

    y = param([3.0])
    z = param([1.0])
    T.backward(T.sum(T.mul(z, z)) + T.sum(T.scale(y, 0.0)))
    assert y.grad.tolist() == [0.0]


def test_backward_requires_scalar():
    x = param([1.0, 2.0])
    with pytest.raises(ContractError):
        T.backward(T.mul(x, x))


def test_gradients_accumulate_across_uses_and_calls():
    x = param([2.0])
    T.backward(T.sum(x + x))
    assert x.grad.tolist() == [2.0]
    T.backward(T.sum(x))
    assert x.grad.tolist() == [3.0]
    x.zero_grad()
    assert x.grad is None


def test_no_grad_records_nothing():
    x = param([1.0])
    with T.no_grad():
        y = T.mul(x, x)
    assert not y.requires_grad
    assert T.is_grad_enabled()


def test_take_rows_scatters_gradient():
    table = param(np.arange(6.0).reshape(3, 2))
    out = T.take_rows(table, [2, 0, 2])
    assert out.values == [4, 5, 0, 1, 4, 5]
    T.backward(T.sum(out))
    assert table.grad.tolist() == [[1, 1], [0, 0], [2, 2]]
    with pytest.raises(IndexError):
        T.take_rows(table, [3])


def test_where_routes_gradient():
    a, b = param([1.0, 2.0]), param([3.0, 4.0])
    out = T.where(np.array([True, False]), a, b)
    assert out.values == [1.0, 4.0]
    T.backward(T.sum(out))
    assert a.grad.tolist() == [1.0, 0.0]
    assert b.grad.tolist() == [0.0, 1.0]


def test_batched_matmul_matches_numpy(rng):
    a = rng.normal(size=(3, 2, 4))
    b = rng.normal(size=(3, 4, 5))
    assert np.allclose(T.matmul(Tensor(a), Tensor(b)).data, a @ b)


def test_random_composition_passes_grad_check(rng):
    W1 = param(rng.normal(size=(4, 3)))
    W2 = param(rng.normal(size=(3, 5)))
    W3 = param(rng.normal(size=(5, 2)))
    x = Tensor(rng.normal(size=(2, 4)))

    def f():
        h = T.tanh(T.matmul(x, W1))
        p = T.softmax(T.matmul(h, W2), axis=1)
        return T.sum(T.mul(T.matmul(p, W3), Tensor([[1.0, -2.0], [0.5, 3.0]])))

    assert T.grad_check(f, {"W1": W1, "W2": W2, "W3": W3}) < 1e-4


def test_every_op_passes_grad_check(rng):
    a = param(rng.normal(size=(2, 3)))
    b = param(rng.normal(size=(2, 3)))
    v = param(rng.normal(size=(3,)))
    weights = Tensor(rng.normal(size=(2, 3)))

    def f():
        parts = [
            T.add(a, b), T.sub(a, b), T.mul(a, b), T.scale(a, 1.7), T.sigmoid(a), T.tanh(b),
            T.add(a, v), T.softmax(a, axis=0), T.softmax(b, axis=1),
            T.where(np.array([[True, False, True], [False, True, False]]), a, b),
            T.reshape(T.transpose(T.reshape(a, (3, 2))), (2, 3)),
            T.take_rows(T.concat([a, b], axis=0), [3, 0]),
            T.linear(a, T.reshape(T.concat([b, b], axis=0), (4, 3)), T.concat([v, T.reshape(T.sum(v), (1,))])),
        ]
        total = None
        for p in parts:
            s = T.sum(T.mul(p, Tensor(np.ones(p.shape) * 0.3))) if p.shape == (2, 3) else T.mean(p)
            total = s if total is None else total + s
        return total + T.sum(T.mul(a, weights))

    assert T.grad_check(f, [a, b, v]) < 1e-4


def test_grad_check_linear_model_tight(rng):
    W = param(rng.normal(size=(3, 2)))
    x = Tensor(rng.normal(size=(4, 3)))
    assert T.grad_check(lambda: T.sum(T.matmul(x, W)), [W]) < 1e-6


def test_grad_check_detects_corrupted_rule():
    x = param([0.3, -1.2])

    def bad_square(a):
        return Tensor.from_op(a.data * a.data, (a,), lambda g: (g * a.data,), "bad_square")  # missing factor 2

    assert T.grad_check(lambda: T.sum(bad_square(x)), [x]) > 1e-2


def test_grad_check_rejects_nondeterministic_function():
    x = param([1.0])
    state = {"n": 0}

    def f():
        state["n"] += 1
        return T.scale(T.sum(x), float(state["n"]))

    with pytest.raises(ContractError):
        T.grad_check(f, [x])


def test_linearity_of_backward(rng):
    x = param(rng.normal(size=(3,)))
    f1 = lambda: T.sum(T.tanh(x))
    f2 = lambda: T.sum(T.mul(x, x))
    T.backward(f1())
    g1 = x.grad.copy()
    x.zero_grad()
    T.backward(f2())
    g2 = x.grad.copy()
    x.zero_grad()
    T.backward(f1() + f2())
    assert np.allclose(x.grad, g1 + g2, rtol=1e-12, atol=0)


def test_forward_backward_bitwise_reproducible(rng):
    data = rng.normal(size=(3, 3))

    def run():
        w = param(data)
        T.backward(T.sum(T.tanh(T.matmul(w, w))))
        return w.grad.tobytes()

    assert run() == run()


@given(arrays(np.float64, (2, 3), elements=st.floats(-20, 20)))
def test_outputs_finite_on_finite_inputs(x):
    t = Tensor(x)
    for out in (T.sigmoid(t), T.tanh(t), T.softmax(t, axis=1), T.matmul(t, T.transpose(t))):
        assert np.isfinite(out.data).all()


def test_tensor_invariants():
    t = Tensor([[1.0, 2.0, 3.0]])
    assert t.shape == (1, 3) and t.size == 3 and len(t.values) == 3
    assert t.grad is None and not t.requires_grad
