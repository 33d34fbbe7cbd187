import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from neuropathnet import gradcheck
from neuropathnet import tensor as tn
from neuropathnet.errors import ConfigError, ContractError, DimensionError, NumericError
from neuropathnet.tensor import Tensor

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matmul_identity_and_known_product():
    m = np.array([[2.0, -1.0], [0.5, 3.0]])
    np.testing.assert_array_equal(tn.matmul(Tensor(np.eye(2)), Tensor(m)).data, m)
    out = tn.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        tn.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


def test_matmul_gradient_3x4_by_4x2(rng):
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    w = rng.standard_normal((3, 2))
    errs = tn.check_gradients(lambda: tn.sum(tn.mul(tn.matmul(a, b), Tensor(w))), [a, b])
    assert max(errs.values()) < 1e-6


def test_softmax_examples(backend):
    np.testing.assert_allclose(tn.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, rtol=0, atol=1e-15)
    big = tn.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(big))
    assert big[0] == 1.0 and big[1] < 1e-300
    x = [1.0, 2.0, 3.0]
    denom = sum(math.exp(v) for v in x)
    np.testing.assert_allclose(tn.softmax(Tensor(x)).data, [math.exp(v) / denom for v in x], rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)), elements=finite))
def test_softmax_rows_are_simplex_points(x):
    y = tn.softmax(Tensor(x), axis=-1).data
    assert np.all(y >= 0)
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, rtol=0, atol=1e-12)


def test_layer_norm_examples(backend):
    ones, zeros = Tensor(np.ones(3)), Tensor(np.zeros(3))
    np.testing.assert_array_equal(tn.layer_norm(Tensor([[4.0, 4.0, 4.0]]), ones, zeros).data, [[0.0, 0.0, 0.0]])
    y = tn.layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12).data
    np.testing.assert_allclose(y, [[-1.0, 1.0]], atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 9)), elements=finite))
def test_layer_norm_rows_have_zero_mean(x):
    d = x.shape[1]
    y = tn.layer_norm(Tensor(x), Tensor(np.ones(d)), Tensor(np.zeros(d))).data
    assert np.all(np.abs(y.mean(axis=1)) < 1e-10)


def test_layer_norm_gradient_random_row(rng):
    x = Tensor(rng.standard_normal((1, 6)), requires_grad=True)
    g = Tensor(rng.standard_normal(6) + 1.0, requires_grad=True)
    b = Tensor(rng.standard_normal(6), requires_grad=True)
    w = Tensor(rng.standard_normal((1, 6)))
    errs = tn.check_gradients(lambda: tn.sum(tn.mul(tn.layer_norm(x, g, b), w)), [x, g, b])
    assert max(errs.values()) < 1e-5


def test_dropout_identity_cases():
    x = Tensor(np.arange(6.0))
    assert tn.dropout(x, 0.0, (1, 2, 3)) is x
    assert tn.dropout(x, 0.5, (1, 2, 3), training=False) is x


def test_dropout_rejects_bad_probability():
    for p in (-0.1, 1.0, 1.5):
        with pytest.raises(ConfigError):
            tn.dropout(Tensor(np.ones(3)), p)


def test_dropout_survivor_fraction_and_scaling():
    y = tn.dropout(Tensor(np.ones(100_000)), 0.5, (0, 7, 3)).data
    kept = y != 0
    assert abs(kept.mean() - 0.5) < 0.01
    np.testing.assert_array_equal(y[kept], 2.0)


def test_dropout_is_keyed():
    x = Tensor(np.ones(1000))
    a = tn.dropout(x, 0.3, (1, 2, 3)).data
    np.testing.assert_array_equal(a, tn.dropout(x, 0.3, (1, 2, 3)).data)
    assert not np.array_equal(a, tn.dropout(x, 0.3, (1, 2, 4)).data)


def test_tanh_zero_and_elementwise_values():
    assert tn.tanh(Tensor([0.0])).data[0] == 0.0
    np.testing.assert_array_equal(tn.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(tn.scale(Tensor([1.0, -2.0]), 3.0).data, [3.0, -6.0])


def test_shape_ops_values():
    x = np.arange(24.0).reshape(2, 3, 4)
    np.testing.assert_array_equal(tn.transpose(Tensor(x), (2, 0, 1)).data, x.transpose(2, 0, 1))
    np.testing.assert_array_equal(tn.reshape(Tensor(x), (6, 4)).data, x.reshape(6, 4))
    np.testing.assert_array_equal(tn.mean(Tensor(x), axis=1).data, x.mean(axis=1))
    np.testing.assert_array_equal(tn.concat([Tensor(x), Tensor(x)], axis=2).data, np.concatenate([x, x], 2))


def test_backward_sum_gives_ones():
    x = Tensor(np.random.default_rng(0).standard_normal((3, 2)), requires_grad=True)
    tn.sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 2)))


def test_cross_entropy_of_uniform_prediction_gives_p_minus_y():
    logits = Tensor(np.zeros((1, 4)), requires_grad=True)
    loss = tn.scale(tn.log(tn.pick(tn.softmax(logits), [2])), -1.0)
    loss.backward()
    np.testing.assert_allclose(logits.grad, [[0.25, 0.25, -0.75, 0.25]], atol=1e-15)


def test_backward_requires_scalar_root():
    with pytest.raises(ContractError):
        tn.mul(Tensor(np.ones(3), requires_grad=True), 2.0).backward()


def test_backward_rejects_nan_root():
    x = Tensor([1.0], requires_grad=True)
    with pytest.raises(NumericError):
        tn.sum(tn.mul(x, Tensor([np.nan]))).backward()


def test_unreached_nodes_get_zero_grad():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0, 4.0], requires_grad=True)
    loss = tn.sum(tn.add(tn.pick(Tensor(np.ones((1, 2))), [0]), tn.mul(a, 0.0)))
    loss.backward()
    np.testing.assert_array_equal(a.grad, [0.0, 0.0])
    assert b.grad is None  # not part of the graph at all


def test_shared_input_accumulates_both_paths():
    x = Tensor([2.0, -3.0], requires_grad=True)
    tn.sum(tn.mul(x, x)).backward()
    np.testing.assert_array_equal(x.grad, [4.0, -6.0])


def test_no_grad_skips_graph():
    x = Tensor([1.0], requires_grad=True)
    with tn.no_grad():
        y = tn.mul(x, x)
    assert not y.requires_grad


@pytest.mark.parametrize("name", sorted(gradcheck.op_cases(np.random.default_rng(0))))
def test_each_op_matches_finite_differences_on_ten_instances(name):
    worst = 0.0
    for seed in range(10):
        fn, inputs = gradcheck.op_cases(np.random.default_rng(seed))[name]
        worst = max(worst, max(tn.check_gradients(fn, inputs).values()))
    assert worst < 1e-4, f"{name}: max relative error {worst:.3e}"


def test_relative_error_floor():
    assert tn.relative_error(np.array([1e-9]), np.array([0.0])) == pytest.approx(1e-3)
    assert tn.relative_error(np.array([2.0]), np.array([1.0])) == 0.5


def test_ops_are_deterministic(rng):
    x = rng.standard_normal((4, 3, 8))
    a = tn.attention(Tensor(x), Tensor(x), Tensor(x), 2)[0].data
    b = tn.attention(Tensor(x), Tensor(x), Tensor(x), 2)[0].data
    assert a.tobytes() == b.tobytes()
