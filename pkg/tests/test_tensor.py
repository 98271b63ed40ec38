import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lalparse import tensor as T
from lalparse.tensor import ContractError, ShapeError, Tensor


def fd_error(build, *shapes, seed=0, eps=1e-5):
    """Max relative error of every input's gradient of ``sum(build(*xs))``."""
    rng = np.random.default_rng(seed)
    xs = [T.parameter(rng.normal(size=s)) for s in shapes]
    return max(T.check_gradients(lambda: T.tsum(build(*xs)), xs, eps))


class TestMatmul:
    def test_identity(self):
        a = np.random.default_rng(0).normal(size=(3, 3))
        np.testing.assert_array_equal(T.matmul(Tensor(np.eye(3)), Tensor(a)).data, a)

    def test_hand_checked(self):
        out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[0.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[2.0], [4.0]])

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient(self):
        assert fd_error(T.matmul, (4, 5), (5, 3)) <= 1e-6

    def test_batched_gradient(self):
        assert fd_error(T.matmul, (2, 3, 4), (4, 2)) <= 1e-6
        assert fd_error(T.matmul, (3, 4), (2, 4, 2)) <= 1e-6


class TestSoftmax:
    def test_uniform_over_zeros(self):
        np.testing.assert_allclose(T.softmax(Tensor(np.zeros(3))).data, [1 / 3] * 3, rtol=0, atol=1e-15)

    def test_single_element(self):
        assert T.softmax(Tensor([5.3])).data.tolist() == [1.0]

    def test_scalar_oracle(self):
        x = 1 / math.sqrt(2)
        e = math.exp(x)
        expected = [e / (e + 1.0), 1.0 / (e + 1.0)]
        np.testing.assert_allclose(T.softmax(Tensor([x, 0.0])).data, expected, rtol=1e-15)

    def test_empty_axis(self):
        with pytest.raises(ShapeError):
            T.softmax(Tensor(np.zeros((2, 0))))

    def test_stable_for_large_inputs(self):
        out = T.softmax(Tensor([1000.0, 1000.0, -1000.0])).data
        np.testing.assert_allclose(out, [0.5, 0.5, 0.0])

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 7)), elements=st.floats(-50, 50)))
    def test_rows_are_distributions(self, x):
        out = T.softmax(Tensor(x), axis=-1).data
        assert np.all((out >= 0) & (out <= 1))
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, rtol=0, atol=1e-12)

    def test_gradient(self):
        w = np.random.default_rng(3).normal(size=(3, 5))
        assert fd_error(lambda x: T.mul(T.softmax(x, axis=-1), w), (3, 5)) <= 1e-6

    def test_log_softmax_gradient(self):
        w = np.random.default_rng(4).normal(size=(2, 6))
        assert fd_error(lambda x: T.mul(T.log_softmax(x, axis=-1), w), (2, 6)) <= 1e-6


class TestLayerNorm:
    def test_already_normalized_row(self):
        x = np.array([[-1.0, 1.0, -1.0, 1.0]])
        out = T.layer_norm(Tensor(x), Tensor(np.ones(4)), Tensor(np.zeros(4))).data
        np.testing.assert_allclose(out, x / math.sqrt(1 + T.LN_EPS), rtol=1e-15)

    def test_constant_row_gives_bias(self):
        bias = np.arange(5.0)
        out = T.layer_norm(Tensor(np.full((1, 5), 3.0)), Tensor(np.ones(5)), Tensor(bias)).data
        np.testing.assert_array_equal(out[0], bias)

    def test_moments(self):
        x = np.random.default_rng(0).normal(3.0, 2.0, size=(3, 8))
        out = T.normalize(Tensor(x)).data
        np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-9)
        # eps sits inside the square root, so the variance is v / (v + eps)
        v = x.var(axis=1)
        np.testing.assert_allclose(out.var(axis=1) * (v + T.LN_EPS) / v, 1.0, rtol=0, atol=1e-9)

    def test_gradient(self):
        w = np.random.default_rng(5).normal(size=(3, 8))
        assert fd_error(lambda x, g, b: T.mul(T.layer_norm(x, g, b), w), (3, 8), (8,), (8,)) <= 1e-5

    def test_gain_shape_checked(self):
        with pytest.raises(ShapeError):
            T.layer_norm(Tensor(np.ones((2, 4))), Tensor(np.ones(3)), Tensor(np.zeros(4)))


class TestElementwise:
    def test_relu(self):
        assert T.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]

    def test_relu_subgradient_at_zero(self):
        x = T.parameter([0.0, 1.0])
        T.tsum(T.relu(x)).backward()
        assert x.grad.tolist() == [0.0, 1.0]

    def test_product_gradient(self):
        assert fd_error(T.mul, (3, 4), (3, 4)) <= 1e-6

    def test_broadcast_gradients(self):
        assert fd_error(T.add, (3, 4), (4,)) <= 1e-6
        assert fd_error(T.sub, (2, 1, 4), (3, 1)) <= 1e-6
        assert fd_error(T.mul, (3, 4), (1, 4)) <= 1e-6

    def test_broadcast_mismatch(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.ones((2, 3))), Tensor(np.ones(4)))

    def test_scalar_ops(self):
        x = T.parameter([1.0, 2.0])
        y = T.tsum((x * 3.0 - 1.0) / 2.0)
        assert y.item() == 3.5
        y.backward()
        assert x.grad.tolist() == [1.5, 1.5]


class TestStructural:
    def test_concat_of_slices_is_identity(self):
        x = Tensor(np.random.default_rng(0).normal(size=(4, 9)))
        parts = [T.slice_axis(x, 1, a, b) for a, b in ((0, 2), (2, 7), (7, 9))]
        assert np.array_equal(T.concat(parts, axis=1).data, x.data)

    def test_concat_gradient(self):
        assert fd_error(lambda a, b: T.mul(T.concat([a, b], axis=0), np.arange(10.0).reshape(5, 2)), (2, 2), (3, 2)) <= 1e-6

    def test_take_accumulates_duplicates(self):
        x = T.parameter(np.zeros((3, 2)))
        T.tsum(T.take(x, [0, 2, 0])).backward()
        assert x.grad.tolist() == [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]]

    def test_take_out_of_range(self):
        with pytest.raises(ShapeError):
            T.take(Tensor(np.zeros((3, 2))), [3])

    def test_slice_out_of_range(self):
        with pytest.raises(ShapeError):
            T.slice_axis(Tensor(np.zeros((3, 2))), 0, 1, 4)

    def test_reshape_transpose_gradient(self):
        w = np.random.default_rng(1).normal(size=(4, 6))
        assert fd_error(lambda x: T.mul(T.reshape(T.transpose(x, (1, 0, 2)), (4, 6)), w), (2, 4, 3)) <= 1e-6

    def test_sum_axis_gradient(self):
        w = np.random.default_rng(2).normal(size=(3, 1))
        assert fd_error(lambda x: T.mul(T.tsum(x, axis=1, keepdims=True), w), (3, 4)) <= 1e-6


class TestBackward:
    def test_sum_gives_ones(self):
        w = T.parameter(np.random.default_rng(0).normal(size=(2, 2)))
        T.tsum(w).backward()
        np.testing.assert_array_equal(w.grad, np.ones((2, 2)))

    def test_non_scalar_loss_rejected(self):
        w = T.parameter(np.ones((2, 2)))
        with pytest.raises(ContractError):
            T.mul(w, 2.0).backward()

    def test_gradients_accumulate_until_reset(self):
        w = T.parameter(np.ones(3))
        T.tsum(T.mul(w, 2.0)).backward()
        T.tsum(T.mul(w, 2.0)).backward()
        assert w.grad.tolist() == [4.0, 4.0, 4.0]
        T.zero_grad([w])
        assert w.grad is None

    def test_shared_subexpression(self):
        x = T.parameter([3.0])
        y = T.mul(x, x)
        T.tsum(T.add(y, y)).backward()
        assert x.grad.tolist() == [12.0]

    def test_no_grad_records_nothing(self):
        x = T.parameter([1.0, 2.0])
        with T.no_grad():
            y = T.mul(x, 2.0)
        assert y._backward is None and not y.requires_grad

    def test_topological_order(self):
        a, b = T.parameter([1.0]), T.parameter([2.0])
        c = T.mul(a, b)
        d = T.add(c, a)
        order = T.topological_order(d)
        pos = {id(t): k for k, t in enumerate(order)}
        for node in order:
            for p in node._parents:
                assert pos[id(p)] < pos[id(node)]

    def test_replay_is_bit_identical(self):
        rng = np.random.default_rng(9)
        a, b = T.parameter(rng.normal(size=(4, 5))), T.parameter(rng.normal(size=(5, 3)))

        def run():
            T.zero_grad([a, b])
            loss = T.tsum(T.softmax(T.matmul(a, b), axis=-1) * np.arange(3.0))
            loss.backward()
            return loss.item(), a.grad.copy(), b.grad.copy()

        first, second = run(), run()
        assert first[0] == second[0]
        assert np.array_equal(first[1], second[1]) and np.array_equal(first[2], second[2])


class TestDropout:
    def test_identity_in_eval(self):
        x = Tensor(np.ones(10))
        assert T.dropout(x, 0.5, np.random.default_rng(0), training=False) is x

    def test_inverted_scaling(self):
        out = T.dropout(Tensor(np.ones(10000)), 0.25, np.random.default_rng(0), training=True).data
        assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}
        assert abs(out.mean() - 1.0) < 0.05


@pytest.mark.parametrize(
    "name, build, shapes",
    [
        ("matmul", T.matmul, [(3, 4), (4, 2)]),
        ("mul", T.mul, [(3, 4), (3, 4)]),
        ("add", T.add, [(3, 4), (4,)]),
        ("relu", lambda x: T.mul(T.relu(x), 1.7), [(3, 4)]),
        ("softmax", lambda x: T.mul(T.softmax(x), np.arange(4.0)), [(3, 4)]),
        ("normalize", lambda x: T.mul(T.normalize(x), np.arange(4.0)), [(3, 4)]),
        ("concat", lambda a, b: T.mul(T.concat([a, b], axis=1), np.arange(7.0)), [(3, 4), (3, 3)]),
    ],
)
def test_primitive_gradients_random_instances(name, build, shapes):
    """Every primitive matches central differences on 100 random instances."""
    worst = max(fd_error(build, *shapes, seed=s) for s in range(100))
    assert worst <= 1e-5, name
