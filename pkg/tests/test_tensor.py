import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pda_kit.errors import ContractViolation, DimensionError, NumericError
from pda_kit.tensor import (
    Tensor,
    concat,
    gather_rows,
    leaky_relu,
    matmul,
    no_grad,
    softmax,
)

from oracles import check_gradients

rng = np.random.default_rng(7)


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, -2.0], [0.5, 3.0]])
        eye = Tensor(np.eye(2))
        assert np.array_equal((eye @ a).data, a.data)

    def test_hand_product(self):
        out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[0.0], [1.0]])
        assert np.array_equal(out.data, [[2.0], [4.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient_matches_finite_differences(self):
        a = Tensor(rng.normal(size=(3, 4)))
        b = Tensor(rng.normal(size=(4, 2)))
        err = check_gradients(lambda: (a @ b).sum(), [a, b])
        assert err < 1e-6

    def test_backward_rule_shapes(self):
        a = Tensor(rng.normal(size=(3, 4)))
        b = Tensor(rng.normal(size=(4, 2)))
        (a @ b).sum().backward()
        assert a.grad.shape == (3, 4) and b.grad.shape == (4, 2)


class TestLeakyRelu:
    def test_zero(self):
        assert leaky_relu(Tensor([0.0]), 0.2).data[0] == 0.0

    def test_negative_scaled(self):
        assert leaky_relu(Tensor([-1.0]), 0.2).data[0] == pytest.approx(-0.2)

    def test_positive_passthrough(self):
        assert leaky_relu(Tensor([3.0]), 0.2).data[0] == 3.0

    def test_slope_range_enforced(self):
        for bad in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ContractViolation):
                leaky_relu(Tensor([1.0]), bad)

    def test_gradient(self):
        x = Tensor(rng.normal(size=(4, 3)))
        err = check_gradients(lambda: leaky_relu(x, 0.2).sum(), [x])
        assert err < 1e-6


class TestSoftmax:
    def test_symmetry(self):
        out = softmax(Tensor([[0.0, 0.0]]))
        assert np.allclose(out.data, [[0.5, 0.5]])

    def test_closed_form(self):
        out = softmax(Tensor([[np.log(2.0), 0.0]]))
        assert np.allclose(out.data, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15)

    def test_jacobian_matches_finite_differences(self):
        x = Tensor(rng.normal(size=(4, 5)))
        proj = rng.normal(size=(4, 5))
        err = check_gradients(lambda: (softmax(x) * proj).sum(), [x])
        assert err < 1e-6

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericError):
            softmax(Tensor([[np.inf, 0.0]]))
        with pytest.raises(NumericError):
            softmax(Tensor([[np.nan, 0.0]]))

    @given(
        arrays(
            np.float64,
            (3, 4),
            elements=st.floats(min_value=-300, max_value=300),
        )
    )
    def test_rows_on_simplex(self, logits):
        out = softmax(Tensor(logits))
        assert np.all(np.abs(out.data.sum(axis=1) - 1.0) <= 1e-12)
        assert np.all(out.data > 0.0)

    def test_large_logits_stable(self):
        # logit gaps beyond ~745 underflow to exactly 0, but never NaN/inf
        out = softmax(Tensor([[1e4, 1e4 - 1.0], [800.0, 0.0]]))
        assert np.isfinite(out.data).all()
        assert np.all(np.abs(out.data.sum(axis=1) - 1.0) <= 1e-12)


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(rng.normal(size=(2, 3)))
        x.sum().backward()
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_square_closed_form(self):
        x = Tensor([3.0])
        x.square().sum().backward()
        assert x.grad[0] == pytest.approx(6.0)

    def test_root_grad_is_one(self):
        x = Tensor([2.0, 5.0])
        root = x.sum()
        root.backward()
        assert root.grad == pytest.approx(1.0)

    def test_nonscalar_root_rejected(self):
        with pytest.raises(ContractViolation):
            Tensor([1.0, 2.0]).backward()

    def test_repeated_backward_on_same_root_rejected(self):
        # chosen contract: one backward per graph; a second call errors
        x = Tensor([1.0, 2.0])
        root = x.sum()
        root.backward()
        with pytest.raises(ContractViolation):
            root.backward()

    def test_grads_accumulate_across_graphs(self):
        # separate graphs over shared leaves add into .grad
        x = Tensor([1.0, 2.0])
        x.sum().backward()
        (x * 2.0).sum().backward()
        assert np.array_equal(x.grad, [3.0, 3.0])

    def test_diamond_graph_counted_once(self):
        x = Tensor([2.0])
        y = x * 3.0
        z = (y + y).sum()  # d/dx = 6
        z.backward()
        assert x.grad[0] == pytest.approx(6.0)

    def test_no_grad_mode(self):
        x = Tensor([1.0])
        with no_grad():
            y = x * 2.0
        assert y.data[0] == 2.0
        assert y._prev == ()


def _primitive_case(name: str, r: np.random.Generator):
    """Fresh tensors plus a deterministic loss builder for one primitive.

    Projection matrices are drawn once so the builder is a pure function of
    the tensors' current data, as finite differencing requires.
    """
    if name == "add":
        a, b = Tensor(r.normal(size=(3, 4))), Tensor(r.normal(size=(3, 4)))
        return [a, b], lambda: (a + b).square().sum()
    if name == "add_row_broadcast":
        a, b = Tensor(r.normal(size=(3, 4))), Tensor(r.normal(size=(4,)))
        return [a, b], lambda: (a + b).square().sum()
    if name == "add_scalar":
        a, s = Tensor(r.normal(size=(3, 4))), Tensor(r.normal())
        return [a, s], lambda: (a + s).square().sum()
    if name == "sub":
        a, b = Tensor(r.normal(size=(3, 4))), Tensor(r.normal(size=(3, 4)))
        return [a, b], lambda: (a - b).square().sum()
    if name == "mul":
        a, b = Tensor(r.normal(size=(3, 4))), Tensor(r.normal(size=(3, 4)))
        return [a, b], lambda: (a * b).sum()
    if name == "mul_row_broadcast":
        a, b = Tensor(r.normal(size=(3, 4))), Tensor(r.normal(size=(4,)))
        return [a, b], lambda: (a * b).sum()
    if name == "scalar_mul":
        a = Tensor(r.normal(size=(3, 4)))
        return [a], lambda: (a * 2.5).square().sum()
    if name == "matmul":
        a, b = Tensor(r.normal(size=(3, 4))), Tensor(r.normal(size=(4, 2)))
        return [a, b], lambda: (a @ b).square().sum()
    if name == "exp":
        a = Tensor(r.normal(size=(3, 4)))
        return [a], lambda: a.exp().sum()
    if name == "log":
        a = Tensor(r.uniform(0.5, 3.0, (3, 4)))
        return [a], lambda: a.log().sum()
    if name == "square":
        a = Tensor(r.normal(size=(3, 4)))
        return [a], lambda: a.square().sum()
    if name == "sum":
        a = Tensor(r.normal(size=(3, 4)))
        return [a], lambda: a.sum().square().sum()
    if name == "mean":
        a = Tensor(r.normal(size=(3, 4)))
        return [a], lambda: a.mean().square().sum()
    if name == "sumsq":
        a = Tensor(r.normal(size=(3, 4)))
        return [a], lambda: a.sumsq()
    if name == "leaky_relu":
        a = Tensor(r.normal(size=(3, 4)))
        return [a], lambda: leaky_relu(a, 0.2).square().sum()
    if name == "softmax":
        a = Tensor(r.normal(size=(3, 4)))
        proj = r.normal(size=(3, 4))
        return [a], lambda: (softmax(a) * proj).sum()
    if name == "gather_rows":
        a = Tensor(r.normal(size=(5, 3)))
        proj = r.normal(size=(4, 3))
        return [a], lambda: (gather_rows(a, [0, 2, 2, 4]) * proj).sum()
    if name == "concat":
        a, b = Tensor(r.normal(size=(2, 3))), Tensor(r.normal(size=(4, 3)))
        proj = r.normal(size=(6, 3))
        return [a, b], lambda: (concat([a, b]) * proj).sum()
    if name == "clamp_min":
        a = Tensor(r.normal(size=(3, 4)))
        return [a], lambda: a.clamp_min(-0.5).square().sum()
    raise KeyError(name)


PRIMITIVE_NAMES = (
    "add", "add_row_broadcast", "add_scalar", "sub", "mul", "mul_row_broadcast",
    "scalar_mul", "matmul", "exp", "log", "square", "sum", "mean", "sumsq",
    "leaky_relu", "softmax", "gather_rows", "concat", "clamp_min",
)


@pytest.mark.parametrize("name", PRIMITIVE_NAMES)
def test_primitive_gradients_match_finite_differences(name):
    # 5 random points per primitive, rel err < 1e-4
    case_id = PRIMITIVE_NAMES.index(name)
    for trial in range(5):
        tensors, build = _primitive_case(name, np.random.default_rng([case_id, trial]))
        err = check_gradients(build, tensors)
        assert err < 1e-4, f"{name} trial {trial}: rel err {err}"


class TestGatherConcat:
    def test_gather_values(self):
        x = Tensor(np.arange(12.0).reshape(4, 3))
        out = gather_rows(x, [2, 0])
        assert np.array_equal(out.data, [[6.0, 7.0, 8.0], [0.0, 1.0, 2.0]])

    def test_gather_repeated_indices_accumulate(self):
        x = Tensor(np.ones((3, 2)))
        gather_rows(x, [1, 1, 1]).sum().backward()
        assert np.array_equal(x.grad, [[0.0, 0.0], [3.0, 3.0], [0.0, 0.0]])

    def test_gather_out_of_range(self):
        with pytest.raises(IndexError):
            gather_rows(Tensor(np.ones((2, 2))), [3])

    def test_concat_values_and_split_gradient(self):
        a, b = Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0], [5.0, 6.0]])
        out = concat([a, b])
        assert np.array_equal(out.data, [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        (out * np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])).sum().backward()
        assert np.array_equal(a.grad, [[1.0, 1.0]])
        assert np.array_equal(b.grad, [[2.0, 2.0], [3.0, 3.0]])

    def test_concat_shape_mismatch(self):
        with pytest.raises(DimensionError):
            concat([Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4)))])


class TestBroadcastRules:
    def test_row_vector_add(self):
        out = Tensor(np.zeros((2, 3))) + Tensor([1.0, 2.0, 3.0])
        assert np.array_equal(out.data, [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])

    def test_row_vector_grad_reduces(self):
        b = Tensor([1.0, 2.0, 3.0])
        (Tensor(np.zeros((4, 3))) + b).sum().backward()
        assert np.array_equal(b.grad, [4.0, 4.0, 4.0])

    def test_column_broadcast_rejected(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((3, 4))) + Tensor(np.zeros((3, 1)))

    def test_incompatible_rejected(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((3, 4))) * Tensor(np.zeros((2, 4)))
