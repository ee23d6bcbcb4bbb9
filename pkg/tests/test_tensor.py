import numpy as np
import pytest

from gase import tensor as T
from gase.tensor import Tensor

import oracles


def f64(arr, grad=False):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.ones((1, 3, 3, 1), np.float32))
        k = Tensor(np.ones((1, 1, 1, 1), np.float32))
        out = T.conv2d(x, k)
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_kernel(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.random((2, 4, 4, 3), np.float32))
        k = Tensor(np.zeros((3, 3, 3, 2), np.float32))
        assert not T.conv2d(x, k).data.any()

    def test_dilated_matches_direct_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((1, 5, 5, 2))
        k = rng.standard_normal((3, 3, 2, 3))
        out = T.conv2d(f64(x), f64(k), dilation=2, padding="same")
        expected = oracles.conv2d_direct(x, k, dilation=2, padding="same")
        np.testing.assert_allclose(out.data, expected, atol=1e-6)

    @pytest.mark.parametrize("h", [4, 5, 8])
    @pytest.mark.parametrize("w", [4, 5, 8])
    @pytest.mark.parametrize("k", [1, 3, 5])
    @pytest.mark.parametrize("dilation", [1, 2, 3])
    def test_shape_grid_matches_oracle(self, h, w, k, dilation):
        rng = np.random.default_rng(h * 100 + w * 10 + k + dilation)
        x = rng.standard_normal((2, h, w, 2))
        kern = rng.standard_normal((k, k, 2, 2))
        out = T.conv2d(f64(x), f64(kern), dilation=dilation, padding="same")
        expected = oracles.conv2d_direct(x, kern, dilation=dilation, padding="same")
        assert out.shape == expected.shape
        np.testing.assert_allclose(out.data, expected, atol=1e-6)

    def test_valid_padding_and_stride(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 8, 8, 2))
        kern = rng.standard_normal((3, 3, 2, 2))
        out = T.conv2d(f64(x), f64(kern), stride=2, padding="valid")
        expected = oracles.conv2d_direct(x, kern, stride=2, padding="valid")
        np.testing.assert_allclose(out.data, expected, atol=1e-6)

    def test_channel_mismatch_names_axis(self):
        x = Tensor(np.zeros((1, 4, 4, 3), np.float32))
        k = Tensor(np.zeros((3, 3, 2, 1), np.float32))
        with pytest.raises(T.ShapeError, match="axis 3 is 3, kernel axis 2 is 2"):
            T.conv2d(x, k)

    def test_same_padding_preserves_extents(self):
        x = Tensor(np.zeros((1, 7, 5, 2), np.float32))
        k = Tensor(np.zeros((5, 5, 2, 4), np.float32))
        assert T.conv2d(x, k, padding="same").shape == (1, 7, 5, 4)


class TestDense:
    def test_identity(self):
        x = Tensor(np.arange(4, dtype=np.float32).reshape(1, 4))
        out = T.dense(x, Tensor(np.eye(4, dtype=np.float32)), Tensor(np.zeros((1, 4), np.float32)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_weight_returns_bias(self):
        x = Tensor(np.ones((1, 3), np.float32))
        b = np.array([[1.0, -2.0, 0.5]], np.float32)
        out = T.dense(x, Tensor(np.zeros((3, 3), np.float32)), Tensor(b))
        np.testing.assert_array_equal(out.data, b)

    def test_matches_manual_matmul(self):
        rng = np.random.default_rng(11)
        x, w, b = rng.random((1, 4)), rng.random((4, 3)), rng.random((1, 3))
        out = T.dense(f64(x), f64(w), f64(b))
        manual = np.array(
            [[sum(x[0, i] * w[i, j] for i in range(4)) + b[0, j] for j in range(3)]]
        )
        np.testing.assert_allclose(out.data, manual, atol=1e-6)

    def test_inner_axis_mismatch(self):
        with pytest.raises(T.ShapeError, match="input axis 1 is 3"):
            T.dense(
                Tensor(np.zeros((1, 3), np.float32)),
                Tensor(np.zeros((4, 2), np.float32)),
                Tensor(np.zeros((1, 2), np.float32)),
            )


class TestBackwardContract:
    def test_sum_gradient_is_ones(self):
        w = f64(np.random.default_rng(0).random((3, 4)), grad=True)
        w.sum().backward()
        np.testing.assert_array_equal(w.grad, np.ones((3, 4)))

    def test_mse_self_gradient_is_zero(self):
        a = f64(np.random.default_rng(1).random((2, 3)), grad=True)
        T.mse(a, Tensor(a.data.copy())).backward()
        np.testing.assert_array_equal(a.grad, np.zeros((2, 3)))

    def test_accumulation_without_reset(self):
        w = f64([[1.0, 2.0]], grad=True)
        w.sum().backward()
        w.sum().backward()
        np.testing.assert_array_equal(w.grad, 2 * np.ones((1, 2)))

    def test_non_scalar_loss_rejected(self):
        w = f64([[1.0, 2.0]], grad=True)
        with pytest.raises(T.ShapeError, match="scalar"):
            (w * 2.0).backward()

    def test_nan_loss_names_producing_op(self):
        a = f64([[0.0]], grad=True)
        loss = T.log(a).sum()
        with pytest.raises(T.NonFiniteError, match="sum"):
            loss.backward()


def _gradcheck_cases(seed):
    rng = np.random.default_rng(seed)
    r = lambda *s: oracles.rand_tensor(rng, s)
    x4 = r(2, 6, 6, 3)
    cases = {
        "add": lambda a=r(2, 3), b=r(2, 3): (a + b).sum(),
        "sub_broadcast": lambda a=r(2, 3), b=r(1, 3): ((a - b) * 2.0).sum(),
        "mul": lambda a=r(2, 3), b=r(2, 3): (a * b).mean(),
        "div": lambda a=r(2, 3), b=Tensor(rng.random((2, 3)) + 1.5, requires_grad=True): (
            a / b
        ).sum(),
        "pow": lambda a=Tensor(rng.random((2, 3)) + 0.5, requires_grad=True): (a ** 3.0).sum(),
        "sqrt": lambda a=Tensor(rng.random((2, 3)) + 0.5, requires_grad=True): T.sqrt(a).sum(),
        "exp": lambda a=oracles.rand_tensor(rng, (2, 3), scale=0.5): T.exp(a).sum(),
        "log": lambda a=Tensor(rng.random((2, 3)) + 0.5, requires_grad=True): T.log(a).sum(),
        "matmul": lambda a=r(2, 3), b=r(3, 4): (a @ b).sum(),
        "dense": lambda a=r(1, 4), w=r(4, 3), b=r(1, 3): T.dense(a, w, b).sum(),
        "reshape": lambda a=r(2, 6): a.reshape(3, 4).mean(),
        "sum_axis": lambda a=r(2, 3, 4): a.sum(axis=(0, 2)).sum(),
        "mean_axis": lambda a=r(2, 3, 4): a.mean(axis=1, keepdims=True).sum(),
        "concat_channels": lambda a=r(1, 2, 2, 2), b=r(1, 2, 2, 3): (
            T.concat_channels(a, b) ** 2.0
        ).sum(),
        "leaky_relu": lambda a=r(2, 8): T.leaky_relu(a, 0.2).sum(),
        "sigmoid": lambda a=r(2, 8): T.sigmoid(a).sum(),
        "softmax_channels": lambda a=r(1, 2, 2, 4), m=Tensor(rng.random((1, 2, 2, 4))): (
            T.softmax_channels(a) * m
        ).sum(),
        "mse": lambda a=r(2, 4), b=r(2, 4): T.mse(a, b),
        "bce": lambda p=Tensor(rng.uniform(0.05, 0.95, (2, 4)), requires_grad=True), t=rng.uniform(
            0, 1, (2, 4)
        ): T.bce(p, t),
        "downsample2x": lambda a=r(1, 4, 4, 2): (T.downsample2x(a) ** 2.0).sum(),
        "upsample2x": lambda a=r(1, 3, 3, 2), m=Tensor(rng.random((1, 6, 6, 2))): (
            T.upsample2x(a) * m
        ).sum(),
        "clip": lambda a=Tensor(rng.uniform(-2, 2, (3, 3)), requires_grad=True): T.clip(
            a, -0.5, 0.5
        ).sum(),
        "conv2d": lambda x=x4, k=r(3, 3, 3, 2): (T.conv2d(x, k) ** 2.0).sum(),
        "conv2d_dilated": lambda x=r(1, 6, 6, 2), k=r(3, 3, 2, 2): T.conv2d(
            x, k, dilation=2
        ).sum(),
        "conv2d_strided": lambda x=r(1, 8, 8, 2), k=r(3, 3, 2, 2): T.conv2d(
            x, k, stride=2, padding="valid"
        ).sum(),
        "conv2d_1x1": lambda x=r(2, 4, 4, 3), k=r(1, 1, 3, 2): (
            T.conv2d(x, k) ** 2.0
        ).sum(),
    }
    return cases


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    for name, build in _gradcheck_cases(seed).items():
        params = [
            t for t in build.__defaults__ if isinstance(t, Tensor) and t.requires_grad
        ]
        oracles.check_gradients(build, params)


def test_dropout_gradient_with_frozen_mask():
    rng = np.random.default_rng(5)
    a = oracles.rand_tensor(rng, (2, 8, 8, 2))
    build = lambda: T.dropout(a, 0.3, np.random.default_rng(42), train=True).sum()
    oracles.check_gradients(build, [a])


class TestElementwiseSuite:
    def test_softmax_uniform_on_zeros(self):
        out = T.softmax_channels(Tensor(np.zeros((1, 1, 1, 4), np.float32)))
        np.testing.assert_allclose(out.data, 0.25)

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(2)
        out = T.softmax_channels(Tensor(rng.standard_normal((2, 5, 5, 4)).astype(np.float32)))
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)

    def test_bce_at_half_is_ln2(self):
        for target in [0.0, 0.3, 1.0]:
            out = T.bce(Tensor(np.full((2, 2), 0.5, np.float64)), target)
            assert abs(out.item() - np.log(2)) < 1e-9

    def test_bce_rejects_bad_target(self):
        with pytest.raises(ValueError, match="target"):
            T.bce(Tensor(np.full((2, 2), 0.5, np.float32)), 1.5)

    def test_up_down_identity_on_constant(self):
        x = Tensor(np.full((1, 4, 4, 1), 0.7, np.float32))
        out = T.downsample2x(T.upsample2x(x))
        np.testing.assert_allclose(out.data, x.data, atol=1e-6)

    def test_dropout_inference_is_identity(self):
        x = Tensor(np.random.default_rng(0).random((2, 3)).astype(np.float32))
        assert T.dropout(x, 0.5, np.random.default_rng(1), train=False) is x

    def test_dropout_inverted_scaling_preserves_mean(self):
        rng = np.random.default_rng(0)
        x = Tensor(np.ones((100, 100), np.float32))
        out = T.dropout(x, 0.25, rng, train=True)
        assert abs(out.data.mean() - 1.0) < 0.02

    def test_concat_channels(self):
        a = Tensor(np.ones((1, 2, 2, 2), np.float32))
        b = Tensor(np.zeros((1, 2, 2, 1), np.float32))
        out = T.concat_channels(a, b)
        assert out.shape == (1, 2, 2, 3)
        np.testing.assert_array_equal(out.data[..., :2], 1.0)
        np.testing.assert_array_equal(out.data[..., 2:], 0.0)


class TestDeterminism:
    def test_forward_backward_bit_identical(self):
        def run():
            rng = np.random.default_rng(123)
            x = Tensor(rng.standard_normal((2, 8, 8, 3)).astype(np.float32), requires_grad=True)
            k = Tensor(rng.standard_normal((3, 3, 3, 4)).astype(np.float32), requires_grad=True)
            h = T.leaky_relu(T.conv2d(x, k), 0.2)
            h = T.dropout(h, 0.1, np.random.default_rng(7), train=True)
            loss = T.mse(T.sigmoid(h), Tensor(np.zeros_like(h.data)))
            loss.backward()
            return loss.data.copy(), x.grad.copy(), k.grad.copy()

        first, second = run(), run()
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_graph_is_acyclic_topo_covers_all(self):
        a = Tensor(np.ones((2, 2), np.float32), requires_grad=True)
        b = a * 2.0
        c = b + a
        order = T.topo_order(c.sum())
        ids = [id(t) for t in order]
        assert len(ids) == len(set(ids))
        assert ids.index(id(a)) < ids.index(id(c))


def test_no_grad_suppresses_tape():
    a = Tensor(np.ones((2, 2), np.float32), requires_grad=True)
    with T.no_grad():
        out = (a * 3.0).sum()
    assert not out.requires_grad and out._backward is None


def test_default_dtype_switch():
    with T.default_dtype(np.float64):
        t = Tensor([[1.0, 2.0]])
        assert t.dtype == np.float64
    assert Tensor([[1.0]]).dtype == np.float32
