import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stvgcn import autograd as ag
from stvgcn.autograd import SGD, ConfigError, ShapeError, Tensor, backward, cosine_lr, sgd_step

from conftest import grad_check

UNARY = {
    "relu": (ag.relu, None),
    "exp": (ag.exp, None),
    "log": (ag.log, lambda a: np.abs(a) + 0.5),
    "abs": (ag.abs_, lambda a: np.where(np.abs(a) < 0.1, a + 0.5, a)),
    "softmax": (ag.softmax, None),
    "log_softmax": (ag.log_softmax, None),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_grads(name):
    fn, tr = UNARY[name]
    rng = np.random.default_rng(0)
    w = rng.normal(size=(3, 4))
    err = grad_check(lambda x: ag.sum_(ag.mul_const(fn(x), w)), [(3, 4)], rng, transform=tr)
    assert err < 1e-6


@pytest.mark.parametrize("op", [ag.add, ag.sub, ag.mul, ag.div])
def test_binary_grads(op):
    rng = np.random.default_rng(1)
    tr = lambda a: np.abs(a) + 0.5  # noqa: E731 - keep div away from 0
    err = grad_check(lambda a, b: ag.sum_(ag.mul(op(a, b), op(a, b))), [(2, 3), (2, 3)], rng, transform=tr)
    assert err < 1e-6


def test_structural_grads():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(2, 5, 3))

    def f(a, b, c):
        h = ag.concat([ag.matmul(a, b), c], axis=-1)  # (2, 5, 3)
        h = ag.transpose(ag.reshape(h, (2, 15)), (1, 0))
        h = ag.reshape(ag.transpose(h, (1, 0)), (2, 5, 3))
        h = ag.add_bias(h, ag.slice_(ag.reshape(c, (10,)), np.array([0, 0, 3])))
        return ag.add(ag.sum_(ag.mul_const(h, w)), ag.mean(ag.take_along_last(ag.reshape(h, (10, 3)), np.arange(10) % 3)))

    assert grad_check(f, [(2, 5, 4), (4, 2), (2, 5, 1)], rng) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.sampled_from([1, 3, 5]), st.integers(1, 3), st.integers(0, 10_000))
def test_masked_conv_grad(T_extra, K, stride, seed):
    rng = np.random.default_rng(seed)
    N, T, V, ci, co = 2, 2 + T_extra, 3, 2, 3
    valid = rng.random((N, T, V)) < 0.7
    w = rng.normal(size=(N, (T + stride - 1) // stride, V, co))

    def f(x, k):
        out, _ = ag.masked_temporal_conv(x, k, stride, valid)
        return ag.sum_(ag.mul_const(out, w))

    assert grad_check(f, [(N, T, V, ci), (K, ci, co)], rng) < 1e-6


def conv_oracle(x, k, stride, valid):
    """Direct loops: out[n, t, v] = sum_j k[j] . x[n, t*stride + j - pad, v] over valid inputs."""
    N, T, V, _ = x.shape
    K = k.shape[0]
    pad = (K - 1) // 2
    To = (T + stride - 1) // stride
    out = np.zeros((N, To, V, k.shape[2]))
    for n in range(N):
        for to in range(To):
            t0 = to * stride
            for v in range(V):
                if not valid[n, t0, v]:
                    continue
                for j in range(K):
                    s = t0 + j - pad
                    if 0 <= s < T and valid[n, s, v]:
                        out[n, to, v] += x[n, s, v] @ k[j]
    return out


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_masked_conv_matches_loops(stride):
    rng = np.random.default_rng(stride)
    x = rng.normal(size=(2, 7, 4, 3))
    k = rng.normal(size=(5, 3, 2))
    valid = rng.random((2, 7, 4)) < 0.6
    out, ov = ag.masked_temporal_conv(x, k, stride, valid)
    np.testing.assert_allclose(out.data, conv_oracle(x, k, stride, valid), atol=1e-12)
    np.testing.assert_array_equal(ov, valid[:, ::stride])


def test_masked_conv_invalid_input_gets_no_gradient():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(1, 5, 2, 2)), requires_grad=True)
    valid = np.ones((1, 5), bool)
    valid[0, 2] = False
    out, _ = ag.masked_temporal_conv(x, rng.normal(size=(3, 2, 2)), 1, valid)
    backward(ag.sum_(out))
    assert np.all(x.grad[0, 2] == 0)


def test_conv_errors():
    x = np.zeros((1, 4, 2, 3))
    with pytest.raises(ConfigError):
        ag.masked_temporal_conv(x, np.zeros((2, 3, 1)))
    with pytest.raises(ShapeError):
        ag.masked_temporal_conv(x, np.zeros((3, 2, 1)))
    with pytest.raises(ConfigError):
        ag.masked_temporal_conv(x, np.zeros((3, 3, 1)), stride=0)


def test_shape_errors():
    with pytest.raises(ShapeError):
        ag.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
    with pytest.raises(ShapeError):
        backward(Tensor(np.zeros(3), requires_grad=True))


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = ag.mul(x, x)
    backward(ag.sum_(ag.add(y, y)))
    np.testing.assert_allclose(x.grad, [8.0])


def test_relu_gradient_zero_at_zero():
    x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    backward(ag.sum_(ag.relu(x)))
    np.testing.assert_array_equal(x.grad, [0, 0, 1])


def test_cosine_lr_values():
    assert cosine_lr(0, 10, 0.1) == pytest.approx(0.1)
    assert cosine_lr(5, 10, 0.1) == pytest.approx(0.05)
    assert cosine_lr(10, 10, 0.1) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ConfigError):
        cosine_lr(0, 10, -1)


def test_sgd_step_hand_computed():
    p = Tensor(np.array([1.0, -2.0]))
    v = np.array([0.5, 0.0])
    sgd_step(p, np.array([0.1, 0.2]), lr=0.1, momentum=0.9, weight_decay=0.01, velocity=v)
    d = np.array([0.1 + 0.01, 0.2 - 0.02])
    v_exp = 0.9 * np.array([0.5, 0.0]) + d
    np.testing.assert_allclose(v, v_exp)
    np.testing.assert_allclose(p.data, [1.0, -2.0] - 0.1 * v_exp)


def test_sgd_zero_lr_is_identity():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    p.grad = np.array([5.0, 5.0])
    SGD([p], lr=0.0).step()
    np.testing.assert_array_equal(p.data, [1.0, 2.0])
    with pytest.raises(ConfigError):
        SGD([p], lr=-0.1)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"a": rng.normal(size=(2, 3)), "b.c": rng.normal(size=(4,)), "s": np.array(3.0)}
    path = tmp_path / "m.ckpt"
    ag.save_checkpoint(path, params)
    got = ag.load_checkpoint(path)
    assert list(got) == list(params)
    for k in params:
        np.testing.assert_array_equal(got[k], params[k])
    assert path.read_bytes()[:7] == b"VGCKPT1"
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"nope")
    with pytest.raises(ValueError):
        ag.load_checkpoint(bad)
