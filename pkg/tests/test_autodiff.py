import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivesim import autodiff as ad
from drivesim.autodiff import GraphReuse, ParamVector, ShapeMismatch, Var


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
        it.iternext()
    return g


def check_unary(op, x, npf=None):
    v = Var(x)
    out = ad.vsum(op(v) * np.arange(1.0, x.size + 1).reshape(x.shape))
    ad.backward(out)
    w = np.arange(1.0, x.size + 1).reshape(x.shape)
    num = numeric_grad(lambda z: float((op(Var(z)).data * w).sum()), x)
    assert np.allclose(v.grad, num, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("op", [ad.exp, ad.log, ad.tanh, ad.sigmoid,
                                ad.elu, ad.square])
def test_unary_gradients(op):
    rng = np.random.default_rng(0)
    x = rng.uniform(0.1, 2.0, size=(3, 4)) if op is ad.log \
        else rng.standard_normal((3, 4))
    check_unary(op, x)


def test_elu_derivative_continuous_at_zero():
    eps = 1e-9
    for x0 in (-eps, eps):
        v = Var(np.array([x0]))
        out = ad.vsum(ad.elu(v))
        ad.backward(out)
        assert np.isclose(v.grad[0], 1.0, atol=1e-8)


def test_clip_gradient_masked():
    v = Var(np.array([-2.0, 0.5, 3.0]))
    out = ad.vsum(ad.clip(v, -1.0, 1.0))
    ad.backward(out)
    assert np.array_equal(v.grad, [0.0, 1.0, 0.0])


def test_matmul_gradient():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 4))
    B = rng.standard_normal((4, 2))
    va, vb = Var(A), Var(B)
    out = ad.vsum(ad.square(va @ vb))
    ad.backward(out)
    numA = numeric_grad(lambda Z: float((np.asarray(Z @ B) ** 2).sum()), A)
    numB = numeric_grad(lambda Z: float((np.asarray(A @ Z) ** 2).sum()), B)
    assert np.allclose(va.grad, numA, rtol=1e-5)
    assert np.allclose(vb.grad, numB, rtol=1e-5)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        Var(np.zeros((2, 3))) @ Var(np.zeros((4, 2)))


def test_broadcast_add_unbroadcast():
    x = Var(np.ones((3, 4)))
    b = Var(np.ones(4))
    out = ad.vsum(x + b)
    ad.backward(out)
    assert b.grad.shape == (4,)
    assert np.array_equal(b.grad, [3.0, 3.0, 3.0, 3.0])


def test_div_and_sub_gradient():
    x = Var(np.array([2.0, 4.0]))
    y = Var(np.array([1.0, 2.0]))
    out = ad.vsum(x / y - y)
    ad.backward(out)
    assert np.allclose(x.grad, [1.0, 0.5])  # d(x/y)/dx = 1/y
    assert np.allclose(y.grad, [-2.0 / 1.0 - 1.0, -4.0 / 4.0 - 1.0])


def test_getitem_gradient():
    x = Var(np.arange(6.0).reshape(2, 3))
    out = ad.vsum(x[:, 1:] * 2.0)
    ad.backward(out)
    assert np.array_equal(x.grad, [[0, 2, 2], [0, 2, 2]])


def test_concat_gradient():
    a, b = Var(np.ones((2, 2))), Var(np.full((3, 2), 2.0))
    out = ad.vsum(ad.concat([a, b], axis=0) * 3.0)
    ad.backward(out)
    assert np.all(a.grad == 3.0) and np.all(b.grad == 3.0)


def test_graph_reuse_raises():
    v = Var(np.array([1.0]))
    out = ad.vsum(ad.square(v))
    ad.backward(out)
    with pytest.raises(GraphReuse):
        ad.backward(out)


def test_backward_requires_scalar():
    v = Var(np.ones(3))
    with pytest.raises(ShapeMismatch):
        ad.backward(v + 1.0)


def test_diamond_graph_accumulates():
    # y = x*x + x used twice: dy/dx = 2x + 1
    x = Var(np.array([3.0]))
    out = ad.vsum(x * x + x)
    ad.backward(out)
    assert np.isclose(x.grad[0], 7.0)


@settings(deadline=None, max_examples=30)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=6))
def test_chain_gradient_property(vals):
    x = np.array(vals)
    v = Var(x)
    out = ad.vmean(ad.tanh(ad.square(v) + v))
    ad.backward(out)
    num = numeric_grad(lambda z: float(np.mean(np.tanh(z * z + z))), x)
    assert np.allclose(v.grad, num, rtol=1e-4, atol=1e-6)


def test_param_vector_roundtrip():
    pv = ParamVector()
    pv.add("W", np.arange(6.0).reshape(2, 3))
    pv.add("b", np.zeros(3))
    assert pv.size == 9
    assert np.array_equal(pv.get("W"), np.arange(6.0).reshape(2, 3))
    flat = pv.get_flat()
    flat[0] = 99.0
    pv.set_flat(flat)
    assert pv.get("W")[0, 0] == 99.0
    with pytest.raises(ShapeMismatch):
        pv.set_flat(np.zeros(5))


def test_param_vector_store_grads():
    pv = ParamVector()
    pv.add("W", np.zeros((2, 2)))
    v = Var(pv.get("W"))
    out = ad.vsum(ad.square(v + 1.0))
    ad.backward(out)
    pv.store_grads({"W": v})
    assert np.array_equal(pv.grad_flat, np.full(4, 2.0))
