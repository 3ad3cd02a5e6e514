import numpy as np
import pytest

from agfn.autograd import (Affine, Identity, MeanPool, Scale, Tanh, grad_check, relative_error)
from agfn.errors import ShapeError, StateError
from agfn.gradcheck import LAYER_TYPES, TOLERANCE, _cases, run_grad_checks
from agfn.numerics import Rng


def test_affine_identity_passthrough():
    layer = Affine(3, 3)
    layer.params["W"][...] = np.eye(3)
    x = Rng(1).normal((4, 3))
    np.testing.assert_array_equal(layer.forward(x), x)


def test_affine_matches_direct_formula():
    rng = Rng(2)
    layer = Affine(5, 3, rng)
    layer.params["b"][...] = rng.normal(3)
    x = rng.normal((4, 5))
    W, b = layer.params["W"], layer.params["b"]
    oracle = np.array([[sum(x[i, k] * W[k, j] for k in range(5)) + b[j] for j in range(3)]
                       for i in range(4)])
    np.testing.assert_allclose(layer.forward(x), oracle, atol=1e-12, rtol=0)


def test_tanh_zero():
    assert Tanh().forward(np.zeros((1, 3))).tolist() == [[0.0, 0.0, 0.0]]


def test_identity_backward():
    layer = Identity()
    layer.forward(np.ones((2, 2)))
    g = Rng(3).normal((2, 2))
    np.testing.assert_array_equal(layer.backward(g), g)


def test_scale_backward():
    layer = Scale(3.0)
    layer.forward(np.ones((2, 2)))
    g = Rng(3).normal((2, 2))
    np.testing.assert_array_equal(layer.backward(g), 3.0 * g)


def test_backward_before_forward():
    with pytest.raises(StateError):
        Tanh().backward(np.zeros((1, 1)))


def test_backward_twice_rejected():
    layer = Tanh()
    layer.forward(np.zeros((1, 2)))
    layer.backward(np.ones((1, 2)))
    with pytest.raises(StateError):
        layer.backward(np.ones((1, 2)))


def test_grad_out_shape_checked():
    layer = Tanh()
    layer.forward(np.zeros((1, 2)))
    with pytest.raises(ShapeError):
        layer.backward(np.ones((2, 2)))


def test_param_grad_shapes():
    layer = Affine(4, 2, Rng(1))
    layer.forward(np.ones((3, 4)))
    layer.backward(np.ones((3, 2)))
    for k, p in layer.params.items():
        assert layer.grads[k].shape == p.shape


def test_meanpool_rejects_flat_input():
    with pytest.raises(ShapeError):
        MeanPool().forward(np.ones((3, 4)))


def test_relative_error_denominator():
    assert relative_error(0.0, 1e-7) == pytest.approx(1e-7)
    assert relative_error(100.0, 101.0) == pytest.approx(1.0 / 101.0)


@pytest.mark.parametrize("make,width", [(lambda r: Affine(4, 3, r), 4), (lambda r: Tanh(), 3)])
def test_simple_layers_grad_check(make, width):
    rng = Rng(4)
    for _ in range(20):
        rep = grad_check(make(rng), rng.normal((3, width)), rng=rng)
        assert rep.max_error <= 1e-6


@pytest.mark.parametrize("name", LAYER_TYPES)
def test_every_layer_type_grad_check(name):
    (res,) = run_grad_checks(instances=10, seed=17, names={name})
    assert res.max_error <= TOLERANCE


@pytest.mark.parametrize("name", ["Affine", "FusionLayer", "AGFNModel"])
def test_backward_is_linear(name):
    rng = Rng(21)
    layer, inputs = _cases()[name](rng)
    out = layer.forward(inputs)
    g1, g2 = rng.normal(np.shape(out)), rng.normal(np.shape(out))
    a, b = 0.7, -1.3

    def run(g):
        layer.zero_grad()
        layer.forward(inputs)
        gin = layer.backward(g)
        gin = gin if isinstance(gin, tuple) else (gin,)
        return [x.copy() for x in gin], {k: v.copy() for k, v in layer.grads.items()}

    in1, p1 = run(g1)
    in2, p2 = run(g2)
    inc, pc = run(a * g1 + b * g2)
    for x1, x2, xc in zip(in1, in2, inc):
        np.testing.assert_allclose(xc, a * x1 + b * x2, atol=1e-10)
    for k in pc:
        np.testing.assert_allclose(pc[k], a * p1[k] + b * p2[k], atol=1e-10)


def test_corruption_is_detected():
    (res,) = run_grad_checks(instances=3, seed=1, corrupt_layer="PredictionHead",
                             names={"PredictionHead"})
    assert res.max_error > TOLERANCE
