from __future__ import annotations

import numpy as np
import pytest

from cpinn import autodiff as ad
from cpinn.network import NetworkLayout, NetworkParams, init_params, unflatten
from cpinn.problems import planar_defect_problem, spherical_inclusion_problem, textbook_problem
from cpinn.qmc import BatchPlan, compose_batches
from cpinn.variational import loss, loss_and_gradient


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def test_linear_unit_value_and_slope():
    layers = [(np.array([[3.0]]), np.array([1.0]))]
    assert ad.eval_with_input_jacobian(layers, [2.0]) == (7.0, pytest.approx(np.array([3.0])))


def test_tanh_at_zero():
    layers = [(np.eye(1), np.zeros(1)), (np.eye(1), np.zeros(1))]
    value, grad = ad.eval_with_input_jacobian(layers, [0.0])
    assert value == 0.0 and grad.tolist() == [1.0]


def test_input_jacobian_matches_finite_differences():
    rng = np.random.default_rng(7)
    layout = NetworkLayout(spatial_dim=3, tag_dim=0, hidden=(8, 8, 8))
    params = NetworkParams(layout, rng.normal(size=layout.n_params))
    x = rng.uniform(-1, 1, size=3)
    value, grad = ad.eval_with_input_jacobian(params, x)
    fd = ad.finite_difference_gradient(lambda z: ad.eval_with_input_jacobian(params, z)[0], x, step=1e-5)
    assert _rel(grad, fd) < 1e-6
    assert np.isfinite(value)


def test_input_jacobian_ignores_tags():
    rng = np.random.default_rng(1)
    layout = NetworkLayout(spatial_dim=1, tag_dim=2, hidden=(5,))
    params = NetworkParams(layout, rng.normal(size=layout.n_params))
    _, grad = ad.eval_with_input_jacobian(params, [0.3, 0.1, 0.9])
    assert grad.shape == (1,)
    with pytest.raises(ValueError):
        ad.eval_with_input_jacobian(params, [0.3, 0.1])


def test_quadratic_gradient():
    tape = ad.Tape()
    w = tape.watch([3.0])
    assert ad.grad_weights(ad.square(w).sum()).tolist() == [6.0]


def test_mixed_second_order_linear_unit():
    # y = w x, loss = (dy/dx)^2 = w^2, d/dw = 2w = 3 at w = 1.5
    tape = ad.Tape()
    w = tape.watch([1.5])
    x = ad.DualVector.seed(np.array([[2.0]]))
    y = x * w
    assert ad.grad_weights(ad.square(y.tangents).sum()).tolist() == [3.0]


def test_empty_tape_raises():
    tape = ad.Tape()
    with pytest.raises(ad.EmptyTapeError):
        tape.gradient(None, [])


def test_finite_difference_examples():
    g = ad.finite_difference_gradient(lambda v: float(np.sum(v * v)), [1.0, 2.0], step=1e-6)
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-6)
    assert np.all(ad.finite_difference_gradient(lambda v: 4.0, [1.0, -3.0, 2.0]) == 0.0)
    with pytest.raises(ValueError):
        ad.finite_difference_gradient(lambda v: 0.0, [1.0], step=0.0)


PRIMITIVES = {
    "tanh": (ad.tanh, lambda x: 1.0 - np.tanh(x) ** 2, (-3, 3)),
    "cosh": (ad.cosh, np.sinh, (-3, 3)),
    "square": (ad.square, lambda x: 2 * x, (-3, 3)),
    "sqrt": (ad.sqrt, lambda x: 0.5 / np.sqrt(x), (0.1, 5)),
    "reciprocal": (ad.reciprocal, lambda x: -1.0 / x**2, (0.2, 5)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_forward_and_reverse(name):
    fn, deriv, (lo, hi) = PRIMITIVES[name]
    x = np.random.default_rng(3).uniform(lo, hi, 1000)
    dual = fn(ad.DualVector(x, np.ones((1, x.size))))
    assert _rel(np.asarray(dual.tangents)[0], deriv(x)) < 1e-12
    tape = ad.Tape()
    v = tape.variable(x)
    (g,) = tape.gradient(fn(v).sum(), [v])
    assert _rel(g, deriv(x)) < 1e-12


def test_add_and_mul_partials():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=1000), rng.normal(size=1000)
    tape = ad.Tape()
    va, vb = tape.variable(a), tape.variable(b)
    ga, gb = tape.gradient((va * vb + va).sum(), [va, vb])
    assert _rel(ga, b + 1.0) < 1e-12
    assert _rel(gb, a) < 1e-12
    da = ad.DualVector(a, np.ones((1, 1000)))
    prod = da * ad.DualVector(b, np.zeros((1, 1000))) + da
    assert _rel(prod.tangents[0], b + 1.0) < 1e-12


def test_division_and_subtraction():
    tape = ad.Tape()
    a = tape.variable(np.array([2.0, 4.0]))
    b = tape.variable(np.array([1.0, 8.0]))
    ga, gb = tape.gradient((a / b - b).sum(), [a, b])
    np.testing.assert_allclose(ga, [1.0, 1 / 8])
    np.testing.assert_allclose(gb, [-2.0 - 1.0, -4 / 64 - 1.0])


def test_broadcast_gradients_reduce():
    tape = ad.Tape()
    w = tape.variable(np.ones((3, 2)))
    b = tape.variable(np.zeros(2))
    x = np.arange(12.0).reshape(4, 3)
    gw, gb = tape.gradient((x @ w + b).sum(), [w, b])
    np.testing.assert_allclose(gw, np.tile(x.sum(axis=0)[:, None], (1, 2)))
    np.testing.assert_allclose(gb, [4.0, 4.0])


def test_linearity():
    rng = np.random.default_rng(5)
    x = rng.normal(size=50)

    def grads(a, b):
        tape = ad.Tape()
        w = tape.watch(rng_w)
        l1 = ad.tanh(w * x).sum()
        l2 = ad.square(w * x - 1.0).sum()
        return ad.grad_weights(l1 * a + l2 * b), tape

    rng_w = rng.normal(size=50)
    g1, _ = grads(1.0, 0.0)
    g2, _ = grads(0.0, 1.0)
    g, _ = grads(2.5, -0.7)
    np.testing.assert_allclose(g, 2.5 * g1 - 0.7 * g2, rtol=1e-12, atol=1e-12)


def test_mixed_derivative_matches_finite_differences():
    rng = np.random.default_rng(6)
    layout = NetworkLayout(1, 1, (6, 6))
    flat0 = rng.normal(size=layout.n_params)
    x = np.column_stack([rng.uniform(-1, 1, 20), rng.uniform(0, 1, 20)])
    seed = np.zeros((1, 1, 2))
    seed[0, 0, 0] = 1.0

    def forward(layers):
        from cpinn.network import mlp_forward

        return mlp_forward(layers, x, seed)[1]

    tape = ad.Tape()
    w = tape.watch(flat0)
    dydx = forward(unflatten(layout, w))
    g = ad.grad_weights(dydx.sum())
    fd = ad.finite_difference_gradient(lambda f: float(np.sum(forward(NetworkParams(layout, f).layers()))), flat0)
    assert _rel(g, fd) < 1e-5


@pytest.mark.parametrize(
    "problem,hidden,gamma",
    [
        (textbook_problem(), (4, 4), 64.0),
        (planar_defect_problem(), (8, 8, 8), 1.0),
        (spherical_inclusion_problem(), (8, 8), 1.0),
    ],
    ids=["textbook", "planar-defect", "sphere"],
)
def test_full_loss_gradient_matches_finite_differences(problem, hidden, gamma):
    layout = NetworkLayout(problem.spatial_dim, problem.tag_dim, hidden)
    params = init_params(layout, seed=11)
    batch = compose_batches(BatchPlan(64, 3, 1), problem)[2]
    _, grad, _ = loss_and_gradient(problem, params, batch, gamma)
    fd = ad.finite_difference_gradient(lambda f: loss(problem, NetworkParams(layout, f), batch, gamma), params.flat)
    assert _rel(grad, fd) < 1e-5
