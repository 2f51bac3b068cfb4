from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpinn.autodiff import finite_difference_gradient
from cpinn.network import (
    Ansatz,
    CheckpointError,
    NetworkLayout,
    NetworkParams,
    ansatz_eval,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from cpinn.problems import planar_defect_problem, spherical_inclusion_problem, textbook_problem


def test_textbook_layout_parameter_count():
    assert NetworkLayout(1, 0, (4, 4)).n_params == 33
    assert init_params(NetworkLayout(1, 0, (4, 4)), seed=5).flat.shape == (33,)


@given(st.integers(1, 3), st.integers(0, 3), st.lists(st.integers(1, 9), min_size=1, max_size=5))
def test_parameter_count_formula(d, t, hidden):
    layout = NetworkLayout(d, t, tuple(hidden))
    widths = [d + t, *hidden, 1]
    assert layout.n_params == sum((a + 1) * b for a, b in zip(widths[:-1], widths[1:]))


def test_init_is_deterministic_with_zero_biases():
    layout = NetworkLayout(3, 3, (8, 8, 8, 8, 8))
    a, b = init_params(layout, 42), init_params(layout, 42)
    assert np.array_equal(a.flat, b.flat)
    assert not np.array_equal(a.flat, init_params(layout, 43).flat)
    for (w, bias), (n_in, n_out) in zip(a.layers(), layout.shapes):
        assert np.all(bias == 0.0)
        assert np.all(np.abs(w) <= np.sqrt(6.0 / (n_in + n_out)))


def test_params_length_checked():
    with pytest.raises(ValueError):
        NetworkParams(NetworkLayout(1, 0, (4, 4)), np.zeros(32))


def test_describe():
    assert NetworkLayout(1, 2, (8, 8, 8)).describe() == "3x[8]"
    assert NetworkLayout(1, 2, (4, 8)).describe() == "[4,8]"


def test_window_vanishes_at_ends_for_any_weights():
    problem = textbook_problem()
    ansatz = Ansatz.for_problem(problem)
    layout = NetworkLayout(1, 0, (4, 4))
    rng = np.random.default_rng(0)
    for _ in range(1000):
        params = NetworkParams(layout, rng.normal(scale=3.0, size=layout.n_params))
        y, _ = ansatz.evaluate(params.layers(), np.array([[0.0], [1.0]]), ())
        assert np.all(y == 0.0)


def test_window_example_at_zero():
    ansatz = Ansatz.for_problem(textbook_problem())
    params = init_params(NetworkLayout(1, 0, (4, 4)), 3)
    value, _ = ansatz_eval(ansatz, params, 0.0)
    assert value == 0.0


def test_natural_constant_network():
    problem = planar_defect_problem()
    layout = NetworkLayout(1, 2, (4, 4))
    flat = np.zeros(layout.n_params)
    flat[-1] = 0.7  # output bias
    value, grad = ansatz_eval(Ansatz.for_problem(problem), NetworkParams(layout, flat), 3.0, (5.0, 0.5))
    assert value == 0.7 and grad.tolist() == [0.0]


def test_identity_harness_gradient():
    # no hidden layer, weight 1 on the scaled input: y = u, with u = 2 (x - lo) / span - 1
    ansatz = Ansatz("natural", (-1.0,), (1.0,))
    params = NetworkParams(NetworkLayout(1, 0, ()), np.array([1.0, 0.0]))
    value, grad = ansatz_eval(ansatz, params, 0.25)
    assert value == 0.25 and grad.tolist() == [1.0]


@pytest.mark.parametrize(
    "problem,x,t",
    [
        (textbook_problem(), [0.3], ()),
        (planar_defect_problem(), [2.5], (3.0, 0.4)),
        (spherical_inclusion_problem(), [0.4, -1.2, 2.0], (2.0, 1.2, 1.7)),
    ],
    ids=["textbook", "planar-defect", "sphere"],
)
def test_ansatz_gradient_matches_finite_differences(problem, x, t):
    layout = NetworkLayout(problem.spatial_dim, problem.tag_dim, (6, 6))
    params = NetworkParams(layout, np.random.default_rng(8).normal(size=layout.n_params))
    ansatz = Ansatz.for_problem(problem)
    x = np.asarray(x)
    _, grad = ansatz.evaluate(params.layers(), x[None, :], t)
    fd = finite_difference_gradient(lambda z: float(ansatz.evaluate(params.layers(), z[None, :], t)[0][0]), x)
    rel = np.max(np.abs(np.asarray(grad)[:, 0] - fd)) / np.max(np.abs(fd))
    assert rel < 1e-6


def test_tag_dimension_mismatch():
    problem = planar_defect_problem()
    params = init_params(NetworkLayout(1, 2, (4,)), 0)
    with pytest.raises(ValueError):
        ansatz_eval(Ansatz.for_problem(problem), params, 0.0, (1.0,))
    with pytest.raises(ValueError):
        ansatz_eval(Ansatz.for_problem(textbook_problem()), params, 0.5)


def test_tags_are_scaled_to_unit_interval():
    ansatz = Ansatz.for_problem(planar_defect_problem())
    x, _ = ansatz.network_inputs(np.array([[-16.0], [16.0]]), np.array([10.0, 0.0]))
    assert x.tolist() == [[-1.0, 1.0, 0.0], [1.0, 1.0, 0.0]]


@pytest.fixture()
def saved(tmp_path):
    problem = spherical_inclusion_problem()
    params = NetworkParams(
        NetworkLayout(3, 3, (8, 8)), np.random.default_rng(2).normal(size=NetworkLayout(3, 3, (8, 8)).n_params)
    )
    path = save_checkpoint(tmp_path / "ck.json", params, Ansatz.for_problem(problem), seed=9, problem="sphere")
    return path, params


def test_checkpoint_round_trip_is_bit_exact(saved):
    path, params = saved
    ck = load_checkpoint(path)
    assert np.array_equal(ck.params.flat, params.flat)
    assert ck.params.layout == params.layout
    assert ck.seed == 9 and ck.problem == "sphere"
    assert ck.ansatz == Ansatz.for_problem(spherical_inclusion_problem())


def test_truncated_checkpoint(saved):
    path, _ = saved
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_tampered_checkpoint(saved):
    path, _ = saved
    doc = json.loads(path.read_text())
    doc["n_params"] += 1
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    doc["n_params"] -= 1
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_layout_mismatch(saved):
    path, _ = saved
    with pytest.raises(CheckpointError):
        load_checkpoint(path, layout=NetworkLayout(3, 3, (8, 8, 8)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_round_trip_any_seed(tmp_path_factory, seed):
    layout = NetworkLayout(1, 2, (3, 5))
    params = init_params(layout, seed)
    params = NetworkParams(layout, params.flat * np.pi)
    path = tmp_path_factory.mktemp("ck") / "c.json"
    save_checkpoint(path, params, Ansatz.for_problem(planar_defect_problem()))
    assert np.array_equal(load_checkpoint(path, layout).params.flat, params.flat)
