import math

import numpy as np
import pytest

from src import autodiff as ad
from src.autodiff import Tape
from src.errors import CorruptCheckpoint, ShapeError
from src.gates import GateMode
from src.nets import (IcnnModel, MlpModel, MonotoneModel, icnn_forward, monotone_forward, network_from_dict,
                      project_constraints)
from tests.helpers import central_difference, close_gates, open_gates


def test_icnn_is_midpoint_convex():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        model = IcnnModel.initialize([3, 8, 8, 1], rng)
        x = rng.uniform(-3.0, 3.0, (1000, 3))
        y = rng.uniform(-3.0, 3.0, (1000, 3))
        fx, fy = model.predict(x)[:, 0], model.predict(y)[:, 0]
        fm = model.predict(0.5 * (x + y))[:, 0]
        assert np.all(fm <= 0.5 * (fx + fy) + 1e-9)


def test_icnn_hidden_weights_are_constrained(rng):
    model = IcnnModel.initialize([3, 5, 4, 1], rng)
    assert all(not gp.constrained for row in model.layers[0].weights for gp in row)
    for layer in model.layers[1:]:
        assert all(gp.constrained and gp.theta_bar >= 0.0 for row in layer.weights for gp in row)
        assert layer.passthrough is not None
        assert all(not gp.constrained for row in layer.passthrough for gp in row)


def test_monotone_is_positive_and_nondecreasing():
    h = 1e-3
    for seed in range(10):
        rng = np.random.default_rng(seed)
        model = MonotoneModel.initialize([2, 6, 1], rng)
        x = rng.uniform(-5.0, 5.0, (1000, 2))
        out = model.predict(x)[:, 0]
        assert np.all(out > 0.0)
        for k in range(2):
            step = np.zeros(2)
            step[k] = h
            assert np.all((model.predict(x + step)[:, 0] - out) / h >= -1e-10)


def test_monotone_output_is_positive_with_zero_parameters(rng):
    model = open_gates(MonotoneModel.initialize([1, 3, 1], rng))
    for gp in model.parameters():
        gp.theta_bar = 0.0
    out = model.predict([[0.5], [-4.0], [9.0]])[:, 0]
    assert np.all(out > 0.0)
    np.testing.assert_allclose(out, math.log(2.0))
    assert monotone_forward(model, [0.5], GateMode.TEST)[0].value == pytest.approx(math.log(2.0))


def test_projection_restores_constraints(rng):
    model = MonotoneModel.initialize([1, 3, 1], rng)
    for gp in model.parameters():
        gp.theta_bar = -1.0
    project_constraints(model)
    assert all(gp.theta_bar == 0.0 for gp in model.parameters())
    np.testing.assert_allclose(model.predict([[0.3]]), [[math.log(2.0)]])


@pytest.mark.parametrize("factory,widths", [(IcnnModel, [3, 6, 5, 1]), (MlpModel, [3, 6, 1]),
                                            (MonotoneModel, [1, 4, 1])])
def test_tape_forward_matches_numpy(factory, widths, rng):
    model = factory.initialize(widths, rng)
    x = rng.uniform(0.5, 2.0, widths[0])
    tape_out = model.bind(Tape(), GateMode.TEST).forward(list(x))[0].value
    assert tape_out == pytest.approx(model.predict(x[None])[0, 0], rel=1e-12)


def test_forward_helpers(icnn, monotone):
    assert icnn_forward(icnn, [3.0, 3.0, 1.0]).value == pytest.approx(icnn.predict([[3.0, 3.0, 1.0]])[0, 0])
    assert monotone_forward(monotone, [0.2])[0].value == pytest.approx(monotone.predict([[0.2]])[0, 0])


def test_input_gradient_matches_finite_differences(icnn, rng):
    x = rng.uniform(2.5, 3.5, 3)
    _, grad = icnn.predict_with_input_grad(x[None])
    fd = central_difference(lambda v: icnn.predict(v[None])[0, 0], x)
    np.testing.assert_allclose(grad[0], fd, rtol=1e-7, atol=1e-9)


def test_tape_input_gradient_matches_numpy(icnn):
    tape = Tape()
    x = [tape.variable(v) for v in (3.2, 3.1, 0.95)]
    out = icnn.bind(tape).forward(x)[0]
    grad = ad.gradient(out, x)
    _, expected = icnn.predict_with_input_grad([[3.2, 3.1, 0.95]])
    np.testing.assert_allclose(grad, expected[0], rtol=1e-10)


def test_pruned_network_predicts_zero(icnn):
    close_gates(icnn)
    np.testing.assert_array_equal(icnn.predict([[3.0, 3.0, 1.0], [4.0, 5.0, 1.2]]), np.zeros((2, 1)))
    assert icnn.predict([[3.0, 3.0, 1.0]], GateMode.UNGATED)[0, 0] != 0.0


def test_pruned_parameters_are_not_recorded(icnn):
    close_gates(icnn)
    bound = icnn.bind(Tape(), GateMode.TEST)
    assert all(v is None for w, p, b in bound.layers for row in w for v in row)


def test_train_mode_needs_a_generator(icnn):
    with pytest.raises(ValueError):
        icnn.bind(Tape(), GateMode.TRAIN)


def test_train_mode_is_reproducible(icnn):
    a = icnn.bind(Tape(), GateMode.TRAIN, np.random.default_rng(5)).forward([3.0, 3.0, 1.0])[0].value
    b = icnn.bind(Tape(), GateMode.TRAIN, np.random.default_rng(5)).forward([3.0, 3.0, 1.0])[0].value
    assert a == b


def test_wrong_input_width(icnn):
    with pytest.raises(ShapeError):
        icnn.predict([[1.0, 2.0]])
    with pytest.raises(ShapeError):
        icnn.bind(Tape()).forward([1.0, 2.0])


def test_invalid_widths():
    with pytest.raises(ShapeError):
        IcnnModel.initialize([3], np.random.default_rng(0))


def test_checkpoint_round_trip(icnn):
    restored = network_from_dict(icnn.to_dict())
    assert type(restored) is IcnnModel
    x = [[3.1, 3.4, 1.05]]
    assert restored.predict(x)[0, 0] == icnn.predict(x)[0, 0]


def test_corrupt_network_payload(icnn):
    payload = icnn.to_dict()
    payload["kind"] = "transformer"
    with pytest.raises(CorruptCheckpoint):
        network_from_dict(payload)
    with pytest.raises(CorruptCheckpoint):
        network_from_dict({"kind": "icnn"})
