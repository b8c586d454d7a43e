import math

import numpy as np
import pandas as pd
import pytest

from src.errors import CorruptCheckpoint, InvalidRange, UnknownDataset, UnknownProblem
from src.gates import GateMode
from src.models import Checkpoint, NetKind
from src.nets import IcnnModel
from src.problems import (CompressibleProblem, DataSplit, HardeningProblem, IncompressibleProblem,
                          YieldSurfaceProblem, make_problem, restore_problem, tape_data_loss)
from src.runs import dataset_ref
from tests.helpers import open_gates


def _round_yield_model(rng):
    """f = softplus(pi1) + softplus(-pi1) + softplus(pi2) + softplus(-pi2) - 4 log 2 - 1."""
    model = open_gates(IcnnModel.initialize([2, 4, 1], rng))
    hidden, out = model.layers
    for j, row in enumerate(hidden.weights):
        for i, gp in enumerate(row):
            gp.theta_bar = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]][j][i]
    for gp in hidden.biases:
        gp.theta_bar = 0.0
    for gp in out.weights[0]:
        gp.theta_bar = 1.0
    for gp in out.passthrough[0]:
        gp.theta_bar = 0.0
    out.biases[0].theta_bar = -(4.0 * math.log(2.0) + 1.0)
    return model


def test_registry_builds_each_problem(yield_problem, hardening_problem, treloar_problem, gent_problem):
    assert isinstance(yield_problem, YieldSurfaceProblem)
    assert isinstance(hardening_problem, HardeningProblem)
    assert isinstance(treloar_problem, IncompressibleProblem)
    assert isinstance(gent_problem, CompressibleProblem)
    for problem in (yield_problem, hardening_problem, treloar_problem, gent_problem):
        assert problem.validate_input() == (True, [])


def test_unknown_names():
    with pytest.raises(UnknownDataset):
        make_problem("yield", "no-such-set")
    with pytest.raises(UnknownProblem) as err:
        make_problem("viscoelastic", "drucker")
    payload = err.value.to_dict()
    assert payload["error"] == "UnknownProblem"
    assert payload["problem"] == "viscoelastic"
    assert "name" not in payload


def test_compressible_law_generates_held_out_set(gent_problem):
    assert gent_problem.n_points == 8
    assert len(gent_problem.test) == 16
    assert gent_problem.params["data"] == "gent-gent"
    assert "test" not in gent_problem.to_params()


def test_incompressible_mode_split(treloar_problem):
    assert set(treloar_problem.pool["mode"]) == {"UT", "ET"}
    assert set(treloar_problem.test["mode"]) == {"PS"}


def test_hardening_rejects_non_monotone_networks(hardening_problem, rng):
    assert hardening_problem.build_model([3], rng).activation.value == "sigmoid"
    with pytest.raises(ValueError):
        hardening_problem.build_model([3], rng, NetKind.ICNN)


def test_hardening_needs_plastic_points():
    problem = make_problem("hardening", "SS316L", E=190000.0, nu=0.35, sigma_y=1e9)
    valid, errors = problem.validate_input()
    assert not valid
    assert "beyond first yield" in errors[0]


def test_yield_problem_from_csv(tmp_path):
    angles = np.linspace(0.0, 2.0 * math.pi, 12, endpoint=False)
    pd.DataFrame({"pi1": np.cos(angles), "pi2": np.sin(angles)}).to_csv(tmp_path / "ring.csv", index=False)
    problem = make_problem("yield", str(tmp_path / "ring.csv"))
    assert problem.n_points == 12
    assert problem.dataset.metadata["source"] == "csv"
    assert problem.law is None


@pytest.mark.parametrize("fixture", ["yield_problem", "hardening_problem", "treloar_problem", "gent_problem"])
def test_tape_loss_matches_numpy_loss(fixture, request, rng):
    problem = request.getfixturevalue(fixture)
    model = problem.build_model([4], rng)
    indices = problem.order_rows(np.arange(min(problem.n_points, 10)))
    assert tape_data_loss(problem, model, indices) == pytest.approx(problem.evaluate(model, indices), rel=1e-9)


def test_ungated_losses_agree(treloar_problem, rng):
    model = treloar_problem.build_model([3], rng)
    indices = np.arange(6)
    tape = tape_data_loss(treloar_problem, model, indices, GateMode.UNGATED)
    assert tape == pytest.approx(treloar_problem.evaluate(model, indices, GateMode.UNGATED), rel=1e-9)


def test_metrics_keys(gent_problem, rng):
    model = gent_problem.build_model([3], rng)
    split = DataSplit(np.arange(6), np.arange(6, 8))
    out = gent_problem.metrics(model, split)
    assert set(out) == {"train_loss", "val_loss", "test_loss", "r2", "extra"}
    assert out["test_loss"] is not None
    assert "ut_relative_l2" in out["extra"]


def test_run_wraps_metrics(hardening_problem, rng):
    model = hardening_problem.build_model([3], rng)
    n = hardening_problem.n_points
    result = hardening_problem.run(model, DataSplit(np.arange(n - 2), np.arange(n - 2, n)))
    assert result.success
    assert result.problem_name == "hardening"
    assert "R0" in result.metadata["extra"]


def test_compressible_curves(gent_problem, rng):
    frame = gent_problem.curves(gent_problem.build_model([3], rng), points=21)
    assert list(frame.columns) == ["F11", "S11_pred", "S11_ref", "in_training_domain"]
    assert frame["F11"].iloc[0] == pytest.approx(0.6)
    assert frame["S11_pred"].iloc[10] == pytest.approx(0.0, abs=1e-10)
    assert frame["in_training_domain"].sum() == 11


def test_incompressible_curves_cover_every_mode(treloar_problem, rng):
    frame = treloar_problem.curves(treloar_problem.build_model([3], rng), points=5)
    assert list(frame.columns) == ["mode", "lambda_or_gamma", "P_pred", "in_training_domain"]
    assert set(frame["mode"]) == {"UT", "ET", "PS"}
    assert not frame[frame["mode"] == "PS"]["in_training_domain"].any()


def test_hardening_curves(hardening_problem, rng):
    frame = hardening_problem.curves(hardening_problem.build_model([3], rng), 0.0, 2.0, 9)
    assert list(frame.columns) == ["strain_percent", "stress_pred", "in_training_domain"]
    assert np.all(np.diff(frame["stress_pred"]) >= -1e-9)


def test_yield_curves_of_a_symmetric_surface(yield_problem, rng):
    frame = yield_problem.curves(_round_yield_model(rng), points=5)
    assert list(frame.columns) == ["angle", "pi1_pred", "pi2_pred", "radius_pred", "radius_ref",
                                   "in_training_domain"]
    radii = frame["radius_pred"].to_numpy()
    np.testing.assert_allclose(radii, radii[0], rtol=1e-10)
    assert np.all(frame["radius_ref"] > 0.0)


def test_yield_radial_errors_fall_back_to_inf(yield_problem, rng):
    model = _round_yield_model(rng)
    model.layers[1].biases[0].theta_bar = 1.0
    errors = yield_problem.radial_errors(model)
    assert np.all(np.isinf(errors))


@pytest.mark.parametrize("start,stop,points", [(1.2, 0.8, 10), (0.8, 0.8, 10), (0.8, 1.2, 0)])
def test_empty_curve_range(gent_problem, rng, start, stop, points):
    with pytest.raises(InvalidRange):
        gent_problem.curves(gent_problem.build_model([3], rng), start, stop, points)


def _checkpoint(problem, model):
    return Checkpoint(version="0.1.0", problem=problem.name, problem_params=problem.to_params(),
                      dataset=dataset_ref(problem.dataset), config={}, network=model.to_dict(), seed=0)


@pytest.mark.parametrize("fixture", ["yield_problem", "hardening_problem", "treloar_problem", "gent_problem"])
def test_restore_problem(fixture, request, rng):
    problem = request.getfixturevalue(fixture)
    model = problem.build_model([3], rng)
    again, restored = restore_problem(Checkpoint.model_validate_json(_checkpoint(problem, model).model_dump_json()))
    assert type(again) is type(problem)
    assert again.dataset.fingerprint() == problem.dataset.fingerprint()
    assert again.evaluate(restored) == problem.evaluate(model)


def test_restore_detects_changed_data(yield_problem, rng):
    checkpoint = _checkpoint(yield_problem, yield_problem.build_model([3], rng))
    checkpoint.dataset.fingerprint = "0" * 64
    with pytest.raises(CorruptCheckpoint):
        restore_problem(checkpoint)
