import numpy as np
import pytest

from src.errors import EmptyDataset, NonFiniteGradient, TooFewPoints
from src.gates import GatedParam, GateMode, expected_l0_value
from src.models import RunRecord, TrainConfig
from src.nets import network_from_dict
from src.problems import make_problem
from src.train import (AdamState, adam_step, count_active, fit_model, loss_gradient, make_split, median_index,
                       parameter_vector, parse_architecture, penalty_value, run_experiment, run_sweep,
                       split_dataset, summarize_sweep, total_loss, train_single)
from tests.helpers import open_gates


def test_first_adam_step_moves_by_learning_rate():
    params = [GatedParam(0.5, 0.0), GatedParam(-0.2, 1.0)]
    state = AdamState.zeros(4)
    adam_step(params, [2.0, -3.0, 0.0, 1e-3], state, lr=0.01)
    np.testing.assert_allclose(parameter_vector(params), [0.49, 0.01, -0.2, 0.99], atol=1e-6)
    assert state.t == 1


def test_adam_projects_constrained_weights():
    gp = GatedParam(0.001, 0.0, constrained=True)
    adam_step([gp], [1.0, 0.0], AdamState.zeros(2), lr=0.01)
    assert gp.theta_bar == 0.0


def test_adam_rejects_non_finite_gradient():
    params = [GatedParam(0.5), GatedParam(0.1)]
    with pytest.raises(NonFiniteGradient) as err:
        adam_step(params, [0.0, 0.0, np.nan, 0.0], AdamState.zeros(4))
    assert err.value.details["index"] == 2
    assert params[0].theta_bar == 0.5


def test_adam_rejects_wrong_gradient_size():
    with pytest.raises(ValueError):
        adam_step([GatedParam(0.5)], [1.0], AdamState.zeros(2))


@pytest.mark.parametrize("n,n_train", [(50, 40), (5, 4), (6, 5), (100, 80)])
def test_split_sizes(n, n_train):
    train, val = split_dataset(n, 0.8, seed=3)
    assert len(train) == n_train
    assert len(val) == n - n_train
    assert sorted(np.concatenate([train, val]).tolist()) == list(range(n))


def test_split_is_deterministic():
    a = split_dataset(30, 0.8, seed=7)
    b = split_dataset(30, 0.8, seed=7)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_split_needs_five_points():
    with pytest.raises(TooFewPoints):
        split_dataset(4)


def _records(losses):
    return [RunRecord(seed=k, final_train_loss=v, final_val_loss=0.0, final_active_params=0)
            for k, v in enumerate(losses)]


def test_median_of_odd_count():
    assert median_index(_records([9.0, 1.0, 5.0])) == 2


def test_median_of_even_count_takes_lower_middle():
    assert median_index(_records([4.0, 1.0, 3.0, 2.0])) == 3


def test_median_needs_runs():
    with pytest.raises(ValueError):
        median_index([])


def test_unregularized_loss_matches_numpy_evaluation(yield_problem, rng):
    model = yield_problem.build_model([5], rng)
    split = make_split(yield_problem, 0.8, 0)
    loss, _ = total_loss(yield_problem, model, split.train, 0.0, GateMode.TEST)
    assert loss.value == pytest.approx(yield_problem.evaluate(model, split.train), rel=1e-10)


def test_penalty_at_zero_log_alpha(yield_problem, rng):
    model = yield_problem.build_model([5], rng)
    open_gates(model, 0.0)
    split = make_split(yield_problem, 0.8, 0)
    data, _ = total_loss(yield_problem, model, split.train, 0.0, GateMode.TEST)
    full, _ = total_loss(yield_problem, model, split.train, 1.0, GateMode.TEST)
    n = len(model.parameters())
    assert full.value - data.value == pytest.approx(n * expected_l0_value(0.0), rel=1e-10)
    assert penalty_value(model, GateMode.TEST) == pytest.approx(0.8318 * n, rel=1e-3)
    assert penalty_value(model, GateMode.UNGATED) == 0.0


def test_empty_batch_is_rejected(yield_problem, rng):
    model = yield_problem.build_model([3], rng)
    with pytest.raises(EmptyDataset):
        total_loss(yield_problem, model, np.array([], dtype=int), 0.0, GateMode.TEST)


def test_monte_carlo_gradient_covers_every_parameter(yield_problem, rng):
    model = yield_problem.build_model([3], rng)
    split = make_split(yield_problem, 0.8, 0)
    loss, binds = total_loss(yield_problem, model, split.train, 1e-3, GateMode.TRAIN, rng, mc_samples=3)
    assert len(binds) == 3
    grads = loss_gradient(loss, binds)
    assert grads.shape == (2 * len(model.parameters()),)
    assert np.all(np.isfinite(grads))


def test_open_gates_train_like_an_ungated_network(yield_problem, rng):
    base = open_gates(yield_problem.build_model([4], rng))
    gated = network_from_dict(base.to_dict())
    plain = network_from_dict(base.to_dict())
    split = make_split(yield_problem, 0.8, 0)
    config = TrainConfig(lam=0.0, epochs=100, lr=1e-2, hidden=[4], log_every=10)
    a = fit_model(yield_problem, gated, split, config, np.random.default_rng(0), GateMode.TEST)
    b = fit_model(yield_problem, plain, split, config, np.random.default_rng(0), GateMode.UNGATED)
    assert len(a) == len(b) == 11
    for x, y in zip(a, b):
        assert x.train_loss == pytest.approx(y.train_loss, rel=1e-10, abs=1e-12)
        assert x.val_loss == pytest.approx(y.val_loss, rel=1e-10, abs=1e-12)


def test_training_reduces_the_loss(yield_problem):
    config = TrainConfig(lam=1e-4, epochs=200, lr=1e-2, hidden=[6], log_every=50)
    record, _ = train_single(yield_problem, config, seed=0)
    assert record.history[-1].train_loss < record.history[0].train_loss
    assert [e.epoch for e in record.history] == [1, 50, 100, 150, 200]


def test_training_is_deterministic(yield_problem, quick_config):
    a, model_a = train_single(yield_problem, quick_config, seed=5)
    b, model_b = train_single(yield_problem, quick_config, seed=5)
    assert a.final_train_loss == b.final_train_loss
    assert model_a.to_dict() == model_b.to_dict()


def test_ungated_training_counts_nonzero_weights(yield_problem, quick_config):
    config = quick_config.model_copy(update={"gating": False, "lam": 0.0})
    record, model = train_single(yield_problem, config, seed=0)
    assert record.final_active_params == count_active(model, GateMode.UNGATED)
    assert record.final_active_params == sum(1 for gp in model.parameters() if gp.theta_bar != 0.0)


@pytest.mark.parametrize("spec,widths", [("1x30", [30]), ("2x15", [15, 15]), ("30-20", [30, 20]), ("8", [8])])
def test_parse_architecture(spec, widths):
    assert parse_architecture(spec) == widths


@pytest.mark.parametrize("spec", ["", "x", "0x4", "2x", "a-b", "3-0"])
def test_parse_architecture_rejects(spec):
    with pytest.raises(ValueError):
        parse_architecture(spec)


def test_experiment_selects_median_seed(yield_problem, quick_config):
    config = quick_config.model_copy(update={"seeds": [0, 1, 2]})
    result = run_experiment(yield_problem, config)
    assert [r.seed for r in result.records] == [0, 1, 2]
    losses = sorted(r.final_train_loss for r in result.records)
    assert result.selected_record.final_train_loss == losses[1]
    assert result.selected_model is result.models[result.selected]


def test_experiment_reports_progress(yield_problem, quick_config):
    seen = []
    run_experiment(yield_problem, quick_config, progress_callback=lambda p, msg: seen.append(p))
    assert seen and seen[-1] == pytest.approx(1.0)


def test_experiment_rejects_invalid_input():
    problem = make_problem("hardening", "U71Mn", E=220000.0, nu=0.3, sigma_y=1e9)
    with pytest.raises(EmptyDataset):
        run_experiment(problem, TrainConfig(epochs=1))


def test_sweep_rows_and_summary(yield_problem, quick_config):
    frame = run_sweep(yield_problem, quick_config, [1e-3, 1e-4], ["1x3"], [1, 0])
    assert list(frame[["lambda", "seed"]].itertuples(index=False, name=None)) == [
        (1e-4, 0), (1e-4, 1), (1e-3, 0), (1e-3, 1)]
    assert set(frame["architecture"]) == {"1x3"}
    assert frame["test_loss"].isna().all()
    summary = summarize_sweep(frame)
    assert len(summary) == 2
    assert {"final_train_loss_mean", "final_train_loss_median", "active_params_mean", "runs"} <= set(summary.columns)
    assert summary["runs"].tolist() == [2, 2]


def test_sweep_needs_every_axis(yield_problem, quick_config):
    with pytest.raises(ValueError):
        run_sweep(yield_problem, quick_config, [], ["1x3"], [0])
