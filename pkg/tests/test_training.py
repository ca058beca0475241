import math
from dataclasses import dataclass

import numpy as np
import pytest

from modulation_lab.domain.experiment import (
    ExperimentConfig,
    OptimizerConfig,
    PlateauSchedulerConfig,
)
from modulation_lab.exceptions import InvalidInputError, NonFiniteLossError
from modulation_lab.sobolev import Box
from modulation_lab.targets import Target
from modulation_lab.training import (
    AdamState,
    PlateauState,
    adam_step,
    make_training_data,
    plateau_scheduler_step,
    train,
    train_seeds,
)
from modulation_lab.training.loop import build_network


def tiny_config(**training):
    settings = dict(
        samples=40, epochs=15, modulation_units=3, plain_units=4, log_every=5
    )
    settings.update(training)
    return ExperimentConfig.model_validate(
        {"experiment": {"kind": "train_compare"}, "training": settings}
    )


@dataclass
class Exploding(Target):
    dim: int = 1

    def evaluate(self, points):
        return np.full(points.shape[0], np.inf), np.zeros_like(points)


class TestAdam:
    def test_first_step_moves_by_lr(self):
        config = OptimizerConfig(lr=0.01)
        grads = np.array([1.0, -2.0, 0.5])
        state, params = adam_step(AdamState.fresh(3), np.zeros(3), grads, config)
        np.testing.assert_allclose(params, -0.01 * np.sign(grads), rtol=1e-7)
        assert state.step == 1

    def test_two_steps_by_hand(self):
        config = OptimizerConfig(lr=0.1, beta1=0.5, beta2=0.75, eps=1e-12)
        g1, g2 = np.array([2.0]), np.array([-3.0])
        state, p1 = adam_step(AdamState.fresh(1), np.array([1.0]), g1, config)
        state, p2 = adam_step(state, p1, g2, config)
        m = 0.5 * (0.5 * 2.0) + 0.5 * -3.0
        v = 0.75 * (0.25 * 4.0) + 0.25 * 9.0
        m_hat, v_hat = m / (1 - 0.25), v / (1 - 0.75**2)
        expected = p1 - 0.1 * m_hat / (math.sqrt(v_hat) + 1e-12)
        np.testing.assert_allclose(p1, [0.9])
        np.testing.assert_allclose(p2, expected, rtol=1e-14)
        assert p2[0] > p1[0]

    def test_adamw_decay(self):
        config = OptimizerConfig(kind="adamw", lr=0.1)
        assert config.weight_decay == 0.01
        _, params = adam_step(AdamState.fresh(2), np.array([1.0, -3.0]), np.zeros(2), config)
        np.testing.assert_allclose(params, np.array([1.0, -3.0]) * (1 - 0.1 * 0.01))

    def test_adam_has_no_decay(self):
        config = OptimizerConfig(kind="adam")
        _, params = adam_step(AdamState.fresh(2), np.array([1.0, -3.0]), np.zeros(2), config)
        np.testing.assert_array_equal(params, [1.0, -3.0])

    def test_lr_override(self):
        config = OptimizerConfig(lr=1.0)
        _, params = adam_step(AdamState.fresh(1), np.zeros(1), np.ones(1), config, lr=1e-3)
        np.testing.assert_allclose(params, [-1e-3], rtol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            adam_step(AdamState.fresh(2), np.zeros(3), np.zeros(3), OptimizerConfig())

    def test_adam_rejects_weight_decay(self):
        with pytest.raises(ValueError):
            OptimizerConfig(kind="adam", weight_decay=0.1)


def reference_plateau(losses, lr, factor, patience, cooldown, min_lr, threshold):
    best, bad, cooling, out = math.inf, 0, 0, []
    for epoch, loss in enumerate(losses):
        if loss < best * (1 - threshold):
            best, bad = loss, 0
        else:
            bad += 1
        if cooling > 0:
            cooling -= 1
            bad = 0
        if bad > patience:
            new_lr = max(lr * factor, min_lr)
            if new_lr < lr:
                lr = new_lr
            cooling, bad = cooldown, 0
        out.append(lr)
    return out


class TestPlateauScheduler:
    def run(self, losses, config, lr=1e-3):
        state = PlateauState(lr=lr)
        lrs = []
        for loss in losses:
            state, current = plateau_scheduler_step(state, loss, config)
            lrs.append(current)
        return state, lrs

    def test_constant_loss(self):
        state, lrs = self.run([1.0] * 800, PlateauSchedulerConfig())
        assert state.reductions == [101, 402, 703]
        assert lrs[100] == 1e-3
        assert lrs[101] == pytest.approx(0.9e-3)
        assert lrs[-1] == pytest.approx(1e-3 * 0.9**3)

    def test_improving_loss_never_reduces(self):
        losses = np.linspace(10.0, 1.0, 500)
        state, lrs = self.run(losses, PlateauSchedulerConfig(patience=1, cooldown=0))
        assert state.reductions == []
        assert set(lrs) == {1e-3}

    def test_min_lr_floor(self):
        config = PlateauSchedulerConfig(factor=0.5, patience=1, cooldown=0, min_lr=1e-4)
        state, lrs = self.run([1.0] * 100, config)
        assert min(lrs) == 1e-4
        assert all(lr >= 1e-4 for lr in lrs)
        assert state.reductions == [2, 4, 6, 8]

    def test_matches_reference_on_random_sequences(self, rng):
        config = PlateauSchedulerConfig(
            factor=0.5, patience=3, cooldown=2, min_lr=1e-5, threshold=0.01
        )
        for _ in range(20):
            losses = np.exp(np.cumsum(rng.normal(0.0, 0.05, size=300)))
            _, lrs = self.run(losses, config, lr=0.1)
            expected = reference_plateau(losses, 0.1, 0.5, 3, 2, 1e-5, 0.01)
            assert lrs == expected


class TestTrainingData:
    def test_one_dimensional_is_seeded(self, target1d):
        box = Box.symmetric(3.0)
        first = make_training_data(target1d, box, 50, seed=4)
        again = make_training_data(target1d, box, 50, seed=4)
        holdout = make_training_data(target1d, box, 50, seed=4, holdout=True)
        np.testing.assert_array_equal(first.points, again.points)
        assert not np.array_equal(first.points, holdout.points)
        assert np.all(box.contains(first.points))

    def test_two_dimensional_grid(self, target2d):
        box = Box.symmetric(3.0, 2)
        batch = make_training_data(target2d, box, 100, seed=0)
        holdout = make_training_data(target2d, box, 100, seed=0, holdout=True)
        assert len(batch) == 100
        assert len(holdout) == 81
        assert np.all(np.abs(holdout.points) < 3.0)
        np.testing.assert_allclose(holdout.points[0], [-3 + 1 / 3, -3 + 1 / 3])


class TestTrain:
    def test_trace_lengths(self, target1d):
        record = train("modulation", target1d, tiny_config(), seed=0)
        assert len(record.losses) == len(record.lrs) == 16
        assert record.epochs == 15
        assert record.parameter_count == 13
        assert record.final_parameters.shape == (13,)
        assert record.holdout_loss is not None
        assert record.run_suffix() == "_modulation_3_seed0"
        assert list(record.to_frame().columns) == ["epoch", "loss", "lr"]

    def test_zero_epochs(self, target1d):
        record = train("plain", target1d, tiny_config(epochs=0), seed=1)
        assert len(record.losses) == 1
        initial = build_network("plain", 4, tiny_config(), seed=1)
        np.testing.assert_array_equal(record.final_parameters, initial.to_vector())

    def test_deterministic(self, target1d):
        config = tiny_config()
        first = train("modulation", target1d, config, seed=3)
        second = train("modulation", target1d, config, seed=3)
        assert first.losses == second.losses
        np.testing.assert_array_equal(first.final_parameters, second.final_parameters)

    def test_loss_decreases(self, target1d):
        record = train("plain", target1d, tiny_config(epochs=200), seed=0)
        assert record.final_loss < record.losses[0]

    def test_tiny_learning_rate_keeps_parameters(self, target1d):
        config = tiny_config()
        config.optimizer.lr = 1e-12
        record = train("modulation", target1d, config, seed=2)
        initial = build_network("modulation", 3, config, seed=2)
        np.testing.assert_allclose(
            record.final_parameters, initial.to_vector(), rtol=0, atol=1e-9
        )

    def test_scheduler_lrs_are_recorded(self, target1d):
        config = tiny_config(epochs=30, use_scheduler=True)
        config.scheduler.patience = 1
        config.scheduler.cooldown = 0
        record = train("plain", target1d, config, seed=0)
        assert all(lr >= config.scheduler.min_lr for lr in record.lrs)
        assert record.lrs[0] == config.optimizer.lr

    def test_non_finite_loss(self):
        with pytest.raises(NonFiniteLossError) as error:
            train("plain", Exploding(), tiny_config(), seed=0)
        assert error.value.epoch == 0

    def test_train_seeds_in_order(self, target1d):
        records = train_seeds("plain", target1d, tiny_config(epochs=3), 4, seeds=[5, 1, 3])
        assert [r.seed for r in records] == [5, 1, 3]
        assert all(r.units == 4 for r in records)

    @pytest.mark.slow
    def test_modulation_beats_plain_at_equal_budget(self, target1d):
        config = ExperimentConfig.model_validate(
            {
                "experiment": {"kind": "train_compare", "seeds": [0, 1, 2]},
                "training": {
                    "samples": 2000,
                    "epochs": 5000,
                    "modulation_units": 48,
                    "plain_units": 64,
                },
            }
        )
        modulation = train_seeds("modulation", target1d, config, 48)
        plain = train_seeds("plain", target1d, config, 64)
        assert modulation[0].parameter_count == plain[0].parameter_count == 193
        assert np.median([r.final_loss for r in modulation]) < np.median(
            [r.final_loss for r in plain]
        )
