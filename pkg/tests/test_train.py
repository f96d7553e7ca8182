import math

import numpy as np
import pytest

from sinefield import data
from sinefield.analysis import layerwise_output_grad_norms
from sinefield.errors import DivergenceError, InvalidInputError, ShapeError
from sinefield.init import init_standard, init_weight_scaled, lr_plan_functional_only, uniform_plan
from sinefield.model import backward, forward
from sinefield.train import (
    PSNR_CAP,
    ReportRow,
    TrainConfig,
    TrainReport,
    iou,
    layer_update_norms,
    mse,
    psnr,
    speed,
    train,
)

W0 = 1.875  # coarse-grid frequency used throughout the desk-scale runs


@pytest.fixture(scope="module")
def image():
    return data.make_image_dataset(data.bundled_image(), 2)


@pytest.fixture(scope="module")
def tiny():
    return data.make_image_dataset(data.bundled_image()[:8, :8], 2)


class TestMetrics:
    def test_mse(self):
        a = np.random.default_rng(0).random((2, 5))
        assert mse(a, a) == 0.0
        assert mse(a + 0.1, a) == pytest.approx(0.01)
        perm = np.random.default_rng(1).permutation(10)
        assert mse(a.ravel()[perm], (a + 0.3).ravel()[perm]) == pytest.approx(mse(a, a + 0.3))

    def test_mse_shape(self):
        with pytest.raises(ShapeError):
            mse(np.zeros(3), np.zeros(4))

    def test_psnr(self):
        assert psnr(1e-4) == pytest.approx(40.0)
        assert psnr(0.01) == pytest.approx(20.0)
        assert psnr(0.0) == PSNR_CAP == 99.0
        assert psnr(0.01, peak=10.0) == pytest.approx(40.0)

    def test_psnr_negative(self):
        with pytest.raises(InvalidInputError):
            psnr(-1e-3)

    def test_iou(self):
        t = np.array([0, 1, 1, 0, 1.0])
        assert iou(t, t) == 1.0
        assert iou(np.array([1.0, 0, 0]), np.array([0, 1.0, 0])) == 0.0
        # pred {a, b}, target {b, c}
        assert iou(np.array([0.9, 0.8, 0.1]), np.array([0, 1.0, 1.0])) == pytest.approx(1 / 3)
        assert iou(np.zeros(4), np.zeros(4)) == 1.0

    def test_iou_nonbinary(self):
        with pytest.raises(InvalidInputError):
            iou(np.zeros(2), np.array([0.5, 1.0]))

    def test_speed(self):
        assert speed(TrainReport(steps_to_target=100)) == 0.01
        assert speed(TrainReport(steps_to_target=None)) is None
        assert speed(TrainReport(steps_to_target=0)) == 1.0


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"lr": 0.0}, {"lr": -1.0}, {"optimizer": "sgd"}, {"target_train_psnr": math.inf}, {"batch_size": 0}]
    )
    def test_invalid(self, kw):
        with pytest.raises(InvalidInputError):
            TrainConfig(**kw)

    def test_batch_larger_than_data(self, tiny):
        p = init_standard([2, 8, 1], W0, 30.0, 0)
        with pytest.raises(InvalidInputError):
            train(p, tiny, TrainConfig(max_steps=1, batch_size=tiny.train_idx.size + 1))


class TestTrain:
    def test_zero_steps(self, tiny):
        p = init_standard([2, 16, 16, 1], W0, 30.0, 0)
        out, rep = train(p, tiny, TrainConfig(max_steps=0))
        assert len(rep.rows) == 1 and rep.rows[0].step == 0
        assert rep.steps_to_target is None
        assert np.array_equal(out.layers[0][0], p.layers[0][0])

    def test_target_met_at_start(self, tiny):
        _, rep = train(init_standard([2, 8, 1], W0, 30.0, 0), tiny, TrainConfig(max_steps=3, target_train_psnr=-50))
        assert rep.steps_to_target == 0

    def test_input_untouched(self, tiny):
        p = init_standard([2, 8, 1], W0, 30.0, 0)
        before = p.layers[0][0].copy()
        train(p, tiny, TrainConfig(max_steps=5, lr=1e-2))
        assert np.array_equal(before, p.layers[0][0])

    def test_gd_deterministic(self, image):
        p = init_weight_scaled([2, 32, 32, 1], 2.0, W0, 30.0, 3)
        cfg = TrainConfig(max_steps=20, lr=1e-2, optimizer="gd")
        a, ra = train(p, image, cfg)
        b, rb = train(p, image, cfg)
        assert ra.to_csv() == rb.to_csv()
        assert all(x[0].tobytes() == y[0].tobytes() for x, y in zip(a.layers, b.layers))

    def test_minibatch_deterministic(self, image):
        p = init_standard([2, 16, 1], W0, 30.0, 3)
        cfg = TrainConfig(max_steps=10, batch_size=32, seed=5, eval_every=5)
        assert train(p, image, cfg)[1].to_csv() == train(p, image, cfg)[1].to_csv()
        other = TrainConfig(max_steps=10, batch_size=32, seed=6, eval_every=5)
        assert train(p, image, cfg)[1].to_csv() != train(p, image, other)[1].to_csv()

    def test_eval_every_and_last_step(self, tiny):
        _, rep = train(init_standard([2, 8, 1], W0, 30.0, 0), tiny, TrainConfig(max_steps=7, eval_every=3))
        assert [r.step for r in rep.rows] == [0, 3, 6, 7]

    def test_stop_at_target(self, tiny):
        cfg = TrainConfig(max_steps=2000, lr=1e-3, target_train_psnr=15, stop_at_target=True)
        _, rep = train(init_standard([2, 32, 32, 1], W0, 30.0, 0), tiny, cfg)
        assert rep.steps_to_target is not None
        assert rep.rows[-1].step == rep.steps_to_target

    def test_psnr_consistent_with_mse(self, image):
        _, rep = train(init_standard([2, 16, 1], W0, 30.0, 1), image, TrainConfig(max_steps=5))
        for r in rep.rows:
            assert r.train_mse >= 0
            assert r.train_psnr_db == pytest.approx(10 * math.log10(1 / r.train_mse))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_names_step(self, tiny):
        p = init_standard([2, 16, 16, 1], 30.0, 30.0, 0)
        with pytest.raises(DivergenceError) as exc:
            train(p, tiny, TrainConfig(max_steps=200, lr=1e6, optimizer="gd"))
        assert exc.value.step >= 1 and f"step {exc.value.step}" in str(exc.value)

    def test_shape_mismatch(self, image):
        with pytest.raises(ShapeError):
            train(init_standard([3, 8, 1]), image, TrainConfig(max_steps=1))

    def test_loss_decreases_over_run(self, image):
        _, rep = train(init_weight_scaled([2, 32, 32, 1], 2.0, W0, 30.0, 0), image, TrainConfig(max_steps=100, lr=1e-3))
        assert rep.final.train_mse <= rep.rows[0].train_mse


class TestOptimizers:
    def test_gd_step_uses_plan_multipliers(self, tiny):
        p = init_standard([2, 8, 8, 1], W0, 30.0, 2)
        plan = lr_plan_functional_only(2.0, 3, 0.1)
        out, _ = train(p, tiny, TrainConfig(max_steps=1, lr=0.1, optimizer="gd"), plan)
        tr = forward(p, tiny.train_coords)
        r = tr.output - tiny.train_targets
        grads = backward(p, tr, r * (2.0 / r.size))
        for (W0_, b0), (W1, b1), (gW, gb), m in zip(p.layers, out.layers, grads, plan.per_layer_multiplier):
            assert np.allclose(W1, W0_ - 0.1 * m * gW, rtol=0, atol=1e-15)
            assert np.allclose(b1, b0 - 0.1 * m * gb, rtol=0, atol=1e-15)

    def test_adam_first_step_magnitude(self, tiny):
        p = init_standard([2, 8, 8, 1], W0, 30.0, 2)
        lr = 1e-4
        out, _ = train(p, tiny, TrainConfig(max_steps=1, lr=lr))
        tr = forward(p, tiny.train_coords)
        r = tr.output - tiny.train_targets
        grads = backward(p, tr, r * (2.0 / r.size))
        checked = 0
        for (W0_, _), (W1, _), (gW, _) in zip(p.layers, out.layers, grads):
            big = np.abs(gW) > 1e-2  # eps = 1e-8 is negligible here
            step = np.abs(W1 - W0_)[big]
            assert np.allclose(step, lr, rtol=1e-6, atol=0)
            checked += big.sum()
        assert checked > 10

    @pytest.mark.xfail(strict=True, reason="full-batch MSE gradients do not grow as alpha^(l-k); see decisions ledger")
    def test_functional_only_matches_standard_update_scale(self, image):
        dims = [2, 64, 64, 64, 64, 1]
        cfg = TrainConfig(max_steps=1, lr=1e-2, optimizer="gd")
        for seed in range(3):
            std = layer_update_norms(init_standard(dims, W0, 30.0, seed), image, cfg, uniform_plan(5, 1e-2))
            ws = layer_update_norms(
                init_weight_scaled(dims, 2.0, W0, 30.0, seed), image, cfg, lr_plan_functional_only(2.0, 5, 1e-2)
            )
            ratio = np.array(ws) / np.array(std)
            assert np.all((ratio > 0.25) & (ratio < 4.0)), ratio

    def test_functional_only_matches_standard_per_example_scale(self, image):
        # same check on per-input output gradients, where no residual-weighted sum enters
        dims = [2, 64, 64, 64, 64, 1]
        plan = lr_plan_functional_only(2.0, 5, 1e-2).per_layer_multiplier
        X = image.train_coords
        for seed in range(3):
            std = np.array(layerwise_output_grad_norms(init_standard(dims, W0, 30.0, seed), X))
            ws = np.array(layerwise_output_grad_norms(init_weight_scaled(dims, 2.0, W0, 30.0, seed), X))
            ratio = np.array(plan) * ws / std
            assert np.all((ratio > 0.25) & (ratio < 4.0)), ratio


class TestReportCsv:
    def test_columns_and_empty_test(self):
        rep = TrainReport([ReportRow(0, 0.01, 20.0, None), ReportRow(1, 0.001, 30.0, 25.5)], 1, 3.0)
        assert rep.to_csv() == "step,train_mse,train_psnr_db,test_psnr_db\n0,0.01,20,\n1,0.001,30,25.5\n"

    def test_no_test_set(self):
        ds = data.synth_signal([(1.0, 2.0, 0.0)], 64)
        _, rep = train(init_standard([1, 8, 1], W0, 30.0), ds, TrainConfig(max_steps=2))
        lines = rep.to_csv().splitlines()
        assert all(line.endswith(",") for line in lines[1:])
