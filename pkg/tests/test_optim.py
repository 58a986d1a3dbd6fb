import numpy as np
import pytest

from xmodal.errors import GradientError, ParameterError
from xmodal.model import ModelGrads, init_params
from xmodal.optim import OptimConfig, ScheduleConfig, adamw_step, init_state, lr_scale_at

from oracles import adam_oracle_trajectory


def grads_like(params, fill):
    return ModelGrads(
        image_weight=np.full_like(params.image_weight, fill),
        image_bias=np.full_like(params.image_bias, fill),
        text_weight=np.full_like(params.text_weight, fill),
        text_bias=np.full_like(params.text_bias, fill),
        head_weight=np.full_like(params.head_weight, fill),
        head_bias=fill,
    )


class TestSchedule:
    def test_warmup_midpoint(self):
        sched = ScheduleConfig(total_steps=100, warmup_fraction=0.1)
        assert lr_scale_at(5, sched) == pytest.approx(0.5, abs=1e-12)

    def test_warmup_end(self):
        sched = ScheduleConfig(total_steps=100, warmup_fraction=0.1)
        assert lr_scale_at(10, sched) == pytest.approx(1.0, abs=1e-12)

    def test_cosine_midpoint(self):
        sched = ScheduleConfig(total_steps=100, warmup_fraction=0.1)
        assert lr_scale_at(55, sched) == pytest.approx(0.5, abs=1e-12)

    def test_final_step_zero(self):
        sched = ScheduleConfig(total_steps=100, warmup_fraction=0.1)
        assert lr_scale_at(100, sched) == pytest.approx(0.0, abs=1e-12)

    def test_monotone_shape(self):
        sched = ScheduleConfig(total_steps=200, warmup_fraction=0.15)
        values = [lr_scale_at(s, sched) for s in range(201)]
        w = sched.warmup_steps
        assert all(a <= b + 1e-15 for a, b in zip(values[:w], values[1 : w + 1]))
        assert all(a >= b - 1e-15 for a, b in zip(values[w:-1], values[w + 1 :]))
        assert all(0 <= v <= 1 for v in values)

    def test_zero_warmup(self):
        sched = ScheduleConfig(total_steps=10, warmup_fraction=0.0)
        assert lr_scale_at(0, sched) == pytest.approx(1.0)

    def test_step_out_of_range(self):
        sched = ScheduleConfig(total_steps=10, warmup_fraction=0.1)
        with pytest.raises(ParameterError):
            lr_scale_at(11, sched)

    def test_invalid_config(self):
        with pytest.raises(ParameterError):
            ScheduleConfig(total_steps=0)
        with pytest.raises(ParameterError):
            ScheduleConfig(total_steps=10, warmup_fraction=1.0)


class TestAdamW:
    def test_zero_grads_no_decay_leaves_params(self):
        params = init_params(3, seed=1)
        cfg = OptimConfig(weight_decay=0.0)
        before = params.copy()
        adamw_step(params, grads_like(params, 0.0), init_state(params), cfg)
        np.testing.assert_array_equal(params.image_weight, before.image_weight)
        np.testing.assert_array_equal(params.head_weight, before.head_weight)
        assert params.head_bias == before.head_bias

    def test_pure_decoupled_decay(self):
        params = init_params(2, seed=1)
        params.head_weight = np.array([1.0, 1.0])
        cfg = OptimConfig(lr_head=0.1, lr_backbone=0.1, weight_decay=0.01)
        adamw_step(params, grads_like(params, 0.0), init_state(params), cfg)
        np.testing.assert_allclose(params.head_weight, [0.999, 0.999], atol=1e-15)

    def test_first_step_hand_value(self):
        params = init_params(1, seed=1)
        params.head_weight = np.array([0.0])
        cfg = OptimConfig(lr_head=1e-3, lr_backbone=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8, weight_decay=0.0)
        grads = grads_like(params, 0.0)
        grads.head_weight = np.array([1.0])
        adamw_step(params, grads, init_state(params), cfg)
        assert params.head_weight[0] == pytest.approx(-9.99999995e-4, abs=1e-12)

    def test_matches_adam_oracle_over_trajectory(self):
        rng = np.random.default_rng(77)
        params = init_params(4, seed=2)
        start = params.head_weight.copy()
        cfg = OptimConfig(lr_head=0.01, lr_backbone=0.01, weight_decay=0.0)
        state = init_state(params)
        grad_sequence = [rng.normal(size=4) for _ in range(10)]
        for g in grad_sequence:
            grads = grads_like(params, 0.0)
            grads.head_weight = g
            adamw_step(params, grads, state, cfg)
        oracle = adam_oracle_trajectory(start, grad_sequence, 0.01, cfg.beta1, cfg.beta2, cfg.epsilon)
        np.testing.assert_allclose(params.head_weight, oracle[-1], atol=1e-12)

    def test_group_learning_rates(self):
        params = init_params(4, seed=3)
        before = params.copy()
        cfg = OptimConfig(lr_backbone=1e-3, lr_head=1e-2, weight_decay=0.0)
        adamw_step(params, grads_like(params, 1.0), init_state(params), cfg)
        head_move = np.abs(params.head_weight - before.head_weight)
        adapter_move = np.abs(params.image_bias - before.image_bias)
        np.testing.assert_allclose(head_move / adapter_move, 10.0, rtol=1e-9)

    def test_lr_scale_applies(self):
        params = init_params(3, seed=4)
        before = params.copy()
        cfg = OptimConfig(weight_decay=0.0)
        adamw_step(params, grads_like(params, 1.0), init_state(params), cfg, lr_scale=0.0)
        np.testing.assert_array_equal(params.head_weight, before.head_weight)

    def test_non_finite_gradient(self):
        params = init_params(2, seed=5)
        grads = grads_like(params, 0.0)
        grads.image_bias = np.array([np.nan, 0.0])
        with pytest.raises(GradientError):
            adamw_step(params, grads, init_state(params), OptimConfig())

    def test_step_counter_advances(self):
        params = init_params(2, seed=6)
        state = init_state(params)
        for expected in (1, 2, 3):
            adamw_step(params, grads_like(params, 0.1), state, OptimConfig(weight_decay=0.0))
            assert state.step == expected
