import numpy as np
import pytest

from xmodal.errors import FormatError, ParameterError
from xmodal.losses import LossWeights, bce_with_logits, clip_loss, supcon_loss
from xmodal.model import (
    LossGrads,
    backward,
    forward,
    init_params,
    load_params,
    params_equal,
    save_params,
)

from oracles import finite_difference_grad


def composite_value(params, image, text, labels, weights):
    """Scalar composite loss of an eval-mode forward, for probing."""
    acts = forward(params, image, text, dropout_p=0.0, mode="eval")
    bce, _ = bce_with_logits(acts.logits, labels)
    sup, _ = supcon_loss(acts.fused_norm, labels, weights.tau)
    clip, _, _ = clip_loss(acts.image_adapted, acts.text_adapted, weights.tau)
    return weights.lambda1 * bce + weights.lambda2 * sup + weights.lambda3 * clip


class TestInit:
    def test_identity_adapters(self):
        params = init_params(4, seed=9)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(x @ params.image_weight + params.image_bias, x)
        np.testing.assert_array_equal(x @ params.text_weight + params.text_bias, x)

    def test_same_seed_is_bitwise_identical(self):
        assert params_equal(init_params(8, seed=3), init_params(8, seed=3))

    def test_head_weight_bound(self):
        for seed in range(20):
            params = init_params(512, seed=seed)
            assert params.head_weight.shape == (512,)
            assert np.max(np.abs(params.head_weight)) <= 1.0 / np.sqrt(512)
        assert init_params(512, seed=0).head_bias == 0.0

    def test_bad_dim(self):
        with pytest.raises(ParameterError):
            init_params(0, seed=0)


class TestForward:
    def test_zero_head_means_zero_logits(self):
        params = init_params(5, seed=1)
        params.head_weight = np.zeros(5)
        rng = np.random.default_rng(2)
        acts = forward(params, rng.normal(size=(4, 5)), rng.normal(size=(4, 5)))
        np.testing.assert_array_equal(acts.logits, np.zeros(4))

    def test_eval_mode_fuses_exactly(self):
        params = init_params(6, seed=1)
        rng = np.random.default_rng(3)
        image, text = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
        acts = forward(params, image, text, dropout_p=0.5, mode="eval")
        np.testing.assert_array_equal(acts.fused_dropout, (acts.image_adapted + acts.text_adapted) / 2)
        np.testing.assert_array_equal(acts.dropout_mask, np.ones((4, 6)))

    def test_train_dropout_reproducible_and_unbiased(self):
        params = init_params(8, seed=1)
        rng = np.random.default_rng(4)
        image, text = rng.normal(size=(200, 8)), rng.normal(size=(200, 8))
        a = forward(params, image, text, dropout_p=0.5, mode="train", seed=77)
        b = forward(params, image, text, dropout_p=0.5, mode="train", seed=77)
        np.testing.assert_array_equal(a.dropout_mask, b.dropout_mask)
        np.testing.assert_array_equal(a.fused_dropout, b.fused_dropout)
        kept_scale = a.dropout_mask.mean() / 0.5
        assert kept_scale == pytest.approx(1.0, abs=0.05)

    def test_fused_rows_unit_norm(self):
        params = init_params(5, seed=6)
        rng = np.random.default_rng(7)
        acts = forward(params, rng.normal(size=(6, 5)), rng.normal(size=(6, 5)))
        np.testing.assert_allclose(np.linalg.norm(acts.fused_norm, axis=1), 1.0, atol=1e-9)

    def test_eval_is_seed_independent(self):
        params = init_params(5, seed=6)
        rng = np.random.default_rng(8)
        image, text = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
        a = forward(params, image, text, mode="eval", seed=1)
        b = forward(params, image, text, mode="eval", seed=999)
        np.testing.assert_array_equal(a.logits, b.logits)
        np.testing.assert_array_equal(a.fused_norm, b.fused_norm)

    def test_bad_dropout(self):
        params = init_params(3, seed=0)
        with pytest.raises(ParameterError):
            forward(params, np.ones((2, 3)), np.ones((2, 3)), dropout_p=1.0)

    def test_degenerate_adapted_row(self):
        from xmodal.errors import DegenerateVectorError

        params = init_params(3, seed=0)
        image = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        text = np.ones((2, 3))
        with pytest.raises(DegenerateVectorError):
            forward(params, image, text)


class TestBackward:
    def test_zero_incoming_gradients(self):
        params = init_params(4, seed=2)
        rng = np.random.default_rng(9)
        acts = forward(params, rng.normal(size=(3, 4)), rng.normal(size=(3, 4)))
        grads = backward(params, acts, LossGrads())
        np.testing.assert_array_equal(grads.image_weight, 0.0)
        np.testing.assert_array_equal(grads.text_weight, 0.0)
        np.testing.assert_array_equal(grads.head_weight, 0.0)
        assert grads.head_bias == 0.0

    def test_identical_samples_get_identical_contributions(self):
        params = init_params(4, seed=3)
        rng = np.random.default_rng(10)
        row_i, row_t = rng.normal(size=4), rng.normal(size=4)
        image = np.vstack([row_i, row_i])
        text = np.vstack([row_t, row_t])
        acts = forward(params, image, text, dropout_p=0.0, mode="eval")
        _, g_logits = bce_with_logits(acts.logits, [1, 1])
        half = backward(params, acts, LossGrads(d_logits=np.array([g_logits[0], 0.0])))
        other = backward(params, acts, LossGrads(d_logits=np.array([0.0, g_logits[1]])))
        np.testing.assert_allclose(half.image_weight, other.image_weight, atol=1e-15)
        np.testing.assert_allclose(half.head_weight, other.head_weight, atol=1e-15)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_full_composite_matches_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        n, d = 3, 5
        image, text = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        labels = np.array([0, 1, 1])
        weights = LossWeights(lambda1=0.7, lambda2=1.3, lambda3=0.5, tau=0.4)

        params = init_params(d, seed=seed)
        params.image_weight = params.image_weight + 0.1 * rng.normal(size=(d, d))
        params.text_weight = params.text_weight + 0.1 * rng.normal(size=(d, d))
        params.image_bias = 0.1 * rng.normal(size=d)
        params.text_bias = 0.1 * rng.normal(size=d)
        params.head_bias = float(rng.normal() * 0.1)

        acts = forward(params, image, text, dropout_p=0.0, mode="eval")
        _, g_logits = bce_with_logits(acts.logits, labels)
        _, g_fused = supcon_loss(acts.fused_norm, labels, weights.tau)
        _, g_img, g_txt = clip_loss(acts.image_adapted, acts.text_adapted, weights.tau)
        analytic = backward(
            params,
            acts,
            LossGrads(
                d_logits=weights.lambda1 * g_logits,
                d_fused=weights.lambda2 * g_fused,
                d_image=weights.lambda3 * g_img,
                d_text=weights.lambda3 * g_txt,
            ),
        )

        for name in ("image_weight", "image_bias", "text_weight", "text_bias", "head_weight", "head_bias"):
            base = getattr(params, name)

            def probe(value, field=name):
                trial = params.copy()
                setattr(trial, field, float(value) if field == "head_bias" else value)
                return composite_value(trial, image, text, labels, weights)

            fd = finite_difference_grad(probe, np.asarray(base, dtype=float))
            got = np.asarray(getattr(analytic, name), dtype=float)
            np.testing.assert_allclose(got, fd, rtol=1e-6, atol=1e-8, err_msg=name)

    def test_shape_mismatch_rejected(self):
        from xmodal.errors import ShapeError

        params = init_params(4, seed=2)
        rng = np.random.default_rng(9)
        acts = forward(params, rng.normal(size=(3, 4)), rng.normal(size=(3, 4)))
        with pytest.raises(ShapeError):
            backward(params, acts, LossGrads(d_logits=np.zeros(5)))
        with pytest.raises(ShapeError):
            backward(params, acts, LossGrads(d_fused=np.zeros((2, 4))))

    def test_dropout_path_gradient(self):
        # Head gradient through a fixed train-mode mask, against finite
        # differences of the same masked forward.
        rng = np.random.default_rng(200)
        d = 4
        image, text = rng.normal(size=(3, d)), rng.normal(size=(3, d))
        labels = np.array([1, 0, 1])
        params = init_params(d, seed=5)
        acts = forward(params, image, text, dropout_p=0.4, mode="train", seed=11)
        _, g_logits = bce_with_logits(acts.logits, labels)
        analytic = backward(params, acts, LossGrads(d_logits=g_logits))

        def probe(w):
            trial = params.copy()
            trial.head_weight = w
            trial_acts = forward(trial, image, text, dropout_p=0.4, mode="train", seed=11)
            return bce_with_logits(trial_acts.logits, labels)[0]

        fd = finite_difference_grad(probe, params.head_weight)
        np.testing.assert_allclose(analytic.head_weight, fd, rtol=1e-6, atol=1e-9)


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        params = init_params(7, seed=42)
        rng = np.random.default_rng(42)
        params.image_weight = rng.normal(size=(7, 7))
        params.head_bias = -0.25
        path = tmp_path / "model.cmxm"
        save_params(params, path)
        assert params_equal(load_params(path), params)

    def test_truncated_file(self, tmp_path):
        params = init_params(4, seed=0)
        path = tmp_path / "model.cmxm"
        save_params(params, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 9])
        with pytest.raises(FormatError):
            load_params(path)

    def test_wrong_magic(self, tmp_path):
        params = init_params(4, seed=0)
        path = tmp_path / "model.cmxm"
        save_params(params, path)
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_params(path)

    def test_wrong_version(self, tmp_path):
        params = init_params(4, seed=0)
        path = tmp_path / "model.cmxm"
        save_params(params, path)
        data = bytearray(path.read_bytes())
        data[4] = 9
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_params(path)
