import math

import numpy as np
import pytest

from gase import losses, tensor as T
from gase.losses import LossConfig
from gase.tensor import Tensor

import oracles


CFG = LossConfig(gamma_horizon=150)


def onehot4(fg_pixels):
    """1x2x2x2 one-hot label with the given foreground pixel coordinates."""
    y = np.zeros((1, 2, 2, 2), np.float64)
    y[..., 0] = 1.0
    for (i, j) in fg_pixels:
        y[0, i, j, 0] = 0.0
        y[0, i, j, 1] = 1.0
    return y


class TestDiceSquaredLoss:
    def test_perfect_prediction_is_zero(self):
        y = onehot4([(0, 0), (1, 1)])
        loss = losses.dice_squared_loss(Tensor(y), Tensor(y))
        assert abs(loss.item()) < 1e-6

    def test_disjoint_onehot_is_one(self):
        y = onehot4([(0, 0), (0, 1)])
        flipped = 1.0 - y
        loss = losses.dice_squared_loss(Tensor(flipped), Tensor(y))
        assert abs(loss.item() - 1.0) < 1e-6

    def test_uniform_half_matches_direct_oracle(self):
        # 2-class 2x2 case: prediction 0.5 everywhere, one foreground pixel
        y = onehot4([(0, 0)])
        pred = np.full((1, 2, 2, 2), 0.5, np.float64)
        expected = oracles.dice_squared_loss_direct(pred, y)
        loss = losses.dice_squared_loss(Tensor(pred), Tensor(y))
        assert abs(loss.item() - expected) < 1e-9
        assert abs(expected - 0.375) < 1e-6  # hand-checked

    def test_random_soft_prediction_matches_oracle(self):
        rng = np.random.default_rng(4)
        y = onehot4([(1, 0)])
        pred = rng.uniform(0.05, 0.95, (1, 2, 2, 2))
        weights = [0.3, 0.7]
        expected = oracles.dice_squared_loss_direct(pred, y, weights)
        loss = losses.dice_squared_loss(Tensor(pred), Tensor(y), weights)
        assert abs(loss.item() - expected) < 1e-9

    def test_degenerate_class_skipped_with_warning(self):
        y = np.zeros((1, 2, 2, 2), np.float64)
        y[..., 0] = 1.0  # all background
        before = losses.degenerate_slice_count
        with pytest.warns(UserWarning, match="skipped"):
            loss = losses.dice_squared_loss(Tensor(y), Tensor(y), [0.5, 0.5])
        assert losses.degenerate_slice_count == before + 1
        assert abs(loss.item()) < 1e-6  # perfect on the present class

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        y = Tensor(onehot4([(0, 1)]))
        pred = Tensor(rng.uniform(0.1, 0.9, (1, 2, 2, 2)), requires_grad=True)
        oracles.check_gradients(lambda: losses.dice_squared_loss(pred, y), [pred])


class TestStyleDiversityPenalty:
    def test_identical_images_hit_cap(self):
        x = Tensor(np.full((1, 4, 4, 1), 0.3, np.float64))
        val = losses.style_diversity_penalty(x, Tensor(x.data.copy()), CFG)
        assert val.item() == pytest.approx(10.0, abs=1e-12)

    def test_known_mse_values(self):
        x1 = Tensor(np.zeros((1, 10, 10, 1), np.float64))
        for target_mse, expected in [(0.009, 1.0), (0.999, 0.01)]:
            x2 = Tensor(np.full((1, 10, 10, 1), math.sqrt(target_mse), np.float64))
            val = losses.style_diversity_penalty(x1, x2, CFG)
            assert val.item() == pytest.approx(expected, rel=1e-9)

    def test_strictly_decreasing_in_mse_and_bounded(self):
        x1 = Tensor(np.zeros((1, 8, 8, 1), np.float64))
        values = []
        for c in np.linspace(0.0, 1.0, 11):
            x2 = Tensor(np.full((1, 8, 8, 1), c, np.float64))
            values.append(losses.style_diversity_penalty(x1, x2, CFG).item())
        assert all(a > b for a, b in zip(values, values[1:]))
        assert max(values) <= CFG.lambda1 / CFG.lambda2

    def test_gradient(self):
        rng = np.random.default_rng(3)
        x1 = oracles.rand_tensor(rng, (1, 4, 4, 1), scale=0.3)
        x2 = oracles.rand_tensor(rng, (1, 4, 4, 1), scale=0.3)
        oracles.check_gradients(
            lambda: losses.style_diversity_penalty(x1, x2, CFG), [x1, x2]
        )


class TestGammaSchedule:
    def test_endpoints(self):
        assert losses.gamma_schedule(0, 100) == 0.0
        assert losses.gamma_schedule(100, 100) == 1.0
        assert losses.gamma_schedule(250, 100) == 1.0

    def test_midpoint_power_two(self):
        assert losses.gamma_schedule(50, 100, 2) == pytest.approx(0.75)

    def test_monotone_with_range_01(self):
        vals = [losses.gamma_schedule(e, 80) for e in range(0, 200)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert min(vals) == 0.0 and max(vals) == 1.0

    def test_bad_horizon_rejected(self):
        with pytest.raises(ValueError, match="horizon"):
            losses.gamma_schedule(1, 0)


class TestSegmentationLosses:
    def test_gamma_zero_reduces_to_real_term(self):
        rng = np.random.default_rng(0)
        y = Tensor(onehot4([(0, 0)]))
        pr = Tensor(rng.uniform(0.1, 0.9, (1, 2, 2, 2)))
        pf = Tensor(rng.uniform(0.1, 0.9, (1, 2, 2, 2)))
        combined = losses.segmentation_loss_d(pr, pf, y, 0.0, CFG)
        real_only = losses.dice_squared_loss(pr, y)
        assert combined.item() == real_only.item()

    def test_assembly_with_gamma_one(self):
        rng = np.random.default_rng(1)
        y = Tensor(onehot4([(0, 0)]))
        pr = Tensor(rng.uniform(0.1, 0.9, (1, 2, 2, 2)))
        pf = Tensor(rng.uniform(0.1, 0.9, (1, 2, 2, 2)))
        real = losses.dice_squared_loss(pr, y).item()
        fake = losses.dice_squared_loss(pf, y).item()
        combined = losses.segmentation_loss_d(pr, pf, y, 1.0, CFG)
        assert combined.item() == pytest.approx(real + 0.5 * fake, rel=1e-6)

    def test_numeric_assembly(self):
        # real 0.2, synthetic 0.4, gamma 1, lambda3 0.5 -> 0.4
        assert 0.2 + CFG.lambda3 * 1.0 * 0.4 == pytest.approx(0.4)

    def test_perfect_pair_is_zero(self):
        y = Tensor(onehot4([(1, 1)]))
        combined = losses.segmentation_loss_d(y, y, y, 1.0, CFG)
        assert abs(combined.item()) < 1e-6

    def test_generator_term_equals_dice_bit_exact(self):
        rng = np.random.default_rng(2)
        y = Tensor(onehot4([(0, 1)]))
        pf = Tensor(rng.uniform(0.1, 0.9, (1, 2, 2, 2)))
        assert (
            losses.segmentation_loss_g(pf, y).item()
            == losses.dice_squared_loss(pf, y).item()
        )


class TestConfidenceLosses:
    def quiet_cfg(self):
        return LossConfig(gamma_horizon=150, zeta_std=0.0)

    def test_half_confidence_gives_two_ln2(self):
        c = Tensor(np.full((2, 4, 4, 1), 0.5, np.float64))
        rng = np.random.default_rng(0)
        val = losses.confidence_loss_d(c, Tensor(c.data.copy()), rng, self.quiet_cfg())
        assert val.item() == pytest.approx(2 * math.log(2), rel=1e-9)

    def test_separated_confidences_approach_zero(self):
        rng = np.random.default_rng(0)
        c_real = Tensor(np.full((1, 4, 4, 1), 1.0 - 1e-9, np.float64))
        c_fake = Tensor(np.full((1, 4, 4, 1), 1e-9, np.float64))
        val = losses.confidence_loss_d(c_real, c_fake, rng, self.quiet_cfg())
        assert val.item() < 1e-5

    def test_generator_half_is_ln2(self):
        c = Tensor(np.full((3, 2, 2, 1), 0.5, np.float64))
        val = losses.confidence_loss_g(c, np.random.default_rng(0), self.quiet_cfg())
        assert val.item() == pytest.approx(math.log(2), rel=1e-9)

    def test_noise_is_per_map_and_clamped(self):
        cfg = LossConfig(gamma_horizon=10, zeta_std=0.4)
        z = losses.draw_target_noise(np.random.default_rng(0), cfg, 64)
        assert z.shape == (64, 1, 1, 1)
        assert z.min() >= 0.0 and z.max() <= cfg.zeta_clamp

    def test_gradients(self):
        rng = np.random.default_rng(5)
        c = Tensor(rng.uniform(0.1, 0.9, (2, 3, 3, 1)), requires_grad=True)
        cfg = self.quiet_cfg()
        oracles.check_gradients(
            lambda: losses.confidence_loss_g(c, np.random.default_rng(1), cfg), [c]
        )
        c2 = Tensor(rng.uniform(0.1, 0.9, (2, 3, 3, 1)), requires_grad=True)
        oracles.check_gradients(
            lambda: losses.confidence_loss_d(c, c2, np.random.default_rng(1), cfg),
            [c, c2],
        )


class TestHybridTotals:
    def test_generator_assembly(self):
        val = losses.generator_total(
            Tensor(np.float64(0.1)), Tensor(np.float64(0.7)), Tensor(np.float64(10.0)), CFG
        )
        assert val.item() == pytest.approx(10.9, rel=1e-12)

    def test_all_zero(self):
        zero = Tensor(np.float64(0.0))
        assert losses.generator_total(zero, zero, zero, CFG).item() == 0.0

    def test_discriminator_assembly(self):
        val = losses.discriminator_total(
            Tensor(np.float64(0.4)), Tensor(np.float64(1.3863))
        )
        assert val.item() == pytest.approx(1.7863, rel=1e-12)

    def test_nonfinite_component_named(self):
        bad = Tensor(np.float64(np.nan))
        ok = Tensor(np.float64(0.1))
        with pytest.raises(T.NonFiniteError, match="l_gc"):
            losses.generator_total(ok, bad, ok, CFG)
        with pytest.raises(T.NonFiniteError, match="l_ds"):
            losses.discriminator_total(bad, ok)


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(lambda1=0.0)
    with pytest.raises(ValueError):
        LossConfig(beta=-1.0)
    w = LossConfig(class_weights=[1, 1, 2]).weights_for(3)
    assert w.sum() == pytest.approx(1.0)
