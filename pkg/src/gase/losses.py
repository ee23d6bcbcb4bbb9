"""Training losses: weighted squared-denominator dice, the reciprocal-MSE
style-diversity penalty, noisy-target confidence terms, the ramp that gates
the synthetic segmentation signal, and the two hybrid totals.

Every term reduces by mean over batch and pixels so the weighting constants
keep their intended relative meaning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import NonFiniteError, Tensor

DICE_SMOOTH = 1e-7

# running count of target-empty class slices skipped by dice_squared_loss
degenerate_slice_count = 0


@dataclass
class LossConfig:
    lambda1: float = 0.01  # diversity penalty numerator
    lambda2: float = 0.001  # diversity penalty floor
    lambda3: float = 0.5  # cap on the synthetic segmentation signal
    beta: float = 2.0  # semantic-consistency emphasis in the generator total
    zeta_std: float = 0.05  # scale of the half-Gaussian target noise
    zeta_clamp: float = 0.2
    gamma_horizon: int = 150  # epochs until the synthetic term is fully on
    gamma_power: float = 2.0
    class_weights: list[float] | None = None  # defaults to uniform

    def __post_init__(self):
        # lambda1 = 0 switches the diversity penalty off (ablation runs)
        if self.lambda1 < 0 or min(self.lambda2, self.lambda3) <= 0:
            raise ValueError("lambda1 must be >= 0, lambda2/lambda3 positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    def weights_for(self, num_classes: int) -> np.ndarray:
        if self.class_weights is None:
            return np.full(num_classes, 1.0 / num_classes)
        w = np.asarray(self.class_weights, dtype=np.float64)
        if w.shape != (num_classes,):
            raise ValueError(
                f"class_weights has {w.shape[0]} entries, expected {num_classes}"
            )
        return w / w.sum()


def dice_squared_loss(pred, target, class_weights=None) -> Tensor:
    """Weighted dice loss with squared-denominator per-class overlap terms.

    1 - sum_c w_c * 2<p_c,y_c> / (|p_c|^2 + |y_c|^2 + eps), summed over batch
    and pixels per class.  Classes absent from the target are skipped (with a
    warning counter) and the remaining weights renormalised, so a perfect
    prediction always scores 0.
    """
    global degenerate_slice_count
    pred, target = T._wrap(pred), T._wrap(target)
    if pred.shape != target.shape:
        raise T.ShapeError(
            f"dice loss needs matching shapes, got {pred.shape} vs {target.shape}"
        )
    num_classes = pred.shape[-1]
    if class_weights is None:
        weights = np.full(num_classes, 1.0 / num_classes)
    else:
        weights = np.asarray(class_weights, dtype=np.float64)
        weights = weights / weights.sum()

    axes = tuple(range(pred.ndim - 1))
    inter = (pred * target).sum(axis=axes)
    p2 = (pred * pred).sum(axis=axes)
    g2 = (target * target).sum(axis=axes)

    present = np.asarray(g2.data) > 0
    if not present.all():
        skipped = int((~present & (weights > 0)).sum())
        if skipped:
            degenerate_slice_count += skipped
            warnings.warn(
                f"dice loss skipped {skipped} class(es) absent from the target",
                stacklevel=2,
            )
        weights = np.where(present, weights, 0.0)
        total = weights.sum()
        if total == 0:
            return Tensor(np.zeros((), dtype=pred.dtype))
        weights = weights / total

    dice = (inter * 2.0) / (p2 + g2 + DICE_SMOOTH)
    w = Tensor(weights.astype(pred.dtype).reshape(dice.shape))
    return 1.0 - (dice * w).sum()


def style_diversity_penalty(x1, x2, cfg: LossConfig) -> Tensor:
    """Reciprocal-MSE penalty pushing images from distinct noise apart.

    Bounded above by lambda1/lambda2, reached when the two images coincide.
    """
    return cfg.lambda1 / (T.mse(x1, x2) + cfg.lambda2)


def gamma_schedule(epoch: int, horizon: int, power: float = 2.0) -> float:
    """Inverse polynomial-decay ramp: 0 at epoch 0, 1 from `horizon` onwards."""
    if horizon <= 0:
        raise ValueError(f"gamma horizon must be positive, got {horizon}")
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    frac = min(epoch, horizon) / horizon
    return 1.0 - (1.0 - frac) ** power


def segmentation_loss_d(pred_real, pred_fake, target, gamma: float, cfg: LossConfig,
                        class_weights=None) -> Tensor:
    """Discriminator segmentation loss over the real/synthetic counter pair."""
    real_term = dice_squared_loss(pred_real, target, class_weights)
    if pred_fake is None or gamma == 0.0:
        return real_term
    fake_term = dice_squared_loss(pred_fake, target, class_weights)
    return real_term + (cfg.lambda3 * gamma) * fake_term


def segmentation_loss_g(pred_fake, target, class_weights=None) -> Tensor:
    """Semantic-consistency loss pulling synthetic predictions onto the label."""
    return dice_squared_loss(pred_fake, target, class_weights)


def draw_target_noise(rng: np.random.Generator, cfg: LossConfig, batch: int) -> np.ndarray:
    """Per-map half-Gaussian label softening, clamped to [0, zeta_clamp]."""
    if cfg.zeta_std == 0.0:
        return np.zeros((batch, 1, 1, 1))
    z = np.abs(rng.normal(0.0, cfg.zeta_std, size=(batch, 1, 1, 1)))
    return np.clip(z, 0.0, cfg.zeta_clamp)


def confidence_loss_d(c_real, c_fake, rng: np.random.Generator, cfg: LossConfig) -> Tensor:
    """Realness loss for the confidence branch: real toward 1, synthetic toward 0."""
    zr = draw_target_noise(rng, cfg, c_real.shape[0])
    zf = draw_target_noise(rng, cfg, c_fake.shape[0])
    return T.bce(c_real, 1.0 - zr) + T.bce(c_fake, zf)


def confidence_loss_g(c_fake, rng: np.random.Generator, cfg: LossConfig) -> Tensor:
    """Adversarial realness loss for the generator: synthetic toward 1."""
    z = draw_target_noise(rng, cfg, c_fake.shape[0])
    return T.bce(c_fake, 1.0 - z)


def _require_finite(name: str, value) -> None:
    data = value.data if isinstance(value, Tensor) else np.asarray(value)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"loss component {name!r} is not finite")


def generator_total(l_seg, l_conf, l_div, cfg: LossConfig) -> Tensor:
    """Hybrid generator loss: beta * segmentation + confidence + diversity."""
    _require_finite("l_gs", l_seg)
    _require_finite("l_gc", l_conf)
    total = cfg.beta * l_seg + l_conf
    if l_div is not None:
        _require_finite("l_gp", l_div)
        total = total + l_div
    return total


def discriminator_total(l_seg, l_conf) -> Tensor:
    """Hybrid discriminator loss: segmentation + confidence."""
    _require_finite("l_ds", l_seg)
    if l_conf is None:
        return l_seg
    _require_finite("l_dc", l_conf)
    return l_seg + l_conf
