"""Alternating adversarial training: one generator update then one
discriminator update per batch, polynomial learning-rate decay, a ramped
synthetic segmentation term, validation-best checkpoint selection, and a
JSONL line-per-epoch log."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import losses as L
from . import metrics, phantoms
from . import tensor as T
from .checkpoint import CheckpointState, load_checkpoint, save_checkpoint
from .discriminator import (
    CutoutConfig,
    DiscriminatorConfig,
    DualDiscriminator,
    random_cutout_gauss,
)
from .generator import Generator, GeneratorConfig
from .losses import LossConfig
from .tensor import NonFiniteError, Tensor

VARIANTS = ("full", "gs_no_gm", "d_only", "d_mixup")


class TrainingAborted(RuntimeError):
    def __init__(self, component: str, last_good: str | None):
        self.component = component
        self.last_good = last_good
        hint = f"; last good checkpoint: {last_good}" if last_good else ""
        super().__init__(f"non-finite loss in component {component!r}{hint}")


@dataclass
class RunConfig:
    data_manifest: str = ""
    out_dir: str = "runs/latest"
    epochs: int = 300
    batch_size: int = 8
    lr_g: float = 5e-3
    lr_d: float = 1e-3
    lr_decay_power: float = 2.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    val_every: int = 5
    variant: str = "full"
    mixup_alpha: float = 0.2
    loss: LossConfig = field(default_factory=lambda: LossConfig(gamma_horizon=150))
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    cutout: CutoutConfig = field(default_factory=CutoutConfig)

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if min(self.lr_g, self.lr_d) <= 0:
            raise ValueError("learning rates must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def has_generator(self) -> bool:
        return self.variant in ("full", "gs_no_gm")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        for key, sub in (
            ("loss", LossConfig),
            ("generator", GeneratorConfig),
            ("discriminator", DiscriminatorConfig),
            ("cutout", CutoutConfig),
        ):
            if key in data and isinstance(data[key], dict):
                data[key] = sub(**data[key])
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


def lr_schedule(step: int, total_steps: int, lr0: float, power: float = 2.0) -> float:
    """Polynomial decay lr0 * (1 - step/total)^power, hitting zero at the end."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * (1.0 - step / total_steps) ** power


class Adam:
    """Adam over a named parameter dict; moments keyed by parameter name."""

    def __init__(self, params: dict[str, Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self) -> dict:
        return {"step": self.step_count, "m": self.m, "v": self.v}

    def load_state(self, state: dict):
        self.step_count = state["step"]
        for name in self.params:
            self.m[name] = state["m"][name].astype(self.m[name].dtype)
            self.v[name] = state["v"][name].astype(self.v[name].dtype)


def standardize_batch(x: Tensor) -> Tensor:
    """Per-image zero-mean unit-variance, on the tape (network input form)."""
    m = x.mean(axis=(1, 2, 3), keepdims=True)
    centered = x - m
    var = (centered * centered).mean(axis=(1, 2, 3), keepdims=True)
    return centered / T.sqrt(var + 1e-6)


@dataclass
class Models:
    generator: Generator | None
    discriminator: DualDiscriminator
    adam_g: Adam | None
    adam_d: Adam

    def zero_grads(self):
        if self.adam_g is not None:
            self.adam_g.zero_grad()
        self.adam_d.zero_grad()


def build_models(cfg: RunConfig) -> Models:
    init_rng = np.random.default_rng([cfg.seed, 0])
    gen = None
    adam_g = None
    if cfg.has_generator:
        gen_cfg = cfg.generator
        if cfg.variant == "gs_no_gm":
            gen_cfg = dataclasses.replace(gen_cfg, modulated=False)
        gen = Generator(gen_cfg, init_rng)
        adam_g = Adam(gen.parameters(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    disc = DualDiscriminator(cfg.discriminator, init_rng)
    adam_d = Adam(disc.parameters(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return Models(gen, disc, adam_g, adam_d)


def train_step(
    models: Models,
    x01: np.ndarray,
    y: np.ndarray,
    cfg: RunConfig,
    gamma: float,
    lr_g: float,
    lr_d: float,
    rng: np.random.Generator,
    class_weights: np.ndarray | None = None,
) -> dict:
    """One generator update (two noise draws) followed by one discriminator
    update; returns every loss component as a float."""
    gen, disc = models.generator, models.discriminator
    y_t = Tensor(y)
    report: dict[str, float | None] = {
        "l_g": None, "l_gs": None, "l_gc": None, "l_gp": None,
        "l_d": None, "l_ds": None, "l_dc": None,
    }
    fake_image = None

    if gen is not None:
        models.zero_grads()
        if gen.cfg.modulated:
            s1 = gen.map_noise(gen.draw_noise(rng), update_u=True)
            s2 = gen.map_noise(gen.draw_noise(rng), update_u=False)
            fake1, fake2 = gen.synthesis.synthesize_many(y_t, [s1, s2])
            l_gp = L.style_diversity_penalty(fake1, fake2, cfg.loss)
        else:
            fake1 = gen.synthesize(y_t, None)
            l_gp = None
        pred_fake, conf_fake = disc.forward(
            standardize_batch(fake1), train_mode=True, rng=rng
        )
        l_gs = L.segmentation_loss_g(pred_fake, y_t, class_weights)
        l_gc = L.confidence_loss_g(conf_fake, rng, cfg.loss)
        l_g = L.generator_total(l_gs, l_gc, l_gp, cfg.loss)
        l_g.backward()
        models.adam_g.step(lr_g)
        models.zero_grads()
        fake_image = Tensor(fake1.data.copy())
        report.update(
            l_g=l_g.item(), l_gs=l_gs.item(), l_gc=l_gc.item(),
            l_gp=None if l_gp is None else l_gp.item(),
        )

    models.zero_grads()
    x_t = Tensor(x01)
    if gen is not None:
        # real and synthetic halves share one discriminator pass
        x_in = random_cutout_gauss(x_t, cfg.cutout, rng)
        fake_in = random_cutout_gauss(fake_image, cfg.cutout, rng)
        batch = len(x01)
        both = Tensor(np.concatenate([x_in.data, fake_in.data], axis=0))
        pred, conf = disc.forward(standardize_batch(both), train_mode=True, rng=rng)
        pred_real = T.slice_batch(pred, 0, batch)
        pred_fake = T.slice_batch(pred, batch, 2 * batch)
        conf_real = T.slice_batch(conf, 0, batch)
        conf_fake = T.slice_batch(conf, batch, 2 * batch)
        l_ds = L.segmentation_loss_d(pred_real, pred_fake, y_t, gamma, cfg.loss, class_weights)
        l_dc = L.confidence_loss_d(conf_real, conf_fake, rng, cfg.loss)
    else:
        pred_real, _ = disc.forward(standardize_batch(x_t), train_mode=True, rng=rng)
        l_ds = L.dice_squared_loss(pred_real, y_t, class_weights)
        l_dc = None
    l_d = L.discriminator_total(l_ds, l_dc)
    l_d.backward()
    models.adam_d.step(lr_d)
    models.zero_grads()
    report.update(
        l_d=l_d.item(), l_ds=l_ds.item(), l_dc=None if l_dc is None else l_dc.item()
    )
    return report


def validate(models: Models, images: np.ndarray, labels: np.ndarray, batch_size: int) -> float:
    """Mean foreground dice over a split (argmax masks, inference mode)."""
    num_classes = labels.shape[-1]
    gt_idx = labels.argmax(axis=-1)
    scores = []
    with T.no_grad():
        for start in range(0, len(images), batch_size):
            x = Tensor(images[start : start + batch_size])
            pred = models.discriminator.seg.forward(standardize_batch(x))
            pred_idx = pred.data.argmax(axis=-1)
            for i in range(len(pred_idx)):
                per_class = [
                    metrics.dsc(pred_idx[i] == c, gt_idx[start + i] == c)[0]
                    for c in range(1, num_classes)
                ]
                scores.append(np.mean(per_class))
    return float(np.mean(scores))


@dataclass
class FitResult:
    best_path: Path
    final_path: Path
    log_path: Path
    best_val_dsc: float
    history: list


def _gather_state(models: Models, cfg: RunConfig, epoch, rng, val_history) -> CheckpointState:
    params = {}
    extra = {}
    if models.generator is not None:
        for k, p in models.generator.parameters().items():
            params[f"g.{k}"] = p.data
        for k, a in models.generator.state_arrays().items():
            extra[f"g.{k}"] = a
    for k, p in models.discriminator.parameters().items():
        params[f"d.{k}"] = p.data
    return CheckpointState(
        params=params,
        extra_arrays=extra,
        opt_g=None if models.adam_g is None else models.adam_g.state_dict(),
        opt_d=models.adam_d.state_dict(),
        epoch=epoch,
        rng_state=rng.bit_generator.state,
        val_history=val_history,
        config=cfg.to_dict(),
        meta={"style_dim": cfg.generator.style_dim, "variant": cfg.variant},
    )


def restore_models(state: CheckpointState) -> tuple[Models, RunConfig]:
    """Rebuild models from a checkpoint, bit-exact parameters included."""
    cfg = RunConfig.from_dict(state.config)
    models = build_models(cfg)
    if models.generator is not None:
        for k, p in models.generator.parameters().items():
            p.data = state.params[f"g.{k}"].astype(p.dtype).reshape(p.shape)
        if models.generator.mapping is not None:
            for i, layer in enumerate(models.generator.mapping.layers):
                layer.u = state.extra_arrays[f"g.mapping.{i}.u"].astype(np.float64)
        if state.opt_g is not None:
            models.adam_g.load_state(state.opt_g)
    for k, p in models.discriminator.parameters().items():
        p.data = state.params[f"d.{k}"].astype(p.dtype).reshape(p.shape)
    models.adam_d.load_state(state.opt_d)
    return models, cfg


def fit(cfg: RunConfig, resume_from=None, quiet: bool = True, stop_after: int | None = None) -> FitResult:
    """Run the full schedule; keep the best-validation and final checkpoints.

    stop_after interrupts training after that many epochs (schedules still
    span cfg.epochs); resume_from continues a run from its final checkpoint.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "log.jsonl"
    best_path = out / "best.gase"
    final_path = out / "final.gase"

    train_pairs = phantoms.load_split(cfg.data_manifest, "train")
    val_pairs = phantoms.load_split(cfg.data_manifest, "val")
    if not train_pairs or not val_pairs:
        raise ValueError("dataset manifest has an empty train or val split")
    train_x, train_y = phantoms.stack_pairs(train_pairs)
    val_x, val_y = phantoms.stack_pairs(val_pairs)
    if cfg.loss.class_weights is not None:
        class_weights = cfg.loss.weights_for(train_y.shape[-1])
    else:
        class_weights = phantoms.inverse_frequency_weights(train_y)

    rng = np.random.default_rng([cfg.seed, 1])
    start_epoch = 0
    val_history: list = []
    best_val = -1.0
    if resume_from is not None:
        state = load_checkpoint(resume_from)
        models, _ = restore_models(state)
        rng.bit_generator.state = state.rng_state
        start_epoch = state.epoch + 1
        val_history = list(state.val_history)
        best_val = max((v for _, v in val_history), default=-1.0)
        log_fh = open(log_path, "a")
    else:
        models = build_models(cfg)
        log_fh = open(log_path, "w")

    n = len(train_x)
    steps = max(1, n // cfg.batch_size)
    end_epoch = cfg.epochs if stop_after is None else min(stop_after, cfg.epochs)
    last_epoch = start_epoch - 1
    history = []
    t0 = time.time()
    try:
        for epoch in range(start_epoch, end_epoch):
            last_epoch = epoch
            lr_g = lr_schedule(epoch, cfg.epochs, cfg.lr_g, cfg.lr_decay_power)
            lr_d = lr_schedule(epoch, cfg.epochs, cfg.lr_d, cfg.lr_decay_power)
            gamma = L.gamma_schedule(epoch, cfg.loss.gamma_horizon, cfg.loss.gamma_power)
            perm = rng.permutation(n)
            sums: dict[str, float] = {}
            counts: dict[str, int] = {}
            for step in range(steps):
                idx = perm[step * cfg.batch_size : (step + 1) * cfg.batch_size]
                bx, by = train_x[idx], train_y[idx]
                if cfg.variant == "d_mixup":
                    lam = rng.beta(cfg.mixup_alpha, cfg.mixup_alpha, size=(len(idx), 1, 1, 1))
                    partner = rng.permutation(len(idx))
                    bx = (lam * bx + (1 - lam) * bx[partner]).astype(np.float32)
                    by = (lam * by + (1 - lam) * by[partner]).astype(np.float32)
                try:
                    report = train_step(
                        models, bx, by, cfg, gamma, lr_g, lr_d, rng, class_weights
                    )
                except NonFiniteError as exc:
                    log_fh.close()
                    last_good = str(best_path) if best_path.exists() else None
                    raise TrainingAborted(str(exc), last_good) from exc
                for key, value in report.items():
                    if value is not None:
                        sums[key] = sums.get(key, 0.0) + value
                        counts[key] = counts.get(key, 0) + 1

            record = {"epoch": epoch}
            for key in ("l_g", "l_gs", "l_gc", "l_gp", "l_d", "l_ds", "l_dc"):
                record[key] = sums[key] / counts[key] if key in sums else None
            record.update(gamma=gamma, lr_g=lr_g, lr_d=lr_d, val_dsc=None)

            if (epoch % cfg.val_every == 0) or (epoch == cfg.epochs - 1):
                val_dsc = validate(models, val_x, val_y, cfg.batch_size)
                record["val_dsc"] = val_dsc
                val_history.append((epoch, val_dsc))
                if val_dsc > best_val:
                    best_val = val_dsc
                    save_checkpoint(
                        best_path, _gather_state(models, cfg, epoch, rng, val_history)
                    )
            log_fh.write(json.dumps(record) + "\n")
            log_fh.flush()
            history.append(record)
            if not quiet:
                msg = {k: (round(v, 4) if isinstance(v, float) else v) for k, v in record.items()}
                print(f"[{time.time() - t0:7.1f}s] {msg}")
    finally:
        if not log_fh.closed:
            log_fh.close()

    save_checkpoint(final_path, _gather_state(models, cfg, last_epoch, rng, val_history))
    if not best_path.exists():
        save_checkpoint(best_path, _gather_state(models, cfg, last_epoch, rng, val_history))
    try:
        from . import reports

        reports.save_loss_curves(history, out / "curves.png")
    except Exception:
        pass  # figures are best-effort; training artefacts stand alone
    return FitResult(best_path, final_path, log_path, best_val, history)
