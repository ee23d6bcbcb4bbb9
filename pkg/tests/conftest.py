import numpy as np
import pytest

from gase import phantoms
from gase.discriminator import CutoutConfig, DiscriminatorConfig
from gase.generator import GeneratorConfig
from gase.losses import LossConfig
from gase.trainer import RunConfig


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """16/8/8 pairs of 32x32 phantoms, shared across the test session."""
    data_dir = tmp_path_factory.mktemp("phantom-data")
    return phantoms.generate_dataset(
        data_dir, n_train=16, n_val=8, n_test=8, seed=5, size=32
    )


def tiny_run_config(manifest, out_dir, **overrides) -> RunConfig:
    """Small-but-complete config: trains in seconds, exercises every path."""
    base = dict(
        data_manifest=str(manifest),
        out_dir=str(out_dir),
        epochs=2,
        batch_size=4,
        lr_g=1e-3,
        lr_d=1e-3,
        seed=7,
        val_every=1,
        variant="full",
        loss=LossConfig(gamma_horizon=1),
        generator=GeneratorConfig(
            noise_dim=8, style_dim=8, mapping_layers=2, label_channels=5,
            lead_blocks=1, lead_channels=6, cam_kernels=(3, 3),
            cam_channels=(8, 6), cam_dilations=(1, 2),
        ),
        discriminator=DiscriminatorConfig(levels=2, base_channels=4, conf_channels=4),
        cutout=CutoutConfig(),
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture
def tiny_config(tiny_manifest, tmp_path):
    def factory(**overrides):
        return tiny_run_config(tiny_manifest, tmp_path / "run", **overrides)

    return factory


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_manifest, tmp_path_factory):
    """A short real training run; returns (best checkpoint path, manifest)."""
    from gase import trainer

    out = tmp_path_factory.mktemp("tiny-run")
    cfg = tiny_run_config(tiny_manifest, out, epochs=2)
    result = trainer.fit(cfg)
    return result.best_path, tiny_manifest
