import dataclasses
import json

import numpy as np
import pytest

from gase import checkpoint as ckpt
from gase import phantoms, trainer
from gase.tensor import Tensor
from gase.trainer import Adam, Models, RunConfig, build_models, lr_schedule, train_step


class TestLrSchedule:
    def test_initial_value(self):
        assert lr_schedule(0, 2000, 5e-3) == 5e-3

    def test_final_value_is_zero(self):
        assert lr_schedule(2000, 2000, 5e-3) == 0.0

    def test_midpoint_quarter(self):
        assert lr_schedule(1000, 2000, 5e-3, 2.0) == pytest.approx(1.25e-3)

    def test_bad_total(self):
        with pytest.raises(ValueError, match="total_steps"):
            lr_schedule(0, 0, 1e-3)


class TestAdam:
    def test_zero_lr_keeps_params_bit_exact(self):
        p = Tensor(np.random.default_rng(0).random((3, 3)).astype(np.float32), requires_grad=True)
        before = p.data.copy()
        opt = Adam({"p": p})
        p.accumulate_grad(np.ones_like(p.data))
        opt.step(0.0)
        np.testing.assert_array_equal(p.data, before)

    def test_descends_a_quadratic(self):
        p = Tensor(np.array([[4.0, -3.0]], np.float32), requires_grad=True)
        opt = Adam({"p": p})
        for _ in range(200):
            opt.zero_grad()
            (p * p).sum().backward()
            opt.step(0.05)
        assert np.abs(p.data).max() < 0.1

    def test_skips_params_without_grad(self):
        p = Tensor(np.ones((2, 2), np.float32), requires_grad=True)
        q = Tensor(np.ones((2, 2), np.float32), requires_grad=True)
        opt = Adam({"p": p, "q": q})
        p.accumulate_grad(np.ones((2, 2), np.float32))
        opt.step(0.1)
        np.testing.assert_array_equal(q.data, np.ones((2, 2)))
        assert not np.array_equal(p.data, np.ones((2, 2)))


def _one_batch(manifest, batch=4):
    pairs = phantoms.load_split(manifest, "train")[:batch]
    return phantoms.stack_pairs(pairs)


class TestTrainStep:
    def test_zero_lr_changes_nothing(self, tiny_config, tiny_manifest):
        cfg = tiny_config()
        models = build_models(cfg)
        x, y = _one_batch(tiny_manifest)
        before = {k: p.data.copy() for k, p in models.discriminator.parameters().items()}
        before_g = {k: p.data.copy() for k, p in models.generator.parameters().items()}
        train_step(models, x, y, cfg, 0.5, 0.0, 0.0, np.random.default_rng(0))
        for k, p in models.discriminator.parameters().items():
            np.testing.assert_array_equal(p.data, before[k])
        for k, p in models.generator.parameters().items():
            np.testing.assert_array_equal(p.data, before_g[k])

    def test_phases_touch_only_their_network(self, tiny_config, tiny_manifest):
        cfg = tiny_config()
        models = build_models(cfg)
        x, y = _one_batch(tiny_manifest)
        g_before = {k: p.data.copy() for k, p in models.generator.parameters().items()}
        train_step(models, x, y, cfg, 0.5, 0.0, 1e-3, np.random.default_rng(0))
        for k, p in models.generator.parameters().items():
            np.testing.assert_array_equal(p.data, g_before[k])
        d_before = {k: p.data.copy() for k, p in models.discriminator.parameters().items()}
        train_step(models, x, y, cfg, 0.5, 1e-3, 0.0, np.random.default_rng(0))
        for k, p in models.discriminator.parameters().items():
            np.testing.assert_array_equal(p.data, d_before[k])

    def test_repeated_steps_descend_d_loss(self, tiny_config, tiny_manifest):
        # dropout off so the comparison sees optimisation, not mask noise
        cfg = tiny_config(variant="d_only")
        cfg.discriminator = dataclasses.replace(cfg.discriminator, dropout=0.0)
        models = build_models(cfg)
        x, y = _one_batch(tiny_manifest)
        rng = np.random.default_rng(1)
        first = train_step(models, x, y, cfg, 0.0, 0.0, 1e-6, rng)["l_d"]
        last = None
        for _ in range(20):
            last = train_step(models, x, y, cfg, 0.0, 0.0, 1e-6, rng)["l_d"]
        assert last <= first

    def test_identical_seeds_identical_traces(self, tiny_config, tiny_manifest):
        cfg = tiny_config()
        x, y = _one_batch(tiny_manifest)

        def run():
            models = build_models(cfg)
            rng = np.random.default_rng(3)
            return [
                train_step(models, x, y, cfg, 0.3, 1e-3, 1e-3, rng) for _ in range(5)
            ]

        assert run() == run()

    def test_report_carries_all_components(self, tiny_config, tiny_manifest):
        cfg = tiny_config()
        models = build_models(cfg)
        x, y = _one_batch(tiny_manifest)
        report = train_step(models, x, y, cfg, 0.5, 1e-3, 1e-3, np.random.default_rng(4))
        for key in ("l_g", "l_gs", "l_gc", "l_gp", "l_d", "l_ds", "l_dc"):
            assert report[key] is not None and np.isfinite(report[key])

    def test_variant_reports(self, tiny_config, tiny_manifest):
        x, y = _one_batch(tiny_manifest)
        cfg = tiny_config(variant="d_only")
        report = train_step(
            build_models(cfg), x, y, cfg, 0.0, 0.0, 1e-3, np.random.default_rng(0)
        )
        assert report["l_g"] is None and report["l_dc"] is None
        cfg = tiny_config(variant="gs_no_gm")
        report = train_step(
            build_models(cfg), x, y, cfg, 0.5, 1e-3, 1e-3, np.random.default_rng(0)
        )
        assert report["l_gp"] is None and report["l_gs"] is not None


class TestFit:
    def test_nonfinite_loss_aborts_with_last_good_path(self, tiny_config, monkeypatch):
        from gase import losses as L

        cfg = tiny_config(epochs=3)
        calls = {"n": 0}
        real = L.dice_squared_loss

        def poisoned(pred, target, class_weights=None):
            calls["n"] += 1
            if calls["n"] > 30:  # blow up partway through epoch 1
                bad = real(pred, target, class_weights)
                bad.data = np.array(np.nan, dtype=bad.dtype)
                return bad
            return real(pred, target, class_weights)

        monkeypatch.setattr("gase.losses.dice_squared_loss", poisoned)
        with pytest.raises(trainer.TrainingAborted) as err:
            trainer.fit(cfg)
        assert "l_" in str(err.value)
        assert err.value.last_good is None or err.value.last_good.endswith("best.gase")

    def test_smoke_writes_checkpoints_and_log(self, tiny_config):
        cfg = tiny_config()
        result = trainer.fit(cfg)
        assert result.best_path.exists() and result.final_path.exists()
        records = [json.loads(line) for line in result.log_path.read_text().splitlines()]
        assert len(records) == cfg.epochs
        expected_keys = {
            "epoch", "l_g", "l_gs", "l_gc", "l_gp", "l_d", "l_ds", "l_dc",
            "gamma", "lr_g", "lr_d", "val_dsc",
        }
        assert set(records[0]) == expected_keys
        assert records[0]["gamma"] == 0.0  # ramp starts at zero

    def test_best_dsc_at_least_final(self, tiny_config):
        cfg = tiny_config(epochs=3)
        result = trainer.fit(cfg)
        best = ckpt.load_checkpoint(result.best_path)
        final = ckpt.load_checkpoint(result.final_path)
        best_dsc = max(v for _, v in best.val_history)
        final_dsc = final.val_history[-1][1]
        assert best_dsc >= final_dsc

    def test_full_determinism_across_runs(self, tiny_manifest, tmp_path):
        from conftest import tiny_run_config

        def run(out):
            cfg = tiny_run_config(tiny_manifest, tmp_path / out)
            return [r["l_d"] for r in trainer.fit(cfg).history]

        assert run("a") == run("b")


class TestCheckpoint:
    def test_round_trip_forward_bit_exact(self, tiny_config, tiny_manifest):
        cfg = tiny_config()
        models = build_models(cfg)
        x, y = _one_batch(tiny_manifest)
        train_step(models, x, y, cfg, 0.5, 1e-3, 1e-3, np.random.default_rng(0))
        state = trainer._gather_state(models, cfg, 0, np.random.default_rng(0), [])
        path = cfg.out_dir + "/ck.gase"
        import os

        os.makedirs(cfg.out_dir, exist_ok=True)
        ckpt.save_checkpoint(path, state)
        restored, _ = trainer.restore_models(ckpt.load_checkpoint(path))
        xin = Tensor(x)
        a = models.discriminator.seg.forward(trainer.standardize_batch(xin))
        b = restored.discriminator.seg.forward(trainer.standardize_batch(xin))
        np.testing.assert_array_equal(a.data, b.data)
        za = models.generator.synthesize(Tensor(y), models.generator.map_noise(
            Tensor(np.zeros((1, cfg.generator.noise_dim), np.float32))))
        zb = restored.generator.synthesize(Tensor(y), restored.generator.map_noise(
            Tensor(np.zeros((1, cfg.generator.noise_dim), np.float32))))
        np.testing.assert_array_equal(za.data, zb.data)

    def test_corrupted_byte_rejected(self, tiny_config, tmp_path):
        cfg = tiny_config()
        models = build_models(cfg)
        state = trainer._gather_state(models, cfg, 0, np.random.default_rng(0), [])
        path = tmp_path / "ck.gase"
        ckpt.save_checkpoint(path, state)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ckpt.IntegrityError, match="CRC32"):
            ckpt.load_checkpoint(path)

    def test_version_mismatch_explicit(self, tiny_config, tmp_path):
        cfg = tiny_config()
        state = trainer._gather_state(build_models(cfg), cfg, 0, np.random.default_rng(0), [])
        path = tmp_path / "ck.gase"
        ckpt.save_checkpoint(path, state)
        raw = bytearray(path.read_bytes())
        raw[4] = 99  # bump version field
        import struct, zlib

        body = bytes(raw[:-4])
        path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
        with pytest.raises(ckpt.VersionError, match="version 99"):
            ckpt.load_checkpoint(path)

    def test_resume_matches_uninterrupted(self, tiny_manifest, tmp_path):
        from conftest import tiny_run_config

        cfg_full = tiny_run_config(tiny_manifest, tmp_path / "full", epochs=4)
        full = trainer.fit(cfg_full)

        cfg_half = tiny_run_config(tiny_manifest, tmp_path / "half", epochs=4)
        cfg_half.out_dir = str(tmp_path / "half")
        trainer.fit(cfg_half, stop_after=2)  # interrupted run
        cfg_resumed = tiny_run_config(tiny_manifest, tmp_path / "resumed", epochs=4)
        resumed = trainer.fit(cfg_resumed, resume_from=tmp_path / "half" / "final.gase")

        full_tail = [r["l_d"] for r in full.history[2:]]
        resumed_tail = [r["l_d"] for r in resumed.history]
        np.testing.assert_allclose(resumed_tail, full_tail, atol=1e-6)
