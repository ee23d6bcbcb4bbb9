"""Operator command line: data generation, training, evaluation, the ablation
grid, atlas export, and the explorer service.

Exit codes: 0 ok, 1 user error (bad flags/inputs), 2 internal error.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
import time
import traceback
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__, atlas, evaluate, phantoms, reports, trainer
from .checkpoint import checkpoint_digest


class UserError(click.ClickException):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def write_provenance(out_dir, command: str, seed=None, config_path=None, checkpoint=None,
                     extra: dict | None = None) -> Path:
    """Machine-readable record of what produced the artefacts in out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "seed": seed,
        "config_sha256": _sha256(config_path) if config_path else None,
        "checkpoint_sha256": checkpoint_digest(checkpoint) if checkpoint else None,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    record.update(extra or {})
    path = out / "provenance.json"
    path.write_text(json.dumps(record, indent=1))
    return path


@click.group()
def cli():
    """Adversarial segmentation with an explorable style manifold."""


@cli.command("gen-data")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML phantom spec: size, modality, split fractions.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n", "total", required=True, type=int, help="total pair count")
@click.option("--seed", default=0, type=int)
@click.option("--split", "split_spec", default=None,
              help="train/val/test counts, e.g. 200/50/50 (default 70/15/15 of --n)")
def gen_data(spec_path, out_dir, total, seed, split_spec):
    """Write phantom pairs (GPH1) plus a split manifest."""
    if total <= 0:
        raise UserError("--n must be positive")
    options = {}
    if spec_path:
        options = yaml.safe_load(Path(spec_path).read_text()) or {}
    size = int(options.pop("size", 64))
    modality = options.pop("modality", "A")
    if split_spec is None:
        split_spec = options.pop("split", None)
    if split_spec:
        try:
            n_train, n_val, n_test = (int(x) for x in str(split_spec).split("/"))
        except ValueError as exc:
            raise UserError(f"bad --split {split_spec!r}, expected a/b/c") from exc
        if n_train + n_val + n_test != total:
            raise UserError(f"split {split_spec} does not sum to --n {total}")
    else:
        n_train = int(round(total * 0.7))
        n_val = int(round(total * 0.15))
        n_test = total - n_train - n_val
    if options:
        raise UserError(f"unknown spec keys: {sorted(options)}")
    manifest = phantoms.generate_dataset(
        out_dir, n_train, n_val, n_test, seed=seed, size=size, modality=modality
    )
    write_provenance(out_dir, "gen-data", seed=seed, config_path=spec_path,
                     extra={"n": total, "split": [n_train, n_val, n_test]})
    click.echo(f"wrote {total} pairs, manifest: {manifest}")


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@click.option("--resume", "resume_from", default=None, type=click.Path(exists=True))
@click.option("--verbose/--quiet", default=True)
def train(config_path, out_dir, resume_from, verbose):
    """Run the adversarial training loop from a YAML run configuration."""
    try:
        cfg = trainer.RunConfig.from_file(config_path)
    except (TypeError, ValueError, yaml.YAMLError) as exc:
        raise UserError(f"bad config: {exc}") from exc
    if out_dir:
        cfg.out_dir = out_dir
    if not Path(cfg.data_manifest).exists():
        raise UserError(f"data manifest not found: {cfg.data_manifest}")
    result = trainer.fit(cfg, resume_from=resume_from, quiet=not verbose)
    write_provenance(cfg.out_dir, "train", seed=cfg.seed, config_path=config_path,
                     checkpoint=result.best_path,
                     extra={"best_val_dsc": result.best_val_dsc})
    click.echo(f"best val DSC {result.best_val_dsc:.4f}; checkpoints in {cfg.out_dir}")


@cli.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--split", default="test", type=click.Choice(["train", "val", "test"]))
@click.option("--spacing", default="1.0,1.0", help="pixel spacing in mm, e.g. 1.68,1.68")
def eval_cmd(checkpoint, manifest, out_dir, split, spacing):
    """Segmentation metrics (DSC/HD/MSD) over a split -> CSV + summary + figure."""
    try:
        sy, sx = (float(x) for x in spacing.split(","))
    except ValueError as exc:
        raise UserError(f"bad --spacing {spacing!r}") from exc
    summary = evaluate.evaluate_checkpoint(
        checkpoint, manifest, out_dir, split=split, spacing=(sy, sx)
    )
    write_provenance(out_dir, "eval", checkpoint=checkpoint,
                     extra={"split": split, "spacing": [sy, sx]})
    click.echo(json.dumps(summary["per_class"], indent=1))
    click.echo(f"mean foreground DSC: {summary['mean_foreground_dsc']:.4f}")


ABLATION_VARIANTS = ("d_only", "d_mixup", "gs_no_gm", "full")


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def ablate(config_path, out_dir):
    """Train and evaluate the component grid: segmentation net alone, with
    mixup, synthesis without the manifold mapping, and the full model."""
    try:
        base = trainer.RunConfig.from_file(config_path)
    except (TypeError, ValueError, yaml.YAMLError) as exc:
        raise UserError(f"bad config: {exc}") from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table_rows = []
    chart_rows = []
    for variant in ABLATION_VARIANTS:
        cfg = dataclasses.replace(base, variant=variant, out_dir=str(out / variant))
        click.echo(f"[{variant}] training {cfg.epochs} epochs ...")
        result = trainer.fit(cfg)
        summary = evaluate.evaluate_checkpoint(
            result.best_path, cfg.data_manifest, out / variant / "eval"
        )
        row = {"variant": variant}
        for metric in ("dsc", "hd", "msd"):
            for c, entry in summary["per_class"].items():
                if int(c) == 0:
                    continue
                name = entry["class_name"]
                row[f"{metric}_{name}_mean"] = entry[f"{metric}_mean"]
                row[f"{metric}_{name}_std"] = entry[f"{metric}_std"]
        table_rows.append(row)
        chart_rows.append(
            {
                "variant": variant,
                "dsc_mean": {
                    c: entry["dsc_mean"] for c, entry in summary["per_class"].items()
                },
            }
        )
    import csv as csv_mod

    with open(out / "ablation.csv", "w", newline="") as fh:
        writer = csv_mod.DictWriter(fh, fieldnames=list(table_rows[0].keys()))
        writer.writeheader()
        writer.writerows(table_rows)
    reports.save_ablation_chart(chart_rows, phantoms.CLASS_NAMES, out / "ablation.png")
    write_provenance(out_dir, "ablate", seed=base.seed, config_path=config_path)
    click.echo(f"ablation table: {out / 'ablation.csv'}")


@cli.command("atlas")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--n", "count", default=64, type=int)
@click.option("--method", default="pca", type=click.Choice(["pca", "tsne"]))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--data", "manifest", default=None, type=click.Path(exists=True, dir_okay=False),
              help="manifest providing the reference label (first validation pair)")
@click.option("--seed", default=0, type=int)
@click.option("--labels", "n_labels", default=8, type=int,
              help="extra validation label maps exported for the explorer")
def atlas_cmd(checkpoint, count, method, out_dir, manifest, seed, n_labels):
    """Sample the learnt manifold and export the projection atlas."""
    if count < 2:
        raise UserError("--n must be at least 2")
    if manifest is None:
        raise UserError("--data manifest is required to pick the reference label")
    val_pairs = phantoms.load_split(manifest, "val")
    if not val_pairs:
        raise UserError("validation split is empty")
    reference = val_pairs[0].label
    index = atlas.build_atlas(checkpoint, out_dir, count, seed, method, reference)
    atlas.export_labels(val_pairs[: max(1, n_labels)], Path(out_dir) / "labels")
    bundle = atlas.load_atlas(out_dir)
    reports.save_atlas_scatter(bundle["points"], Path(out_dir) / "manifold.png")
    write_provenance(out_dir, "atlas", seed=seed, checkpoint=checkpoint,
                     extra={"n": count, "method": method})
    click.echo(f"atlas index: {index}")


@cli.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--atlas", "atlas_dir", default=None, type=click.Path(file_okay=False))
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--ui", "ui_dir", default=None, type=click.Path(file_okay=False),
              help="directory of built explorer assets served under /")
def serve(checkpoint, atlas_dir, port, host, ui_dir):
    """Start the HTTP inference service for the explorer."""
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint, atlas_dir=atlas_dir, ui_dir=ui_dir)
    click.echo(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
