"""Checkpoint evaluation over a dataset split: per-sample per-class metric
records as CSV, a JSON summary, and a bar-chart figure."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import metrics, phantoms, reports
from . import tensor as T
from .atlas import load_models
from .tensor import Tensor
from .trainer import Models, standardize_batch


def predict_labels(models: Models, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Argmax label rasters from the segmentation branch, inference mode."""
    preds = []
    with T.no_grad():
        for start in range(0, len(images), batch_size):
            x = Tensor(images[start : start + batch_size].astype(np.float32))
            out = models.discriminator.seg.forward(standardize_batch(x))
            preds.append(out.data.argmax(axis=-1))
    return np.concatenate(preds, axis=0)


def evaluate_split(
    models: Models,
    manifest,
    split: str = "test",
    spacing: tuple[float, float] = (1.0, 1.0),
) -> list[dict]:
    """Metric rows, one per sample per class."""
    pairs = phantoms.load_split(manifest, split)
    if not pairs:
        raise ValueError(f"split {split!r} is empty")
    images, labels = phantoms.stack_pairs(pairs)
    pred_idx = predict_labels(models, images)
    gt_idx = labels.argmax(axis=-1)
    num_classes = labels.shape[-1]
    rows = []
    for i in range(len(images)):
        report = metrics.evaluate_labels(pred_idx[i], gt_idx[i], num_classes, spacing)
        for c, cm in report.per_class.items():
            rows.append(
                {
                    "sample": pairs[i].meta.get("seed", i),
                    "class_id": c,
                    "class_name": phantoms.CLASS_NAMES[c],
                    "dsc": cm.dsc,
                    "hd": cm.hd,
                    "msd": cm.msd,
                    "pred_empty": cm.pred_empty,
                    "gt_empty": cm.gt_empty,
                }
            )
    return rows


def summarize(rows: list[dict]) -> dict:
    """Per-class mean/std for each metric plus the mean foreground dice."""
    num_classes = max(r["class_id"] for r in rows) + 1
    summary: dict = {"per_class": {}, "spacing_rows": len(rows)}
    for c in range(num_classes):
        cls_rows = [r for r in rows if r["class_id"] == c]
        entry = {"class_name": cls_rows[0]["class_name"]}
        for key in ("dsc", "hd", "msd"):
            vals = [r[key] for r in cls_rows if r[key] is not None]
            entry[f"{key}_mean"] = float(np.mean(vals)) if vals else None
            entry[f"{key}_std"] = float(np.std(vals)) if vals else None
            entry[f"{key}_undefined"] = len(cls_rows) - len(vals)
        summary["per_class"][c] = entry
    fg = [
        summary["per_class"][c]["dsc_mean"]
        for c in range(1, num_classes)
        if summary["per_class"][c]["dsc_mean"] is not None
    ]
    summary["mean_foreground_dsc"] = float(np.mean(fg)) if fg else None
    return summary


def write_rows_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return path


def evaluate_checkpoint(
    checkpoint_path,
    manifest,
    out_dir,
    split: str = "test",
    spacing: tuple[float, float] = (1.0, 1.0),
) -> dict:
    """Full eval: metrics.csv + summary.json + metrics.png in out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    models, _ = load_models(checkpoint_path)
    rows = evaluate_split(models, manifest, split, spacing)
    summary = summarize(rows)
    write_rows_csv(rows, out / "metrics.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    reports.save_metric_bars(rows, phantoms.CLASS_NAMES, out / "metrics.png")
    return summary
