"""Segmentation evaluation: per-class dice overlap plus symmetric boundary
distances (Hausdorff and mean surface distance) under anisotropic pixel
spacing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClassMetrics:
    dsc: float
    hd: float | None  # mm; None when either mask is empty
    msd: float | None  # mm
    pred_empty: bool
    gt_empty: bool

    @property
    def distances_defined(self) -> bool:
        return self.hd is not None


@dataclass
class MetricReport:
    per_class: dict[int, ClassMetrics]
    spacing: tuple[float, float]
    flags: list[str] = field(default_factory=list)

    def mean_dsc(self, classes=None) -> float:
        keys = classes if classes is not None else sorted(self.per_class)
        return float(np.mean([self.per_class[c].dsc for c in keys]))


def dsc(pred_mask: np.ndarray, gt_mask: np.ndarray) -> tuple[float, bool]:
    """Overlap ratio 2|P&G| / (|P|+|G|); (1.0, flagged) when both are empty."""
    pred_mask = np.asarray(pred_mask, dtype=bool)
    gt_mask = np.asarray(gt_mask, dtype=bool)
    if pred_mask.shape != gt_mask.shape:
        raise ValueError(
            f"mask shapes differ: {pred_mask.shape} vs {gt_mask.shape}"
        )
    p, g = pred_mask.sum(), gt_mask.sum()
    if p + g == 0:
        return 1.0, True
    return float(2.0 * np.logical_and(pred_mask, gt_mask).sum() / (p + g)), False


def boundary(mask: np.ndarray) -> np.ndarray:
    """Coordinates (row, col) of mask pixels with a 4-neighbour outside the
    mask or lying on the image edge; (0, 2) array for an empty mask."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.zeros((0, 2), dtype=np.int64)
    interior = np.zeros_like(mask)
    interior[1:-1, 1:-1] = (
        mask[1:-1, 1:-1]
        & mask[:-2, 1:-1]
        & mask[2:, 1:-1]
        & mask[1:-1, :-2]
        & mask[1:-1, 2:]
    )
    return np.argwhere(mask & ~interior)


def surface_distances(
    pred_mask: np.ndarray,
    gt_mask: np.ndarray,
    spacing: tuple[float, float] = (1.0, 1.0),
) -> tuple[float | None, float | None]:
    """Symmetric boundary distances (Hausdorff, mean surface distance) in mm.

    Directed nearest-boundary distances are taken in both directions; the
    Hausdorff distance is the max over both, the mean surface distance the
    mean over the union of both directed sets.  Returns (None, None) when
    either mask is empty.
    """
    pred_mask = np.asarray(pred_mask, dtype=bool)
    gt_mask = np.asarray(gt_mask, dtype=bool)
    if not pred_mask.any() or not gt_mask.any():
        return None, None
    pb = boundary(pred_mask).astype(np.float64) * np.asarray(spacing, dtype=np.float64)
    gb = boundary(gt_mask).astype(np.float64) * np.asarray(spacing, dtype=np.float64)
    diff = pb[:, None, :] - gb[None, :, :]
    dist = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)
    d_pg = dist.min(axis=1)
    d_gp = dist.min(axis=0)
    hd = float(max(d_pg.max(), d_gp.max()))
    # fsum: correctly-rounded mean, independent of accumulation order
    msd = math.fsum(d_pg) + math.fsum(d_gp)
    msd /= d_pg.size + d_gp.size
    return hd, float(msd)


def evaluate_labels(
    pred_labels: np.ndarray,
    gt_labels: np.ndarray,
    num_classes: int,
    spacing: tuple[float, float] = (1.0, 1.0),
) -> MetricReport:
    """Per-class report from integer label rasters of one sample."""
    per_class: dict[int, ClassMetrics] = {}
    flags: list[str] = []
    for c in range(num_classes):
        pm = pred_labels == c
        gm = gt_labels == c
        overlap, both_empty = dsc(pm, gm)
        hd, msd = surface_distances(pm, gm, spacing)
        if both_empty:
            flags.append(f"class {c}: empty in prediction and reference")
        elif hd is None:
            flags.append(f"class {c}: surface distances undefined (empty mask)")
        per_class[c] = ClassMetrics(
            dsc=overlap, hd=hd, msd=msd, pred_empty=not pm.any(), gt_empty=not gm.any()
        )
    return MetricReport(per_class=per_class, spacing=tuple(spacing), flags=flags)
