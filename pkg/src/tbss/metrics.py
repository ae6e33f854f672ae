"""Hausdorff-distance evaluation of contours against boundary annotations."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .volume import INNER, OUTER, VolumeError, VoxelSpacing, as_label_volume, check_slice_meta

CHANNELS = ("inner", "outer")
STRATA = ("healthy", "unhealthy")
_CHUNK = 2048


def _as_points(points) -> np.ndarray:
    if hasattr(points, "as_array"):
        points = points.as_array()
    return np.asarray(points, dtype=np.float64).reshape(-1, 2)


def directed_hausdorff(a, b) -> float:
    """max over ``a`` of the Euclidean distance to the nearest point of ``b``."""
    a, b = _as_points(a), _as_points(b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("Hausdorff distance needs two non-empty point sets")
    worst = 0.0
    for lo in range(0, len(a), _CHUNK):
        chunk = a[lo:lo + _CHUNK]
        dx = chunk[:, None, 0] - b[None, :, 0]
        dy = chunk[:, None, 1] - b[None, :, 1]
        worst = max(worst, float((dx * dx + dy * dy).min(axis=1).max()))
    # sqrt is monotone and correctly rounded, so this equals max-min of sqrt
    return math.sqrt(worst)


def hausdorff(a, b) -> float:
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))


@dataclass
class CellStats:
    mean: float | None
    count: int
    excluded: int


@dataclass
class EvalReport:
    units: str
    healthy: list[bool]
    per_slice: dict[str, list[float | None]] = field(default_factory=dict)

    def cell(self, channel: str, stratum: str | None = None) -> CellStats:
        """Mean over included slices of one channel, optionally one stratum."""
        want = None if stratum is None else (stratum == "healthy")
        values, excluded = [], 0
        for d, ok in zip(self.per_slice[channel], self.healthy):
            if want is not None and ok != want:
                continue
            if d is None:
                excluded += 1
            else:
                values.append(d)
        total = 0.0
        for v in values:
            total += v
        return CellStats(total / len(values) if values else None, len(values), excluded)

    @property
    def cells(self) -> dict[str, CellStats]:
        return {f"{c}_{s}": self.cell(c, s) for c in CHANNELS for s in STRATA}

    def to_dict(self) -> dict:
        return {
            "units": self.units,
            "cells": {k: vars(v) for k, v in self.cells.items()},
            "overall": {c: vars(self.cell(c)) for c in CHANNELS},
            "healthy": list(self.healthy),
            "per_slice": self.per_slice,
        }


def evaluate(contours: Sequence, gt, healthy: Sequence[bool],
             spacing: VoxelSpacing | None = None) -> EvalReport:
    """Per-slice Hausdorff distance of predicted contours to annotated boundaries.

    ``contours[n]`` is an ``(inner, outer)`` pair of point sets.  Slices where
    either set is empty are excluded (recorded as ``None``) rather than scored.
    Distances are in voxels, or millimetres when ``spacing`` is given.
    """
    gt = as_label_volume(gt)
    n = gt.shape[0]
    if len(contours) != n:
        raise VolumeError(f"{len(contours)} contour slices for a {n}-slice annotation")
    check_slice_meta(healthy, n)
    scale = spacing.in_plane_mm if spacing is not None else 1.0
    per_slice = {c: [] for c in CHANNELS}
    for k in range(n):
        for idx, (name, label) in enumerate(zip(CHANNELS, (INNER, OUTER))):
            pred = _as_points(contours[k][idx])
            truth = np.argwhere(gt[k] == label)
            if len(pred) == 0 or len(truth) == 0:
                per_slice[name].append(None)
            else:
                per_slice[name].append(hausdorff(pred, truth) * scale)
    units = "mm" if spacing is not None else "voxels"
    return EvalReport(units, [bool(h) for h in healthy], per_slice)


def save_report(report: EvalReport, json_path, csv_path=None) -> None:
    """JSON with every field, plus a CSV with one column per channel and stratum."""
    with open(json_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    if csv_path is None:
        return
    cells = report.cells
    keys = list(cells)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", *keys])
        writer.writerow(["mean_hausdorff_" + report.units, *("" if cells[k].mean is None else repr(cells[k].mean)
                                                            for k in keys)])
        writer.writerow(["slices", *(cells[k].count for k in keys)])
        writer.writerow(["excluded", *(cells[k].excluded for k in keys)])
