"""Global Otsu thresholding baseline."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .volume import VolumeError, as_probability_volume, merge_labels

BINS = 256


class DegenerateInputError(ValueError):
    """Raised when a volume has no two-class split (empty or single-bin)."""


def bin_index(values, bins: int = BINS) -> np.ndarray:
    """Bin ``k`` holds ``(k/bins, (k+1)/bins]``; 0.0 joins bin 0.

    Right-closed bins make ``p > (k+1)/bins`` select exactly the bins above ``k``.
    """
    values = np.asarray(values, dtype=np.float64)
    return np.clip(np.ceil(values * bins).astype(np.int64) - 1, 0, bins - 1)


def histogram(vol, bins: int = BINS) -> np.ndarray:
    """Counts over ``bins`` uniform bins on [0, 1]."""
    return np.bincount(bin_index(vol, bins).ravel(), minlength=bins)


def between_class_variances(counts) -> list[Fraction | None]:
    """Exact between-class variance for every split ``[0..k] | [k+1..]``.

    Values are ratios proportional to the variance (the common factor
    ``1 / (n^2 * (2 * bins)^2)`` is dropped), which keeps comparisons exact.
    ``None`` marks splits with an empty class.
    """
    counts = [int(c) for c in counts]
    n = sum(counts)
    total = sum(c * (2 * i + 1) for i, c in enumerate(counts))
    out = []
    n0 = s0 = 0
    for k in range(len(counts) - 1):
        n0 += counts[k]
        s0 += counts[k] * (2 * k + 1)
        n1, s1 = n - n0, total - s0
        if n0 == 0 or n1 == 0:
            out.append(None)
        else:
            out.append(Fraction((s0 * n1 - s1 * n0) ** 2, n0 * n1))
    return out


def otsu_bin(vol, bins: int = BINS) -> int:
    """Last bin of the lower class at the first maximum of between-class variance."""
    vol = np.asarray(vol)
    if vol.size == 0:
        raise DegenerateInputError("cannot threshold an empty volume")
    best, best_k = None, None
    for k, v in enumerate(between_class_variances(histogram(vol, bins))):
        if v is not None and (best is None or v > best):
            best, best_k = v, k
    if best_k is None:
        raise DegenerateInputError("all values fall in one histogram bin; no threshold separates them")
    return best_k


def otsu_threshold(vol, bins: int = BINS) -> float:
    """Global Otsu threshold of a probability volume.

    The upper edge of the lower class, so ``p > t`` reproduces the histogram
    split exactly.
    """
    vol = as_probability_volume(vol)
    return (otsu_bin(vol, bins) + 1) / bins


def baseline_reconstruct(inner, outer, fixed_threshold: float | None = None) -> np.ndarray:
    """Threshold each channel (``p > t``) and merge with inner priority.

    ``t`` is each channel's own Otsu threshold unless ``fixed_threshold`` is
    given, e.g. 0.5 to reproduce plain classification of the network output.
    """
    inner = as_probability_volume(inner)
    outer = as_probability_volume(outer)
    if inner.shape != outer.shape:
        raise VolumeError(f"inner {inner.shape} and outer {outer.shape} volumes differ in shape")
    if fixed_threshold is None:
        t_in, t_out = otsu_threshold(inner), otsu_threshold(outer)
    else:
        t_in = t_out = float(fixed_threshold)
    return merge_labels(inner > t_in, outer > t_out)
