"""Per-slice refinement: thinning, border following and inside contours."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .volume import as_label_volume, split_channels

# 8-neighbourhood in clockwise screen order (row grows downwards), from east.
_CLOCKWISE = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
_EIGHT = np.ones((3, 3), dtype=bool)
MIN_HOLE_RATIO = 0.5


@dataclass
class Contour:
    points: list[tuple[int, int]] = field(default_factory=list)
    closed: bool = False

    def __len__(self):
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# Thinning
# ---------------------------------------------------------------------------

def _build_luts():
    # bit i of the code is neighbour P(i+2): N, NE, E, SE, S, SW, W, NW
    first = np.zeros(256, dtype=bool)
    second = np.zeros(256, dtype=bool)
    for code in range(256):
        p = [(code >> i) & 1 for i in range(8)]
        p2, p3, p4, p5, p6, p7, p8, p9 = p
        b = sum(p)
        a = sum(1 for i in range(8) if p[i] == 0 and p[(i + 1) % 8] == 1)
        if 2 <= b <= 6 and a == 1:
            first[code] = p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
            second[code] = p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
    return first, second


_LUTS = _build_luts()


def _codes(img: np.ndarray) -> np.ndarray:
    pad = np.pad(img, 1).astype(np.uint8)
    h, w = img.shape
    views = (pad[:-2, 1:-1], pad[:-2, 2:], pad[1:-1, 2:], pad[2:, 2:],
             pad[2:, 1:-1], pad[2:, :-2], pad[1:-1, :-2], pad[:-2, :-2])
    code = np.zeros((h, w), dtype=np.uint8)
    for bit, v in enumerate(views):
        code |= v << bit
    return code


def skeletonize(mask) -> np.ndarray:
    """Zhang-Suen two-subiteration thinning to a fixpoint.

    8-connected foreground, 4-connected background.  A subiteration that would
    delete every pixel of a component (e.g. an isolated 2x2 block) keeps that
    component's smallest (row, col) pixel, so the component count survives.
    """
    img = np.asarray(mask).astype(bool)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-d mask, got shape {img.shape}")
    img = img.copy()
    changed = True
    while changed:
        changed = False
        for lut in _LUTS:
            flagged = img & lut[_codes(img)]
            if not flagged.any():
                continue
            labels, n = ndimage.label(img, structure=_EIGHT)
            sizes = np.bincount(labels.ravel(), minlength=n + 1)
            hits = np.bincount(labels[flagged], minlength=n + 1)
            for comp in np.flatnonzero((hits == sizes) & (sizes > 0)):
                if comp == 0:
                    continue
                r, c = np.argwhere(labels == comp)[0]
                flagged[r, c] = False
            img &= ~flagged
            changed = changed or bool(flagged.any())
    return img.astype(np.uint8)


# ---------------------------------------------------------------------------
# Border following
# ---------------------------------------------------------------------------

def _normalise(points: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Start at the smallest (row, col) point and run clockwise on screen."""
    if len(points) < 3:
        return points
    start = points.index(min(points))
    pts = points[start:] + points[:start]
    area = 0
    for (r0, c0), (r1, c1) in zip(pts, pts[1:] + pts[:1]):
        area += c0 * r1 - c1 * r0
    if area < 0:
        pts = [pts[0]] + pts[:0:-1]
    return pts


def trace_borders(mask) -> tuple[list[Contour], list[Contour]]:
    """Suzuki-Abe border following on an 8-connected foreground.

    Returns ``(outer_borders, hole_borders)`` in raster order of their start
    pixels.
    """
    src = np.asarray(mask).astype(bool)
    if src.ndim != 2:
        raise ValueError(f"expected a 2-d mask, got shape {src.shape}")
    h, w = src.shape
    f = np.zeros((h + 2, w + 2), dtype=np.int64)
    f[1:-1, 1:-1] = src
    outer, holes = [], []
    nbd = 1
    rows = np.flatnonzero(src.any(axis=1)) + 1
    for i in rows:
        row = f[i]
        for j in np.flatnonzero(row):
            j = int(j)
            if row[j] == 0:
                continue
            if row[j] == 1 and row[j - 1] == 0:
                is_hole, i2, j2 = False, i, j - 1
            elif row[j] >= 1 and row[j + 1] == 0:
                is_hole, i2, j2 = True, i, j + 1
            else:
                continue
            nbd += 1
            pts = _follow(f, int(i), j, i2, j2, nbd)
            contour = Contour(_normalise([(r - 1, c - 1) for r, c in pts]), True)
            (holes if is_hole else outer).append(contour)
    return outer, holes


def _follow(f, i, j, i2, j2, nbd):
    d0 = _CLOCKWISE.index((i2 - i, j2 - j))
    for step in range(8):
        dr, dc = _CLOCKWISE[(d0 + step) % 8]
        if f[i + dr, j + dc] != 0:
            i1, j1 = i + dr, j + dc
            break
    else:
        f[i, j] = -nbd
        return [(i, j)]
    i2, j2, i3, j3 = i1, j1, i, j
    pts = []
    while True:
        pts.append((i3, j3))
        d = _CLOCKWISE.index((i2 - i3, j2 - j3))
        east_zero = False
        for step in range(1, 9):
            dr, dc = _CLOCKWISE[(d - step) % 8]
            if f[i3 + dr, j3 + dc] != 0:
                i4, j4 = i3 + dr, j3 + dc
                break
            if (dr, dc) == (0, 1):
                east_zero = True
        if east_zero:
            f[i3, j3] = -nbd
        elif f[i3, j3] == 1:
            f[i3, j3] = nbd
        if (i4, j4) == (i, j) and (i3, j3) == (i1, j1):
            return pts
        i2, j2, i3, j3 = i3, j3, i4, j4


def candidate_contours(mask, min_hole_ratio: float = MIN_HOLE_RATIO) -> list[Contour]:
    """Hole borders if any qualify, else outer borders; longest first.

    A hole border qualifies when its length is at least ``min_hole_ratio``
    times the longest outer border, which keeps small noise loops hanging off
    an open curve from standing in for the lumen.  ``min_hole_ratio=0``
    accepts every hole border.
    """
    outer, holes = trace_borders(mask)
    longest_outer = max((len(c) for c in outer), default=0)
    pool = [c for c in holes if len(c) >= min_hole_ratio * longest_outer] or outer
    # stable sort: equal lengths keep raster order of their start pixels
    return sorted(pool, key=lambda c: -len(c))


def inside_contour(mask, min_hole_ratio: float = MIN_HOLE_RATIO) -> Contour:
    """The lumen-facing border of a (thinned) boundary region.

    The first of :func:`candidate_contours`; an empty mask gives an empty
    contour.
    """
    pool = candidate_contours(mask, min_hole_ratio)
    return pool[0] if pool else Contour()


# ---------------------------------------------------------------------------
# Volume refinement
# ---------------------------------------------------------------------------

def _refine_slice(inner, outer, skeleton):
    out = []
    for channel in (inner, outer):
        if skeleton:
            channel = skeletonize(channel)
        out.append(candidate_contours(channel))
    return tuple(out)


def refine_all(labels, skeleton: bool = True, threads: int = 1) -> list[tuple[list[Contour], list[Contour]]]:
    """All candidate contours per slice and channel, longest first."""
    labels = as_label_volume(labels)
    inner, outer = split_channels(labels)
    jobs = [(inner[n], outer[n], skeleton) for n in range(labels.shape[0])]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda job: _refine_slice(*job), jobs))
    return [_refine_slice(*job) for job in jobs]


def refine_labels(labels, skeleton: bool = True, threads: int = 1) -> list[tuple[Contour, Contour]]:
    """Per-slice ``(inner, outer)`` inside contours of a label volume.

    With ``skeleton=False`` the contour is taken from the raw region, which
    is the no-thinning ablation.
    """
    return [tuple(pool[0] if pool else Contour() for pool in pair)
            for pair in refine_all(labels, skeleton, threads)]


def rasterize(contours, shape) -> np.ndarray:
    """Draw per-slice ``(inner, outer)`` contours back into a label volume."""
    out = np.zeros(shape, dtype=np.uint8)
    for n, (inner, outer) in enumerate(contours):
        for value, contour in ((2, outer), (1, inner)):
            pts = _points(contour)
            if len(pts):
                out[n, pts[:, 0], pts[:, 1]] = value
    return out


def _points(contour) -> np.ndarray:
    if isinstance(contour, Contour):
        return contour.as_array()
    return np.asarray(contour, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# JSON export
# ---------------------------------------------------------------------------

def save_contours(path, contours, all_contours=None, skeleton: bool = True) -> None:
    """Write ``{"n_slices", "skeleton", "slices": [{"inner": [[r, c], ...], "outer": ...}]}``.

    ``all_contours`` (from :func:`refine_all`) adds ``inner_all``/``outer_all``
    lists of every candidate contour per slice.
    """
    slices = []
    for n, (inner, outer) in enumerate(contours):
        entry = {"inner": _points(inner).tolist(), "outer": _points(outer).tolist()}
        if all_contours is not None:
            entry["inner_all"] = [_points(c).tolist() for c in all_contours[n][0]]
            entry["outer_all"] = [_points(c).tolist() for c in all_contours[n][1]]
        slices.append(entry)
    doc = {"n_slices": len(slices), "skeleton": bool(skeleton), "slices": slices}
    with open(path, "w") as fh:
        json.dump(doc, fh, separators=(",", ":"))


def load_contours(path) -> list[tuple[np.ndarray, np.ndarray]]:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return [(np.asarray(s["inner"], dtype=np.int64).reshape(-1, 2),
                 np.asarray(s["outer"], dtype=np.int64).reshape(-1, 2)) for s in doc["slices"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed contour file") from exc
