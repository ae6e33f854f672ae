"""Tube beam stack search over stacks of boundary probability maps.

A section of ``M`` consecutive slices is searched for voxel paths, one voxel
per slice, where each step stays inside the ``beam_side x beam_side``
neighbourhood of the previous voxel, at most ``stack`` children are expanded
per path and slice (highest probability first, ties by ascending row/col),
and the running sum of natural-log probabilities stays strictly above the
threshold.  The voxels of every path that reaches the last slice of the
section form the section's reconstruction.

Two evaluations of that union are provided:

* :func:`trace_paths` walks the search tree depth-first with backtracking and
  yields every accepted path.  It is exponential and meant for small inputs.
* :func:`search_section` computes the same union with a forward/backward
  max-plus sweep.  Log-probabilities are never positive, so a path whose full
  sum clears the threshold clears it on every prefix, and the threshold test
  keeps a prefix of the probability-sorted neighbourhood, so the stack cap
  reduces to a fixed top-``stack`` child set per voxel.  A voxel is on an
  accepted path iff its best prefix plus its best suffix exceeds the
  threshold.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .volume import VolumeError, VoxelCoord, as_probability_volume, merge_labels

FORWARD, REVERSE = "forward", "reverse"

# Sums within this distance of the threshold are re-checked with the exact
# left-to-right accumulation (best prefix + best suffix rounds differently).
_BAND = 1e-9


@dataclass(frozen=True)
class SearchParams:
    section_len: int = 8
    t_inner: float = -0.5
    t_outer: float = -3.0
    stack: int = 9
    beam_side: int = 5
    log_floor: float = 1e-9
    scale_threshold: bool = False

    def __post_init__(self):
        if not isinstance(self.section_len, int) or self.section_len < 1:
            raise ValueError(f"section length M must be a positive integer, got {self.section_len!r}")
        if not isinstance(self.stack, int) or self.stack < 1:
            raise ValueError(f"stack S must be a positive integer, got {self.stack!r}")
        if not isinstance(self.beam_side, int) or self.beam_side < 1 or self.beam_side % 2 == 0:
            raise ValueError(f"beam side must be an odd positive integer, got {self.beam_side!r}")
        if not 0.0 < self.log_floor < 1.0:
            raise ValueError(f"log floor must lie in (0, 1), got {self.log_floor!r}")
        for name in ("t_inner", "t_outer"):
            if math.isnan(getattr(self, name)):
                raise ValueError(f"{name} must be a number")


class SectionRange(NamedTuple):
    start: int
    end: int

    def __len__(self):
        return self.end - self.start


@dataclass
class SearchPath:
    coords: list[VoxelCoord] = field(default_factory=list)
    cum_logprob: float = 0.0


def log_probs(probs, log_floor: float = 1e-9) -> np.ndarray:
    """Natural log of probabilities with values below ``log_floor`` floored."""
    return np.log(np.maximum(np.asarray(probs, dtype=np.float64), log_floor))


def path_logprob(probs: Sequence[float], log_floor: float = 1e-9) -> float:
    """Cumulative log-probability of a path, summed left to right."""
    total = 0.0
    for v in log_probs(np.asarray(probs, dtype=np.float64).ravel(), log_floor):
        total += float(v)
    return total


def partition_sections(n_slices: int, section_len: int) -> list[SectionRange]:
    if section_len < 1:
        raise ValueError("section length must be >= 1")
    return [SectionRange(s, min(s + section_len, n_slices)) for s in range(0, n_slices, section_len)]


def neighbour_offsets(beam_side: int) -> np.ndarray:
    """``(K, 2)`` in-beam offsets in ascending (row, col) order."""
    r = beam_side // 2
    return np.array([(dr, dc) for dr in range(-r, r + 1) for dc in range(-r, r + 1)], dtype=np.intp)


def _windows(arr: np.ndarray, beam_side: int, fill: float) -> np.ndarray:
    """``(H, W, K)`` view: ``out[r, c, k] = arr[(r, c) + offset_k]`` or ``fill`` off-image."""
    pad = beam_side // 2
    padded = np.pad(arr, pad, constant_values=fill)
    h, w = arr.shape
    return sliding_window_view(padded, (beam_side, beam_side)).reshape(h, w, beam_side * beam_side)


def child_selection(next_probs: np.ndarray, beam_side: int, stack: int) -> np.ndarray:
    """Boolean ``(H, W, K)``: neighbour ``k`` of voxel ``(r, c)`` is expandable.

    True when the neighbour lies on the image and ranks among the first
    ``stack`` entries of the neighbourhood sorted by descending probability,
    ties broken by ascending (row, col).
    """
    k = beam_side * beam_side
    p = np.asarray(next_probs, dtype=np.float64)
    # Dense probability rank, then a unique key per (voxel, neighbour) that
    # orders by probability and, on ties, by the neighbour's position.
    _, dense = np.unique(p, return_inverse=True)
    dense = dense.reshape(p.shape).astype(np.int64)
    win = _windows(dense, beam_side, -1)
    valid = win >= 0
    if stack >= k:
        return valid
    key = np.where(valid, win * k + (k - 1 - np.arange(k)), -1)
    kth = np.partition(key, k - stack, axis=-1)[..., k - stack:k - stack + 1]
    return valid & (key >= kth)


def _forward(logs, sels, beam_side, threshold, start):
    """Best left-to-right prefix sums, pruned at the threshold."""
    pad = beam_side // 2
    offs = neighbour_offsets(beam_side)
    best = [start]
    for m in range(1, len(logs)):
        h, w = start.shape
        src = np.where(sels[m], best[-1][..., None], -np.inf)
        src = np.pad(src, ((pad, pad), (pad, pad), (0, 0)), constant_values=-np.inf)
        acc = np.full((h, w), -np.inf)
        for k, (dr, dc) in enumerate(offs):
            # parent at (r - dr, c - dc) reaching child (r, c) through offset k
            np.maximum(acc, src[pad - dr:pad - dr + h, pad - dc:pad - dc + w, k], out=acc)
        cur = acc + logs[m]
        best.append(np.where(cur > threshold, cur, -np.inf))
    return best


def _backward(logs, sels, beam_side):
    """Best suffix sums (excluding the voxel itself) to the last slice."""
    n = len(logs)
    best = [None] * n
    best[-1] = np.zeros(logs[-1].shape)
    for m in range(n - 2, -1, -1):
        win = _windows(logs[m + 1] + best[m + 1], beam_side, -np.inf)
        best[m] = np.where(sels[m + 1], win, -np.inf).max(axis=-1)
    return best


def search_section(section_probs, params: SearchParams, threshold: float) -> np.ndarray:
    """Union of the voxels of all accepted paths through one section.

    ``section_probs`` is ``(M', H, W)``; returns a bool mask of the same shape.
    """
    probs = np.asarray(section_probs, dtype=np.float64)
    if probs.ndim != 3:
        raise VolumeError(f"expected (M', H, W) section, got shape {probs.shape}")
    n = probs.shape[0]
    if n == 0 or probs[0].size == 0:
        return np.zeros(probs.shape, dtype=bool)
    logs = log_probs(probs, params.log_floor)
    b = params.beam_side
    sels = [None] + [child_selection(probs[m], params.beam_side, params.stack) for m in range(1, n)]

    seeds = np.where(logs[0] > threshold, logs[0], -np.inf)
    fwd = np.stack(_forward(logs, sels, b, threshold, seeds))
    bwd = np.stack(_backward(logs, sels, b))
    total = fwd + bwd
    alive = total > threshold

    for m, r, c in np.argwhere(np.isfinite(total) & (np.abs(total - threshold) <= _BAND)):
        start = np.full(logs[0].shape, -np.inf)
        start[r, c] = fwd[m, r, c]
        tail = _forward(logs[m:], [None] + sels[m + 1:], b, threshold, start)
        alive[m, r, c] = bool(np.isfinite(tail[-1]).any())
    return alive


def trace_paths(section_probs, params: SearchParams, threshold: float) -> Iterator[SearchPath]:
    """Depth-first search with backtracking; yields every accepted path.

    Seeds are voxels of the first slice whose own log-probability exceeds the
    threshold, in descending probability order (ties by row, col).
    """
    probs = np.asarray(section_probs, dtype=np.float64)
    n, h, w = probs.shape
    if n == 0:
        return
    logs = log_probs(probs, params.log_floor)
    offs = neighbour_offsets(params.beam_side)

    def children(m, r, c, cum):
        cands = [(r + dr, c + dc) for dr, dc in offs if 0 <= r + dr < h and 0 <= c + dc < w]
        cands.sort(key=lambda rc: (-probs[m, rc[0], rc[1]], rc))
        out = []
        for rr, cc in cands:
            s = cum + float(logs[m, rr, cc])
            if s > threshold:
                out.append((rr, cc, s))
                if len(out) == params.stack:
                    break
        return iter(out)

    seeds = [(r, c) for r in range(h) for c in range(w) if float(logs[0, r, c]) > threshold]
    seeds.sort(key=lambda rc: (-probs[0, rc[0], rc[1]], rc))
    for r0, c0 in seeds:
        coords = [VoxelCoord(0, r0, c0)]
        sums = [float(logs[0, r0, c0])]
        if n == 1:
            yield SearchPath(list(coords), sums[-1])
            continue
        stack = [children(1, r0, c0, sums[-1])]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                coords.pop()
                sums.pop()
                continue
            rr, cc, s = nxt
            m = len(coords)
            coords.append(VoxelCoord(m, rr, cc))
            sums.append(s)
            if m == n - 1:
                yield SearchPath(list(coords), s)
                coords.pop()
                sums.pop()
            else:
                stack.append(children(m + 1, rr, cc, s))


def paths_to_mask(paths, shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for path in paths:
        for m, r, c in path.coords:
            mask[m, r, c] = True
    return mask


def section_threshold(threshold: float, length: int, params: SearchParams) -> float:
    if params.scale_threshold:
        return threshold * length / params.section_len
    return threshold


def _search_one(vol, sec, params, threshold, direction):
    block = vol[sec.start:sec.end]
    t = section_threshold(threshold, len(sec), params)
    if direction == REVERSE:
        return search_section(block[::-1], params, t)[::-1]
    return search_section(block, params, t)


def _map(fn, jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def search_direction(vol, params: SearchParams, threshold: float, direction: str = FORWARD,
                     threads: int = 1) -> np.ndarray:
    """Search every section of ``vol`` in one direction; returns an (N, H, W) bool mask."""
    if direction not in (FORWARD, REVERSE):
        raise ValueError(f"direction must be {FORWARD!r} or {REVERSE!r}")
    vol = as_probability_volume(vol)
    sections = partition_sections(vol.shape[0], params.section_len)
    parts = _map(_search_one, [(vol, sec, params, threshold, direction) for sec in sections], threads)
    if not parts:
        return np.zeros(vol.shape, dtype=bool)
    return np.concatenate(parts, axis=0)


def merge_masks(r_in, r_out, r_rev_in, r_rev_out) -> np.ndarray:
    """Merge four single-boundary reconstructions into a label volume."""
    masks = [np.asarray(m, dtype=bool) for m in (r_in, r_out, r_rev_in, r_rev_out)]
    if len({m.shape for m in masks}) != 1:
        raise VolumeError(f"mask shapes differ: {[m.shape for m in masks]}")
    return merge_labels(masks[0] | masks[2], masks[1] | masks[3])


def reconstruct_artery(inner_probs, outer_probs, params: SearchParams | None = None,
                       threads: int = 1) -> np.ndarray:
    """Run the search on both boundaries in both directions and merge."""
    params = params or SearchParams()
    inner = as_probability_volume(inner_probs)
    outer = as_probability_volume(outer_probs)
    if inner.shape != outer.shape:
        raise VolumeError(f"inner {inner.shape} and outer {outer.shape} volumes differ in shape")
    sections = partition_sections(inner.shape[0], params.section_len)
    jobs = [(vol, sec, params, t, d)
            for vol, t in ((inner, params.t_inner), (outer, params.t_outer))
            for d in (FORWARD, REVERSE)
            for sec in sections]
    parts = _map(_search_one, jobs, threads)
    k = len(sections)
    if k == 0:
        return np.zeros(inner.shape, dtype=np.uint8)
    fin, rin, fout, rout = (np.concatenate(parts[i * k:(i + 1) * k], axis=0) for i in range(4))
    return merge_masks(fin, fout, rin, rout)
