"""Synthetic tube phantoms with controllable boundary defects.

Each slice holds two midpoint-circle rings (inner label 1, outer label 2, inner
wins on overlap) around the image centre.  Probability channels start as the
ring indicators, are blurred in-plane with a separable Gaussian truncated at
3 sigma, scaled so every ring voxel sits at exactly 1, hole-punched, then
perturbed with additive uniform noise and clamped to [0, 1].

Randomness comes from numpy's Philox (a 64-bit counter-based generator) keyed
by ``[seed, channel, slice]``, so output depends only on the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .volume import INNER, OUTER

CHANNEL_IDS = {"inner": INNER, "outer": OUTER}


class PhantomSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    """Per-slice value: ``constant``, ``linear`` or sinusoidal ``stenosis``.

    ``stenosis`` dips from ``base`` by ``depth`` following sin^2 over slices
    ``[start, start + length)``.
    """
    kind: str = "constant"
    value: float = 0.0
    start: float = 0.0
    end: float = 0.0
    depth: float = 0.0
    length: int = 0

    def values(self, n: int) -> np.ndarray:
        idx = np.arange(n, dtype=np.float64)
        if self.kind == "constant":
            return np.full(n, float(self.value))
        if self.kind == "linear":
            if n == 1:
                return np.array([float(self.start)])
            return self.start + (self.end - self.start) * idx / (n - 1)
        if self.kind == "stenosis":
            out = np.full(n, float(self.value))
            if self.length > 0:
                t = (idx - self.start) / self.length
                inside = (t >= 0) & (t < 1)
                out[inside] -= self.depth * np.sin(np.pi * t[inside]) ** 2
            return out
        raise PhantomSpecError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def from_json(cls, doc) -> "Profile":
        if isinstance(doc, (int, float)):
            return cls("constant", float(doc))
        if not isinstance(doc, dict):
            raise PhantomSpecError(f"bad profile {doc!r}")
        kind = doc.get("kind", "constant")
        if kind == "constant":
            return cls(kind, float(doc["value"]))
        if kind == "linear":
            return cls(kind, start=float(doc["start"]), end=float(doc["end"]))
        if kind == "stenosis":
            return cls(kind, float(doc["base"]), start=float(doc["start"]),
                       depth=float(doc["depth"]), length=int(doc["length"]))
        raise PhantomSpecError(f"unknown profile kind {kind!r}")

    def to_json(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear", "start": self.start, "end": self.end}
        if self.kind == "stenosis":
            return {"kind": "stenosis", "base": self.value, "start": self.start,
                    "depth": self.depth, "length": self.length}
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class Hole:
    """Zeroed boundary probability on slices ``[start, end)`` within an angular span.

    Angles are degrees clockwise on screen from the +col axis about the image
    centre; a span of 360 or more covers the whole slice.
    """
    channel: str
    start: int
    end: int
    angle_from: float = 0.0
    angle_to: float = 360.0

    def angular_mask(self, shape) -> np.ndarray:
        h, w = shape
        if self.angle_to - self.angle_from >= 360.0:
            return np.ones(shape, dtype=bool)
        rows, cols = np.mgrid[0:h, 0:w]
        ang = np.degrees(np.arctan2(rows - h // 2, cols - w // 2)) % 360.0
        lo, hi = self.angle_from % 360.0, self.angle_to % 360.0
        if lo <= hi:
            return (ang >= lo) & (ang < hi)
        return (ang >= lo) | (ang < hi)

    @classmethod
    def from_json(cls, doc) -> "Hole":
        try:
            start, end = doc["slices"]
            angles = doc.get("angles", [0.0, 360.0])
            return cls(str(doc["channel"]), int(start), int(end), float(angles[0]), float(angles[1]))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise PhantomSpecError(f"bad hole {doc!r}") from exc

    def to_json(self) -> dict:
        return {"channel": self.channel, "slices": [self.start, self.end],
                "angles": [self.angle_from, self.angle_to]}


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (64, 96, 96)
    inner_radius: Profile = Profile("constant", 12.0)
    outer_radius: Profile = Profile("constant", 20.0)
    eccentricity: Profile = Profile("constant", 0.0)
    eccentricity_angle: float = 0.0
    blur_sigma: float = 0.0
    noise_amp: float = 0.0
    holes: tuple[Hole, ...] = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise PhantomSpecError(f"dims must be three positive integers, got {self.dims!r}")
        if not 0.0 <= self.noise_amp <= 1.0:
            raise PhantomSpecError(f"noise_amp must lie in [0, 1], got {self.noise_amp}")
        if self.blur_sigma < 0:
            raise PhantomSpecError("blur_sigma must be non-negative")
        n = self.dims[0]
        for hole in self.holes:
            if hole.channel not in CHANNEL_IDS:
                raise PhantomSpecError(f"hole channel must be 'inner' or 'outer', got {hole.channel!r}")
            if not 0 <= hole.start < hole.end <= n:
                raise PhantomSpecError(f"hole slices [{hole.start}, {hole.end}) outside [0, {n})")

    @classmethod
    def from_dict(cls, doc: dict) -> "PhantomSpec":
        if not isinstance(doc, dict):
            raise PhantomSpecError("phantom spec must be a JSON object")
        try:
            ecc = doc.get("eccentricity", 0.0)
            angle = ecc.get("angle_deg", 0.0) if isinstance(ecc, dict) else 0.0
            return cls(
                dims=tuple(int(d) for d in doc.get("dims", (64, 96, 96))),
                inner_radius=Profile.from_json(doc.get("inner_radius", 12.0)),
                outer_radius=Profile.from_json(doc.get("outer_radius", 20.0)),
                eccentricity=Profile.from_json(ecc),
                eccentricity_angle=float(angle),
                blur_sigma=float(doc.get("blur_sigma", 0.0)),
                noise_amp=float(doc.get("noise_amp", 0.0)),
                holes=tuple(Hole.from_json(h) for h in doc.get("holes", ())),
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, PhantomSpecError):
                raise
            raise PhantomSpecError(f"malformed phantom spec: {exc}") from exc

    def to_dict(self) -> dict:
        ecc = dict(self.eccentricity.to_json(), angle_deg=self.eccentricity_angle)
        return {
            "dims": list(self.dims),
            "inner_radius": self.inner_radius.to_json(),
            "outer_radius": self.outer_radius.to_json(),
            "eccentricity": ecc,
            "blur_sigma": self.blur_sigma,
            "noise_amp": self.noise_amp,
            "holes": [h.to_json() for h in self.holes],
            "seed": self.seed,
        }


def load_spec(path) -> PhantomSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PhantomSpecError(f"{path}: invalid JSON: {exc}") from exc
    return PhantomSpec.from_dict(doc)


class Phantom(NamedTuple):
    inner: np.ndarray
    outer: np.ndarray
    gt: np.ndarray
    healthy: list[bool]


def midpoint_circle(cy: int, cx: int, r: int) -> list[tuple[int, int]]:
    """Pixels of a midpoint-circle ring of integer radius ``r``."""
    pts = set()
    x, y, d = r, 0, 1 - r
    while x >= y:
        for a, b in ((x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)):
            pts.add((cy + a, cx + b))
        y += 1
        if d < 0:
            d += 2 * y + 1
        else:
            x -= 1
            d += 2 * (y - x) + 1
    return sorted(pts)


def _geometry(spec: PhantomSpec):
    n, h, w = spec.dims
    r_in = spec.inner_radius.values(n)
    r_out = spec.outer_radius.values(n)
    ecc = spec.eccentricity.values(n)
    theta = math.radians(spec.eccentricity_angle)
    cy, cx = h // 2, w // 2
    rings = []
    for k in range(n):
        ri, ro = int(round(r_in[k])), int(round(r_out[k]))
        if not 0 < ri < ro < min(h, w) / 2:
            raise PhantomSpecError(
                f"slice {k}: radii must satisfy 0 < inner ({ri}) < outer ({ro}) < {min(h, w) / 2}")
        iy = cy + int(round(ecc[k] * math.sin(theta)))
        ix = cx + int(round(ecc[k] * math.cos(theta)))
        inner = midpoint_circle(iy, ix, ri)
        outer = midpoint_circle(cy, cx, ro)
        for r, c in inner + outer:
            if not (0 <= r < h and 0 <= c < w):
                raise PhantomSpecError(f"slice {k}: ring leaves the {h}x{w} image")
        rings.append((inner, outer))
    return r_in, r_out, rings


def _blur(indicator: np.ndarray, sigma: float) -> np.ndarray:
    """In-plane Gaussian blur, scaled so each ring voxel reads exactly 1."""
    ind = indicator.astype(np.float64)
    if sigma <= 0:
        return ind
    out = np.zeros_like(ind)
    for k in range(ind.shape[0]):
        if not ind[k].any():
            continue
        b = ndimage.gaussian_filter(ind[k], sigma, mode="constant", truncate=3.0)
        _, (nr, nc) = ndimage.distance_transform_edt(ind[k] == 0, return_indices=True)
        out[k] = b / b[nr, nc]
    return np.clip(out, 0.0, 1.0)


def corrupt(vol, holes: Sequence[Hole] = (), noise_amp: float = 0.0, seed=0) -> np.ndarray:
    """Zero ``holes``, add uniform noise in ``[-noise_amp, noise_amp]``, clamp to [0, 1].

    Every hole is applied regardless of its ``channel``; callers filter.
    """
    out = np.array(vol, dtype=np.float64)
    for hole in holes:
        out[hole.start:hole.end, hole.angular_mask(out.shape[1:])] = 0.0
    if noise_amp > 0:
        key = [int(s) for s in np.atleast_1d(seed)]
        for k in range(out.shape[0]):
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(key + [k])))
            out[k] += rng.uniform(-noise_amp, noise_amp, size=out.shape[1:])
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def healthy_flags(spec: PhantomSpec, r_in=None, r_out=None) -> list[bool]:
    """Unhealthy where a hole touches the slice or a radius strays > 10% from its median."""
    n = spec.dims[0]
    if r_in is None:
        r_in, r_out = spec.inner_radius.values(n), spec.outer_radius.values(n)
    bad = np.zeros(n, dtype=bool)
    for prof in (r_in, r_out):
        med = np.median(prof)
        bad |= np.abs(prof - med) > 0.1 * med
    for hole in spec.holes:
        bad[hole.start:hole.end] = True
    return [not b for b in bad]


def generate(spec: PhantomSpec) -> Phantom:
    n, h, w = spec.dims
    r_in, r_out, rings = _geometry(spec)
    gt = np.zeros((n, h, w), dtype=np.uint8)
    for k, (inner, outer) in enumerate(rings):
        for value, ring in ((OUTER, outer), (INNER, inner)):
            rr, cc = np.array(ring).T
            gt[k, rr, cc] = value
    channels = []
    for name, label in CHANNEL_IDS.items():
        probs = _blur(gt == label, spec.blur_sigma)
        holes = [hole for hole in spec.holes if hole.channel == name]
        channels.append(corrupt(probs, holes, spec.noise_amp, seed=[spec.seed, label]))
    return Phantom(channels[0], channels[1], gt, healthy_flags(spec, r_in, r_out))
