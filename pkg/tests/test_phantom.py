import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from tbss import phantom as PH
from tbss.volume import INNER, OUTER

SMALL = dict(dims=(8, 48, 48), inner_radius=PH.Profile("constant", 8), outer_radius=PH.Profile("constant", 14))


def test_clean_channels_are_exact_indicators():
    ph = PH.generate(PH.PhantomSpec(**SMALL))
    np.testing.assert_array_equal(ph.inner, (ph.gt == INNER).astype(np.float32))
    np.testing.assert_array_equal(ph.outer, (ph.gt == OUTER).astype(np.float32))
    assert ph.inner.dtype == np.float32
    assert ph.healthy == [True] * 8


def test_full_angle_hole_zeroes_outer_slices():
    hole = PH.Hole("outer", 3, 5)
    ph = PH.generate(PH.PhantomSpec(**SMALL, blur_sigma=1.0, holes=(hole,)))
    assert not ph.outer[3:5].any()
    assert ph.outer[2].any() and ph.outer[5].any()
    assert ph.inner[3:5].any()
    assert ph.healthy[3:5] == [False, False]
    assert ph.healthy[2] and ph.healthy[5]


def test_same_seed_is_bit_identical():
    spec = PH.PhantomSpec(**SMALL, blur_sigma=1.5, noise_amp=0.2, seed=7,
                          holes=(PH.Hole("outer", 1, 2, 30, 120),))
    a, b = PH.generate(spec), PH.generate(spec)
    for x, y in zip(a[:3], b[:3]):
        assert x.tobytes() == y.tobytes()
    c = PH.generate(PH.PhantomSpec(**SMALL, blur_sigma=1.5, noise_amp=0.2, seed=8))
    assert a.outer.tobytes() != c.outer.tobytes()


def test_rings_are_closed_disjoint_curves():
    spec = PH.PhantomSpec(dims=(6, 64, 64), inner_radius=PH.Profile("stenosis", 12, start=0, depth=4, length=6),
                          outer_radius=PH.Profile("linear", start=20, end=24),
                          eccentricity=PH.Profile("constant", 3), eccentricity_angle=45)
    ph = PH.generate(spec)
    for k in range(6):
        for label in (INNER, OUTER):
            ring = ph.gt[k] == label
            assert ndimage.label(ring, structure=np.ones((3, 3)))[1] == 1
            # closed: the ring separates an enclosed background component
            assert ndimage.label(~ring)[1] == 2


def test_blur_reads_one_on_the_ring():
    ph = PH.generate(PH.PhantomSpec(**SMALL, blur_sigma=1.5))
    assert np.all(ph.outer[ph.gt == OUTER] == 1.0)
    assert np.all((ph.outer >= 0) & (ph.outer <= 1))
    assert 0 < ph.outer[0, 24, 24 + 15] < 1


def test_corrupt_identity_and_bounds():
    vol = np.random.default_rng(0).random((3, 10, 10)).astype(np.float32)
    np.testing.assert_array_equal(PH.corrupt(vol), vol)
    noisy = PH.corrupt(vol, noise_amp=0.1, seed=5)
    assert np.all(np.abs(noisy.astype(np.float64) - vol) <= 0.1 + 1e-7)
    assert np.all((noisy >= 0) & (noisy <= 1))
    assert PH.corrupt(vol, noise_amp=0.1, seed=5).tobytes() == noisy.tobytes()
    assert not PH.corrupt(vol, holes=[PH.Hole("inner", 0, 3)]).any()


def test_corrupt_zeroes_before_noise():
    vol = np.ones((2, 8, 8), dtype=np.float32)
    out = PH.corrupt(vol, holes=[PH.Hole("outer", 0, 1)], noise_amp=0.3, seed=1)
    assert out[0].max() <= 0.3 + 1e-7 and out[0].max() > 0


def test_partial_hole_angles():
    shape = (21, 21)
    east = PH.Hole("outer", 0, 1, -45, 45).angular_mask(shape)
    assert east[10, 20] and not east[10, 0] and not east[0, 10]
    south = PH.Hole("outer", 0, 1, 45, 135).angular_mask(shape)  # clockwise on screen
    assert south[20, 10] and not south[0, 10]
    assert PH.Hole("outer", 0, 1, 0, 360).angular_mask(shape).all()


def test_healthy_flags_from_radius_deviation():
    spec = PH.PhantomSpec(dims=(20, 64, 64), inner_radius=PH.Profile("stenosis", 12, start=5, depth=6, length=10),
                          outer_radius=PH.Profile("constant", 20))
    flags = PH.healthy_flags(spec)
    r = spec.inner_radius.values(20)
    assert flags == [bool(abs(v - 12) <= 1.2) for v in r]
    assert not all(flags) and any(flags)


@pytest.mark.parametrize("kw", [dict(dims=(0, 48, 48)), dict(noise_amp=1.5), dict(blur_sigma=-1),
                                dict(holes=(PH.Hole("middle", 0, 1),)), dict(holes=(PH.Hole("outer", 5, 20),))])
def test_spec_validation(kw):
    with pytest.raises(PH.PhantomSpecError):
        PH.PhantomSpec(**{**SMALL, **kw})


@pytest.mark.parametrize("ri,ro", [(14, 8), (8, 30), (0, 10)])
def test_radius_invariants(ri, ro):
    with pytest.raises(PH.PhantomSpecError):
        PH.generate(PH.PhantomSpec(dims=(2, 48, 48), inner_radius=PH.Profile("constant", ri),
                                   outer_radius=PH.Profile("constant", ro)))


def test_spec_json_round_trip(tmp_path):
    spec = PH.PhantomSpec(dims=(10, 64, 64), inner_radius=PH.Profile("stenosis", 11, start=2, depth=3, length=5),
                          outer_radius=PH.Profile("linear", start=18, end=20),
                          eccentricity=PH.Profile("constant", 2), eccentricity_angle=30, blur_sigma=1.5,
                          noise_amp=0.1, holes=(PH.Hole("outer", 2, 4, 10, 90),), seed=3)
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(spec.to_dict()))
    assert PH.load_spec(p) == spec
    p.write_text("{not json")
    with pytest.raises(PH.PhantomSpecError):
        PH.load_spec(p)
    with pytest.raises(PH.PhantomSpecError):
        PH.PhantomSpec.from_dict({"inner_radius": {"kind": "wobbly"}})


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40))
def test_midpoint_circle_is_8_connected_ring(r):
    pts = PH.midpoint_circle(50, 50, r)
    m = np.zeros((101, 101), dtype=bool)
    m[tuple(np.array(pts).T)] = True
    assert ndimage.label(m, structure=np.ones((3, 3)))[1] == 1
    d = np.hypot(*(np.array(pts) - 50).T)
    assert np.all(np.abs(d - r) < 1)
