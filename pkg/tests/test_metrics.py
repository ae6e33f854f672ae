import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import directed_hausdorff_naive
from tbss import metrics as MT
from tbss.volume import INNER, OUTER, VolumeError, VoxelSpacing

points = st.lists(st.tuples(st.integers(-30, 30), st.integers(-30, 30)), min_size=1, max_size=40)


def test_directed_examples():
    assert MT.directed_hausdorff([(0, 0), (10, 0)], [(0, 0)]) == 10.0
    assert MT.directed_hausdorff([(0, 0)], [(0, 0), (10, 0)]) == 0.0


def test_symmetric_examples():
    assert MT.hausdorff([(0, 0)], [(3, 4)]) == 5.0
    a = [(1, 2), (3, 4)]
    assert MT.hausdorff(a, a) == 0.0


def test_empty_set_raises():
    with pytest.raises(ValueError):
        MT.directed_hausdorff([], [(0, 0)])


@settings(max_examples=100, deadline=None)
@given(points, points)
def test_axioms_and_oracle(a, b):
    d = MT.hausdorff(a, b)
    assert d == MT.hausdorff(b, a)
    assert d >= 0
    assert (d == 0) == (set(a) == set(b))
    assert MT.directed_hausdorff(a, b) == directed_hausdorff_naive(a, b)


@settings(max_examples=50, deadline=None)
@given(points, points, points)
def test_triangle_inequality(a, b, c):
    assert MT.hausdorff(a, c) <= MT.hausdorff(a, b) + MT.hausdorff(b, c) + 1e-12


def test_chunked_path_matches_oracle():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 96, size=(2500, 2))
    b = rng.integers(0, 96, size=(150, 2))
    assert MT.directed_hausdorff(a, b) == directed_hausdorff_naive(a.tolist(), b.tolist())


def ring_labels(n=10):
    gt = np.zeros((n, 12, 12), dtype=np.uint8)
    gt[:, 2:10, 2:10] = OUTER
    gt[:, 3:9, 3:9] = 0
    gt[:, 5:7, 5:7] = INNER
    return gt


def gt_contours(gt):
    return [(np.argwhere(s == INNER), np.argwhere(s == OUTER)) for s in gt]


def test_perfect_prediction():
    gt = ring_labels()
    rep = MT.evaluate(gt_contours(gt), gt, [True] * 10)
    for stats in rep.cells.values():
        assert stats.mean in (0.0, None)
        assert stats.excluded == 0
    assert rep.cell("inner").mean == 0.0 and rep.cell("inner").count == 10


def test_empty_prediction_is_excluded():
    gt = ring_labels()
    contours = gt_contours(gt)
    shifted = [(i + [0, 1], o) for i, o in contours]
    shifted[4] = (np.zeros((0, 2)), shifted[4][1])
    rep = MT.evaluate(shifted, gt, [True] * 10)
    cell = rep.cell("inner", "healthy")
    assert (cell.count, cell.excluded) == (9, 1)
    assert cell.mean == 1.0
    assert rep.per_slice["inner"][4] is None


def test_order_invariance_and_spacing():
    gt = ring_labels(3)
    contours = [(i[::-1] + [1, 0], o[::-1]) for i, o in gt_contours(gt)]
    a = MT.evaluate(contours, gt, [True, False, True])
    b = MT.evaluate([(i[::-1], o) for i, o in contours], gt, [True, False, True])
    assert a.per_slice == b.per_slice
    mm = MT.evaluate(contours, gt, [True, False, True], VoxelSpacing(0.06, 0.8))
    assert mm.units == "mm"
    assert mm.per_slice["inner"][0] == a.per_slice["inner"][0] * 0.06


def test_strata_recombine():
    rng = np.random.default_rng(3)
    gt = ring_labels(12)
    contours = [(i + rng.integers(-2, 3, size=i.shape), o) for i, o in gt_contours(gt)]
    healthy = list(rng.random(12) < 0.6)
    rep = MT.evaluate(contours, gt, healthy)
    h, u, total = rep.cell("inner", "healthy"), rep.cell("inner", "unhealthy"), rep.cell("inner")
    assert h.count + u.count == total.count == 12
    assert total.mean == pytest.approx((h.mean * h.count + u.mean * u.count) / total.count, rel=1e-12)


def test_length_mismatches():
    gt = ring_labels(3)
    with pytest.raises(VolumeError):
        MT.evaluate(gt_contours(gt)[:2], gt, [True] * 3)
    with pytest.raises(VolumeError):
        MT.evaluate(gt_contours(gt), gt, [True] * 2)


def test_report_files(tmp_path):
    gt = ring_labels(4)
    contours = [(i + [0, 1], o) for i, o in gt_contours(gt)]
    rep = MT.evaluate(contours, gt, [True, True, False, True])
    MT.save_report(rep, tmp_path / "r.json", tmp_path / "r.csv")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["cells"]["inner_healthy"]["mean"] == 1.0
    assert doc["cells"]["inner_unhealthy"]["count"] == 1
    assert doc["overall"]["outer"]["mean"] == 0.0
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["metric", "inner_healthy", "inner_unhealthy", "outer_healthy", "outer_unhealthy"]
    assert rows[1][0] == "mean_hausdorff_voxels" and float(rows[1][1]) == 1.0
    assert rows[2][1:] == ["3", "1", "3", "1"]
    assert rows[3][1:] == ["0", "0", "0", "0"]
