import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maskscribe.instances import (
    BuildingInstance,
    OrientedBox,
    attach_geometry,
    extract_instances,
    fit_obb,
    to_yolo_obb,
    wrap_half_pi,
    yolo_obb_text,
)
from maskscribe.mask_core import DamageCategory, SegmentationMask
from maskscribe.partition import Zone, ZoneGeometry

from conftest import make_mask, random_mask
from oracles import angle_diff_mod, covariance_angle, flood_fill_partition


def partition_of(instances):
    return {frozenset(map(tuple, b.pixels.tolist())) for b in instances}


def test_empty_mask_has_no_instances():
    assert extract_instances(make_mask([[0, 0], [0, 0]])) == []


def test_two_blobs_split_by_background_column():
    mask = make_mask([[1, 1, 0, 1, 1], [1, 1, 0, 1, 1]])
    inst = extract_instances(mask)
    assert [b.pixel_count for b in inst] == [4, 4]
    assert all(b.category is DamageCategory.INTACT for b in inst)


def test_diagonal_touch_depends_on_connectivity():
    mask = make_mask([[1, 0], [0, 1]])
    # flood-fill oracle on the 2x2 pattern
    assert len(flood_fill_partition(mask.labels, 8)) == 1
    assert len(flood_fill_partition(mask.labels, 4)) == 2
    assert len(extract_instances(mask, 8)) == 1
    assert len(extract_instances(mask, 4)) == 2


def test_adjacent_categories_never_merge():
    mask = make_mask([[1, 2, 2], [1, 3, 3]])
    inst = extract_instances(mask)
    assert [(int(b.category), b.pixel_count) for b in inst] == [(1, 2), (2, 2), (3, 2)]


def test_ids_follow_raster_order():
    mask = make_mask([[0, 3, 0, 1], [2, 0, 0, 1], [0, 0, 0, 0], [1, 0, 2, 2]])
    inst = extract_instances(mask, 4)
    firsts = [tuple(b.pixels[0]) for b in inst]
    assert [b.id for b in inst] == list(range(len(inst)))
    assert firsts == [(1, 0), (3, 0), (0, 1), (0, 3), (2, 3)]


def test_invalid_connectivity():
    with pytest.raises(ValueError):
        extract_instances(make_mask([[1]]), 6)


def test_aabb_is_tight():
    mask = make_mask([[0, 0, 0, 0], [0, 1, 1, 0], [0, 0, 1, 0]])
    (b,) = extract_instances(mask)
    assert b.aabb == (1, 1, 2, 2)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("connectivity", [4, 8])
def test_partition_matches_flood_fill(seed, connectivity):
    rng = np.random.default_rng(seed)
    mask = random_mask(rng, int(rng.integers(1, 33)), int(rng.integers(1, 33)), float(rng.choice([0.2, 0.5, 0.8])))
    inst = extract_instances(mask, connectivity)
    assert partition_of(inst) == flood_fill_partition(mask.labels, connectivity)
    for b in inst:
        assert np.all(mask.labels[b.pixels[:, 1], b.pixels[:, 0]] == b.category)


def test_horizontal_run():
    box = fit_obb(np.array([(u, 3) for u in range(5)]))
    assert (box.cx, box.cy, box.w, box.h, box.theta) == pytest.approx((2.0, 3.0, 5.0, 1.0, 0.0), abs=1e-12)


def test_single_pixel():
    box = fit_obb(np.array([(7, 9)]))
    assert (box.cx, box.cy, box.w, box.h, box.theta) == (7.0, 9.0, 1.0, 1.0, 0.0)


def test_diagonal_run():
    # projecting (0,0)..(4,4) onto the diagonal gives extent 4*sqrt(2)
    box = fit_obb(np.array([(i, i) for i in range(5)]))
    assert box.theta == pytest.approx(math.pi / 4, abs=1e-12)
    assert box.w == pytest.approx(4 * math.sqrt(2) + 1, abs=1e-12)
    assert box.h == pytest.approx(1.0, abs=1e-12)
    assert (box.cx, box.cy) == pytest.approx((2.0, 2.0), abs=1e-12)


def test_vertical_run_uses_long_edge():
    box = fit_obb(np.array([(3, v) for v in range(4)]))
    assert box.w == pytest.approx(4) and box.h == pytest.approx(1)
    assert box.theta == pytest.approx(-math.pi / 2)


def test_isotropic_blob_is_degenerate():
    box = fit_obb(np.array([(u, v) for u in range(3) for v in range(3)]))
    assert box.theta == 0.0 and box.w == box.h == 3.0


@pytest.mark.parametrize("theta", [-math.pi / 2, -1.0, 0.0, 1.0, math.pi / 2, 3.5, -4.0, 2 * math.pi])
def test_wrap_half_pi(theta):
    t = wrap_half_pi(theta)
    assert -math.pi / 2 <= t < math.pi / 2
    assert angle_diff_mod(t, theta, math.pi) < 1e-12


def _instance(cat, pixels, box):
    return BuildingInstance(0, DamageCategory(cat), np.array(pixels), Zone.CENTRAL, box)


def test_yolo_examples():
    assert to_yolo_obb(_instance(1, [(0, 0)], OrientedBox(2, 3, 5, 1, 0)), 100, 100) == (
        "1 0.020000 0.030000 0.050000 0.010000 0.000000"
    )
    single = np.array([(50, 50)])
    assert to_yolo_obb(_instance(3, single, fit_obb(single)), 100, 100) == (
        "3 0.500000 0.500000 0.010000 0.010000 0.000000"
    )
    diag = np.array([(i, i) for i in range(5)])
    assert to_yolo_obb(_instance(1, diag, fit_obb(diag)), 100, 100) == (
        "1 0.020000 0.020000 0.066569 0.010000 0.785398"
    )


def test_yolo_sidecar_in_id_order():
    mask = make_mask([[1, 0, 3], [0, 0, 0]])
    inst = attach_geometry(extract_instances(mask), ZoneGeometry(2, 3))
    text = yolo_obb_text(list(reversed(inst)), 2, 3)
    assert text.splitlines()[0].startswith("1 ") and text.splitlines()[1].startswith("3 ")
    assert text.endswith("\n") and "\r" not in text


def test_attach_geometry_sets_zone_and_box():
    labels = np.zeros((100, 100), dtype=np.int64)
    labels[40:50, 40:50] = 2
    (b,) = attach_geometry(extract_instances(SegmentationMask(labels)), ZoneGeometry(100, 100))
    assert b.zone is Zone.CENTRAL
    assert (b.obb.cx, b.obb.cy) == pytest.approx((44.5, 44.5))


pixel_sets = st.lists(st.tuples(st.integers(0, 25), st.integers(0, 25)), min_size=2, max_size=60, unique=True)


@settings(max_examples=200)
@given(pixel_sets)
def test_box_contains_pixels_and_area_bound(pix):
    pts = np.array(pix)
    box = fit_obb(pts)
    local = box.local_coords(pts)
    assert np.all(np.abs(local[:, 0]) <= box.w / 2 + 0.5 + 1e-9)
    assert np.all(np.abs(local[:, 1]) <= box.h / 2 + 0.5 + 1e-9)
    assert box.w >= box.h > 0
    assert -math.pi / 2 <= box.theta < math.pi / 2
    assert box.area >= len(pix) - 1e-9


@settings(max_examples=200)
@given(pixel_sets)
def test_theta_tracks_covariance_eigenvector(pix):
    pts = np.array(pix, dtype=float)
    angle, gap = covariance_angle(pts)
    box = fit_obb(pts)
    if gap <= 1e-6:
        return
    # extents along the eigenvector tell whether the long-edge swap applied
    c, s = math.cos(angle), math.sin(angle)
    along = np.ptp(pts @ [c, s]) + 1
    across = np.ptp(pts @ [-s, c]) + 1
    expected = angle + (math.pi / 2 if across - along > 1e-9 else 0.0)
    assert angle_diff_mod(box.theta, expected, math.pi) < 1e-6
