
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mono3d.assignment import GridSpec
from mono3d.boxes import ABBox3D, Box2D, corners_camera
from mono3d.encoding import (
    CellTargets,
    center_substitution_error,
    decode,
    decode_cells,
    encode,
    targets_from_csv,
    targets_from_json,
    targets_to_csv,
    targets_to_json,
)
from mono3d.geometry import project
from mono3d.pipeline import default_grid, synth_frame
from mono3d.synth import KITTI_INTRINSICS, SceneConfig


def test_aligned_object(k700):
    # Cell (6, 1) of a 12x4 grid over 1200x360 has center (650, 135).
    grid = GridSpec(1200.0, 360.0, 12, 4, 60.0)
    C = np.array([50.0 * 20.0 / 700.0, -45.0 * 20.0 / 700.0, 20.0])
    np.testing.assert_allclose(project(C, k700), (650.0, 135.0), atol=1e-12)
    box = ABBox3D(C, 1.5, 1.6, 3.9, 0.3)
    b2d = Box2D(650.0, 135.0, 80.0, 50.0)
    t = encode([(box, b2d)], k700, grid)
    assert t.object_index[1, 6] == 0
    np.testing.assert_allclose(t.delta_c[1, 6], 0.0, atol=1e-12)
    np.testing.assert_allclose(t.delta_C[1, 6], 0.0, atol=1e-12)
    np.testing.assert_allclose(t.b2d[1, 6], [0.0, 0.0, 80.0 / 1200.0, 50.0 / 360.0], atol=1e-12)
    assert t.z_cc[1, 6] == 20.0 and t.delta_zc[1, 6] == 0.0


def test_projected_center_offsets(k700):
    grid = GridSpec(1200.0, 360.0, 12, 4, 150.0)
    box = ABBox3D((1.7, 0.9, 20.0), 1.5, 1.6, 3.9, 0.0)
    b2d = Box2D(660.0, 210.0, 80.0, 50.0)
    t = encode([(box, b2d)], k700, grid)
    centers = grid.cell_centers()
    for y, x in zip(*np.nonzero(t.mask)):
        np.testing.assert_allclose(t.delta_c[y, x], np.array([659.5, 211.5]) - centers[y, x], atol=1e-9)
        np.testing.assert_allclose(t.delta_C[y, x], 0.0, atol=1e-12)


def test_truncated_center_outside_image(k700):
    grid = GridSpec(1200.0, 360.0, 12, 4, 150.0)
    z = 20.0
    C = np.array([(-15.0 - 600.0) * z / 700.0, 0.5, z])
    assert project(C, k700)[0] == pytest.approx(-15.0)
    box = ABBox3D(C, 1.5, 1.6, 3.9, 1.0)
    b2d = Box2D.from_ltrb(0.0, 150.0, 40.0, 230.0)
    t = encode([(box, b2d)], k700, grid)
    assert t.mask.any()
    assert np.all(np.isfinite(t.delta_c[t.mask]))
    det = decode(t, k700, grid)
    np.testing.assert_allclose(det[0].box3d.center, C, atol=1e-9)


def test_round_trip_identity():
    grid = default_grid()
    for f in range(20):
        fr = synth_frame(3, f, KITTI_INTRINSICS, grid, SceneConfig(truncation_fraction=0.3))
        assert len(fr.detections) == len(fr.scene)
        for o in fr.scene:
            d = min(fr.detections, key=lambda d: np.abs(d.box3d.center - o.box3d.center).max())
            np.testing.assert_allclose(d.box3d.center, o.box3d.center, atol=1e-6)
            np.testing.assert_allclose(corners_camera(d.box3d), corners_camera(o.box3d), atol=1e-6)


def test_all_zero_scores_decode_to_nothing(k700):
    grid = GridSpec(1200.0, 360.0, 12, 4, 150.0)
    t = encode([(ABBox3D((1.7, 0.9, 20.0), 1.5, 1.6, 3.9, 0.0), Box2D(660, 210, 80, 50))], k700, grid)
    t.pr_obj[...] = 0.0
    assert decode(t, k700, grid, score_threshold=0.0) == []


def test_depth_refinement_moves_along_ray(k700):
    grid = GridSpec(1200.0, 360.0, 12, 4, 150.0)
    box = ABBox3D((3.0, 0.9, 20.0), 1.5, 1.6, 3.9, 0.0)
    t = encode([(box, Box2D(705, 211.5, 80, 50))], k700, grid)
    y, x = np.argwhere(t.mask)[0]
    base, _ = decode_cells(t, k700, grid)
    t.delta_zc[y, x] += 1.0
    shifted, _ = decode_cells(t, k700, grid)
    cell = base[[d.cell for d in base].index((x, y))]
    moved = shifted[[d.cell for d in shifted].index((x, y))]
    u = grid.cell_centers()[y, x, 0] + t.delta_c[y, x, 0]
    dx = moved.box3d.center[0] - cell.box3d.center[0]
    assert dx == pytest.approx((u - 600.0) / 700.0, abs=1e-12)
    assert moved.box3d.center[2] - cell.box3d.center[2] == pytest.approx(1.0, abs=1e-12)


def test_nonpositive_depth_is_discarded(k700, caplog):
    grid = GridSpec(1200.0, 360.0, 12, 4, 150.0)
    t = encode([(ABBox3D((1.7, 0.9, 20.0), 1.5, 1.6, 3.9, 0.0), Box2D(660, 210, 80, 50))], k700, grid)
    n = int(t.mask.sum())
    t.delta_zc[t.mask] = -25.0
    dets, discarded = decode_cells(t, k700, grid)
    assert dets == [] and discarded == n
    assert "discarded" in caplog.text


def test_center_substitution_examples(k700):
    box = ABBox3D((1.7, 0.9, 20.0), 1.5, 1.6, 3.9, 0.0)
    c = project(box.center, k700)
    assert center_substitution_error(box, Box2D(c[0], c[1], 50, 40), k700) == (0.0, 0.0)
    dx, dy = center_substitution_error(box, Box2D(c[0] + 10.0, c[1], 50, 40), k700)
    assert dx == pytest.approx(10.0 * 20.0 / 700.0, abs=1e-12)
    assert dy == pytest.approx(0.0, abs=1e-12)
    dx, _ = center_substitution_error(box, Box2D(c[0], c[1] + 12.0, 50, 40), k700)
    assert dx == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-40, 40), st.floats(2, 80))
def test_center_substitution_linear(gap, z):
    k = KITTI_INTRINSICS
    box = ABBox3D((0.3 * z, 1.0, z), 1.5, 1.6, 3.9, 0.0)
    c = project(box.center, k)
    dx, _ = center_substitution_error(box, Box2D(c[0] + gap, c[1], 50, 40), k)
    assert dx == pytest.approx(abs(gap) * z / k.fx, abs=1e-9)


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_table_round_trip(fmt):
    grid = default_grid()
    fr = synth_frame(5, 0, KITTI_INTRINSICS, grid)
    text = targets_to_json(fr.gt, grid) if fmt == "json" else targets_to_csv(fr.gt, grid)
    back, g2 = targets_from_json(text) if fmt == "json" else targets_from_csv(text)
    assert g2 == grid
    for name in ("pr_obj", "b2d", "z_cc", "delta_zc", "delta_c", "delta_C", "corners", "object_index"):
        np.testing.assert_array_equal(getattr(back, name), getattr(fr.gt, name))


def test_empty_targets():
    t = CellTargets.empty((3, 4))
    assert t.shape == (3, 4) and not t.mask.any()
    lp = t.confidence_logits()
    assert np.all(np.isfinite(lp))
