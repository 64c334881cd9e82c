import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mono3d.boxes import ABBox3D, Box2D
from mono3d.geometry import CameraIntrinsics, project
from mono3d.kitti import (
    Difficulty,
    KittiParseError,
    LabelRecord,
    center_from_kitti,
    classify_difficulty,
    format_calib_file,
    format_label_file,
    format_label_line,
    kitti_from_center,
    parse_calib_file,
    parse_label_file,
    parse_label_line,
    project_p2,
    record_from_box,
)

FIXTURE = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59"


def test_parse_fixture_line():
    r = parse_label_line(FIXTURE)
    assert r.class_name == "Car"
    assert r.location == (-0.65, 1.71, 46.70)
    assert r.dims == (1.65, 1.67, 3.64)
    assert r.bbox2d == (587.01, 173.33, 614.12, 200.12)
    assert (r.truncation, r.occlusion, r.alpha, r.rotation_y, r.score) == (0.0, 0, -1.58, -1.59, None)


def test_scored_line():
    assert parse_label_line(FIXTURE + " 0.87").score == 0.87


def test_empty_file():
    assert parse_label_file("") == []
    assert parse_label_file("\n\n") == []


def test_short_line_reports_line_number():
    text = FIXTURE + "\n" + " ".join(FIXTURE.split()[:14]) + "\n"
    with pytest.raises(KittiParseError) as err:
        parse_label_file(text)
    assert err.value.line == 2


def test_non_numeric_field():
    with pytest.raises(KittiParseError):
        parse_label_line(FIXTURE.replace("46.70", "far"))


def test_dontcare_kept():
    rec = parse_label_file("DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n")
    assert rec[0].is_dontcare


record_strategy = st.builds(
    LabelRecord,
    class_name=st.sampled_from(["Car", "Van", "Pedestrian", "DontCare"]),
    truncation=st.floats(0, 1),
    occlusion=st.integers(0, 3),
    alpha=st.floats(-math.pi, math.pi),
    bbox2d=st.tuples(*[st.floats(-100, 1300)] * 4),
    dims=st.tuples(*[st.floats(0.1, 10)] * 3),
    location=st.tuples(st.floats(-50, 50), st.floats(-5, 5), st.floats(0.1, 100)),
    rotation_y=st.floats(-math.pi, math.pi),
    score=st.none() | st.floats(0, 1),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(record_strategy, max_size=6))
def test_label_round_trip_is_bit_exact(records):
    text = format_label_file(records)
    assert parse_label_file(text) == records
    assert format_label_file(parse_label_file(text)) == text


def test_format_line_is_single_line():
    assert "\n" not in format_label_line(parse_label_line(FIXTURE))


def test_calib_fixture():
    text = "P0: 1 0 0 0 0 1 0 0 0 0 1 0\nP2: 700 0 600 0 0 700 180 0 0 0 1 0\n"
    assert parse_calib_file(text).intrinsics == CameraIntrinsics(700, 700, 600, 180)


def test_calib_identity():
    k = parse_calib_file("P2: 1 0 0 0 0 1 0 0 0 0 1 0\n").intrinsics
    assert (k.fx, k.fy, k.px, k.py) == (1, 1, 0, 0)


def test_calib_errors():
    with pytest.raises(KittiParseError):
        parse_calib_file("P2: 1 0 0 0 0 1 0 0 0 0 1\n")
    with pytest.raises(KittiParseError):
        parse_calib_file("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n")


def test_calib_round_trip_and_p2_projection():
    k = CameraIntrinsics(721.5377, 721.5377, 609.5593, 172.854)
    calib = parse_calib_file(format_calib_file(k))
    assert calib.intrinsics == k
    pts = np.array([[1.0, 0.5, 20.0], [-3.0, 1.2, 7.0]])
    np.testing.assert_allclose(project_p2(pts, calib.p2), project(pts, k), rtol=1e-14)


def test_center_from_kitti():
    np.testing.assert_allclose(center_from_kitti((0, 1.71, 46.7), 1.65), (0, 0.885, 46.7), atol=1e-12)
    np.testing.assert_array_equal(center_from_kitti((1, 2, 3), 0.0), (1, 2, 3))


@given(st.tuples(st.floats(-50, 50), st.floats(-5, 5), st.floats(1, 100)), st.floats(0.1, 5))
def test_center_round_trip(loc, h):
    np.testing.assert_allclose(kitti_from_center(center_from_kitti(loc, h), h), loc, atol=1e-12)


def _rec(height, occ=0, trunc=0.0):
    return LabelRecord("Car", trunc, occ, 0.0, (0.0, 100.0, 50.0, 100.0 + height), (1.5, 1.6, 3.9),
                       (0.0, 1.0, 20.0), 0.0)


@pytest.mark.parametrize(
    "rec, expected",
    [
        (_rec(50), Difficulty.EASY),
        (_rec(30, 1, 0.2), Difficulty.MODERATE),
        (_rec(30, 2, 0.4), Difficulty.HARD),
        (_rec(10), Difficulty.IGNORED),
        (_rec(50, 3), Difficulty.IGNORED),
        (_rec(50, 0, 0.6), Difficulty.IGNORED),
    ],
)
def test_difficulty(rec, expected):
    assert classify_difficulty(rec) is expected


def test_record_from_box_location_is_bottom_center():
    box = ABBox3D((1.0, 0.9, 20.0), 1.5, 1.6, 3.9, 0.2)
    r = record_from_box("Car", box, Box2D(100, 100, 20, 20), 0.1)
    assert r.location[1] == pytest.approx(0.9 + 0.75)
    back = r.box3d()
    assert back.yaw == box.yaw and back.dims.tolist() == box.dims.tolist()
    np.testing.assert_allclose(back.center, box.center, atol=1e-15)
