import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from gazeid.schemas.gaze import BIOEYE_GEOMETRY, AnglePoint, GazeRecording, PixelPoint, ScreenGeometry
from gazeid.services.geometry_service import GeometryError, GeometryService


# ------------------------------- Helpers --------------------------------------
def _edge_angle_x(g: ScreenGeometry) -> float:
    # angolo che porta al bordo destro dello schermo
    scale = g.distance_mm * g.width_px / g.width_mm
    return math.degrees(math.atan((g.width_px / 2) / scale))


def _recording(x, y, valid, space="pixels"):
    n = len(x)
    return GazeRecording(
        t=np.arange(n) / 1000.0, x=x, y=y, valid=valid, sample_rate_hz=1000.0,
        coordinate_space=space, participant_id="p1", session_label="s1",
    )


# --------------------------------- Tests --------------------------------------
def test_center_maps_to_screen_center():
    px = GeometryService.angles_to_pixels(AnglePoint(theta_x_deg=0, theta_y_deg=0), BIOEYE_GEOMETRY)
    assert px == PixelPoint(x_px=840.0, y_px=525.0)

    back = GeometryService.pixels_to_angles(PixelPoint(x_px=840, y_px=525), BIOEYE_GEOMETRY)
    assert back.theta_x_deg == 0.0 and back.theta_y_deg == 0.0


def test_edge_angle_maps_to_right_edge():
    theta = _edge_angle_x(BIOEYE_GEOMETRY)
    px = GeometryService.angles_to_pixels(AnglePoint(theta_x_deg=theta, theta_y_deg=0), BIOEYE_GEOMETRY)
    assert px.x_px == pytest.approx(1680.0, abs=1e-9)
    assert px.y_px == pytest.approx(525.0, abs=1e-12)


def test_off_screen_pixels_are_not_clamped():
    px, _ = GeometryService.angles_to_pixels_array([40.0], [0.0], BIOEYE_GEOMETRY)
    assert px[0] > 1680.0


@settings(max_examples=300, deadline=None)
@given(
    st.floats(min_value=-80, max_value=80, allow_nan=False),
    st.floats(min_value=-80, max_value=80, allow_nan=False),
)
def test_angle_pixel_angle_roundtrip(tx, ty):
    p = AnglePoint(theta_x_deg=tx, theta_y_deg=ty)
    back = GeometryService.pixels_to_angles(GeometryService.angles_to_pixels(p, BIOEYE_GEOMETRY), BIOEYE_GEOMETRY)
    assert back.theta_x_deg == pytest.approx(tx, rel=1e-9, abs=1e-9)
    assert back.theta_y_deg == pytest.approx(ty, rel=1e-9, abs=1e-9)


def test_vectorized_roundtrip_on_random_pixels():
    rng = np.random.default_rng(7)
    x = rng.uniform(-500, 2200, size=10_000)
    y = rng.uniform(-500, 1600, size=10_000)
    tx, ty = GeometryService.pixels_to_angles_array(x, y, BIOEYE_GEOMETRY)
    x2, y2 = GeometryService.angles_to_pixels_array(tx, ty, BIOEYE_GEOMETRY)
    np.testing.assert_allclose(x2, x, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(y2, y, rtol=1e-9, atol=1e-9)


def test_mapping_is_strictly_increasing_per_axis():
    theta = np.linspace(-85.0, 85.0, 3401)
    px, py = GeometryService.angles_to_pixels_array(theta, theta, BIOEYE_GEOMETRY)
    assert np.all(np.diff(px) > 0)
    assert np.all(np.diff(py) > 0)

    pixels = np.linspace(-2000.0, 4000.0, 6001)
    tx, ty = GeometryService.pixels_to_angles_array(pixels, pixels, BIOEYE_GEOMETRY)
    assert np.all(np.diff(tx) > 0)
    assert np.all(np.diff(ty) > 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0, max_value=85, allow_nan=False), st.floats(min_value=0, max_value=85, allow_nan=False))
def test_negated_angle_mirrors_about_the_centre(tx, ty):
    cx, cy = BIOEYE_GEOMETRY.width_px / 2.0, BIOEYE_GEOMETRY.height_px / 2.0
    pos_x, pos_y = GeometryService.angles_to_pixels_array([tx], [ty], BIOEYE_GEOMETRY)
    neg_x, neg_y = GeometryService.angles_to_pixels_array([-tx], [-ty], BIOEYE_GEOMETRY)
    # solo l'arrotondamento della somma col centro separa i due lati
    assert neg_x[0] - cx == pytest.approx(-(pos_x[0] - cx), abs=1e-9)
    assert neg_y[0] - cy == pytest.approx(-(pos_y[0] - cy), abs=1e-9)


@pytest.mark.parametrize("d", [0.5, 1.0, 37.25, 420.0, 839.75, 2000.0])
def test_mirrored_pixels_give_exactly_negated_angles(d):
    cx, cy = BIOEYE_GEOMETRY.width_px / 2.0, BIOEYE_GEOMETRY.height_px / 2.0
    right, down = GeometryService.pixels_to_angles_array([cx + d], [cy + d], BIOEYE_GEOMETRY)
    left, up = GeometryService.pixels_to_angles_array([cx - d], [cy - d], BIOEYE_GEOMETRY)
    assert left[0] == -right[0]
    assert up[0] == -down[0]


@pytest.mark.parametrize("theta", [90.0, -90.0, 120.0])
def test_right_angle_is_rejected(theta):
    with pytest.raises(ValidationError):
        AnglePoint(theta_x_deg=theta, theta_y_deg=0)
    with pytest.raises(GeometryError) as ei:
        GeometryService.angles_to_pixels_array([0.0], [theta], BIOEYE_GEOMETRY)
    assert "90" in str(ei.value)


def test_non_finite_input_is_rejected():
    with pytest.raises(GeometryError):
        GeometryService.pixels_to_angles_array([np.nan], [1.0], BIOEYE_GEOMETRY)
    with pytest.raises(GeometryError):
        GeometryService.angles_to_pixels_array([np.inf], [1.0], BIOEYE_GEOMETRY)


def test_geometry_must_be_positive():
    with pytest.raises(ValidationError):
        ScreenGeometry(distance_mm=0, width_mm=474, height_mm=297, width_px=1680, height_px=1050)


def test_recording_conversion_keeps_missing_samples():
    rec = _recording(
        x=[840.0, np.nan, 1000.0, 700.0],
        y=[525.0, np.nan, 600.0, 400.0],
        valid=[True, False, True, True],
    )
    deg = GeometryService.recording_to_degrees(rec)
    assert deg.coordinate_space == "degrees"
    assert np.isnan(deg.x[1]) and np.isnan(deg.y[1])
    assert deg.x[0] == 0.0 and deg.y[0] == 0.0
    assert deg.valid.tolist() == [True, False, True, True]

    px = GeometryService.recording_to_pixels(deg)
    np.testing.assert_allclose(px.x[[0, 2, 3]], rec.x[[0, 2, 3]], rtol=1e-9)
    assert np.isnan(px.x[1])


def test_conversion_to_own_space_is_identity():
    rec = _recording(x=[1.0, 2.0], y=[0.0, 0.5], valid=[True, True], space="degrees")
    assert GeometryService.recording_to_degrees(rec) is rec
