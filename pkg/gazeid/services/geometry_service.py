from __future__ import annotations

import numpy as np

from gazeid.core.errors import DataError
from gazeid.schemas.gaze import AnglePoint, GazeRecording, PixelPoint, ScreenGeometry


class GeometryError(DataError):
    """Raised for non-finite coordinates or viewing angles outside (-90, 90) degrees."""


class GeometryService:
    """
    Viewing angle <-> screen pixel conversion:
        {x|y}_px = (d * {w|h}_px / {w|h}) * tan(theta_{x|y}) + {w|h}_px / 2
    Angles are degrees at the boundary, radians only inside.
    Off-screen pixels are returned as they are (no clamping).
    """

    @staticmethod
    def _scales(g: ScreenGeometry) -> tuple[float, float]:
        return g.distance_mm * g.width_px / g.width_mm, g.distance_mm * g.height_px / g.height_mm

    @staticmethod
    def angles_to_pixels_array(theta_x_deg, theta_y_deg, g: ScreenGeometry) -> tuple[np.ndarray, np.ndarray]:
        tx = np.asarray(theta_x_deg, dtype=float)
        ty = np.asarray(theta_y_deg, dtype=float)
        if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(ty))):
            raise GeometryError("angles must be finite")
        if np.any(np.abs(tx) >= 90.0) or np.any(np.abs(ty) >= 90.0):
            raise GeometryError("viewing angles must satisfy |theta| < 90 deg")
        sx, sy = GeometryService._scales(g)
        px = sx * np.tan(np.radians(tx)) + g.width_px / 2.0
        py = sy * np.tan(np.radians(ty)) + g.height_px / 2.0
        return px, py

    @staticmethod
    def pixels_to_angles_array(x_px, y_px, g: ScreenGeometry) -> tuple[np.ndarray, np.ndarray]:
        px = np.asarray(x_px, dtype=float)
        py = np.asarray(y_px, dtype=float)
        if not (np.all(np.isfinite(px)) and np.all(np.isfinite(py))):
            raise GeometryError("pixel coordinates must be finite")
        sx, sy = GeometryService._scales(g)
        tx = np.degrees(np.arctan((px - g.width_px / 2.0) / sx))
        ty = np.degrees(np.arctan((py - g.height_px / 2.0) / sy))
        return tx, ty

    @staticmethod
    def angles_to_pixels(p: AnglePoint, g: ScreenGeometry) -> PixelPoint:
        px, py = GeometryService.angles_to_pixels_array(p.theta_x_deg, p.theta_y_deg, g)
        return PixelPoint(x_px=float(px), y_px=float(py))

    @staticmethod
    def pixels_to_angles(p: PixelPoint, g: ScreenGeometry) -> AnglePoint:
        tx, ty = GeometryService.pixels_to_angles_array(p.x_px, p.y_px, g)
        return AnglePoint(theta_x_deg=float(tx), theta_y_deg=float(ty))

    @staticmethod
    def recording_to_degrees(rec: GazeRecording) -> GazeRecording:
        """Converts a pixel-space recording to viewing angles; invalid (NaN) samples stay NaN."""
        if rec.coordinate_space == "degrees":
            return rec
        finite = np.isfinite(rec.x) & np.isfinite(rec.y)
        tx = np.full(rec.n_samples, np.nan)
        ty = np.full(rec.n_samples, np.nan)
        tx[finite], ty[finite] = GeometryService.pixels_to_angles_array(rec.x[finite], rec.y[finite], rec.geometry)
        return rec.with_arrays(x=tx, y=ty, coordinate_space="degrees")

    @staticmethod
    def recording_to_pixels(rec: GazeRecording) -> GazeRecording:
        if rec.coordinate_space == "pixels":
            return rec
        finite = np.isfinite(rec.x) & np.isfinite(rec.y)
        px = np.full(rec.n_samples, np.nan)
        py = np.full(rec.n_samples, np.nan)
        px[finite], py[finite] = GeometryService.angles_to_pixels_array(rec.x[finite], rec.y[finite], rec.geometry)
        return rec.with_arrays(x=px, y=py, coordinate_space="pixels")
