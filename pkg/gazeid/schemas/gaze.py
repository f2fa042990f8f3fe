from __future__ import annotations

import math
from typing import Iterator, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CoordinateSpace = Literal["degrees", "pixels"]
SegmentKind = Literal["fixation", "saccade", "blink"]
Gender = Literal["male", "female"]


class ScreenGeometry(BaseModel):
    """Physical screen setup: viewing distance, size in mm and resolution in pixels."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    distance_mm: float = Field(..., gt=0)
    width_mm: float = Field(..., gt=0)
    height_mm: float = Field(..., gt=0)
    width_px: int = Field(..., gt=0)
    height_px: int = Field(..., gt=0)


# BioEye setup: 550 mm, 474 x 297 mm, 1680 x 1050 px
BIOEYE_GEOMETRY = ScreenGeometry(
    distance_mm=550, width_mm=474, height_mm=297, width_px=1680, height_px=1050
)


class AnglePoint(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    theta_x_deg: float
    theta_y_deg: float

    @field_validator("theta_x_deg", "theta_y_deg")
    @classmethod
    def _below_right_angle(cls, v: float) -> float:
        if abs(v) >= 90.0:
            raise ValueError("viewing angle must satisfy |theta| < 90 deg")
        return v


class PixelPoint(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    x_px: float
    y_px: float


class ParticipantMetadata(BaseModel):
    model_config = ConfigDict(frozen=True)

    gender: Optional[Gender] = None
    age: Optional[int] = Field(default=None, ge=0)


class GazeSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    x: float
    y: float
    valid: bool


class GazeRecording(BaseModel):
    """
    One recording of one participant in one session.

    Samples are held column-wise (t, x, y, valid) as numpy arrays; `samples()`
    yields the row view. `valid` keeps the original device flags even after
    interpolation, so blink extraction can always run on them.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray
    sample_rate_hz: float = Field(..., gt=0)
    geometry: ScreenGeometry = BIOEYE_GEOMETRY
    coordinate_space: CoordinateSpace = "degrees"
    participant_id: str
    session_label: str
    metadata: ParticipantMetadata = ParticipantMetadata()
    trimmed_leading: int = 0
    trimmed_trailing: int = 0

    @field_validator("t", "x", "y", mode="before")
    @classmethod
    def _as_float(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=float)

    @field_validator("valid", mode="before")
    @classmethod
    def _as_bool(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=bool)

    @model_validator(mode="after")
    def _check_samples(self) -> "GazeRecording":
        n = self.t.shape[0]
        if n < 2:
            raise ValueError("a recording needs at least 2 samples")
        if not (self.x.shape == self.y.shape == self.valid.shape == (n,)):
            raise ValueError("t, x, y and valid must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.t)) or np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be finite and strictly increasing")
        period = (self.t[-1] - self.t[0]) / (n - 1)
        expected = 1.0 / self.sample_rate_hz
        if not math.isclose(period, expected, rel_tol=0.01):
            raise ValueError(
                f"mean sample period {period:.6g}s inconsistent with {self.sample_rate_hz} Hz"
            )
        return self

    @property
    def n_samples(self) -> int:
        return int(self.t.shape[0])

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def samples(self) -> Iterator[GazeSample]:
        for t, x, y, ok in zip(self.t, self.x, self.y, self.valid):
            yield GazeSample(t=float(t), x=float(x), y=float(y), valid=bool(ok))

    @classmethod
    def from_samples(cls, samples: list[GazeSample], **fields) -> "GazeRecording":
        return cls(
            t=[s.t for s in samples],
            x=[s.x for s in samples],
            y=[s.y for s in samples],
            valid=[s.valid for s in samples],
            **fields,
        )

    def with_arrays(self, **arrays) -> "GazeRecording":
        """Copy with some columns (and optionally other fields) replaced, re-validated."""
        data = {
            "t": self.t, "x": self.x, "y": self.y, "valid": self.valid,
            "sample_rate_hz": self.sample_rate_hz,
            "geometry": self.geometry,
            "coordinate_space": self.coordinate_space,
            "participant_id": self.participant_id,
            "session_label": self.session_label,
            "metadata": self.metadata,
            "trimmed_leading": self.trimmed_leading,
            "trimmed_trailing": self.trimmed_trailing,
        }
        data.update(arrays)
        return GazeRecording(**data)


class InvalidRun(BaseModel):
    model_config = ConfigDict(frozen=True)

    start_index: int = Field(..., ge=0)
    end_index: int = Field(..., ge=0)  # inclusive
    duration: float = Field(..., gt=0)

    @property
    def length(self) -> int:
        return self.end_index - self.start_index + 1


class IvtParams(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    velocity_threshold_deg_s: float = Field(default=50.0, gt=0)
    min_fixation_duration_s: float = Field(default=0.100, ge=0)


class BlinkParams(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    min_duration_s: float = Field(default=0.080, gt=0)
    max_duration_s: float = Field(default=0.500, gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> "BlinkParams":
        if self.min_duration_s >= self.max_duration_s:
            raise ValueError("blink min_duration_s must be below max_duration_s")
        return self


class Segment(BaseModel):
    """A labelled run of samples; `end_index` is inclusive, `points` are (x, y) in degrees."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: SegmentKind
    start_index: int = Field(..., ge=0)
    end_index: int = Field(..., ge=0)
    points: np.ndarray = Field(default_factory=lambda: np.empty((0, 2)))
    duration: float = Field(..., ge=0)

    @field_validator("points", mode="before")
    @classmethod
    def _as_points(cls, v) -> np.ndarray:
        arr = np.asarray(v, dtype=float)
        return arr.reshape(-1, 2)

    @model_validator(mode="after")
    def _check_bounds(self) -> "Segment":
        if self.end_index < self.start_index:
            raise ValueError("segment end_index must be >= start_index")
        if self.kind != "blink" and self.points.shape[0] != self.end_index - self.start_index + 1:
            raise ValueError("segment points must cover start_index..end_index")
        return self

    @property
    def point_count(self) -> int:
        return self.end_index - self.start_index + 1

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)
