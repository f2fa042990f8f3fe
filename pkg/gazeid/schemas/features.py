from __future__ import annotations

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from gazeid.schemas.gaze import SegmentKind

STATISTICS = ("mean", "median", "max", "std", "skew", "kurt")

POSITION_FEATURES = (
    "duration", "path_length",
    "skew_x", "skew_y", "kurt_x", "kurt_y", "std_x", "std_y",
    "ratio", "angle", "amplitude", "dispersion",
    "dist_prev", "angle_prev",
)

# order -> derivative name used in the series labels
DERIVATIVES = {1: "velocity", 2: "acceleration", 3: "jerk", 4: "jounce", 5: "crackle"}

BLINK_FEATURES = (
    "duration", "number_of_blinks", "mean_duration", "total_duration",
    "min_duration", "max_duration", "variance_duration",
)

MAX_DERIVATIVE_ORDER = 5


def _m3s2k_names(series: str) -> List[str]:
    return [f"{series}_{s}" for s in STATISTICS]


def feature_names(order: int) -> List[str]:
    names = list(POSITION_FEATURES)
    for k in range(1, order + 1):
        d = DERIVATIVES[k]
        if k == 1:
            names.append("avg_velocity")
        names += _m3s2k_names(f"angular_{d}") + _m3s2k_names(f"{d}_x") + _m3s2k_names(f"{d}_y")
    return names


def expected_feature_count(order: int) -> int:
    return 14 + 19 * (order >= 1) + 18 * max(order - 1, 0)


class FeatureSchema(BaseModel):
    model_config = ConfigDict(frozen=True)

    derivative_order: int = Field(..., ge=0, le=MAX_DERIVATIVE_ORDER)
    names: tuple[str, ...]

    @property
    def feature_count(self) -> int:
        return len(self.names)

    @model_validator(mode="after")
    def _count_matches_order(self) -> "FeatureSchema":
        if len(self.names) != expected_feature_count(self.derivative_order):
            raise ValueError("feature names do not match the derivative order")
        return self

    @classmethod
    def for_order(cls, order: int) -> "FeatureSchema":
        return cls(derivative_order=order, names=tuple(feature_names(order)))


class DerivativeCascade(BaseModel):
    """
    Forward-difference chain of one segment.

    Angular chain: distances, velocity (n-1), acceleration (n-2) ... crackle (n-5).
    Per-axis chains difference the coordinates directly: velocity_x (n-1) ... crackle_x (n-5).
    Series above `max_order` are left empty, except distances/velocity which are always filled.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    max_order: int = Field(..., ge=0, le=MAX_DERIVATIVE_ORDER)
    distances: np.ndarray
    angular: tuple[np.ndarray, ...]  # index k-1 -> order k
    axis_x: tuple[np.ndarray, ...]
    axis_y: tuple[np.ndarray, ...]

    @property
    def velocity(self) -> np.ndarray:
        return self.angular[0]

    @property
    def acceleration(self) -> np.ndarray:
        return self.angular[1]

    @property
    def jerk(self) -> np.ndarray:
        return self.angular[2]

    @property
    def jounce(self) -> np.ndarray:
        return self.angular[3]

    @property
    def crackle(self) -> np.ndarray:
        return self.angular[4]

    def series(self, order: int, axis: Optional[str] = None) -> np.ndarray:
        if axis is None:
            return self.angular[order - 1]
        return (self.axis_x if axis == "x" else self.axis_y)[order - 1]


class FeatureVector(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    feature_schema: FeatureSchema
    segment_kind: SegmentKind
    participant_id: str
    session_label: str = ""

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def _length(self) -> "FeatureVector":
        if self.values.shape != (self.feature_schema.feature_count,):
            raise ValueError(
                f"expected {self.feature_schema.feature_count} values, got {self.values.shape}"
            )
        return self


class BlinkFeatureVector(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    participant_id: str
    session_label: str = ""

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def _shape(self) -> "BlinkFeatureVector":
        if self.values.shape != (len(BLINK_FEATURES),):
            raise ValueError("a blink feature vector has exactly 7 values")
        if np.any(self.values[[0, 2, 3, 4, 5, 6]] < 0):
            raise ValueError("blink durations must be >= 0")
        return self

    @property
    def segment_kind(self) -> str:
        return "blink"


class Normalizer(BaseModel):
    """Per-feature z-score statistics fitted on a training matrix."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mean: np.ndarray
    scale: np.ndarray
    flagged: np.ndarray  # zero-variance columns (divided by 1)

    @property
    def flagged_columns(self) -> List[int]:
        return np.flatnonzero(self.flagged).tolist()
