from __future__ import annotations

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class RbfnModel(BaseModel):
    """
    Trained Gaussian RBF network.

    output_weights has one row per center plus a trailing bias row, one column per class.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    centers: np.ndarray
    widths: np.ndarray
    output_weights: np.ndarray
    class_labels: tuple[str, ...]
    seed: int
    event_kind: Optional[str] = None
    feature_names: tuple[str, ...] = ()
    derivative_order: Optional[int] = None

    @field_validator("centers", "widths", "output_weights", mode="before")
    @classmethod
    def _as_float(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def _shapes(self) -> "RbfnModel":
        k = self.centers.shape[0]
        if self.centers.ndim != 2 or self.widths.shape != (k,):
            raise ValueError("one width per center is required")
        if np.any(self.widths <= 0):
            raise ValueError("widths must be > 0")
        if self.output_weights.shape != (k + 1, len(self.class_labels)):
            raise ValueError("output_weights must have (centers + 1) rows and one column per class")
        return self

    @property
    def n_features(self) -> int:
        return int(self.centers.shape[1])


class PredictionDistribution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    probabilities: np.ndarray
    class_labels: tuple[str, ...]

    @field_validator("probabilities", mode="before")
    @classmethod
    def _as_float(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=float)

    @model_validator(mode="after")
    def _is_distribution(self) -> "PredictionDistribution":
        p = self.probabilities
        if p.shape != (len(self.class_labels),):
            raise ValueError("one probability per class is required")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be >= 0 and sum to 1")
        return self

    @property
    def argmax_label(self) -> str:
        return self.class_labels[int(np.argmax(self.probabilities))]


class FusionWeights(BaseModel):
    """Score-fusion weights, used as given: they are not renormalized and need not sum to 1."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    w_fix: float = Field(default=0.5, ge=0)
    w_sac: float = Field(default=0.5, ge=0)
    w_blink: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _not_all_zero(self) -> "FusionWeights":
        if self.w_fix == self.w_sac == self.w_blink == 0:
            raise ValueError("at least one fusion weight must be > 0")
        return self

    def as_tuple(self) -> tuple[float, float, float]:
        return self.w_fix, self.w_sac, self.w_blink


class FusionResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    predicted_label: str
    predicted_index: int
    p_final: np.ndarray
    class_labels: tuple[str, ...]
    used: List[str]
