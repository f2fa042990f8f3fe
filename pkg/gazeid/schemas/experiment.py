from __future__ import annotations

from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from gazeid.schemas.classifier import FusionWeights
from gazeid.schemas.features import BlinkFeatureVector, FeatureVector
from gazeid.schemas.gaze import (
    BlinkParams,
    CoordinateSpace,
    GazeRecording,
    Gender,
    IvtParams,
    ScreenGeometry,
    Segment,
)


class SimplexConfig(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    alpha: float = Field(default=1.0, gt=0)          # reflection
    gamma: float = Field(default=2.0, gt=1)          # expansion
    rho: float = Field(default=0.5, gt=0, lt=1)      # contraction
    sigma: float = Field(default=0.5, gt=0, lt=1)    # shrink
    max_iters: int = Field(default=1000, ge=1)
    f_tol: float = Field(default=1e-8, ge=0)
    x_tol: float = Field(default=1e-8, ge=0)
    initial_step: float = Field(default=0.05, gt=0)


class SweepPlan(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    vt_range: tuple[float, float] = (10.0, 100.0)
    mfd_range: tuple[float, float] = (0.050, 0.150)
    coarse_step: float = Field(default=10.0, gt=0)       # VT, deg/s
    fine_step: float = Field(default=1.0, gt=0)          # VT, deg/s
    mfd_coarse_step: float = Field(default=0.010, gt=0)  # s
    mfd_fine_step: float = Field(default=0.001, gt=0)    # s
    stage1_mfd: float = Field(default=0.100, ge=0)

    @model_validator(mode="after")
    def _ranges(self) -> "SweepPlan":
        if self.vt_range[0] > self.vt_range[1] or self.vt_range[0] <= 0:
            raise ValueError("vt_range must be a non-empty positive interval")
        if self.mfd_range[0] > self.mfd_range[1] or self.mfd_range[0] < 0:
            raise ValueError("mfd_range must be a non-empty interval >= 0")
        return self


class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    stage: str
    vt_deg_s: float
    mfd_s: float
    fixation_count: int
    accuracy_mean: float
    accuracy_sem: float


class SweepResult(BaseModel):
    rows: List[SweepRow]
    best: SweepRow


class PeakResult(BaseModel):
    peak_vt: float
    candidates: List[float]
    counts: Dict[float, int]


class PeakTuningResult(BaseModel):
    peak_vt: float
    best_vt: float
    rows: List[SweepRow]
    counts: Dict[float, int] = Field(default_factory=dict)


# ---------- dataset manifest

class ManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: str
    participant_id: str
    session_label: str
    gender: Optional[Gender] = None
    age: Optional[int] = Field(default=None, ge=0)
    group: Optional[str] = None  # e.g. trial block, for per-participant pooling


class DatasetManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "dataset"
    coordinate_space: CoordinateSpace = "degrees"
    sample_rate_hz: float = Field(..., gt=0)
    geometry: ScreenGeometry
    has_validity: bool = True
    recordings: List[ManifestEntry] = Field(..., min_length=1)


# ---------- experiment configuration

class SplitConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["session", "time_gap", "random_subset"] = "session"
    train_sessions: List[str] = Field(default_factory=list)
    test_sessions: List[str] = Field(default_factory=list)
    subset_fraction: float = Field(default=0.8, gt=0, le=1)

    @model_validator(mode="after")
    def _well_formed(self) -> "SplitConfig":
        if not self.train_sessions or not self.test_sessions:
            raise ValueError("split needs train_sessions and test_sessions")
        if self.kind == "time_gap" and (len(self.train_sessions) != 1 or len(self.test_sessions) != 1):
            raise ValueError("time_gap split takes exactly one train and one test session")
        return self


class SubgroupFilter(BaseModel):
    model_config = ConfigDict(frozen=True)

    gender: Literal["any", "male", "female", "balanced"] = "any"
    age_min: Optional[int] = Field(default=None, ge=0)
    age_max: Optional[int] = Field(default=None, ge=0)
    participant_count: Optional[int] = Field(default=None, ge=1)
    runs: int = Field(default=50, ge=1)


class TruncateConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Literal["start", "end"] = "start"
    seconds: float = Field(..., gt=0)


class SmoothingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    poly_order: int = Field(default=6, ge=0)
    frame_size: int = Field(default=15, ge=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    manifest: str
    ivt: IvtParams = IvtParams()
    blink: BlinkParams = BlinkParams()
    smoothing: SmoothingConfig = SmoothingConfig()
    derivative_order: int = Field(default=2, ge=0, le=5)
    fusion: Union[FusionWeights, Literal["optimize"]] = FusionWeights()
    seeds: int = Field(default=50, ge=1)
    seed_offset: int = Field(default=0, ge=0)
    sampling_seed: int = Field(default=12345, ge=0)
    split: SplitConfig
    subgroup: Optional[SubgroupFilter] = None
    truncate: Optional[TruncateConfig] = None
    test_grouping: Literal["per_recording", "per_participant"] = "per_recording"
    centers_per_class: int = Field(default=2, ge=1)

    @property
    def seed_list(self) -> List[int]:
        return list(range(self.seed_offset, self.seed_offset + self.seeds))


# ---------- results

class ClassifierDiagnostics(BaseModel):
    train_segments: int
    test_segments: int
    flagged_features: List[str] = Field(default_factory=list)
    accuracy_per_seed: List[float] = Field(default_factory=list)


class ExperimentReport(BaseModel):
    accuracies: List[float]
    seeds: List[int]
    mean_accuracy: float = Field(..., ge=0, le=1)
    sem: float = Field(..., ge=0)
    n_predictions: int
    confusion: Dict[str, Dict[str, int]]
    fusion_weights: FusionWeights
    initial_fusion_weights: Optional[FusionWeights] = None
    initial_accuracy: Optional[float] = None
    # fusion tuning objective: validation units from the training sessions
    validation_accuracy: Optional[float] = None
    initial_validation_accuracy: Optional[float] = None
    diagnostics: Dict[str, ClassifierDiagnostics]
    excluded_participants: List[str] = Field(default_factory=list)
    config: ExperimentConfig


class AblationRow(BaseModel):
    derivative_order: int
    feature_count: int
    accuracy_mean: float
    accuracy_sem: float


class SyntheticUserProfile(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    participant_id: str
    fixation_duration_s: float = Field(default=0.25, gt=0)
    fixation_jitter_deg: float = Field(default=0.02, gt=0)
    saccade_peak_velocity_deg_s: float = Field(default=300.0, gt=0)
    saccade_rate_hz: float = Field(default=3.0, gt=0)
    saccade_amplitude_deg: float = Field(default=6.0, gt=0)
    blink_rate_hz: float = Field(default=0.2, ge=0)
    blink_duration_mean_s: float = Field(default=0.2, gt=0)
    blink_duration_std_s: float = Field(default=0.03, gt=0)
    noise_level_deg: float = Field(default=0.005, gt=0)
    gender: Optional[Gender] = None
    age: Optional[int] = Field(default=None, ge=0)


class SyntheticDataset(BaseModel):
    """Generated recordings, their manifest and the ground-truth events of each recording."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    manifest: DatasetManifest
    recordings: List[GazeRecording]
    events: List[List[Segment]]


class RecordingFeatures(BaseModel):
    """Everything one recording contributes to training or testing."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    entry: ManifestEntry
    fixation: List[FeatureVector] = Field(default_factory=list)
    saccade: List[FeatureVector] = Field(default_factory=list)
    blink: List[BlinkFeatureVector] = Field(default_factory=list)
    fixation_count: int = 0

    def vectors(self, kind: str) -> list:
        return getattr(self, kind)
