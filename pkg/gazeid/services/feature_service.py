from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from sklearn.preprocessing import StandardScaler

from gazeid.core.errors import ComputeError
from gazeid.schemas.features import (
    BlinkFeatureVector,
    DerivativeCascade,
    FeatureSchema,
    FeatureVector,
    MAX_DERIVATIVE_ORDER,
    Normalizer,
)
from gazeid.schemas.gaze import Segment

logger = logging.getLogger(__name__)


class FeatureError(ComputeError):
    """Raised when a segment cannot produce the requested features."""


# spread below this fraction of max(1, |mean|) is rounding noise
ZERO_SPREAD_RTOL = 1e-9
# per-step rounding bound of a forward difference, in units of eps * |P| * rate
_DIFF_ROUNDOFF = 8.0


def is_zero_spread(std, mean, floor=0.0):
    """Elementwise: the spread cannot be told apart from rounding noise."""
    return np.asarray(std) <= np.maximum(floor, ZERO_SPREAD_RTOL * np.maximum(1.0, np.abs(mean)))


def _roundoff_floor(points: np.ndarray, rate: float, order: int) -> float:
    """Largest spread rounding alone can give a k-th forward difference of `points`."""
    scale = float(np.max(np.abs(points))) if points.size else 0.0
    return _DIFF_ROUNDOFF * np.finfo(float).eps * scale * (2.0 * rate) ** order


def _shape_moments(values: np.ndarray, floor: float = 0.0) -> Tuple[float, float, float]:
    """Population std, skewness m3/m2^1.5 and excess kurtosis; zero spread gives zeros."""
    if values.size == 0:
        return 0.0, 0.0, 0.0
    std = float(np.std(values))
    if is_zero_spread(std, float(np.mean(values)), floor):
        return 0.0, 0.0, 0.0
    skew = float(stats.skew(values, bias=True))
    kurt = float(stats.kurtosis(values, fisher=True, bias=True))
    return std, skew, kurt


def _forward_chain(first: np.ndarray, rate: float, max_order: int) -> Tuple[np.ndarray, ...]:
    chain = [first]
    for _ in range(2, MAX_DERIVATIVE_ORDER + 1):
        if len(chain) >= max(max_order, 1):
            chain.append(np.empty(0))
        else:
            chain.append(np.diff(chain[-1]) * rate)
    return tuple(chain)


class FeatureService:

    @staticmethod
    def derivative_cascade(seg: Segment, sample_rate: float, max_order: int) -> DerivativeCascade:
        """
        Forward differences with t = 1 / sample_rate:
            d_i = ||P_{i+1} - P_i||, v_i = d_i / t, a_i = (v_{i+1} - v_i) / t, ... up to crackle.
        """
        if not 0 <= max_order <= MAX_DERIVATIVE_ORDER:
            raise FeatureError(f"derivative order must be in 0..5, got {max_order}")
        n = seg.point_count
        if n < max_order + 1:
            raise FeatureError(
                f"{seg.kind} of {n} points is too short for derivative order {max_order}"
            )
        pts = seg.points
        dx = np.diff(pts[:, 0])
        dy = np.diff(pts[:, 1])
        distances = np.hypot(dx, dy)
        return DerivativeCascade(
            max_order=max_order,
            distances=distances,
            angular=_forward_chain(distances * sample_rate, sample_rate, max_order),
            axis_x=_forward_chain(dx * sample_rate, sample_rate, max_order),
            axis_y=_forward_chain(dy * sample_rate, sample_rate, max_order),
        )

    @staticmethod
    def m3s2k(series: Sequence[float], noise_floor: float = 0.0) -> np.ndarray:
        """
        (mean, median, max, std, skewness, kurtosis) of a non-empty series.

        A spread within `noise_floor` (or within ZERO_SPREAD_RTOL of the mean)
        counts as zero: std, skewness and kurtosis are then 0.
        """
        values = np.asarray(series, dtype=float)
        if values.size == 0:
            raise FeatureError("M3S2K needs a non-empty series")
        std, skew, kurt = _shape_moments(values, noise_floor)
        return np.array([values.mean(), np.median(values), values.max(), std, skew, kurt])

    @staticmethod
    def segment_features(
        seg: Segment,
        cascade: DerivativeCascade,
        prev_centroid: Optional[np.ndarray],
        schema: FeatureSchema,
        participant_id: str = "",
        session_label: str = "",
    ) -> FeatureVector:
        order = schema.derivative_order
        if cascade.max_order < order:
            raise FeatureError(
                f"cascade computed to order {cascade.max_order}, schema needs {order}"
            )
        pts = seg.points
        x, y = pts[:, 0], pts[:, 1]
        velocity = cascade.velocity
        std_x, skew_x, kurt_x = _shape_moments(x)
        std_y, skew_y, kurt_y = _shape_moments(y)
        first, last = pts[0], pts[-1]
        centroid = seg.centroid

        if prev_centroid is None:
            dist_prev = angle_prev = 0.0
        else:
            delta = centroid - np.asarray(prev_centroid, dtype=float)
            dist_prev = float(np.hypot(delta[0], delta[1]))
            angle_prev = math.atan2(delta[1], delta[0])

        values = [
            seg.duration,
            float(cascade.distances.sum()),
            skew_x, skew_y, kurt_x, kurt_y, std_x, std_y,
            (float(velocity.max()) if velocity.size else 0.0) / seg.duration,
            math.atan2(last[1] - first[1], last[0] - first[0]),
            float(np.hypot(*(last - first))),
            float((x.max() - x.min()) + (y.max() - y.min())),
            dist_prev,
            angle_prev,
        ]
        for k in range(1, order + 1):
            if k == 1:
                values.append(float(velocity.mean()))
            floor = _roundoff_floor(pts, seg.point_count / seg.duration, k)
            for axis in (None, "x", "y"):
                values.extend(FeatureService.m3s2k(cascade.series(k, axis), floor))

        vec = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(vec)):
            raise FeatureError(f"non-finite feature in {seg.kind} at index {seg.start_index}")
        return FeatureVector(
            values=vec, feature_schema=schema, segment_kind=seg.kind,
            participant_id=participant_id, session_label=session_label,
        )

    @staticmethod
    def extract_segment_features(
        segments: Sequence[Segment],
        sample_rate: float,
        schema: FeatureSchema,
        participant_id: str = "",
        session_label: str = "",
    ) -> List[FeatureVector]:
        """
        Feature vectors for every fixation/saccade; the relational features use the
        centroid of the previous segment of the same kind (zero for the first one).
        """
        out: List[FeatureVector] = []
        prev = {"fixation": None, "saccade": None}
        for seg in segments:
            if seg.kind == "blink":
                continue
            cascade = FeatureService.derivative_cascade(seg, sample_rate, schema.derivative_order)
            out.append(FeatureService.segment_features(
                seg, cascade, prev[seg.kind], schema, participant_id, session_label
            ))
            prev[seg.kind] = seg.centroid
        return out

    @staticmethod
    def blink_features(
        blinks: Sequence[Segment],
        current: Segment,
        participant_id: str = "",
        session_label: str = "",
    ) -> BlinkFeatureVector:
        """Own duration plus count, mean, total, min, max and population variance of all blink durations."""
        durations = np.array([b.duration for b in blinks], dtype=float)
        if durations.size == 0:
            raise FeatureError("blink features need at least one blink")
        return BlinkFeatureVector(
            values=[
                current.duration,
                float(durations.size),
                durations.mean(),
                durations.sum(),
                durations.min(),
                durations.max(),
                durations.var(),
            ],
            participant_id=participant_id,
            session_label=session_label,
        )

    @staticmethod
    def extract_blink_features(
        blinks: Sequence[Segment], participant_id: str = "", session_label: str = ""
    ) -> List[BlinkFeatureVector]:
        return [FeatureService.blink_features(blinks, b, participant_id, session_label) for b in blinks]

    # ---------- z-score

    @staticmethod
    def fit_normalizer(train: np.ndarray) -> Normalizer:
        matrix = np.atleast_2d(np.asarray(train, dtype=float))
        if matrix.shape[0] == 0:
            raise FeatureError("cannot fit a normalizer on an empty training set")
        scaler = StandardScaler().fit(matrix)
        flagged = is_zero_spread(np.sqrt(scaler.var_), scaler.mean_)
        scale = np.where(flagged, 1.0, scaler.scale_)
        if flagged.any():
            logger.warning("Constant feature columns (scaled by 1): %s", np.flatnonzero(flagged).tolist())
        return Normalizer(mean=scaler.mean_.copy(), scale=scale, flagged=flagged)

    @staticmethod
    def apply_normalizer(norm: Normalizer, matrix: np.ndarray) -> np.ndarray:
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        if m.shape[1] != norm.mean.shape[0]:
            raise FeatureError(f"expected {norm.mean.shape[0]} features, got {m.shape[1]}")
        out = (m - norm.mean) / norm.scale
        if not np.all(np.isfinite(out)):
            raise FeatureError("normalization produced non-finite values")
        return out

    @staticmethod
    def zscore_fit_transform(train: Sequence[FeatureVector]) -> Tuple[Normalizer, List[FeatureVector]]:
        matrix = np.vstack([v.values for v in train]) if train else np.empty((0, 0))
        norm = FeatureService.fit_normalizer(matrix)
        return norm, FeatureService.zscore_apply(norm, train)

    @staticmethod
    def zscore_apply(norm: Normalizer, vectors: Sequence[FeatureVector]) -> List[FeatureVector]:
        if not vectors:
            return []
        out = FeatureService.apply_normalizer(norm, np.vstack([v.values for v in vectors]))
        return [v.model_copy(update={"values": row}) for v, row in zip(vectors, out)]
