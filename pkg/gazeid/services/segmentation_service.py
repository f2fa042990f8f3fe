from __future__ import annotations

import logging
from typing import List, Sequence

import numpy as np

from gazeid.core.errors import ComputeError
from gazeid.schemas.gaze import BlinkParams, GazeRecording, InvalidRun, IvtParams, Segment

logger = logging.getLogger(__name__)

# saccades of one or two points are always removed
MIN_SACCADE_POINTS = 3
_EPS = 1e-9


class SegmentationError(ComputeError):
    """Raised when segmentation leaves nothing usable."""


def _label_runs(labels: np.ndarray) -> List[tuple[bool, int, int]]:
    """(is_fixation, start, end) for maximal runs of equal labels; end inclusive."""
    change = np.flatnonzero(np.diff(labels.astype(np.int8))) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [labels.shape[0] - 1]])
    return [(bool(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def _make_segment(kind: str, start: int, end: int, points: np.ndarray, rate: float) -> Segment:
    return Segment(
        kind=kind, start_index=start, end_index=end,
        points=points[start:end + 1], duration=(end - start + 1) / rate,
    )


class SegmentationService:

    @staticmethod
    def pointwise_angular_velocity(rec: GazeRecording) -> np.ndarray:
        """v_i = ||P_{i+1} - P_i|| / t with t = 1 / sample rate, degree coordinates; length n-1."""
        return np.hypot(np.diff(rec.x), np.diff(rec.y)) * rec.sample_rate_hz

    @staticmethod
    def ivt_labels(rec: GazeRecording, p: IvtParams) -> np.ndarray:
        """
        Per-sample fixation flags after the MFD rule.

        v_i belongs to sample i; the last sample has no outgoing velocity and
        takes the label of the one before it.
        """
        v = SegmentationService.pointwise_angular_velocity(rec)
        labels = np.empty(rec.n_samples, dtype=bool)
        labels[:-1] = v < p.velocity_threshold_deg_s
        labels[-1] = labels[-2]

        # fixation troppo corte -> saccade (si fondono con le saccadi vicine)
        min_points = p.min_fixation_duration_s * rec.sample_rate_hz
        for is_fix, s, e in _label_runs(labels):
            if is_fix and (e - s + 1) < min_points - _EPS:
                labels[s:e + 1] = False
        return labels

    @staticmethod
    def ivt_segment(rec: GazeRecording, p: IvtParams) -> List[Segment]:
        """
        Velocity-threshold identification: maximal sub-VT runs are fixations,
        fixations shorter than MFD become part of one longer saccade together
        with their neighbours, everything else is saccade.

        A recording that is a single sub-MFD fixation has no saccade to merge
        into and yields no segments.
        """
        v = SegmentationService.pointwise_angular_velocity(rec)
        raw = np.empty(rec.n_samples, dtype=bool)
        raw[:-1] = v < p.velocity_threshold_deg_s
        raw[-1] = raw[-2]
        raw_runs = _label_runs(raw)
        if len(raw_runs) == 1 and raw_runs[0][0]:
            if rec.n_samples < p.min_fixation_duration_s * rec.sample_rate_hz - _EPS:
                logger.warning(
                    "%s/%s: single fixation shorter than MFD, dropped",
                    rec.participant_id, rec.session_label,
                )
                return []

        labels = SegmentationService.ivt_labels(rec, p)
        points = rec.positions()
        return [
            _make_segment("fixation" if is_fix else "saccade", s, e, points, rec.sample_rate_hz)
            for is_fix, s, e in _label_runs(labels)
        ]

    @staticmethod
    def extract_blinks(runs: Sequence[InvalidRun], p: BlinkParams) -> List[Segment]:
        """Invalid runs lasting between min and max duration (inclusive) are blinks."""
        return [
            Segment(kind="blink", start_index=r.start_index, end_index=r.end_index, duration=r.duration)
            for r in runs
            if p.min_duration_s - _EPS <= r.duration <= p.max_duration_s + _EPS
        ]

    @staticmethod
    def enforce_min_points(segments: Sequence[Segment], min_points: int) -> List[Segment]:
        """
        Merges fixations shorter than `min_points` and saccades shorter than
        max(min_points, 3) into a neighbour: the following segment, or the
        preceding one at the end of the recording. Same-kind neighbours are then
        joined so the output alternates again.
        """
        if not segments:
            raise SegmentationError("no segments to enforce a point floor on")
        sac_floor = max(min_points, MIN_SACCADE_POINTS)

        def floor(seg: Segment) -> int:
            return sac_floor if seg.kind == "saccade" else min_points

        def join(a: Segment, b: Segment, kind: str) -> Segment:
            return Segment(
                kind=kind, start_index=a.start_index, end_index=b.end_index,
                points=np.concatenate([a.points, b.points]),
                duration=a.duration + b.duration,
            )

        segs = list(segments)
        i = 0
        while i < len(segs):
            if segs[i].point_count >= floor(segs[i]):
                i += 1
                continue
            if len(segs) == 1:
                raise SegmentationError(
                    f"no segment reaches the floor of {min_points} points"
                )
            if i + 1 < len(segs):
                merged = join(segs[i], segs[i + 1], segs[i + 1].kind)
                segs[i:i + 2] = [merged]
                # il precedente ha ora lo stesso tipo: unisci
                if i > 0 and segs[i - 1].kind == merged.kind:
                    segs[i - 1:i + 1] = [join(segs[i - 1], merged, merged.kind)]
                    i -= 1
            else:
                segs[i - 1:i + 1] = [join(segs[i - 1], segs[i], segs[i - 1].kind)]
                i -= 1
            # a grown segment may now pass; re-check from the merged position
            i = max(i, 0)
        return segs
