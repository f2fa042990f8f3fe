from __future__ import annotations

import logging
from typing import List

import numpy as np
from scipy.signal import savgol_filter

from gazeid.core.errors import DataError
from gazeid.schemas.gaze import GazeRecording, InvalidRun

logger = logging.getLogger(__name__)


class RecordingError(DataError):
    """Raised when a recording cannot be made connected (e.g. entirely invalid)."""


class SmoothingError(DataError):
    """Raised for Savitzky-Golay parameters the recording cannot satisfy."""


def _invalid_mask(rec: GazeRecording) -> np.ndarray:
    return ~rec.valid | ~np.isfinite(rec.x) | ~np.isfinite(rec.y)


def _runs_of(mask: np.ndarray) -> List[tuple[int, int]]:
    """Maximal True runs as inclusive (start, end) index pairs."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def _edge_weights(n: int, frame_size: int, poly_order: int) -> List[tuple[int, np.ndarray]]:
    """
    (index, weights) for the first and last half-frame samples: the row of the
    least-squares pseudo-inverse that evaluates, at the sample itself, the
    polynomial fitted on the window clipped to the recording.
    """
    half = frame_size // 2
    edges = sorted(set(range(min(half, n))) | set(range(max(n - half, 0), n)))
    out = []
    for i in edges:
        lo, hi = max(0, i - half), min(n - 1, i + half)
        # scaled offsets keep the Vandermonde matrix well conditioned
        offsets = np.arange(lo - i, hi - i + 1, dtype=float) / max(half, 1)
        # a clipped window shorter than the polynomial is interpolated exactly
        degree = min(poly_order, offsets.size - 1)
        vander = np.vander(offsets, degree + 1, increasing=True)
        out.append((i, np.linalg.pinv(vander)[0]))
    return out


def _smooth(values: np.ndarray, frame_size: int, poly_order: int) -> np.ndarray:
    out = savgol_filter(values, frame_size, poly_order)
    half = frame_size // 2
    for i, w in _edge_weights(values.size, frame_size, poly_order):
        out[i] = w @ values[max(0, i - half):i - half + frame_size]
    return out


class PreprocessService:

    @staticmethod
    def detect_invalid_runs(rec: GazeRecording) -> List[InvalidRun]:
        """Maximal runs of samples flagged invalid or with non-finite coordinates, sorted."""
        mask = _invalid_mask(rec)
        return [
            InvalidRun(start_index=s, end_index=e, duration=(e - s + 1) / rec.sample_rate_hz)
            for s, e in _runs_of(mask)
        ]

    @staticmethod
    def interior_invalid_runs(rec: GazeRecording) -> List[InvalidRun]:
        """Invalid runs with a valid sample on both sides; edge runs are trimmed by interpolate_invalid."""
        last = rec.n_samples - 1
        return [
            r for r in PreprocessService.detect_invalid_runs(rec)
            if r.start_index > 0 and r.end_index < last
        ]

    @staticmethod
    def interpolate_invalid(rec: GazeRecording) -> GazeRecording:
        """
        Linear interpolation across interior invalid runs.

        Leading/trailing invalid runs have no bounding valid sample: they are
        trimmed and counted in `trimmed_leading` / `trimmed_trailing`.
        The returned `valid` column still holds the original device flags.
        """
        usable = ~_invalid_mask(rec)
        if not usable.any():
            raise RecordingError(
                f"recording {rec.participant_id}/{rec.session_label} has no valid samples"
            )
        idx = np.flatnonzero(usable)
        first, last = int(idx[0]), int(idx[-1])
        if last - first + 1 < 2:
            raise RecordingError(
                f"recording {rec.participant_id}/{rec.session_label} has a single valid sample"
            )
        lead, trail = first, rec.n_samples - 1 - last
        if lead or trail:
            logger.info(
                "Trimmed %s leading and %s trailing invalid samples from %s/%s",
                lead, trail, rec.participant_id, rec.session_label,
            )

        sl = slice(first, last + 1)
        t = rec.t[sl]
        ok = usable[sl]
        x = np.interp(t, t[ok], rec.x[sl][ok])
        y = np.interp(t, t[ok], rec.y[sl][ok])
        return rec.with_arrays(
            t=t, x=x, y=y, valid=rec.valid[sl],
            trimmed_leading=rec.trimmed_leading + lead,
            trimmed_trailing=rec.trimmed_trailing + trail,
        )

    @staticmethod
    def savitzky_golay(rec: GazeRecording, poly_order: int = 6, frame_size: int = 15) -> GazeRecording:
        """
        Least-squares polynomial smoothing of x and y.

        Within half a frame of either end each sample gets its own fit on the
        window clipped to the recording, [max(0, i-h), min(n-1, i+h)], evaluated
        at the sample: no padding is made up.
        """
        if frame_size % 2 != 1:
            raise SmoothingError(f"frame_size must be odd, got {frame_size}")
        if frame_size <= poly_order:
            raise SmoothingError(f"frame_size ({frame_size}) must exceed poly_order ({poly_order})")
        if poly_order < 0:
            raise SmoothingError("poly_order must be >= 0")
        if rec.n_samples < frame_size:
            raise SmoothingError(
                f"recording has {rec.n_samples} samples, fewer than frame_size {frame_size}"
            )
        if not (np.all(np.isfinite(rec.x)) and np.all(np.isfinite(rec.y))):
            raise SmoothingError("smoothing needs a connected (interpolated) recording")
        x = _smooth(rec.x, frame_size, poly_order)
        y = _smooth(rec.y, frame_size, poly_order)
        return rec.with_arrays(x=x, y=y)

    @staticmethod
    def truncate(rec: GazeRecording, seconds: float, mode: str = "start") -> GazeRecording:
        """Keeps the first (mode="start") or last (mode="end") `seconds` of the recording."""
        keep = int(round(seconds * rec.sample_rate_hz))
        if keep >= rec.n_samples:
            return rec
        if keep < 2:
            raise RecordingError(f"truncation to {seconds}s leaves fewer than 2 samples")
        sl = slice(0, keep) if mode == "start" else slice(rec.n_samples - keep, rec.n_samples)
        return rec.with_arrays(t=rec.t[sl], x=rec.x[sl], y=rec.y[sl], valid=rec.valid[sl])
