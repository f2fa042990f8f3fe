"""
Canonical recording CSV: header `t_s,x,y,valid`, one row per sample.

x/y are degrees or pixels as declared by the manifest; a missing value is an
empty field. `valid` is 0/1 and may be absent for datasets without a
validity channel (every sample is then valid unless its coordinates are missing).
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from gazeid.core.errors import DataError
from gazeid.schemas.gaze import (
    BIOEYE_GEOMETRY,
    CoordinateSpace,
    GazeRecording,
    ParticipantMetadata,
    ScreenGeometry,
    Segment,
)

logger = logging.getLogger(__name__)

COLUMNS = ("t_s", "x", "y", "valid")
FLOAT_FORMAT = "%.10g"


class CsvFormatError(DataError):
    """Malformed recording CSV; `line` is the 1-based file line (header = line 1)."""

    def __init__(self, path: Path, line: Optional[int], reason: str):
        self.path = Path(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else str(self.path)
        super().__init__(f"{where}: {reason}")


class RecordingNotFoundError(DataError):
    def __init__(self, path: Path):
        self.path = Path(path)
        super().__init__(f"recording file not found: {self.path}")


def _first_bad(mask: np.ndarray) -> Optional[int]:
    bad = np.flatnonzero(mask)
    return int(bad[0]) + 2 if bad.size else None


def read_recording(
    path: Path,
    *,
    sample_rate_hz: float,
    participant_id: str,
    session_label: str,
    geometry: ScreenGeometry = BIOEYE_GEOMETRY,
    coordinate_space: CoordinateSpace = "degrees",
    metadata: ParticipantMetadata = ParticipantMetadata(),
    has_validity: bool = True,
) -> GazeRecording:
    path = Path(path)
    if not path.is_file():
        raise RecordingNotFoundError(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise CsvFormatError(path, 1, "empty file")
    except pd.errors.ParserError as exc:
        raise CsvFormatError(path, None, f"unparsable CSV ({exc})")

    required = COLUMNS if has_validity else COLUMNS[:3]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise CsvFormatError(path, 1, f"missing column(s) {missing}, expected header {','.join(COLUMNS)}")
    if frame.shape[0] < 2:
        raise CsvFormatError(path, None, "a recording needs at least 2 samples")

    t = pd.to_numeric(frame["t_s"], errors="coerce").to_numpy(dtype=float)
    line = _first_bad(~np.isfinite(t))
    if line is not None:
        raise CsvFormatError(path, line, "t_s must be a finite number")
    line = _first_bad(np.concatenate([[False], np.diff(t) <= 0]))
    if line is not None:
        raise CsvFormatError(path, line, "timestamps must be strictly increasing")

    coords = {}
    for col in ("x", "y"):
        raw = frame[col].str.strip()
        values = pd.to_numeric(raw.replace("", np.nan), errors="coerce").to_numpy(dtype=float)
        line = _first_bad(np.isnan(values) & (raw != "").to_numpy())
        if line is not None:
            raise CsvFormatError(path, line, f"{col} is not a number")
        coords[col] = values

    if "valid" in frame.columns:
        flags = frame["valid"].str.strip()
        line = _first_bad(~flags.isin(["0", "1"]).to_numpy())
        if line is not None:
            raise CsvFormatError(path, line, "valid must be 0 or 1")
        valid = (flags == "1").to_numpy()
    else:
        valid = np.isfinite(coords["x"]) & np.isfinite(coords["y"])

    try:
        rec = GazeRecording(
            t=t, x=coords["x"], y=coords["y"], valid=valid,
            sample_rate_hz=sample_rate_hz, geometry=geometry, coordinate_space=coordinate_space,
            participant_id=participant_id, session_label=session_label, metadata=metadata,
        )
    except ValidationError as exc:
        raise CsvFormatError(path, None, exc.errors()[0]["msg"])
    logger.debug("Loaded %s samples from %s", rec.n_samples, path)
    return rec


def write_recording(rec: GazeRecording, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "t_s": rec.t, "x": rec.x, "y": rec.y, "valid": rec.valid.astype(int),
    })
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    return path


def segments_frame(segments: Sequence[Segment]) -> pd.DataFrame:
    """Segment dump rows: kind, start_index, end_index (inclusive), duration_s."""
    return pd.DataFrame(
        [(s.kind, s.start_index, s.end_index, s.duration) for s in segments],
        columns=["kind", "start_index", "end_index", "duration_s"],
    )


def write_segments(segments: Sequence[Segment], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    segments_frame(segments).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path
