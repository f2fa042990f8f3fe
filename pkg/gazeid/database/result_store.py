from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

import pandas as pd
from pydantic import BaseModel

from gazeid.database.recording_csv import FLOAT_FORMAT, write_segments
from gazeid.schemas.experiment import (
    AblationRow,
    ExperimentReport,
    PeakTuningResult,
    SweepResult,
)
from gazeid.schemas.gaze import Segment

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["vt_deg_s", "mfd_s", "fixation_count", "accuracy_mean", "accuracy_sem"]


def format_accuracy(mean: float, sem: float, k: int) -> str:
    return f"accuracy = {mean:.4f} ± {sem:.4f} over {k} seeds"


class ResultStore:
    """
    Writes every artifact of a run into one output directory.

    Output is a function of the inputs only: sorted JSON keys, fixed float
    formatting, no timestamps.
    """

    def __init__(self, output_dir: Path | str):
        self.root = Path(output_dir)
        self.root.mkdir(parents=True, exist_ok=True)

    def _csv(self, frame: pd.DataFrame, name: str) -> Path:
        path = self.root / name
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.info("Wrote %s", path)
        return path

    def write_json(self, payload: dict, name: str) -> Path:
        path = self.root / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("Wrote %s", path)
        return path

    def write_config(self, config: BaseModel, name: str = "config.json") -> Path:
        return self.write_json(config.model_dump(mode="json"), name)

    def write_segments(self, segments: Sequence[Segment], name: str = "segments.csv") -> Path:
        path = write_segments(segments, self.root / name)
        logger.info("Wrote %s", path)
        return path

    def write_features(self, vectors: Sequence, names: Sequence[str], name: str) -> Path:
        """One row per segment: participant_id, session_label, kind, then the feature columns."""
        rows = [
            [v.participant_id, v.session_label, v.segment_kind, *v.values.tolist()]
            for v in vectors
        ]
        frame = pd.DataFrame(rows, columns=["participant_id", "session_label", "kind", *names])
        return self._csv(frame, name)

    def write_sweep(self, result: SweepResult, name: str = "sweep.csv") -> Path:
        frame = pd.DataFrame([r.model_dump() for r in result.rows], columns=["stage", *SWEEP_COLUMNS])
        self.write_json(result.best.model_dump(), name.replace(".csv", "_best.json"))
        return self._csv(frame, name)

    def write_peak(self, result: PeakTuningResult, name: str = "peak.csv") -> Path:
        frame = pd.DataFrame(sorted(result.counts.items()), columns=["vt_deg_s", "fixation_count"])
        self.write_json(
            {"peak_vt": result.peak_vt, "best_vt": result.best_vt,
             "candidates": [r.model_dump() for r in result.rows]},
            name.replace(".csv", ".json"),
        )
        return self._csv(frame, name)

    def write_ablation(self, rows: Sequence[AblationRow], name: str = "ablation.csv") -> Path:
        frame = pd.DataFrame(
            [r.model_dump() for r in rows],
            columns=["derivative_order", "feature_count", "accuracy_mean", "accuracy_sem"],
        )
        return self._csv(frame, name)

    def write_report(self, report: ExperimentReport, stem: str = "report") -> Path:
        """report.json (everything), report.csv (accuracy per seed), report.txt (summary)."""
        self.write_json(report.model_dump(mode="json"), f"{stem}.json")
        self._csv(pd.DataFrame({"seed": report.seeds, "accuracy": report.accuracies}), f"{stem}.csv")
        lines = [
            format_accuracy(report.mean_accuracy, report.sem, len(report.seeds)),
            f"predictions per seed: {report.n_predictions}",
            "fusion weights: w_fix={:.4g} w_sac={:.4g} w_blink={:.4g}".format(*report.fusion_weights.as_tuple()),
        ]
        if report.initial_fusion_weights is not None:
            lines.append(
                "initial weights: w_fix={:.4g} w_sac={:.4g} w_blink={:.4g} (accuracy {:.4f})".format(
                    *report.initial_fusion_weights.as_tuple(), report.initial_accuracy or 0.0,
                )
            )
            lines.append(
                "validation accuracy: {:.4f} -> {:.4f}".format(
                    report.initial_validation_accuracy or 0.0, report.validation_accuracy or 0.0,
                )
            )
        for kind in sorted(report.diagnostics):
            d = report.diagnostics[kind]
            lines.append(
                f"{kind}: train={d.train_segments} test={d.test_segments} "
                f"flagged={len(d.flagged_features)}"
            )
        if report.excluded_participants:
            lines.append(f"excluded participants: {', '.join(report.excluded_participants)}")
        path = self.root / f"{stem}.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


