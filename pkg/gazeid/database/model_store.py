"""
Trained RBFN container: a numpy .npz with a JSON header plus float64 arrays.
The z-score statistics the model was trained with travel in the same file.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from gazeid.core.config import settings
from gazeid.core.errors import DataError
from gazeid.schemas.classifier import RbfnModel
from gazeid.schemas.features import Normalizer

MODEL_FORMAT = "gazeid-rbfn"


class ModelFormatError(DataError):
    """Not a model file, or a format/version this build cannot read."""


def save_model(model: RbfnModel, path: Path | str, normalizer: Optional[Normalizer] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": MODEL_FORMAT,
        "version": settings.model_format_version,
        "class_labels": list(model.class_labels),
        "seed": model.seed,
        "event_kind": model.event_kind,
        "feature_names": list(model.feature_names),
        "derivative_order": model.derivative_order,
        "normalized": normalizer is not None,
    }
    arrays = {
        "header": np.array(json.dumps(header, sort_keys=True)),
        "centers": model.centers.astype(np.float64),
        "widths": model.widths.astype(np.float64),
        "output_weights": model.output_weights.astype(np.float64),
    }
    if normalizer is not None:
        arrays.update(
            norm_mean=normalizer.mean.astype(np.float64),
            norm_scale=normalizer.scale.astype(np.float64),
            norm_flagged=normalizer.flagged.astype(bool),
        )
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_model(path: Path | str) -> Tuple[RbfnModel, Optional[Normalizer]]:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"model file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            arrays = {k: data[k].copy() for k in data.files if k != "header"}
    except (ValueError, KeyError, OSError) as exc:
        raise ModelFormatError(f"{path}: not a model container ({exc})") from exc

    if header.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: unknown format {header.get('format')!r}")
    if header.get("version") != settings.model_format_version:
        raise ModelFormatError(f"{path}: unsupported version {header.get('version')!r}")

    model = RbfnModel(
        centers=arrays["centers"],
        widths=arrays["widths"],
        output_weights=arrays["output_weights"],
        class_labels=tuple(header["class_labels"]),
        seed=header["seed"],
        event_kind=header["event_kind"],
        feature_names=tuple(header["feature_names"]),
        derivative_order=header["derivative_order"],
    )
    normalizer = None
    if header.get("normalized"):
        normalizer = Normalizer(
            mean=arrays["norm_mean"], scale=arrays["norm_scale"], flagged=arrays["norm_flagged"],
        )
    return model, normalizer
