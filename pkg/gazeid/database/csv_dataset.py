from __future__ import annotations

import logging
from functools import cached_property
from pathlib import Path

from pydantic import ValidationError

from gazeid.core.errors import DataError
from gazeid.database.dataset_repo import DatasetRepo
from gazeid.database.recording_csv import read_recording, write_recording, write_segments
from gazeid.schemas.experiment import DatasetManifest, ManifestEntry, SyntheticDataset
from gazeid.schemas.gaze import GazeRecording, ParticipantMetadata

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class ManifestError(DataError):
    """Missing, unparsable or inconsistent dataset manifest."""


class CsvDatasetRepository(DatasetRepo):
    """
    Dataset on disk: a JSON manifest plus one canonical CSV per recording.
    Recording paths in the manifest are relative to the manifest's directory.
    """

    def __init__(self, manifest_path: Path | str):
        self.manifest_path = Path(manifest_path)
        self.root = self.manifest_path.parent

    @cached_property
    def _manifest(self) -> DatasetManifest:
        if not self.manifest_path.is_file():
            raise ManifestError(f"manifest not found: {self.manifest_path}")
        try:
            manifest = DatasetManifest.model_validate_json(self.manifest_path.read_text(encoding="utf-8"))
        except ValidationError as exc:
            raise ManifestError(f"{self.manifest_path}: {exc}") from exc
        keys = [(e.participant_id, e.session_label, e.group) for e in manifest.recordings]
        if len(set(keys)) != len(keys):
            raise ManifestError(f"{self.manifest_path}: duplicate participant/session entries")
        logger.info(
            "Manifest %s: %s recordings, %s participants",
            manifest.name, len(manifest.recordings), len({k[0] for k in keys}),
        )
        return manifest

    def manifest(self) -> DatasetManifest:
        return self._manifest

    def load_recording(self, entry: ManifestEntry) -> GazeRecording:
        m = self._manifest
        return read_recording(
            self.root / entry.path,
            sample_rate_hz=m.sample_rate_hz,
            participant_id=entry.participant_id,
            session_label=entry.session_label,
            geometry=m.geometry,
            coordinate_space=m.coordinate_space,
            metadata=ParticipantMetadata(gender=entry.gender, age=entry.age),
            has_validity=m.has_validity,
        )

    @classmethod
    def save(cls, dataset: SyntheticDataset, directory: Path | str) -> "CsvDatasetRepository":
        """Writes recordings, ground-truth event dumps and the manifest; returns a repository over them."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for entry, rec, events in zip(dataset.manifest.recordings, dataset.recordings, dataset.events):
            target = directory / entry.path
            write_recording(rec, target)
            write_segments(events, target.with_suffix(".events.csv"))
        manifest_path = directory / MANIFEST_NAME
        manifest_path.write_text(dataset.manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info("Dataset written to %s", directory)
        return cls(manifest_path)
