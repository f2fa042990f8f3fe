from __future__ import annotations

from abc import ABC, abstractmethod
from typing import List

from gazeid.schemas.experiment import DatasetManifest, ManifestEntry
from gazeid.schemas.gaze import GazeRecording


class DatasetRepo(ABC):
    """
    Interfaccia astratta per l'accesso a un dataset di registrazioni.

    NOTE:
    - One entry = one recording of one participant in one session (or trial).
    - Recordings are returned as stored: coordinate space and validity flags
      are those of the manifest; conversion to degrees is up to the caller.
    """

    @abstractmethod
    def manifest(self) -> DatasetManifest:
        """The dataset manifest: sample rate, geometry, coordinate space and the entry list."""
        raise NotImplementedError

    @abstractmethod
    def load_recording(self, entry: ManifestEntry) -> GazeRecording:
        """
        Loads the recording an entry points to, with participant metadata
        (gender, age) copied from the entry.
        Missing or malformed data raises a DataError subclass.
        """
        raise NotImplementedError

    def entries(self) -> List[ManifestEntry]:
        return list(self.manifest().recordings)

    def participants(self) -> List[str]:
        """Sorted, de-duplicated participant ids."""
        return sorted({e.participant_id for e in self.entries()})
