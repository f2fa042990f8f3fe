from __future__ import annotations

from pathlib import Path

from gazeid.core.config import settings
from gazeid.database.csv_dataset import CsvDatasetRepository
from gazeid.database.dataset_repo import DatasetRepo
from gazeid.database.result_store import ResultStore


def get_repository(manifest_path: str | Path) -> DatasetRepo:
    return CsvDatasetRepository(manifest_path)


def get_result_store(output_dir: str | Path | None = None) -> ResultStore:
    return ResultStore(output_dir or settings.output_dir)


def get_workers(requested: int | None = None) -> int:
    return requested or settings.workers
