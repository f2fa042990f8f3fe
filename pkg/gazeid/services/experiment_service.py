from __future__ import annotations

import logging
import math
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from gazeid.core.config import settings
from gazeid.core.errors import DataError
from gazeid.database.csv_dataset import CsvDatasetRepository
from gazeid.database.dataset_repo import DatasetRepo
from gazeid.schemas.classifier import FusionWeights, PredictionDistribution, RbfnModel
from gazeid.schemas.experiment import (
    AblationRow,
    ClassifierDiagnostics,
    ExperimentConfig,
    ExperimentReport,
    ManifestEntry,
    PeakResult,
    PeakTuningResult,
    RecordingFeatures,
    SmoothingConfig,
    SubgroupFilter,
    SweepRow,
)
from gazeid.schemas.features import BLINK_FEATURES, FeatureSchema, Normalizer, expected_feature_count
from gazeid.schemas.gaze import BlinkParams, GazeRecording, IvtParams, Segment
from gazeid.services.classifier_service import ClassifierError, ClassifierService
from gazeid.services.feature_service import FeatureService
from gazeid.services.geometry_service import GeometryService
from gazeid.services.optimize_service import IvtRunner, OptimizeService, WeightTuningResult
from gazeid.services.preprocess_service import PreprocessService
from gazeid.services.segmentation_service import SegmentationError, SegmentationService

logger = logging.getLogger(__name__)

KINDS = ("fixation", "saccade", "blink")
# baseline fusion rows: fixation and saccade classifiers only
BASELINE_WEIGHTS = FusionWeights(w_fix=0.5, w_sac=0.5, w_blink=0.0)


class SplitError(DataError):
    """The train/test split cannot be built from the manifest."""


class SubgroupError(DataError):
    """The subgroup filter asks for more participants than the dataset has."""


def sem(accuracies: Sequence[float]) -> float:
    """Standard error of the mean, sigma / sqrt(k), sigma = population std."""
    acc = np.asarray(accuracies, dtype=float)
    return float(np.std(acc) / math.sqrt(acc.size))


def _align(p: PredictionDistribution, labels: Tuple[str, ...]) -> PredictionDistribution:
    """Re-expresses a posterior over `labels`; classes the model never saw get 0."""
    if p.class_labels == labels:
        return p
    full = np.zeros(len(labels))
    index = {c: i for i, c in enumerate(labels)}
    for c, prob in zip(p.class_labels, p.probabilities):
        full[index[c]] = prob
    return PredictionDistribution(probabilities=full, class_labels=labels)


class _Preprocessed(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    entry: ManifestEntry
    recording: GazeRecording  # interpolated and smoothed, degrees
    blinks: List[Segment]


class _UnitScores(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    label: str
    scores: Dict[str, Optional[PredictionDistribution]]


class _SeedOutcome(BaseModel):
    seed: int
    units: List[_UnitScores]
    diagnostics: Dict[str, ClassifierDiagnostics]


class PreparedDataset:
    """
    A dataset loaded once and converted to degrees. Preprocessing and
    feature extraction are cached per pipeline setting, so seeds, sweep points
    and ablation orders that share a setting share the work.
    """

    def __init__(self, repo: DatasetRepo, workers: Optional[int] = None):
        self.workers = workers or settings.workers
        self.manifest = repo.manifest()
        self.entries: List[ManifestEntry] = list(self.manifest.recordings)
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            self.recordings: List[GazeRecording] = list(pool.map(
                lambda e: GeometryService.recording_to_degrees(repo.load_recording(e)), self.entries
            ))
        logger.info("Loaded %s recordings", len(self.recordings))
        self._lock = threading.Lock()
        self._preprocessed: Dict[tuple, List[_Preprocessed]] = {}
        self._features: Dict[tuple, List[RecordingFeatures]] = {}

    def participants(self) -> List[str]:
        return sorted({e.participant_id for e in self.entries})

    def _map(self, fn, items) -> list:
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, items))

    def preprocessed(self, cfg: ExperimentConfig) -> List[_Preprocessed]:
        key = (cfg.blink, cfg.smoothing, cfg.truncate)
        with self._lock:
            cached = self._preprocessed.get(key)
        if cached is None:
            cached = self._map(
                lambda pair: ExperimentService.preprocess_recording(pair[0], pair[1], cfg, self.manifest.has_validity),
                list(zip(self.entries, self.recordings)),
            )
            with self._lock:
                self._preprocessed[key] = cached
        return cached

    def features(self, cfg: ExperimentConfig) -> List[RecordingFeatures]:
        key = (cfg.blink, cfg.smoothing, cfg.truncate, cfg.ivt, cfg.derivative_order)
        with self._lock:
            cached = self._features.get(key)
        if cached is None:
            cached = self._map(
                lambda pre: ExperimentService.recording_features(pre, cfg.ivt, cfg.derivative_order),
                self.preprocessed(cfg),
            )
            with self._lock:
                self._features[key] = cached
        return cached

    def fixation_count(self, cfg: ExperimentConfig, ivt: IvtParams, entries: Optional[set] = None) -> int:
        """Total IVT fixations over the (selected) recordings, before the point floor."""
        total = 0
        for i, pre in enumerate(self.preprocessed(cfg)):
            if entries is None or i in entries:
                total += sum(s.kind == "fixation" for s in SegmentationService.ivt_segment(pre.recording, ivt))
        return total


class ExperimentService:

    # ---------- per recording

    @staticmethod
    def preprocess_recording(
        entry: ManifestEntry, rec: GazeRecording, cfg: ExperimentConfig, has_validity: bool = True
    ) -> _Preprocessed:
        """truncate -> blinks from the interior validity runs -> interpolate -> Savitzky-Golay."""
        if cfg.truncate is not None:
            rec = PreprocessService.truncate(rec, cfg.truncate.seconds, cfg.truncate.mode)
        blinks: List[Segment] = []
        if has_validity:
            blinks = SegmentationService.extract_blinks(PreprocessService.interior_invalid_runs(rec), cfg.blink)
        rec = PreprocessService.interpolate_invalid(rec)
        rec = PreprocessService.savitzky_golay(rec, cfg.smoothing.poly_order, cfg.smoothing.frame_size)
        return _Preprocessed(entry=entry, recording=rec, blinks=blinks)

    @staticmethod
    def segment_recording(
        rec: GazeRecording,
        ivt: IvtParams,
        blink: BlinkParams = BlinkParams(),
        smoothing: SmoothingConfig = SmoothingConfig(),
        has_validity: bool = True,
    ) -> List[Segment]:
        """Fixations, saccades and blinks of one recording, sorted by start index."""
        rec = GeometryService.recording_to_degrees(rec)
        blinks = (
            SegmentationService.extract_blinks(PreprocessService.interior_invalid_runs(rec), blink)
            if has_validity else []
        )
        clean = PreprocessService.interpolate_invalid(rec)
        clean = PreprocessService.savitzky_golay(clean, smoothing.poly_order, smoothing.frame_size)
        # IVT indices are relative to the trimmed recording
        offset = clean.trimmed_leading - rec.trimmed_leading
        segments = [
            s.model_copy(update={"start_index": s.start_index + offset, "end_index": s.end_index + offset})
            for s in SegmentationService.ivt_segment(clean, ivt)
        ]
        return sorted(segments + blinks, key=lambda s: (s.start_index, s.kind))

    @staticmethod
    def recording_features(pre: _Preprocessed, ivt: IvtParams, order: int) -> RecordingFeatures:
        rec, entry = pre.recording, pre.entry
        segments = SegmentationService.ivt_segment(rec, ivt)
        fixation_count = sum(s.kind == "fixation" for s in segments)
        if segments:
            try:
                segments = SegmentationService.enforce_min_points(segments, order + 1)
            except SegmentationError as exc:
                logger.warning("%s: no usable segments (%s)", entry.path, exc)
                segments = []
        else:
            logger.warning("%s: IVT produced no segments", entry.path)

        vectors = FeatureService.extract_segment_features(
            segments, rec.sample_rate_hz, FeatureSchema.for_order(order),
            entry.participant_id, entry.session_label,
        )
        blink_vectors = (
            FeatureService.extract_blink_features(pre.blinks, entry.participant_id, entry.session_label)
            if pre.blinks else []
        )
        logger.debug(
            "%s: %s segments, %s blinks", entry.path, len(vectors), len(blink_vectors),
        )
        return RecordingFeatures(
            entry=entry,
            fixation=[v for v in vectors if v.segment_kind == "fixation"],
            saccade=[v for v in vectors if v.segment_kind == "saccade"],
            blink=blink_vectors,
            fixation_count=fixation_count,
        )

    # ---------- splits

    @staticmethod
    def eligible_participants(cfg: ExperimentConfig, entries: Sequence[ManifestEntry]) -> Tuple[List[str], List[str]]:
        """
        Participants with at least one train and one test recording. A time-gap
        split excludes (and reports) the others; the other kinds refuse them.
        """
        train, test = defaultdict(int), defaultdict(int)
        everyone = sorted({e.participant_id for e in entries})
        for e in entries:
            if e.session_label in cfg.split.train_sessions:
                train[e.participant_id] += 1
            if e.session_label in cfg.split.test_sessions:
                test[e.participant_id] += 1
        incomplete = [p for p in everyone if not train[p] or not test[p]]
        if incomplete and cfg.split.kind != "time_gap":
            raise SplitError(
                f"participants without train and test recordings under the split: {incomplete}"
            )
        eligible = [p for p in everyone if p not in incomplete]
        if not eligible:
            raise SplitError("no participant has recordings on both sides of the split")
        if incomplete:
            logger.info("Time-gap split: %s of %s participants excluded", len(incomplete), len(everyone))
        return eligible, incomplete

    @staticmethod
    def _random_subset(cfg: ExperimentConfig, pool: List[str], seed: int) -> List[str]:
        if cfg.split.kind != "random_subset":
            return pool
        k = max(1, int(round(cfg.split.subset_fraction * len(pool))))
        rng = np.random.default_rng([cfg.sampling_seed, seed])
        return sorted(rng.choice(pool, size=k, replace=False).tolist())

    @staticmethod
    def split_units(cfg: ExperimentConfig, entries: Sequence[ManifestEntry], pool: Sequence[str]) -> Tuple[List[int], List[Tuple[str, List[int]]]]:
        members = set(pool)
        train = [i for i, e in enumerate(entries) if e.participant_id in members and e.session_label in cfg.split.train_sessions]
        test = [i for i, e in enumerate(entries) if e.participant_id in members and e.session_label in cfg.split.test_sessions]
        if cfg.test_grouping == "per_participant":
            grouped: Dict[str, List[int]] = defaultdict(list)
            for i in test:
                grouped[entries[i].participant_id].append(i)
            units = [(p, grouped[p]) for p in sorted(grouped)]
        else:
            units = [(entries[i].participant_id, [i]) for i in test]
        return train, units

    # ---------- one seed

    @staticmethod
    def _fit(kind: str, matrix: np.ndarray, labels: List[str], seed: int, cfg: ExperimentConfig) -> Tuple[RbfnModel, Normalizer]:
        norm = FeatureService.fit_normalizer(matrix)
        if kind == "blink":
            names, order = BLINK_FEATURES, None
        else:
            names, order = FeatureSchema.for_order(cfg.derivative_order).names, cfg.derivative_order
        model = ClassifierService.rbfn_train(
            FeatureService.apply_normalizer(norm, matrix), labels, seed, cfg.centers_per_class,
            event_kind=kind, feature_names=tuple(names), derivative_order=order,
        )
        return model, norm

    @staticmethod
    def _train_kinds(cfg: ExperimentConfig, by_kind: Dict[str, list], seed: int) -> Dict[str, Tuple[RbfnModel, Normalizer]]:
        models: Dict[str, Tuple[RbfnModel, Normalizer]] = {}
        for kind, vectors in by_kind.items():
            if not vectors:
                logger.warning("No %s training vectors: classifier dropped", kind)
                continue
            matrix = np.vstack([v.values for v in vectors])
            models[kind] = ExperimentService._fit(kind, matrix, [v.participant_id for v in vectors], seed, cfg)
        return models

    @staticmethod
    def train_models(
        cfg: ExperimentConfig, feats: Sequence[RecordingFeatures], train_idx: Sequence[int], seed: int,
        use_blink: bool = True,
    ) -> Dict[str, Tuple[RbfnModel, Normalizer]]:
        """One RBFN per event kind on the training recordings; kinds without training vectors are absent."""
        by_kind = {
            kind: [v for i in train_idx for v in feats[i].vectors(kind)]
            for kind in KINDS if kind != "blink" or use_blink
        }
        return ExperimentService._train_kinds(cfg, by_kind, seed)

    @staticmethod
    def _score(
        models: Dict[str, Tuple[RbfnModel, Normalizer]],
        groups: Sequence[Tuple[str, Dict[str, list]]],
        labels: Tuple[str, ...],
    ) -> Tuple[List[_UnitScores], Dict[str, int]]:
        """Mean posterior of every model over each group's vectors, aligned on `labels`."""
        scored: List[_UnitScores] = []
        counts: Dict[str, int] = defaultdict(int)
        for label, by_kind in groups:
            scores: Dict[str, Optional[PredictionDistribution]] = {k: None for k in KINDS}
            for kind, (model, norm) in models.items():
                vectors = by_kind.get(kind, [])
                counts[kind] += len(vectors)
                if vectors:
                    matrix = FeatureService.apply_normalizer(norm, np.vstack([v.values for v in vectors]))
                    scores[kind] = _align(ClassifierService.aggregate_segments(model, matrix), labels)
            scored.append(_UnitScores(label=label, scores=scores))
        return scored, counts

    @staticmethod
    def _seed_outcome(
        cfg: ExperimentConfig, feats: Sequence[RecordingFeatures], pool: List[str], seed: int, use_blink: bool,
    ) -> _SeedOutcome:
        entries = [f.entry for f in feats]
        train_idx, units = ExperimentService.split_units(cfg, entries, pool)
        models = ExperimentService.train_models(cfg, feats, train_idx, seed, use_blink)
        groups = [(label, {k: [v for i in idx for v in feats[i].vectors(k)] for k in KINDS}) for label, idx in units]
        scored, test_counts = ExperimentService._score(models, groups, tuple(sorted(pool)))

        diagnostics = {}
        for kind, (model, norm) in models.items():
            present = [u for u in scored if u.scores[kind] is not None]
            hits = sum(u.scores[kind].argmax_label == u.label for u in present)
            diagnostics[kind] = ClassifierDiagnostics(
                train_segments=sum(len(feats[i].vectors(kind)) for i in train_idx),
                test_segments=test_counts[kind],
                flagged_features=[model.feature_names[c] for c in norm.flagged_columns],
                accuracy_per_seed=[hits / len(present)] if present else [],
            )
        return _SeedOutcome(seed=seed, units=scored, diagnostics=diagnostics)

    @staticmethod
    def _holdout(vectors: list) -> Tuple[list, list]:
        """Splits a recording's vectors (time order) into fit and held-out tail; one vector always stays for fitting."""
        if len(vectors) < 2:
            return list(vectors), []
        held = min(len(vectors) - 1, max(1, math.ceil(settings.validation_fraction * len(vectors))))
        return list(vectors[:-held]), list(vectors[-held:])

    @staticmethod
    def validation_units(
        cfg: ExperimentConfig, feats: Sequence[RecordingFeatures], pool: List[str], seed: int, use_blink: bool,
    ) -> List[_UnitScores]:
        """
        Units for fusion-weight tuning, built from the training recordings only.

        The last `settings.validation_fraction` of every training recording's
        segments is held out, the models are refitted on the rest and each
        training recording becomes one unit. Units without a fixation or
        saccade score are skipped.
        """
        entries = [f.entry for f in feats]
        train_idx, _ = ExperimentService.split_units(cfg, entries, pool)
        kinds = [k for k in KINDS if k != "blink" or use_blink]
        fit: Dict[str, list] = {k: [] for k in kinds}
        groups = []
        for i in train_idx:
            held = {}
            for kind in kinds:
                keep, held[kind] = ExperimentService._holdout(feats[i].vectors(kind))
                fit[kind] += keep
            groups.append((entries[i].participant_id, held))
        models = ExperimentService._train_kinds(cfg, fit, seed)
        units, _ = ExperimentService._score(models, groups, tuple(sorted(pool)))
        return [u for u in units if u.scores["fixation"] is not None or u.scores["saccade"] is not None]

    @staticmethod
    def _predict(units: Sequence[_UnitScores], w: FusionWeights) -> List[Tuple[str, str]]:
        out = []
        for u in units:
            try:
                result = ClassifierService.fuse(u.scores["fixation"], u.scores["saccade"], u.scores["blink"], w)
            except ClassifierError as exc:
                raise ClassifierError(f"test recording(s) of {u.label}: {exc}") from exc
            out.append((u.label, result.predicted_label))
        return out

    @staticmethod
    def _accuracy(units: Sequence[_UnitScores], w: FusionWeights) -> float:
        pairs = ExperimentService._predict(units, w)
        # total = one prediction per test unit
        return sum(t == p for t, p in pairs) / len(pairs)

    # ---------- multi-seed runs

    @staticmethod
    def _tune_on_validation(
        cfg: ExperimentConfig, feats: Sequence[RecordingFeatures], runs: Sequence[Tuple[int, List[str]]],
        use_blink: bool, workers: int,
    ) -> WeightTuningResult:
        """Nelder-Mead fusion weights on the validation units of the first `settings.tuning_seeds` seeds."""
        tuning = sorted(runs, key=lambda run: run[0])[:settings.tuning_seeds]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            validation = [v for v in pool.map(
                lambda run: ExperimentService.validation_units(cfg, feats, run[1], run[0], use_blink), tuning
            ) if v]
        if not validation:
            raise SplitError("training recordings are too short to hold out validation segments")
        logger.info(
            "Tuning fusion weights on %s validation units over %s seeds",
            sum(len(v) for v in validation), len(validation),
        )
        return OptimizeService.tune_fusion_weights(
            lambda w: float(np.mean([ExperimentService._accuracy(v, w) for v in validation])),
            BASELINE_WEIGHTS,
        )

    @staticmethod
    def _run(
        cfg: ExperimentConfig, data: PreparedDataset, runs: Sequence[Tuple[int, List[str]]], excluded: List[str],
    ) -> ExperimentReport:
        feats = data.features(cfg)
        use_blink = data.manifest.has_validity
        if not use_blink:
            logger.info("Dataset has no validity channel: blink classifier dropped")

        with ThreadPoolExecutor(max_workers=data.workers) as pool:
            outcomes = list(pool.map(
                lambda run: ExperimentService._seed_outcome(cfg, feats, run[1], run[0], use_blink), runs
            ))
        outcomes.sort(key=lambda o: o.seed)

        initial_weights = initial_accuracy = tuning_result = None
        if cfg.fusion == "optimize":
            tuning_result = ExperimentService._tune_on_validation(cfg, feats, runs, use_blink, data.workers)
            weights = tuning_result.weights
            initial_weights = BASELINE_WEIGHTS
            # baseline on the test units, for comparison only
            initial_accuracy = float(np.mean([ExperimentService._accuracy(o.units, BASELINE_WEIGHTS) for o in outcomes]))
        else:
            weights = cfg.fusion

        accuracies: List[float] = []
        confusion: Dict[str, Dict[str, int]] = defaultdict(lambda: defaultdict(int))
        for o in outcomes:
            pairs = ExperimentService._predict(o.units, weights)
            accuracies.append(sum(t == p for t, p in pairs) / len(pairs))
            for t, p in pairs:
                confusion[t][p] += 1
            logger.info("seed %s: accuracy %.4f (%s predictions)", o.seed, accuracies[-1], len(pairs))

        diagnostics: Dict[str, ClassifierDiagnostics] = {}
        for kind in KINDS:
            per_seed = [o.diagnostics[kind] for o in outcomes if kind in o.diagnostics]
            if per_seed:
                diagnostics[kind] = per_seed[0].model_copy(update={
                    "accuracy_per_seed": [a for d in per_seed for a in d.accuracy_per_seed],
                })

        report = ExperimentReport(
            accuracies=accuracies,
            seeds=[o.seed for o in outcomes],
            mean_accuracy=float(np.mean(accuracies)),
            sem=sem(accuracies),
            n_predictions=len(outcomes[0].units),
            confusion={t: dict(sorted(row.items())) for t, row in sorted(confusion.items())},
            fusion_weights=weights,
            initial_fusion_weights=initial_weights,
            initial_accuracy=initial_accuracy,
            validation_accuracy=tuning_result.accuracy if tuning_result else None,
            initial_validation_accuracy=tuning_result.initial_accuracy if tuning_result else None,
            diagnostics=diagnostics,
            excluded_participants=excluded,
            config=cfg,
        )
        logger.info(
            "accuracy %.4f +/- %.4f over %s seeds", report.mean_accuracy, report.sem, len(accuracies),
        )
        return report

    @staticmethod
    def run_experiment(
        cfg: ExperimentConfig, repo: Optional[DatasetRepo] = None, data: Optional[PreparedDataset] = None,
        workers: Optional[int] = None,
    ) -> ExperimentReport:
        """
        Full pipeline once per seed: preprocess, segment, point floor, features,
        z-score, RBFN per event kind, segment averaging, fusion, argmax.
        One prediction per test recording (or per participant with
        test_grouping="per_participant").
        """
        data = data or ExperimentService.prepare(cfg, repo, workers)
        eligible, excluded = ExperimentService.eligible_participants(cfg, data.entries)
        runs = [(s, ExperimentService._random_subset(cfg, eligible, s)) for s in cfg.seed_list]
        return ExperimentService._run(cfg, data, runs, excluded)

    @staticmethod
    def prepare(cfg: ExperimentConfig, repo: Optional[DatasetRepo] = None, workers: Optional[int] = None) -> PreparedDataset:
        if repo is None:
            repo = CsvDatasetRepository(cfg.manifest)
        return PreparedDataset(repo, workers)

    # ---------- subgroups

    @staticmethod
    def subgroup_pool(filt: SubgroupFilter, entries: Sequence[ManifestEntry], eligible: Sequence[str]) -> Tuple[List[str], List[str]]:
        """(males, others) satisfying the age range, or (all, []) when gender is not a criterion."""
        meta: Dict[str, ManifestEntry] = {}
        for e in entries:
            meta.setdefault(e.participant_id, e)

        def keep(p: str) -> bool:
            e = meta[p]
            if filt.age_min is not None and (e.age is None or e.age < filt.age_min):
                return False
            if filt.age_max is not None and (e.age is None or e.age > filt.age_max):
                return False
            if filt.gender in ("male", "female"):
                return e.gender == filt.gender
            if filt.gender == "balanced":
                return e.gender is not None
            return True

        chosen = [p for p in eligible if keep(p)]
        if filt.gender == "balanced":
            return [p for p in chosen if meta[p].gender == "male"], [p for p in chosen if meta[p].gender == "female"]
        return chosen, []

    @staticmethod
    def subgroup_resample(
        cfg: ExperimentConfig, repo: Optional[DatasetRepo] = None, data: Optional[PreparedDataset] = None,
        workers: Optional[int] = None,
    ) -> ExperimentReport:
        """
        `runs` resampled participant subsets honoring the filter; run r draws
        with (sampling_seed, r) and trains with seed seed_offset + r.
        """
        filt = cfg.subgroup or SubgroupFilter()
        data = data or ExperimentService.prepare(cfg, repo, workers)
        eligible, excluded = ExperimentService.eligible_participants(cfg, data.entries)
        first, second = ExperimentService.subgroup_pool(filt, data.entries, eligible)

        if filt.gender == "balanced":
            count = filt.participant_count or 2 * min(len(first), len(second))
            if count % 2:
                raise SubgroupError(f"a balanced subgroup needs an even participant count, got {count}")
            if count == 0 or count // 2 > min(len(first), len(second)):
                raise SubgroupError(
                    f"balanced subgroup of {count} needs {count // 2} males and {count // 2} females, "
                    f"available {len(first)} and {len(second)}"
                )
        else:
            count = filt.participant_count or len(first)
            if count == 0 or count > len(first):
                raise SubgroupError(f"subgroup asks for {count} participants, {len(first)} satisfy the filter")

        runs = []
        for r in range(filt.runs):
            rng = np.random.default_rng([cfg.sampling_seed, r])
            if filt.gender == "balanced":
                half = count // 2
                pool = rng.choice(first, half, replace=False).tolist() + rng.choice(second, half, replace=False).tolist()
            elif count == len(first):
                pool = list(first)
            else:
                pool = rng.choice(first, count, replace=False).tolist()
            seed = cfg.seed_offset + r
            runs.append((seed, ExperimentService._random_subset(cfg, sorted(pool), seed)))
        logger.info("Subgroup: %s runs of %s participants", filt.runs, count)
        return ExperimentService._run(cfg, data, runs, excluded)

    # ---------- ablation and IVT tuning

    @staticmethod
    def ablate_derivative_orders(
        cfg: ExperimentConfig, orders: Sequence[int], repo: Optional[DatasetRepo] = None,
        data: Optional[PreparedDataset] = None, workers: Optional[int] = None,
    ) -> List[AblationRow]:
        data = data or ExperimentService.prepare(cfg, repo, workers)
        rows = []
        for k in sorted(set(orders)):
            if not 0 <= k <= 5:
                raise DataError(f"derivative order must be in 0..5, got {k}")
            report = ExperimentService.run_experiment(cfg.model_copy(update={"derivative_order": k}), data=data)
            rows.append(AblationRow(
                derivative_order=k, feature_count=expected_feature_count(k),
                accuracy_mean=report.mean_accuracy, accuracy_sem=report.sem,
            ))
        return rows

    @staticmethod
    def ivt_runner(cfg: ExperimentConfig, data: PreparedDataset) -> IvtRunner:
        """run(ivt) -> (total fixation count, mean accuracy, SEM) with every other setting from cfg."""

        def run(ivt: IvtParams) -> Tuple[int, float, float]:
            point = cfg.model_copy(update={"ivt": ivt})
            report = ExperimentService.run_experiment(point, data=data)
            count = sum(f.fixation_count for f in data.features(point))
            return count, report.mean_accuracy, report.sem

        return run

    @staticmethod
    def tune_vt_by_fixation_peak(
        cfg: ExperimentConfig,
        vt_range: Tuple[float, float] = (10.0, 100.0),
        neighborhood: int = 3,
        step: float = 1.0,
        repo: Optional[DatasetRepo] = None,
        data: Optional[PreparedDataset] = None,
        workers: Optional[int] = None,
    ) -> Tuple[PeakResult, PeakTuningResult]:
        """
        VT with the most fixations over the training recordings, then accuracy
        on the VTs around it. Reports both the peak-count VT and the best-accuracy VT.
        """
        data = data or ExperimentService.prepare(cfg, repo, workers)
        train = {i for i, e in enumerate(data.entries) if e.session_label in cfg.split.train_sessions}
        mfd = cfg.ivt.min_fixation_duration_s
        peak = OptimizeService.peak_fixation_vt(
            lambda vt: data.fixation_count(cfg, IvtParams(velocity_threshold_deg_s=vt, min_fixation_duration_s=mfd), train),
            vt_range, neighborhood, step,
        )
        run = ExperimentService.ivt_runner(cfg, data)
        rows = []
        for vt in peak.candidates:
            count, mean, err = run(IvtParams(velocity_threshold_deg_s=vt, min_fixation_duration_s=mfd))
            rows.append(SweepRow(
                stage="peak", vt_deg_s=vt, mfd_s=mfd, fixation_count=count,
                accuracy_mean=mean, accuracy_sem=err,
            ))
        best = max(rows, key=lambda r: r.accuracy_mean)
        logger.info("Peak-count VT %s, best-accuracy VT %s", peak.peak_vt, best.vt_deg_s)
        return peak, PeakTuningResult(peak_vt=peak.peak_vt, best_vt=best.vt_deg_s, rows=rows, counts=peak.counts)
