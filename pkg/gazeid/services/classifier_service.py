from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import softmax
from sklearn.cluster import KMeans

from gazeid.core.errors import ComputeError
from gazeid.schemas.classifier import FusionResult, FusionWeights, PredictionDistribution, RbfnModel
from gazeid.schemas.features import FeatureVector

logger = logging.getLogger(__name__)

DEFAULT_CENTERS_PER_CLASS = 2
WIDTH_NEIGHBOURS = 2
WIDTH_FLOOR = 1e-6
RIDGE = 1e-6


class ClassifierError(ComputeError):
    """Raised for untrainable data, dimension mismatches or an empty fusion."""


def _kmeans_centers(samples: np.ndarray, n_centers: int, seed: int) -> np.ndarray:
    """One k-means over all training rows; with too few distinct rows they are the centers."""
    unique = np.unique(samples, axis=0)
    if unique.shape[0] <= n_centers:
        return unique
    km = KMeans(n_clusters=n_centers, n_init=3, random_state=seed)
    km.fit(samples)
    return km.cluster_centers_


def _widths(centers: np.ndarray, q: int) -> np.ndarray:
    """Mean distance to the q nearest other centers, floored."""
    k = centers.shape[0]
    if k == 1:
        return np.ones(1)
    d = cdist(centers, centers)
    np.fill_diagonal(d, np.inf)
    nearest = np.sort(d, axis=1)[:, :min(q, k - 1)]
    return np.maximum(nearest.mean(axis=1), WIDTH_FLOOR)


def _design(model_centers: np.ndarray, widths: np.ndarray, X: np.ndarray) -> np.ndarray:
    sq = cdist(X, model_centers, "sqeuclidean")
    phi = np.exp(-sq / (2.0 * widths ** 2))
    return np.hstack([phi, np.ones((X.shape[0], 1))])


class ClassifierService:

    @staticmethod
    def rbfn_train(
        X: np.ndarray,
        labels: Sequence[str],
        seed: int,
        centers_per_class: int = DEFAULT_CENTERS_PER_CLASS,
        class_labels: Optional[Sequence[str]] = None,
        **meta,
    ) -> RbfnModel:
        """
        Gaussian RBF network on normalized features.

        Centers: one k-means over all rows with K = centers_per_class * n_classes,
        seeded by `seed`, labels ignored; widths: mean distance to the 2 nearest
        other centers;
        output layer: ridge least squares (lambda 1e-6) on one-hot targets.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(labels, dtype=str)
        if X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise ClassifierError("training needs a non-empty matrix with one label per row")
        classes = tuple(sorted(set(class_labels) if class_labels is not None else set(y.tolist())))
        counts = {c: int(np.sum(y == c)) for c in classes}
        empty = [c for c, n in counts.items() if n == 0]
        if empty:
            raise ClassifierError(f"classes without training samples: {empty}")
        if centers_per_class < 1:
            raise ClassifierError("centers_per_class must be >= 1")

        centers = _kmeans_centers(X, centers_per_class * len(classes), seed)
        widths = _widths(centers, WIDTH_NEIGHBOURS)

        H = _design(centers, widths, X)
        targets = (y[:, None] == np.asarray(classes)[None, :]).astype(float)
        gram = H.T @ H + RIDGE * np.eye(H.shape[1])
        weights = np.linalg.solve(gram, H.T @ targets)

        logger.debug(
            "RBFN trained: %s samples, %s classes, %s centers, seed=%s",
            X.shape[0], len(classes), centers.shape[0], seed,
        )
        return RbfnModel(
            centers=centers, widths=widths, output_weights=weights,
            class_labels=classes, seed=seed, **meta,
        )

    @staticmethod
    def rbfn_train_vectors(
        vectors: Sequence[FeatureVector], seed: int,
        centers_per_class: int = DEFAULT_CENTERS_PER_CLASS,
    ) -> RbfnModel:
        if not vectors:
            raise ClassifierError("no training vectors")
        schema = vectors[0].feature_schema
        return ClassifierService.rbfn_train(
            np.vstack([v.values for v in vectors]),
            [v.participant_id for v in vectors],
            seed, centers_per_class,
            event_kind=vectors[0].segment_kind,
            feature_names=schema.names,
            derivative_order=schema.derivative_order,
        )

    @staticmethod
    def predict_proba(model: RbfnModel, X: np.ndarray) -> np.ndarray:
        """Row-wise posteriors: Gaussian activations -> linear outputs -> softmax."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != model.n_features:
            raise ClassifierError(
                f"model expects {model.n_features} features, got {X.shape[1]}"
            )
        outputs = _design(model.centers, model.widths, X) @ model.output_weights
        return softmax(outputs, axis=1)

    @staticmethod
    def rbfn_predict(model: RbfnModel, v) -> PredictionDistribution:
        values = v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=float)
        p = ClassifierService.predict_proba(model, values.reshape(1, -1))[0]
        return PredictionDistribution(probabilities=p / p.sum(), class_labels=model.class_labels)

    @staticmethod
    def aggregate_segments(model: RbfnModel, segments) -> Optional[PredictionDistribution]:
        """
        Mean of per-segment posteriors. An empty list returns None: that
        classifier is absent for this prediction and its fusion weight drops out.
        """
        if isinstance(segments, np.ndarray):
            X = segments
        else:
            X = np.vstack([s.values for s in segments]) if len(segments) else np.empty((0, model.n_features))
        if X.shape[0] == 0:
            return None
        p = ClassifierService.predict_proba(model, X).mean(axis=0)
        return PredictionDistribution(probabilities=p / p.sum(), class_labels=model.class_labels)

    @staticmethod
    def fuse(
        p_fix: Optional[PredictionDistribution],
        p_sac: Optional[PredictionDistribution],
        p_blink: Optional[PredictionDistribution],
        w: FusionWeights,
    ) -> FusionResult:
        """p_final = p_fix*w_fix + p_sac*w_sac + p_blink*w_blink; argmax, ties to the lowest class index."""
        parts = [
            (name, p, weight)
            for name, p, weight in (("fixation", p_fix, w.w_fix), ("saccade", p_sac, w.w_sac), ("blink", p_blink, w.w_blink))
            if p is not None
        ]
        if not parts:
            raise ClassifierError("all classifiers are absent")
        labels = parts[0][1].class_labels
        if any(p.class_labels != labels for _, p, _ in parts):
            raise ClassifierError("distributions do not share the class order")
        p_final = np.zeros(len(labels))
        for _, p, weight in parts:
            p_final = p_final + weight * p.probabilities
        if not np.any(p_final > 0):
            raise ClassifierError("every present classifier has zero weight")
        idx = int(np.argmax(p_final))
        return FusionResult(
            predicted_label=labels[idx], predicted_index=idx, p_final=p_final,
            class_labels=labels, used=[name for name, _, weight in parts if weight > 0],
        )
