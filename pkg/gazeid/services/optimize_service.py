from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from gazeid.core.errors import ComputeError
from gazeid.schemas.classifier import FusionWeights
from gazeid.schemas.experiment import PeakResult, SimplexConfig, SweepPlan, SweepResult, SweepRow
from gazeid.schemas.gaze import IvtParams

logger = logging.getLogger(__name__)

# zero weights have no softplus preimage; they start the search here
_WEIGHT_FLOOR = 0.05

# run(ivt) -> (fixation_count, accuracy_mean, accuracy_sem)
IvtRunner = Callable[[IvtParams], Tuple[int, float, float]]

# accuracy is piecewise constant in the weights, so the first simplex must be wide
TUNING_SIMPLEX = SimplexConfig(initial_step=0.5, max_iters=200, f_tol=1e-9, x_tol=1e-4)


class OptimizationError(ComputeError):
    """Raised when the objective is not finite on the initial simplex."""


class WeightTuningResult(BaseModel):
    weights: FusionWeights
    accuracy: float
    initial_weights: FusionWeights
    initial_accuracy: float
    evaluations: int


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _softplus_inv(w: np.ndarray) -> np.ndarray:
    w = np.maximum(np.asarray(w, dtype=float), _WEIGHT_FLOOR)
    return w + np.log(-np.expm1(-w))


def _grid(lo: float, hi: float, step: float) -> List[float]:
    n = int(np.floor((hi - lo) / step + 1e-6))
    return [round(lo + i * step, 6) for i in range(n + 1)]


class OptimizeService:

    @staticmethod
    def nelder_mead(
        f: Callable[[np.ndarray], float],
        x0: Sequence[float],
        cfg: SimplexConfig = SimplexConfig(),
    ) -> Tuple[np.ndarray, float]:
        """
        Downhill simplex (reflect / expand / contract / shrink).

        Initial simplex: x0 plus `cfg.initial_step` along each axis. Stops when
        the spread of vertex values drops below f_tol, the simplex diameter below
        x_tol, or after max_iters iterations. Returns the best vertex.
        """
        x0 = np.asarray(x0, dtype=float)
        n = x0.shape[0]
        simplex = np.vstack([x0] + [x0 + cfg.initial_step * np.eye(n)[i] for i in range(n)])
        fvals = np.array([f(v) for v in simplex], dtype=float)
        if not np.all(np.isfinite(fvals)):
            raise OptimizationError("objective is not finite on the initial simplex")

        def value(x: np.ndarray) -> float:
            fx = float(f(x))
            return fx if np.isfinite(fx) else np.inf

        it = 0
        for it in range(cfg.max_iters):
            order = np.argsort(fvals, kind="stable")
            simplex, fvals = simplex[order], fvals[order]
            if fvals[-1] - fvals[0] < cfg.f_tol:
                break
            if np.max(np.abs(simplex[1:] - simplex[0])) < cfg.x_tol:
                break

            centroid = simplex[:-1].mean(axis=0)
            worst = simplex[-1]
            xr = centroid + cfg.alpha * (centroid - worst)
            fr = value(xr)

            if fvals[0] <= fr < fvals[-2]:
                simplex[-1], fvals[-1] = xr, fr
                continue
            if fr < fvals[0]:
                xe = centroid + cfg.gamma * (xr - centroid)
                fe = value(xe)
                if fe < fr:
                    simplex[-1], fvals[-1] = xe, fe
                else:
                    simplex[-1], fvals[-1] = xr, fr
                continue
            if fr < fvals[-1]:
                xc = centroid + cfg.rho * (xr - centroid)
                fc = value(xc)
                if fc <= fr:
                    simplex[-1], fvals[-1] = xc, fc
                    continue
            else:
                xc = centroid + cfg.rho * (worst - centroid)
                fc = value(xc)
                if fc < fvals[-1]:
                    simplex[-1], fvals[-1] = xc, fc
                    continue
            # shrink towards the best vertex
            simplex[1:] = simplex[0] + cfg.sigma * (simplex[1:] - simplex[0])
            fvals[1:] = [value(v) for v in simplex[1:]]

        best = int(np.argmin(fvals))
        logger.debug("Nelder-Mead stopped after %s iterations, f*=%s", it + 1, fvals[best])
        return simplex[best].copy(), float(fvals[best])

    @staticmethod
    def tune_fusion_weights(
        evaluate: Callable[[FusionWeights], float],
        w0: FusionWeights,
        cfg: SimplexConfig = TUNING_SIMPLEX,
    ) -> WeightTuningResult:
        """
        Maximizes `evaluate(weights)` (a validation accuracy) with Nelder-Mead on
        -accuracy, in softplus space so every weight stays non-negative. The
        start weights are kept unless the search finds a strictly better accuracy.
        """
        cache: Dict[Tuple[float, ...], float] = {}

        def accuracy(w: FusionWeights) -> float:
            key = tuple(round(v, 12) for v in w.as_tuple())
            if key not in cache:
                cache[key] = float(evaluate(w))
            return cache[key]

        def objective(z: np.ndarray) -> float:
            w = _softplus(z)
            return -accuracy(FusionWeights(w_fix=w[0], w_sac=w[1], w_blink=w[2]))

        initial_accuracy = accuracy(w0)
        z_best, f_best = OptimizeService.nelder_mead(objective, _softplus_inv(w0.as_tuple()), cfg)
        wb = _softplus(z_best)
        best = FusionWeights(w_fix=wb[0], w_sac=wb[1], w_blink=wb[2])
        if -f_best <= initial_accuracy:
            best, best_accuracy = w0, initial_accuracy
        else:
            best_accuracy = -f_best
        logger.info(
            "Fusion weights %s -> %s, accuracy %.4f -> %.4f",
            w0.as_tuple(), best.as_tuple(), initial_accuracy, best_accuracy,
        )
        return WeightTuningResult(
            weights=best, accuracy=best_accuracy,
            initial_weights=w0, initial_accuracy=initial_accuracy,
            evaluations=len(cache),
        )

    @staticmethod
    def _evaluate_points(
        run: IvtRunner,
        points: Iterable[Tuple[float, float]],
        stage: str,
        seen: Dict[Tuple[float, float], SweepRow],
        workers: int,
    ) -> List[SweepRow]:
        todo = [p for p in dict.fromkeys(points) if p not in seen]

        def one(p: Tuple[float, float]) -> SweepRow:
            count, mean, sem = run(IvtParams(velocity_threshold_deg_s=p[0], min_fixation_duration_s=p[1]))
            logger.info("IVT VT=%s MFD=%s: fixations=%s accuracy=%.4f", p[0], p[1], count, mean)
            return SweepRow(
                stage=stage, vt_deg_s=p[0], mfd_s=p[1],
                fixation_count=int(count), accuracy_mean=float(mean), accuracy_sem=float(sem),
            )

        with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
            rows = list(pool.map(one, todo))
        for row in rows:
            seen[(row.vt_deg_s, row.mfd_s)] = row
        return [seen[p] for p in dict.fromkeys(points)]

    @staticmethod
    def _coarse_fine(
        run: IvtRunner, lo: float, hi: float, coarse: float, fine: float,
        to_point: Callable[[float], Tuple[float, float]], pick: Callable[[SweepRow], float],
        stage: str, seen: Dict[Tuple[float, float], SweepRow], workers: int,
    ) -> float:
        rows = OptimizeService._evaluate_points(run, [to_point(v) for v in _grid(lo, hi, coarse)], stage, seen, workers)
        centre = pick(max(rows, key=lambda r: r.accuracy_mean))
        f_lo = max(lo, centre - coarse + fine)
        f_hi = min(hi, centre + coarse - fine)
        rows += OptimizeService._evaluate_points(run, [to_point(v) for v in _grid(f_lo, f_hi, fine)], stage, seen, workers)
        return pick(max(rows, key=lambda r: r.accuracy_mean))

    @staticmethod
    def sweep_ivt(
        run: IvtRunner,
        plan: SweepPlan = SweepPlan(),
        stages: Sequence[str] = ("vt", "mfd"),
        start_vt: Optional[float] = None,
        workers: int = 1,
    ) -> SweepResult:
        """
        Two-stage IVT tuning. Stage "vt": coarse then fine VT scan at
        `plan.stage1_mfd`. Stage "mfd": coarse then fine MFD scan at the best VT
        (or `start_vt` when stage "vt" is skipped). Best = argmax of the table.
        """
        seen: Dict[Tuple[float, float], SweepRow] = {}
        vt = start_vt if start_vt is not None else plan.vt_range[0]
        if "vt" in stages:
            vt = OptimizeService._coarse_fine(
                run, plan.vt_range[0], plan.vt_range[1], plan.coarse_step, plan.fine_step,
                lambda v: (v, plan.stage1_mfd), lambda r: r.vt_deg_s, "vt", seen, workers,
            )
        if "mfd" in stages:
            OptimizeService._coarse_fine(
                run, plan.mfd_range[0], plan.mfd_range[1], plan.mfd_coarse_step, plan.mfd_fine_step,
                lambda m: (vt, m), lambda r: r.mfd_s, "mfd", seen, workers,
            )
        rows = list(seen.values())
        if not rows:
            raise OptimizationError(f"no sweep stage selected from {list(stages)}")
        best = max(rows, key=lambda r: r.accuracy_mean)
        return SweepResult(rows=rows, best=best)

    @staticmethod
    def peak_fixation_vt(
        count_fixations: Callable[[float], int],
        vt_range: Tuple[float, float],
        neighborhood: int = 3,
        step: float = 1.0,
    ) -> PeakResult:
        """VT with the highest total fixation count (first on ties) plus +/- neighborhood grid points."""
        grid = _grid(vt_range[0], vt_range[1], step)
        counts = {v: int(count_fixations(v)) for v in grid}
        peak = max(grid, key=lambda v: counts[v])
        candidates = [v for v in grid if abs(v - peak) <= neighborhood * step + 1e-9]
        logger.info("Fixation count peaks at VT=%s (%s fixations)", peak, counts[peak])
        return PeakResult(peak_vt=peak, candidates=candidates, counts=counts)
