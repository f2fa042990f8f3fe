from __future__ import annotations

import logging
from typing import List, Sequence, Tuple

import numpy as np

from gazeid.core.errors import DataError
from gazeid.schemas.experiment import DatasetManifest, ManifestEntry, SyntheticDataset, SyntheticUserProfile
from gazeid.schemas.gaze import BIOEYE_GEOMETRY, GazeRecording, ParticipantMetadata, ScreenGeometry, Segment

logger = logging.getLogger(__name__)

# the generated gaze stays inside this box (degrees), well within the screen
FIELD_HALF_WIDTH_DEG = 12.0
MIN_SACCADE_SAMPLES = 2
MIN_BLINK_S = 0.02


def _event(kind: str, start: int, end: int, points: np.ndarray, rate: float) -> Segment:
    pts = points[start:end + 1] if kind != "blink" else np.empty((0, 2))
    return Segment(kind=kind, start_index=start, end_index=end, points=pts, duration=(end - start + 1) / rate)


def _saccade_target(rng: np.random.Generator, pos: np.ndarray, amplitude: float) -> np.ndarray:
    angle = rng.uniform(-np.pi, np.pi)
    target = pos + amplitude * np.array([np.cos(angle), np.sin(angle)])
    if np.max(np.abs(target)) > FIELD_HALF_WIDTH_DEG:
        # torna verso il centro
        angle = np.arctan2(-pos[1], -pos[0]) + rng.uniform(-np.pi / 4, np.pi / 4)
        target = pos + amplitude * np.array([np.cos(angle), np.sin(angle)])
    return np.clip(target, -FIELD_HALF_WIDTH_DEG, FIELD_HALF_WIDTH_DEG)


class SyntheticService:

    @staticmethod
    def generate_recording(
        profile: SyntheticUserProfile,
        session_label: str,
        duration_s: float,
        rate_hz: float,
        rng: np.random.Generator,
        geometry: ScreenGeometry = BIOEYE_GEOMETRY,
    ) -> Tuple[GazeRecording, List[Segment]]:
        """
        One recording of alternating fixations and saccades in degrees.

        Fixation length = fixation_duration_s + Exp(1 / saccade_rate_hz); samples
        are Gaussian jitter around the fixation point. Saccades move at constant
        velocity (saccade_peak_velocity_deg_s) over at least two samples. Blinks
        start inside fixations at blink_rate_hz and are NaN samples flagged invalid.
        Measurement noise (noise_level_deg) is added everywhere.
        """
        n = int(round(duration_s * rate_hz))
        xy = np.empty((n, 2))
        valid = np.ones(n, dtype=bool)
        events: List[Tuple[str, int, int]] = []
        pos = rng.uniform(-FIELD_HALF_WIDTH_DEG / 2, FIELD_HALF_WIDTH_DEG / 2, size=2)

        i = 0
        while i < n:
            fix_s = profile.fixation_duration_s + rng.exponential(1.0 / profile.saccade_rate_hz)
            blink_s = 0.0
            if profile.blink_rate_hz > 0 and rng.random() < 1.0 - np.exp(-profile.blink_rate_hz * fix_s):
                blink_s = max(MIN_BLINK_S, rng.normal(profile.blink_duration_mean_s, profile.blink_duration_std_s))
                fix_s = max(fix_s, blink_s + 2 * profile.fixation_duration_s)
            nf = max(1, int(round(fix_s * rate_hz)))
            end = min(i + nf, n)
            xy[i:end] = pos + rng.normal(0.0, profile.fixation_jitter_deg, size=(end - i, 2))
            events.append(("fixation", i, end - 1))

            if blink_s > 0:
                nb = max(1, int(round(blink_s * rate_hz)))
                b0 = i + (nf - nb) // 2
                b1 = min(b0 + nb, n)
                if b0 < n:
                    valid[b0:b1] = False
                    events.append(("blink", b0, b1 - 1))
            i = end
            if i >= n:
                break

            amplitude = profile.saccade_amplitude_deg * rng.uniform(0.5, 1.5)
            target = _saccade_target(rng, pos, amplitude)
            ns = max(MIN_SACCADE_SAMPLES, int(round(np.linalg.norm(target - pos) / profile.saccade_peak_velocity_deg_s * rate_hz)))
            end = min(i + ns, n)
            steps = np.arange(1, end - i + 1)[:, None] / ns
            xy[i:end] = pos + steps * (target - pos)
            events.append(("saccade", i, end - 1))
            pos = target
            i = end

        xy += rng.normal(0.0, profile.noise_level_deg, size=xy.shape)
        xy[~valid] = np.nan

        rec = GazeRecording(
            t=np.arange(n) / rate_hz, x=xy[:, 0], y=xy[:, 1], valid=valid,
            sample_rate_hz=rate_hz, geometry=geometry, coordinate_space="degrees",
            participant_id=profile.participant_id, session_label=session_label,
            metadata=ParticipantMetadata(gender=profile.gender, age=profile.age),
        )
        ordered = sorted(events, key=lambda e: (e[1], e[0] != "blink"))
        return rec, [_event(k, s, e, xy, rate_hz) for k, s, e in ordered]

    @staticmethod
    def generate_synthetic(
        profiles: Sequence[SyntheticUserProfile],
        sessions: int,
        duration_s: float,
        rate_hz: float,
        seed: int,
        geometry: ScreenGeometry = BIOEYE_GEOMETRY,
        name: str = "synthetic",
    ) -> SyntheticDataset:
        """
        `sessions` recordings per profile, labelled s1..sK. Every recording draws
        from its own generator seeded by (seed, user index, session index), so
        the dataset depends only on the arguments.
        """
        if sessions < 1:
            raise DataError("at least one session per user is required")
        if len({p.participant_id for p in profiles}) != len(profiles):
            raise DataError("participant ids must be unique")

        recordings: List[GazeRecording] = []
        events: List[List[Segment]] = []
        entries: List[ManifestEntry] = []
        for u, profile in enumerate(profiles):
            for s in range(sessions):
                label = f"s{s + 1}"
                rng = np.random.default_rng([seed, u, s])
                rec, ev = SyntheticService.generate_recording(profile, label, duration_s, rate_hz, rng, geometry)
                recordings.append(rec)
                events.append(ev)
                entries.append(ManifestEntry(
                    path=f"{profile.participant_id}_{label}.csv",
                    participant_id=profile.participant_id, session_label=label,
                    gender=profile.gender, age=profile.age,
                ))
        logger.info("Generated %s recordings for %s users (seed=%s)", len(recordings), len(profiles), seed)
        manifest = DatasetManifest(
            name=name, coordinate_space="degrees", sample_rate_hz=rate_hz,
            geometry=geometry, has_validity=True, recordings=entries,
        )
        return SyntheticDataset(manifest=manifest, recordings=recordings, events=events)

    @staticmethod
    def default_profiles(users: int, seed: int) -> List[SyntheticUserProfile]:
        """Users spread over saccade velocity, jitter, fixation length and blink habits."""
        rng = np.random.default_rng(seed)
        profiles = []
        for u in range(users):
            profiles.append(SyntheticUserProfile(
                participant_id=f"u{u + 1:03d}",
                fixation_duration_s=float(rng.uniform(0.15, 0.40)),
                fixation_jitter_deg=float(rng.uniform(0.01, 0.06)),
                saccade_peak_velocity_deg_s=float(rng.uniform(150.0, 500.0)),
                saccade_rate_hz=float(rng.uniform(2.0, 4.0)),
                saccade_amplitude_deg=float(rng.uniform(3.0, 10.0)),
                blink_rate_hz=float(rng.uniform(0.1, 0.5)),
                blink_duration_mean_s=float(rng.uniform(0.12, 0.35)),
                blink_duration_std_s=0.02,
                noise_level_deg=0.005,
                gender="male" if u % 2 == 0 else "female",
                age=int(rng.integers(18, 60)),
            ))
        return profiles
