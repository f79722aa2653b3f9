"""IMU dataset ingestion and preprocessing.

Covers the two real-world sensor pipelines (fall detection and activity
recognition) and the training-load readiness labeler.  Activity recordings
are chunked on >2 s timestamp gaps, centrally cropped to 15 s, average-pooled
to a ~10 Hz target and label-coalesced; fall trials are cropped to 15 s
around the labeled event (or the trial center) and pooled only on the text
path, where context windows are the constraint.  Dataset file schemas are
mapped through small manifest dicts so column renames stay config changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DegenerateInputError, RejectedInputError
from .rng import Rng, derive_seed

ACTIVITY_CLASSES = ("sit", "stand", "stairs", "walk", "bike")
FALL_CLASSES = ("fall", "near_fall", "adl")
FALL_SEVERITY = ("fall", "near_fall", "adl")  # most to least severe
FALL_BODY_LOCATIONS = ("head", "waist", "left_thigh", "right_thigh")

SEGMENT_DURATION_S = 15.0
GAP_SPLIT_S = 2.0
ACTIVITY_TARGET_HZ = 10.0
FALL_TEXT_POOL_KERNEL = 10

TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}

HHAR_MANIFEST = {
    "time_column": "Creation_Time",
    "time_unit": "ns",
    "value_columns": ["x", "y", "z"],
    "user_column": "User",
    "device_column": "Device",
    "label_column": "gt",
}

IMUFD_MANIFEST = {
    "time_column": "time_s",
    "time_unit": "s",
    "accel_columns": ["acc_x", "acc_y", "acc_z"],
    "gyro_columns": ["gyr_x", "gyr_y", "gyr_z"],
}

_LABEL_COALESCE = {"stairsup": "stairs", "stairsdown": "stairs"}


class SegmentExcluded(Exception):
    """Recording cannot become a segment; carries the recorded reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class ImuSegment:
    """Six aligned channels (accel xyz then gyro xyz) at one sample rate."""

    channels: np.ndarray  # (6, n)
    sample_rate_hz: float
    participant: str
    device: str = ""
    body_location: str = ""
    label: str = ""
    meta: dict = field(default_factory=dict)

    def duration_s(self) -> float:
        return self.channels.shape[1] / self.sample_rate_hz

    def times(self) -> np.ndarray:
        return np.arange(self.channels.shape[1]) / self.sample_rate_hz


@dataclass
class RawRecording:
    """Unaligned accelerometer + gyroscope streams for one (user, device, label) bout."""

    participant: str
    device: str
    label: str
    acc_t: np.ndarray
    acc: np.ndarray  # (3, n_acc)
    gyro_t: np.ndarray
    gyro: np.ndarray  # (3, n_gyro)


def avgpool1d(signal: Sequence[float], kernel: int, stride: int) -> np.ndarray:
    """Mean over windows of ``kernel`` samples every ``stride`` samples.

    The trailing partial window is dropped.
    """
    arr = np.asarray(signal, dtype=np.float64)
    if kernel < 1 or stride < 1:
        raise RejectedInputError("kernel and stride must be >= 1")
    if arr.ndim != 1:
        raise RejectedInputError("signal must be 1-D")
    if arr.size < kernel:
        raise RejectedInputError(f"signal length {arr.size} is shorter than kernel {kernel}")
    n_out = (arr.size - kernel) // stride + 1
    idx = np.arange(kernel)[None, :] + stride * np.arange(n_out)[:, None]
    return arr[idx].mean(axis=1)


def pool_segment(segment: ImuSegment, kernel: int, stride: int) -> ImuSegment:
    pooled = np.stack([avgpool1d(ch, kernel, stride) for ch in segment.channels])
    return ImuSegment(
        channels=pooled,
        sample_rate_hz=segment.sample_rate_hz / stride,
        participant=segment.participant,
        device=segment.device,
        body_location=segment.body_location,
        label=segment.label,
        meta={**segment.meta, "pool_kernel": kernel, "pool_stride": stride},
    )


def _estimate_rate(t: np.ndarray) -> float:
    if t.size < 2:
        raise SegmentExcluded("too_few_samples")
    dt = float(np.median(np.diff(t)))
    if dt <= 0:
        raise SegmentExcluded("non_increasing_timestamps")
    return 1.0 / dt


def _longest_chunk(t: np.ndarray) -> tuple[int, int]:
    """Bounds [start, end] of the longest run without gaps > GAP_SPLIT_S."""
    gaps = np.where(np.diff(t) > GAP_SPLIT_S)[0]
    starts = np.concatenate([[0], gaps + 1])
    ends = np.concatenate([gaps, [t.size - 1]])
    durations = t[ends] - t[starts]
    k = int(np.argmax(durations))
    return int(starts[k]), int(ends[k])


def _central_crop(t: np.ndarray, lo: float, hi: float, duration: float) -> np.ndarray:
    mid = (lo + hi) / 2.0
    return (t >= mid - duration / 2.0) & (t < mid + duration / 2.0)


def segment_hhar(rec: RawRecording, target_hz: float = ACTIVITY_TARGET_HZ) -> ImuSegment:
    """Turn one raw activity recording into a pooled 15 s segment.

    Raises :class:`SegmentExcluded` (reason recorded) for rate-mismatched
    sensors, unknown labels, or recordings whose longest gap-free chunk is
    shorter than 15 s.
    """
    label = _LABEL_COALESCE.get(rec.label, rec.label)
    if label not in ACTIVITY_CLASSES:
        raise SegmentExcluded(f"unknown_label:{rec.label}")
    acc_rate = _estimate_rate(rec.acc_t)
    gyro_rate = _estimate_rate(rec.gyro_t)
    if abs(acc_rate - gyro_rate) / max(acc_rate, gyro_rate) > 0.05:
        raise SegmentExcluded("sample_rate_mismatch")

    s, e = _longest_chunk(rec.acc_t)
    lo, hi = float(rec.acc_t[s]), float(rec.acc_t[e])
    if hi - lo < SEGMENT_DURATION_S:
        raise SegmentExcluded("chunk_too_short")
    acc_mask = _central_crop(rec.acc_t, lo, hi, SEGMENT_DURATION_S)
    gyro_mask = _central_crop(rec.gyro_t, lo, hi, SEGMENT_DURATION_S)
    if not acc_mask.any() or not gyro_mask.any():
        raise SegmentExcluded("empty_crop")

    kernel = max(1, int(acc_rate // target_hz))
    channels = []
    for row in rec.acc[:, acc_mask]:
        channels.append(avgpool1d(row, kernel, kernel))
    for row in rec.gyro[:, gyro_mask]:
        channels.append(avgpool1d(row, kernel, kernel))
    n = min(len(c) for c in channels)
    stacked = np.stack([c[:n] for c in channels])
    return ImuSegment(
        channels=stacked,
        sample_rate_hz=acc_rate / kernel,
        participant=rec.participant,
        device=rec.device,
        label=label,
        meta={"raw_rate_hz": acc_rate, "pool_kernel": kernel, "crop": [lo, hi]},
    )


def load_hhar_csv(
    accel_path: str | Path,
    gyro_path: str | Path,
    manifest: Optional[dict] = None,
) -> list[RawRecording]:
    """Read paired accelerometer/gyroscope CSVs into raw recordings.

    Rows are grouped by (user, device, label); discontiguous bouts of the
    same activity stay in one recording and are separated later by the >2 s
    gap splitting in :func:`segment_hhar`.
    """
    m = {**HHAR_MANIFEST, **(manifest or {})}
    unit = TIME_UNITS[m["time_unit"]]
    frames = {"acc": pd.read_csv(accel_path), "gyro": pd.read_csv(gyro_path)}
    grouped: dict[tuple, dict] = {}
    for sensor, df in frames.items():
        for key, g in df.groupby([m["user_column"], m["device_column"], m["label_column"]]):
            g = g.sort_values(m["time_column"])
            entry = grouped.setdefault(tuple(key), {})
            entry[sensor] = (
                g[m["time_column"]].to_numpy(dtype=np.float64) * unit,
                g[m["value_columns"]].to_numpy(dtype=np.float64).T,
            )
    recordings = []
    for (user, device, label), entry in sorted(grouped.items()):
        if "acc" not in entry or "gyro" not in entry:
            continue
        recordings.append(
            RawRecording(
                participant=str(user),
                device=str(device),
                label=str(label),
                acc_t=entry["acc"][0],
                acc=entry["acc"][1],
                gyro_t=entry["gyro"][0],
                gyro=entry["gyro"][1],
            )
        )
    return recordings


def ingest_hhar(
    accel_path: str | Path,
    gyro_path: str | Path,
    manifest: Optional[dict] = None,
    target_hz: float = ACTIVITY_TARGET_HZ,
) -> tuple[list[ImuSegment], list[tuple[RawRecording, str]]]:
    segments, exclusions = [], []
    for rec in load_hhar_csv(accel_path, gyro_path, manifest):
        try:
            segments.append(segment_hhar(rec, target_hz=target_hz))
        except SegmentExcluded as exc:
            exclusions.append((rec, exc.reason))
    return segments, exclusions


# --- fall detection ----------------------------------------------------------


@dataclass
class ImufdTrial:
    participant: str
    body_location: str
    label: str
    t: np.ndarray
    channels: np.ndarray  # (6, n)
    event_time_s: Optional[float] = None
    trial: str = ""  # shared across the body locations of one recording session


def crop_fall_trial(trial: ImufdTrial, duration_s: float = SEGMENT_DURATION_S) -> ImuSegment:
    """15 s crop centered on the labeled event when present, else the trial center."""
    if trial.channels.shape[0] != 6:
        raise RejectedInputError("fall trials must have 6 channels")
    t = trial.t
    if t[-1] - t[0] < duration_s:
        raise SegmentExcluded("trial_too_short")
    center = trial.event_time_s if trial.event_time_s is not None else float((t[0] + t[-1]) / 2.0)
    half = duration_s / 2.0
    lo = min(max(center - half, float(t[0])), float(t[-1]) - duration_s)
    mask = (t >= lo) & (t < lo + duration_s)
    rate = _estimate_rate(t[mask])
    return ImuSegment(
        channels=trial.channels[:, mask],
        sample_rate_hz=rate,
        participant=trial.participant,
        body_location=trial.body_location,
        label=trial.label,
        meta={
            "crop_center": center,
            "event_centered": trial.event_time_s is not None,
            "trial": trial.trial,
        },
    )


def load_imufd(index_path: str | Path, manifest: Optional[dict] = None) -> list[ImufdTrial]:
    """Load fall trials listed in an index CSV.

    The index has columns ``file, participant, location, label`` and an
    optional ``event_time_s``; each referenced CSV holds the time column and
    six channel columns named by the manifest.
    """
    m = {**IMUFD_MANIFEST, **(manifest or {})}
    index_path = Path(index_path)
    index = pd.read_csv(index_path)
    trials = []
    # without an explicit trial column, the Nth recording of a (participant,
    # label) at each location is the Nth trial
    implicit: dict[tuple, int] = {}
    for row in index.itertuples(index=False):
        df = pd.read_csv(index_path.parent / row.file)
        event = getattr(row, "event_time_s", None)
        if event is not None and pd.isna(event):
            event = None
        trial = getattr(row, "trial", None)
        if trial is None or (isinstance(trial, float) and pd.isna(trial)):
            key = (str(row.participant), str(row.label), str(row.location))
            implicit[key] = implicit.get(key, -1) + 1
            trial = str(implicit[key])
        trials.append(
            ImufdTrial(
                participant=str(row.participant),
                body_location=str(row.location),
                label=str(row.label),
                t=df[m["time_column"]].to_numpy(dtype=np.float64) * TIME_UNITS[m["time_unit"]],
                channels=df[m["accel_columns"] + m["gyro_columns"]].to_numpy(dtype=np.float64).T,
                event_time_s=None if event is None else float(event),
                trial=str(trial),
            )
        )
    return trials


def split_imufd(participants: Sequence[str], master_seed: int, train_fraction: float = 0.2) -> tuple[list, list]:
    """Participant-level train/test split (train defaults to 20%)."""
    unique = sorted(set(participants))
    if len(unique) < 5:
        raise ConfigurationError(f"need >= 5 participants to split, got {len(unique)}")
    shuffled = Rng(derive_seed(master_seed, "imufd-split")).shuffle(unique)
    n_train = max(1, round(train_fraction * len(unique)))
    return sorted(shuffled[:n_train]), sorted(shuffled[n_train:])


def majority_vote(predictions: Sequence[str], severity: Sequence[str] = FALL_SEVERITY) -> str:
    """Modal label across body locations; ties go to the most severe label."""
    preds = list(predictions)
    if not preds:
        raise RejectedInputError("majority_vote needs at least one prediction")
    counts: dict[str, int] = {}
    for p in preds:
        counts[p] = counts.get(p, 0) + 1
    top = max(counts.values())
    tied = [label for label, c in counts.items() if c == top]
    order = list(severity)
    tied.sort(key=lambda lbl: order.index(lbl) if lbl in order else len(order))
    return tied[0]


# --- readiness ---------------------------------------------------------------

TRIMP_DAYS = 30
ACWR_ACUTE_DAYS = 7
ACWR_CHRONIC_DAYS = 28


def acwr_label(trimp: Sequence[float]) -> tuple[float, str]:
    """Acute/chronic workload ratio over 30 daily TRIMP values.

    Acute load is the last 7 days' total; chronic load is the mean of the
    complete rolling 7-day sums ending within the last 28 days.  A ratio
    strictly above 1.0 labels the trend "up", otherwise "down".
    """
    arr = np.asarray(trimp, dtype=np.float64)
    if arr.ndim != 1 or arr.size != TRIMP_DAYS:
        raise RejectedInputError(f"expected {TRIMP_DAYS} daily values, got shape {arr.shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise RejectedInputError("TRIMP values must be finite and non-negative")
    acute = float(arr[-ACWR_ACUTE_DAYS:].sum())
    rolling = np.convolve(arr, np.ones(ACWR_ACUTE_DAYS), mode="valid")  # ends at days 6..29
    end_days = np.arange(ACWR_ACUTE_DAYS - 1, arr.size)
    recent = rolling[end_days >= arr.size - ACWR_CHRONIC_DAYS]
    chronic = float(recent.mean())
    if chronic <= 0:
        raise DegenerateInputError("chronic load is zero; ratio undefined")
    ratio = acute / chronic
    return ratio, ("up" if ratio > 1.0 else "down")
