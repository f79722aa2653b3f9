"""Shared fixtures: synthetic IMU recordings and dataset files.

The sensor fixtures carry realistic magnitudes (gravity on the accelerometer
z axis, walking-band oscillations, rad/s-scale gyro) so text encodings and
costs look like real data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from plotbench.imupipe import ImuSegment
from plotbench.rng import Rng, derive_seed

ACTIVITY_FIXTURE_LABELS = ("sit", "stand", "stairs", "walk", "bike")


def make_segment(
    seed: int,
    label: str = "walk",
    participant: str = "p01",
    device: str = "fixture",
    rate_hz: float = 128.0,
    duration_s: float = 15.0,
    body_location: str = "",
) -> ImuSegment:
    """Deterministic 6-channel segment with plausible accel/gyro magnitudes."""
    n = int(round(rate_hz * duration_s))
    t = np.arange(n) / rate_hz
    rng = Rng(derive_seed(seed, "segment", label, participant))
    intensity = {"sit": 0.2, "stand": 0.3, "stairs": 2.0, "walk": 1.5, "bike": 1.0}.get(label, 1.0)
    freq = {"sit": 0.3, "stand": 0.4, "stairs": 1.8, "walk": 2.0, "bike": 1.2}.get(label, 1.0)
    acc_x = intensity * 2.0 * np.sin(2 * np.pi * freq * t) + rng.normals(n, std=1.2)
    acc_y = intensity * 1.5 * np.cos(2 * np.pi * freq * t) + rng.normals(n, std=1.2)
    acc_z = 9.81 + intensity * 3.0 * np.sin(2 * np.pi * freq * t + 0.5) + rng.normals(n, std=1.5)
    gyr = [intensity * np.sin(2 * np.pi * freq * t + k) + rng.normals(n, std=0.8) for k in range(3)]
    return ImuSegment(
        channels=np.stack([acc_x, acc_y, acc_z] + gyr),
        sample_rate_hz=rate_hz,
        participant=participant,
        device=device,
        body_location=body_location,
        label=label,
    )


def write_hhar_csvs(
    tmp_path: Path,
    users: tuple[str, ...] = ("a", "b", "c"),
    labels: tuple[str, ...] = ("walk", "sit", "stairsup"),
    rate_hz: float = 100.0,
    duration_s: float = 20.0,
    gyro_rate_hz: float | None = None,
    gap_at_s: float | None = None,
) -> tuple[Path, Path]:
    """Write accelerometer/gyroscope CSVs in the public HHAR column layout."""
    acc_rows = []
    gyro_rows = []
    for user in users:
        for label in labels:
            seg_seed = derive_seed(0, "hhar-fixture", user, label)
            for sensor, rows, rate in (
                ("acc", acc_rows, rate_hz),
                ("gyro", gyro_rows, gyro_rate_hz or rate_hz),
            ):
                n = int(round(rate * duration_s))
                t = np.arange(n) / rate
                if gap_at_s is not None:
                    t = np.where(t >= gap_at_s, t + 3.0, t)  # 3 s hole
                rng = Rng(derive_seed(seg_seed, sensor))
                base = 9.81 if sensor == "acc" else 0.0
                x = rng.normals(n)
                y = rng.normals(n)
                z = base + rng.normals(n)
                for i in range(n):
                    rows.append(
                        {
                            "Index": i,
                            "Arrival_Time": int(t[i] * 1e3),
                            "Creation_Time": int(t[i] * 1e9),
                            "x": x[i],
                            "y": y[i],
                            "z": z[i],
                            "User": user,
                            "Model": "nexus4",
                            "Device": "nexus4_1",
                            "gt": label,
                        }
                    )
    tmp_path.mkdir(parents=True, exist_ok=True)
    acc_path = tmp_path / "Phones_accelerometer.csv"
    gyro_path = tmp_path / "Phones_gyroscope.csv"
    pd.DataFrame(acc_rows).to_csv(acc_path, index=False)
    pd.DataFrame(gyro_rows).to_csv(gyro_path, index=False)
    return acc_path, gyro_path


def write_imufd_fixture(
    tmp_path: Path,
    participants: tuple[str, ...] = ("p1", "p2", "p3", "p4", "p5"),
    locations: tuple[str, ...] = ("head", "waist"),
    labels: tuple[str, ...] = ("fall", "near_fall", "adl"),
    rate_hz: float = 128.0,
    duration_s: float = 20.0,
) -> Path:
    """Write an IMUFD-style index CSV plus per-trial channel CSVs."""
    index_rows = []
    data_dir = tmp_path / "imufd"
    data_dir.mkdir(parents=True, exist_ok=True)
    for participant in participants:
        for label in labels:
            for location in locations:
                seg = make_segment(
                    derive_seed(1, participant, label, location),
                    label=label,
                    participant=participant,
                    rate_hz=rate_hz,
                    duration_s=duration_s,
                    body_location=location,
                )
                t = np.arange(seg.channels.shape[1]) / rate_hz
                df = pd.DataFrame(
                    {
                        "time_s": t,
                        "acc_x": seg.channels[0],
                        "acc_y": seg.channels[1],
                        "acc_z": seg.channels[2],
                        "gyr_x": seg.channels[3],
                        "gyr_y": seg.channels[4],
                        "gyr_z": seg.channels[5],
                    }
                )
                name = f"{participant}_{label}_{location}.csv"
                df.to_csv(data_dir / name, index=False)
                index_rows.append(
                    {
                        "file": name,
                        "participant": participant,
                        "location": location,
                        "label": label,
                        "event_time_s": duration_s / 2 if label == "fall" else None,
                    }
                )
    index_path = data_dir / "index.csv"
    pd.DataFrame(index_rows).to_csv(index_path, index=False)
    return index_path


def write_trimp_csv(tmp_path: Path, n_cases: int = 6) -> Path:
    rows = []
    for case in range(n_cases):
        rng = Rng(derive_seed(7, "trimp", case))
        base = 40.0 + 10.0 * case
        values = np.maximum(0.0, base + rng.normals(30, std=12.0))
        if case % 2 == 0:
            values[-7:] *= 1.8  # load ramps up
        else:
            values[-7:] *= 0.5
        row = {"case_id": f"case{case}"}
        row.update({f"day_{i + 1}": float(v) for i, v in enumerate(values)})
        rows.append(row)
    path = tmp_path / "trimp.csv"
    pd.DataFrame(rows).to_csv(path, index=False)
    return path
