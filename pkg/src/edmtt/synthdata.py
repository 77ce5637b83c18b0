"""Deterministic synthetic dataset with a known feature-to-engagement rule.

A stand-in for restricted video data: labels are exactly reliable because
each sample is generated from its class. Action-unit channels carry the
signal (mean intensity proportional to the engagement level), gaze wanders
more the less engaged the subject is, head pose is static up to noise, and
head rotation jitters with disengagement.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidDistribution
from .ingest import (
    ALL_FEATURE_COLUMNS,
    AU_COLUMNS,
    GAZE_COLUMNS,
    POSE_COLUMNS,
    ROTATION_COLUMNS,
    FrameFeatureSequence,
    write_labels_csv,
    write_sequence_csv,
)
from .sampler import raw_class_of

# Mirrors the strong class imbalance of real engagement recordings: few
# low-engagement samples, many high.
DEFAULT_CLASS_PROBS = (0.05, 0.10, 0.45, 0.40)

# Fixed per-column signal strength of each action unit; published here so
# expected values are stable across machines and runs.
AU_SIGNAL_COEFFS: dict[str, float] = {
    "AU01_r": 1.8, "AU02_r": 1.2, "AU04_r": 2.6, "AU05_r": 3.4,
    "AU06_r": 2.1, "AU07_r": 1.5, "AU09_r": 3.0, "AU10_r": 2.4,
    "AU12_r": 3.8, "AU14_r": 1.1, "AU15_r": 2.9, "AU17_r": 1.6,
    "AU20_r": 3.2, "AU23_r": 2.2, "AU25_r": 3.6, "AU26_r": 1.4,
    "AU45_r": 2.7,
}

GAZE_WANDER_SCALE = 0.1
ROTATION_JITTER_VARIANCE = 0.05
MIN_FRAMES = 100


def generate(
    num_samples: int,
    num_frames: int = 300,
    class_probs: Sequence[float] = DEFAULT_CLASS_PROBS,
    noise: float = 0.1,
    seed: int = 0,
) -> list[FrameFeatureSequence]:
    """Generate labeled feature sequences with all 29 schema columns.

    Per sample a raw class k in 0..3 is drawn from ``class_probs`` and the
    label set to k/3. AU column j holds clip(coeff_j * label + noise * eps, 0, 5)
    per frame; gaze columns random-walk with step scale (1 - label) * 0.1 plus
    noise; pose translation is a per-sample constant plus noise; pose rotation
    is zero-mean jitter with variance (1 - label) * 0.05. All randomness
    derives from ``seed``.
    """
    probs = np.asarray(class_probs, dtype=np.float64)
    if probs.shape != (4,) or (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidDistribution(
            f"class_probs must be 4 non-negative values summing to 1, got {class_probs!r}"
        )
    if num_frames < MIN_FRAMES:
        raise ValueError(f"num_frames must be >= {MIN_FRAMES}, got {num_frames}")
    if noise < 0:
        raise ValueError(f"noise must be non-negative, got {noise}")

    rng = np.random.default_rng(seed)
    classes = rng.choice(4, size=num_samples, p=probs)

    samples: list[FrameFeatureSequence] = []
    for i in range(num_samples):
        label = classes[i] / 3
        m = num_frames
        columns: dict[str, np.ndarray] = {}

        for col in GAZE_COLUMNS:
            start = rng.uniform(-0.5, 0.5)
            steps = ((1.0 - label) * GAZE_WANDER_SCALE * rng.standard_normal(m)
                     + noise * rng.standard_normal(m))
            columns[col] = start + np.cumsum(steps)

        base = (rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(400, 700))
        for col, center in zip(POSE_COLUMNS, base):
            columns[col] = center + noise * rng.standard_normal(m)

        rot_scale = np.sqrt((1.0 - label) * ROTATION_JITTER_VARIANCE)
        for col in ROTATION_COLUMNS:
            columns[col] = rot_scale * rng.standard_normal(m)

        for col in AU_COLUMNS:
            raw = AU_SIGNAL_COEFFS[col] * label + noise * rng.standard_normal(m)
            columns[col] = np.clip(raw, 0.0, 5.0)

        values = np.column_stack([columns[c] for c in ALL_FEATURE_COLUMNS])
        samples.append(FrameFeatureSequence(
            sample_id=f"synth_{i:04d}",
            values=values,
            feature_names=ALL_FEATURE_COLUMNS,
            label=label,
        ))
    return samples


def write_dataset(
    samples: Sequence[FrameFeatureSequence], out_dir: str | Path
) -> tuple[Path, Path]:
    """Write ingestible CSVs to ``out_dir/features`` plus ``out_dir/labels.csv``.

    Returns (features_dir, labels_path).
    """
    out_dir = Path(out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    label_rows = []
    for seq in samples:
        write_sequence_csv(seq, features_dir / f"{seq.sample_id}.csv")
        label_rows.append((seq.sample_id, raw_class_of(seq.label)))
    labels_path = out_dir / "labels.csv"
    write_labels_csv(label_rows, labels_path)
    return features_dir, labels_path
