"""Parsing of OpenFace-format CSV output into validated feature sequences.

The toolkit that produces these CSVs is an external boundary: one row per
video frame, a header line, a `success` flag (0/1), a `confidence` score in
[0, 1], and named feature columns. Only the 29 columns covering eye gaze,
head pose, head rotation and action-unit intensities are consumed here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    EmptySequence,
    MissingColumn,
    NonFiniteValue,
    OutOfRangeLabel,
)

GAZE_COLUMNS = (
    "gaze_0_x", "gaze_0_y", "gaze_0_z",
    "gaze_1_x", "gaze_1_y", "gaze_1_z",
)
POSE_COLUMNS = ("pose_Tx", "pose_Ty", "pose_Tz")  # millimeters
ROTATION_COLUMNS = ("pose_Rx", "pose_Ry", "pose_Rz")  # radians
AU_COLUMNS = (
    "AU01_r", "AU02_r", "AU04_r", "AU05_r", "AU06_r", "AU07_r", "AU09_r",
    "AU10_r", "AU12_r", "AU14_r", "AU15_r", "AU17_r", "AU20_r", "AU23_r",
    "AU25_r", "AU26_r", "AU45_r",
)

SUCCESS_COLUMN = "success"
CONFIDENCE_COLUMN = "confidence"
DEFAULT_MIN_CONFIDENCE = 0.75


class FeatureGroup(Enum):
    """The four feature families, in canonical order."""

    EYE_GAZE = "gaze"
    HEAD_POSE = "pose"
    HEAD_ROTATION = "rotation"
    ACTION_UNITS = "aus"

    @property
    def columns(self) -> tuple[str, ...]:
        return _GROUP_COLUMNS[self]

    @classmethod
    def from_name(cls, name: str) -> "FeatureGroup":
        for g in cls:
            if g.value == name:
                return g
        raise ValueError(f"unknown feature group {name!r}; expected one of "
                         f"{[g.value for g in cls]}")


_GROUP_COLUMNS = {
    FeatureGroup.EYE_GAZE: GAZE_COLUMNS,
    FeatureGroup.HEAD_POSE: POSE_COLUMNS,
    FeatureGroup.HEAD_ROTATION: ROTATION_COLUMNS,
    FeatureGroup.ACTION_UNITS: AU_COLUMNS,
}

ALL_GROUPS = tuple(FeatureGroup)
ALL_FEATURE_COLUMNS = tuple(c for g in ALL_GROUPS for c in g.columns)


def group_columns(groups: Iterable[FeatureGroup]) -> tuple[str, ...]:
    """Columns of the requested groups, concatenated in canonical group order."""
    wanted = set(groups)
    return tuple(c for g in ALL_GROUPS if g in wanted for c in g.columns)


@dataclass
class FrameFeatureSequence:
    """One sample's per-frame feature matrix (rows = frames)."""

    sample_id: str
    values: np.ndarray
    feature_names: tuple[str, ...]
    label: float | None = None

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_features(self) -> int:
        return self.values.shape[1]


def map_raw_label(raw: int) -> float:
    """Map a raw annotation in {0, 1, 2, 3} onto [0, 1] as an exact third.

    Labels are kept as raw/3 (not two-decimal rounded values); rounding is a
    display concern only.
    """
    if isinstance(raw, bool) or raw not in (0, 1, 2, 3):
        raise OutOfRangeLabel(f"raw label must be one of 0..3, got {raw!r}")
    return raw / 3


def parse_openface_csv(
    path: str | Path,
    groups: Iterable[FeatureGroup] = ALL_GROUPS,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
    sample_id: str | None = None,
    label: float | None = None,
) -> FrameFeatureSequence:
    """Parse one OpenFace CSV into a FrameFeatureSequence.

    Rows with success == 0 or confidence below ``min_confidence`` are dropped
    without reordering the survivors. Output columns follow the canonical
    group order regardless of the column order in the file. Header names are
    matched case-sensitively after stripping surrounding whitespace (the
    extractor emits a leading space on some headers).
    """
    path = Path(path)
    wanted = group_columns(groups)
    if not wanted:
        raise MissingColumn(f"{path}: no feature groups requested")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptySequence(f"{path}: file has no header row") from None
        names = [h.strip() for h in header]
        index = {name: i for i, name in enumerate(names)}

        for col in (SUCCESS_COLUMN, CONFIDENCE_COLUMN, *wanted):
            if col not in index:
                raise MissingColumn(f"{path}: column {col!r} not in header")
        success_i = index[SUCCESS_COLUMN]
        conf_i = index[CONFIDENCE_COLUMN]
        feat_i = [index[c] for c in wanted]

        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                success = float(row[success_i])
                confidence = float(row[conf_i])
            except (ValueError, IndexError):
                raise NonFiniteValue(
                    f"{path}:{lineno}: unreadable success/confidence fields"
                ) from None
            if success == 0 or confidence < min_confidence:
                continue
            try:
                values = [float(row[i]) for i in feat_i]
            except (ValueError, IndexError):
                raise NonFiniteValue(
                    f"{path}:{lineno}: unreadable feature value"
                ) from None
            for col, v in zip(wanted, values):
                if not math.isfinite(v):
                    raise NonFiniteValue(
                        f"{path}:{lineno}: non-finite value in column {col!r}"
                    )
            rows.append(values)

    if not rows:
        raise EmptySequence(f"{path}: zero rows survive success/confidence filtering")

    return FrameFeatureSequence(
        sample_id=sample_id if sample_id is not None else path.stem,
        values=np.asarray(rows, dtype=np.float64),
        feature_names=wanted,
        label=label,
    )


def select_groups(
    seq: FrameFeatureSequence, groups: Iterable[FeatureGroup]
) -> FrameFeatureSequence:
    """Column-subset a parsed sequence down to the requested groups.

    Equivalent to re-parsing the source CSV with ``groups``; used by the
    ablation harness to avoid re-reading files per feature mask.
    """
    wanted = group_columns(groups)
    pos = {name: i for i, name in enumerate(seq.feature_names)}
    missing = [c for c in wanted if c not in pos]
    if missing:
        raise MissingColumn(
            f"sample {seq.sample_id!r}: columns {missing} not present in sequence"
        )
    cols = [pos[c] for c in wanted]
    return FrameFeatureSequence(
        sample_id=seq.sample_id,
        values=seq.values[:, cols].copy(),
        feature_names=wanted,
        label=seq.label,
    )


def load_labels(path: str | Path) -> dict[str, float]:
    """Read a two-column ``sample_id,raw_label`` CSV into mapped labels."""
    path = Path(path)
    labels: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDataset(f"{path}: labels file is empty")
        if [h.strip() for h in header[:2]] != ["sample_id", "raw_label"]:
            raise MissingColumn(
                f"{path}: expected header 'sample_id,raw_label', got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            sample_id = row[0].strip()
            try:
                raw = int(row[1])
            except (ValueError, IndexError):
                raise OutOfRangeLabel(
                    f"{path}:{lineno}: raw_label must be an integer in 0..3"
                ) from None
            labels[sample_id] = map_raw_label(raw)
    if not labels:
        raise EmptyDataset(f"{path}: labels file has no rows")
    return labels


def load_dataset(
    features_dir: str | Path,
    labels_path: str | Path | None = None,
    groups: Iterable[FeatureGroup] = ALL_GROUPS,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
) -> list[FrameFeatureSequence]:
    """Parse every ``*.csv`` under a directory, attaching labels when given.

    Files are processed in sorted order so downstream seeding is stable.
    With a labels file, every sample must have a label row.
    """
    features_dir = Path(features_dir)
    paths = sorted(features_dir.glob("*.csv"))
    if not paths:
        raise EmptyDataset(f"{features_dir}: no .csv files found")
    labels = load_labels(labels_path) if labels_path is not None else None

    sequences = []
    for p in paths:
        label = None
        if labels is not None:
            if p.stem not in labels:
                raise EmptyDataset(
                    f"{labels_path}: no label row for sample {p.stem!r}"
                )
            label = labels[p.stem]
        sequences.append(
            parse_openface_csv(p, groups=groups, min_confidence=min_confidence,
                               label=label)
        )
    return sequences


def write_sequence_csv(seq: FrameFeatureSequence, path: str | Path) -> None:
    """Write a sequence back out in the ingestible CSV schema.

    Emitted rows carry success=1 and confidence=1 so a re-parse reproduces
    the matrix exactly (float values are written in round-tripping repr).
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", SUCCESS_COLUMN, CONFIDENCE_COLUMN,
                         *seq.feature_names])
        for i, row in enumerate(seq.values):
            writer.writerow([i, 1, 1, *[repr(float(v)) for v in row]])


def write_labels_csv(labels: Sequence[tuple[str, int]], path: str | Path) -> None:
    """Write ``sample_id,raw_label`` rows for a generated dataset."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "raw_label"])
        for sample_id, raw in labels:
            writer.writerow([sample_id, raw])
