"""Validation metrics, per-class prediction statistics, and the feature-set
ablation harness.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregate import ShortPolicy, aggregate_all
from .errors import EmptyDataset
from .ingest import ALL_GROUPS, FeatureGroup, FrameFeatureSequence, select_groups
from .loss import mse_loss
from .model import EdmttModel, ModelConfig
from .sampler import raw_class_of

CLASS_VALUES = (0.0, 1 / 3, 2 / 3, 1.0)

# (gaze, pose, rotation, aus) feature masks of the ablation grid, in report
# row order. The best-scoring reference combination is gaze+pose+aus.
DEFAULT_ABLATION_MASKS: tuple[tuple[int, int, int, int], ...] = (
    (1, 0, 0, 0),
    (0, 1, 0, 0),
    (0, 0, 1, 0),
    (0, 0, 0, 1),
    (0, 0, 1, 1),
    (0, 1, 1, 0),
    (1, 0, 1, 0),
    (1, 1, 0, 0),
    (1, 1, 1, 0),
    (1, 0, 1, 1),
    (1, 1, 0, 1),
    (1, 1, 1, 1),
)


@dataclass
class ClassStats:
    """Distribution of predictions for one ground-truth class."""

    count: int
    median: float
    q1: float
    q3: float
    min: float
    max: float


@dataclass
class EvalReport:
    mse: float
    per_class: dict[float, ClassStats]

    def to_json(self) -> str:
        return json.dumps({
            "mse": self.mse,
            "per_class": {repr(k): asdict(v) for k, v in self.per_class.items()},
        })

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(
            mse=d["mse"],
            per_class={float(k): ClassStats(**v)
                       for k, v in d["per_class"].items()},
        )

    def render_text(self) -> str:
        lines = [f"validation mse: {self.mse:.6f}", ""]
        lines.append(f"{'class':>6} {'count':>6} {'q1':>8} {'median':>8} "
                     f"{'q3':>8} {'min':>8} {'max':>8}")
        for value in sorted(self.per_class):
            s = self.per_class[value]
            lines.append(
                f"{value:>6.2f} {s.count:>6d} {s.q1:>8.4f} {s.median:>8.4f} "
                f"{s.q3:>8.4f} {s.min:>8.4f} {s.max:>8.4f}"
            )
        return "\n".join(lines) + "\n"


def evaluate(model: EdmttModel, dataset) -> EvalReport:
    """MSE over the dataset plus per-ground-truth-class prediction quartiles.

    Quartiles use inclusive linear interpolation so reports are deterministic
    across platforms.
    """
    if len(dataset) == 0:
        raise EmptyDataset("cannot evaluate an empty dataset")
    labels = []
    for seq in dataset:
        if seq.label is None:
            raise EmptyDataset(f"sample {seq.sample_id!r} has no label")
        labels.append(seq.label)

    preds: list[float] = []
    step = max(1, model.config.batch_size)
    for i in range(0, len(dataset), step):
        preds.extend(model.predict_engagement(dataset[i:i + step]))

    mse = float(mse_loss(preds, labels))

    per_class: dict[float, ClassStats] = {}
    by_class: dict[float, list[float]] = {}
    for label, pred in zip(labels, preds):
        by_class.setdefault(CLASS_VALUES[raw_class_of(label)], []).append(pred)
    for value, class_preds in by_class.items():
        arr = np.asarray(class_preds, dtype=np.float64)
        q1, med, q3 = np.percentile(arr, [25, 50, 75], method="linear")
        per_class[value] = ClassStats(
            count=len(class_preds),
            median=float(med),
            q1=float(q1),
            q3=float(q3),
            min=float(arr.min()),
            max=float(arr.max()),
        )
    return EvalReport(mse=mse, per_class=per_class)


# --- feature-set ablation ------------------------------------------------------


@dataclass
class AblationRow:
    mask: tuple[int, int, int, int]
    val_mse: float


def mask_to_groups(mask: Sequence[int]) -> tuple[FeatureGroup, ...]:
    if len(mask) != 4:
        raise ValueError(f"feature mask must have 4 bits, got {mask!r}")
    groups = tuple(g for g, bit in zip(ALL_GROUPS, mask) if bit)
    if not groups:
        raise ValueError("feature mask selects no groups")
    return groups


def ablate(
    masks: Sequence[Sequence[int]],
    sequences: Sequence[FrameFeatureSequence],
    config: ModelConfig,
    *,
    window_count: int,
    train_indices: Sequence[int],
    val_indices: Sequence[int],
    short_policy: ShortPolicy = ShortPolicy.ERROR,
) -> list[AblationRow]:
    """Re-run column-select, aggregation, training and evaluation per mask.

    All rows share one train/validation split and the seed carried by
    ``config``; only the selected feature columns differ.
    """
    from .train import train  # local import: train depends on model, not eval

    rows: list[AblationRow] = []
    for mask in masks:
        groups = mask_to_groups(mask)
        subset = [select_groups(s, groups) for s in sequences]
        aggregated = aggregate_all(subset, window_count, short_policy)
        cfg = replace(config, feature_dim=aggregated[0].stat_count,
                      window_count=window_count)
        train_set = [aggregated[i] for i in train_indices]
        val_set = [aggregated[i] for i in val_indices]
        _, log = train(train_set, val_set, cfg, feature_groups=groups)
        rows.append(AblationRow(mask=tuple(mask), val_mse=log.best_val_mse))
    return rows


def write_ablation_csv(rows: Sequence[AblationRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gaze", "pose", "rotation", "aus", "val_mse"])
        for row in rows:
            writer.writerow([*row.mask, repr(row.val_mse)])
