"""Engagement-class binarization, triplet batch construction, and the
class-balancing oversampler used during training.

All randomness flows through an injected ``random.Random`` so the training
driver controls reproducibility.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .aggregate import AggregatedSequence
from .errors import DegenerateClassDistribution, EmptyDataset, OutOfRangeLabel

ENGAGEMENT_THRESHOLD = 0.5


class EngagementClass(Enum):
    LOW = "low"
    HIGH = "high"


def assign_engagement_class(label: float) -> EngagementClass:
    """Binarize an engagement level: below 0.5 is LOW, 0.5 and above is HIGH."""
    if not 0.0 <= label <= 1.0:
        raise OutOfRangeLabel(f"engagement label must lie in [0, 1], got {label!r}")
    return EngagementClass.LOW if label < ENGAGEMENT_THRESHOLD else EngagementClass.HIGH


def raw_class_of(label: float) -> int:
    """Nearest raw annotation class (0..3) for a label in [0, 1]."""
    if not 0.0 <= label <= 1.0:
        raise OutOfRangeLabel(f"engagement label must lie in [0, 1], got {label!r}")
    return int(round(label * 3))


@dataclass
class TripletBatch:
    """Index-aligned anchor/positive/negative batches.

    The positive at index s shares the anchor's binary engagement class, the
    negative has the opposite class.
    """

    anchor: list[AggregatedSequence]
    positive: list[AggregatedSequence]
    negative: list[AggregatedSequence]
    anchor_labels: list[float]

    def __len__(self) -> int:
        return len(self.anchor)


def build_triplet_batch(
    anchor_indices: Sequence[int],
    dataset: Sequence[AggregatedSequence],
    rng: random.Random,
) -> TripletBatch:
    """Draw a positive and a negative for each anchor.

    Positives are drawn uniformly from the anchor's class excluding the
    anchor itself, falling back to the anchor when it is the sole member of
    its class. Negatives are drawn uniformly from the opposite class; an
    empty opposite class makes triplet training impossible.
    """
    by_class: dict[EngagementClass, list[int]] = {
        EngagementClass.LOW: [],
        EngagementClass.HIGH: [],
    }
    for i, seq in enumerate(dataset):
        if seq.label is None:
            raise EmptyDataset(f"sample {seq.sample_id!r} has no label")
        by_class[assign_engagement_class(seq.label)].append(i)
    for cls, members in by_class.items():
        if not members:
            raise DegenerateClassDistribution(
                f"no samples in the {cls.value} engagement class; "
                f"triplet training impossible"
            )

    anchor, positive, negative, labels = [], [], [], []
    for idx in anchor_indices:
        a = dataset[idx]
        a_cls = assign_engagement_class(a.label)
        same = by_class[a_cls]
        other = by_class[
            EngagementClass.HIGH if a_cls is EngagementClass.LOW else EngagementClass.LOW
        ]
        candidates = [i for i in same if i != idx]
        pos_idx = rng.choice(candidates) if candidates else idx
        neg_idx = rng.choice(other)
        anchor.append(a)
        positive.append(dataset[pos_idx])
        negative.append(dataset[neg_idx])
        labels.append(a.label)

    return TripletBatch(anchor=anchor, positive=positive, negative=negative,
                        anchor_labels=labels)


def balanced_epoch_indices(
    raw_labels: Sequence[int],
    rng: random.Random,
) -> list[int]:
    """One epoch of sample indices with the four raw classes equalized.

    Every present class contributes exactly ``max`` indices, where ``max`` is
    the largest class count: each member once, plus uniform with-replacement
    draws for minority classes. The result (length 4 x max for a dataset with
    all four classes) is shuffled before return.
    """
    if len(raw_labels) == 0:
        raise EmptyDataset("cannot sample from an empty dataset")
    by_class: dict[int, list[int]] = {}
    for i, raw in enumerate(raw_labels):
        if raw not in (0, 1, 2, 3):
            raise OutOfRangeLabel(f"raw class must be in 0..3, got {raw!r}")
        by_class.setdefault(raw, []).append(i)

    target = max(len(v) for v in by_class.values())
    indices: list[int] = []
    for raw in sorted(by_class):
        members = by_class[raw]
        indices.extend(members)
        indices.extend(rng.choice(members) for _ in range(target - len(members)))
    rng.shuffle(indices)
    return indices


def stratified_split(
    raw_labels: Sequence[int],
    val_fraction: float,
    rng: random.Random,
) -> tuple[list[int], list[int]]:
    """Seeded per-class split into train and validation index lists.

    Each class contributes round(val_fraction * count) validation samples
    (at least one when the class has two or more members).
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    by_class: dict[int, list[int]] = {}
    for i, raw in enumerate(raw_labels):
        by_class.setdefault(raw, []).append(i)

    train_idx: list[int] = []
    val_idx: list[int] = []
    for raw in sorted(by_class):
        members = list(by_class[raw])
        rng.shuffle(members)
        k = int(round(val_fraction * len(members)))
        if len(members) >= 2:
            k = min(max(k, 1), len(members) - 1)
        else:
            k = 0
        val_idx.extend(members[:k])
        train_idx.extend(members[k:])
    train_idx.sort()
    val_idx.sort()
    return train_idx, val_idx
