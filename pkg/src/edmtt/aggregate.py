"""Window aggregation: per-frame features to per-window statistics.

An m-frame sequence is partitioned into ``window_count`` consecutive windows
of ``z = floor(m / window_count)`` frames (trailing remainder discarded) and
each window contributes five statistics per feature, so the output width is
5x the input feature count.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import SequenceTooShort
from .ingest import FrameFeatureSequence

STAT_SUFFIXES = ("mean", "var", "std", "min", "max")
STATS_PER_FEATURE = len(STAT_SUFFIXES)


class ShortPolicy(Enum):
    """What to do when a sequence has fewer frames than windows."""

    ERROR = "error"
    PAD_REPEAT_LAST = "pad_repeat_last"


@dataclass
class AggregatedSequence:
    """Window-statistics matrix for one sample, shape (window_count, 5n)."""

    sample_id: str
    values: np.ndarray
    window_count: int
    stat_count: int
    frames_per_window: int
    stat_names: tuple[str, ...]
    label: float | None = None


def stat_names_for(feature_names: Iterable[str]) -> tuple[str, ...]:
    return tuple(f"{name}_{s}" for name in feature_names for s in STAT_SUFFIXES)


def aggregate_windows(
    seq: FrameFeatureSequence,
    window_count: int,
    short_policy: ShortPolicy = ShortPolicy.ERROR,
) -> AggregatedSequence:
    """Aggregate a frame sequence into per-window statistics.

    Statistics per feature, in order: mean, variance (population), standard
    deviation, minimum, maximum. Variance is population variance (divide by
    the window width) so single-frame windows are well defined.
    """
    if window_count < 1:
        raise ValueError(f"window_count must be >= 1, got {window_count}")
    values = seq.values
    m, n = values.shape
    if m < window_count:
        if short_policy is ShortPolicy.ERROR:
            raise SequenceTooShort(
                f"sample {seq.sample_id!r}: {m} frames < {window_count} windows "
                f"(short_policy=error)"
            )
        pad = np.repeat(values[-1:, :], window_count - m, axis=0)
        values = np.concatenate([values, pad], axis=0)
        m = window_count

    z = m // window_count
    windows = values[: window_count * z].reshape(window_count, z, n)

    mean = windows.mean(axis=1)
    var = windows.var(axis=1)  # ddof=0
    std = np.sqrt(var)
    mn = windows.min(axis=1)
    mx = windows.max(axis=1)

    # interleave to feature-major layout: f0_mean, f0_var, ..., f0_max, f1_mean, ...
    out = np.stack([mean, var, std, mn, mx], axis=2).reshape(
        window_count, n * STATS_PER_FEATURE
    )

    return AggregatedSequence(
        sample_id=seq.sample_id,
        values=out,
        window_count=window_count,
        stat_count=n * STATS_PER_FEATURE,
        frames_per_window=z,
        stat_names=stat_names_for(seq.feature_names),
        label=seq.label,
    )


def aggregate_all(
    sequences: Iterable[FrameFeatureSequence],
    window_count: int,
    short_policy: ShortPolicy = ShortPolicy.ERROR,
) -> list[AggregatedSequence]:
    return [aggregate_windows(s, window_count, short_policy) for s in sequences]
