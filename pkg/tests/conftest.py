import csv

import numpy as np
import pytest

from edmtt.aggregate import AggregatedSequence
from edmtt.ingest import ALL_FEATURE_COLUMNS


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def make_openface_csv(path, num_rows, rng=None, success=None, confidence=None,
                      columns=ALL_FEATURE_COLUMNS):
    """Write a schema-complete feature CSV; returns the value matrix."""
    rng = rng or np.random.default_rng(0)
    values = rng.normal(size=(num_rows, len(columns)))
    success = success if success is not None else [1] * num_rows
    confidence = confidence if confidence is not None else [1.0] * num_rows
    rows = [
        [i, success[i], confidence[i], *[repr(float(v)) for v in values[i]]]
        for i in range(num_rows)
    ]
    write_csv(path, ["frame", "success", "confidence", *columns], rows)
    return values


def make_aggregated(sample_id, values, label=None, frames_per_window=1):
    values = np.asarray(values, dtype=np.float64)
    a, b = values.shape
    return AggregatedSequence(
        sample_id=sample_id,
        values=values,
        window_count=a,
        stat_count=b,
        frames_per_window=frames_per_window,
        stat_names=tuple(f"f{i}_mean" for i in range(b)),
        label=label,
    )


def random_aggregated_dataset(rng, labels, window_count=3, stat_count=10):
    """One AggregatedSequence per label, gaussian values."""
    return [
        make_aggregated(f"s{i:03d}", rng.normal(size=(window_count, stat_count)),
                        label=label)
        for i, label in enumerate(labels)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
