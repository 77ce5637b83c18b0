import random
from collections import Counter

import numpy as np
import pytest

from edmtt.errors import (
    DegenerateClassDistribution,
    EmptyDataset,
    OutOfRangeLabel,
)
from edmtt.sampler import (
    EngagementClass,
    assign_engagement_class,
    balanced_epoch_indices,
    build_triplet_batch,
    raw_class_of,
    stratified_split,
)

from conftest import random_aggregated_dataset


class TestAssignEngagementClass:
    def test_threshold(self):
        assert assign_engagement_class(0.49) is EngagementClass.LOW
        assert assign_engagement_class(0.5) is EngagementClass.HIGH
        assert assign_engagement_class(0.0) is EngagementClass.LOW
        assert assign_engagement_class(1.0) is EngagementClass.HIGH

    def test_out_of_range(self):
        for bad in (-0.1, 1.1):
            with pytest.raises(OutOfRangeLabel):
                assign_engagement_class(bad)

    def test_raw_class_of_thirds(self):
        assert [raw_class_of(v) for v in (0.0, 1 / 3, 2 / 3, 1.0)] == [0, 1, 2, 3]


class TestBuildTripletBatch:
    def test_forced_class_membership(self, rng):
        data = random_aggregated_dataset(rng, [0.0, 1 / 3, 2 / 3, 1.0])
        batch = build_triplet_batch([0], data, random.Random(0))
        assert batch.positive[0].sample_id == data[1].sample_id
        assert batch.negative[0].sample_id in {data[2].sample_id, data[3].sample_id}
        assert batch.anchor_labels == [0.0]

    def test_self_pair_fallback_for_singleton_class(self, rng):
        data = random_aggregated_dataset(rng, [0.0, 1.0, 1.0])
        batch = build_triplet_batch([0], data, random.Random(0))
        assert batch.positive[0].sample_id == data[0].sample_id

    def test_degenerate_distribution(self, rng):
        data = random_aggregated_dataset(rng, [0.9, 1.0, 0.8])
        with pytest.raises(DegenerateClassDistribution):
            build_triplet_batch([0], data, random.Random(0))

    def test_class_constraints_hold_over_many_batches(self, rng):
        labels = [rng.choice([0.0, 1 / 3, 2 / 3, 1.0]) for _ in range(24)]
        labels[0], labels[1] = 0.0, 1.0  # both classes present
        data = random_aggregated_dataset(rng, labels)
        by_id = {s.sample_id: s.label for s in data}
        master = random.Random(99)
        for _ in range(300):
            anchors = [master.randrange(len(data)) for _ in range(8)]
            batch = build_triplet_batch(anchors, data, master)
            for a, p, n in zip(batch.anchor, batch.positive, batch.negative):
                a_cls = assign_engagement_class(by_id[a.sample_id])
                assert assign_engagement_class(by_id[p.sample_id]) is a_cls
                assert assign_engagement_class(by_id[n.sample_id]) is not a_cls

    def test_seed_reproducibility(self, rng):
        labels = [0.0, 0.0, 1 / 3, 2 / 3, 1.0, 1.0, 0.0, 1.0]
        data = random_aggregated_dataset(rng, labels)
        ids = lambda b: [(s.sample_id, t.sample_id) for s, t in
                         zip(b.positive, b.negative)]
        one = build_triplet_batch(range(8), data, random.Random(5))
        two = build_triplet_batch(range(8), data, random.Random(5))
        other = build_triplet_batch(range(8), data, random.Random(6))
        assert ids(one) == ids(two)
        assert ids(one) != ids(other)


class TestBalancedEpochIndices:
    def test_already_balanced(self):
        raw = [0, 0, 1, 1, 2, 2, 3, 3]
        indices = balanced_epoch_indices(raw, random.Random(0))
        assert len(indices) == 8
        assert Counter(raw[i] for i in indices) == {0: 2, 1: 2, 2: 2, 3: 2}

    def test_oversampling_counts(self):
        raw = [0, 1, 2, 3, 3, 3, 3, 3]
        indices = balanced_epoch_indices(raw, random.Random(1))
        assert len(indices) == 20
        assert Counter(raw[i] for i in indices) == {0: 5, 1: 5, 2: 5, 3: 5}

    def test_every_sample_covered(self):
        raw = [0, 0, 0, 1, 2, 3, 3]
        indices = balanced_epoch_indices(raw, random.Random(2))
        assert set(indices) == set(range(7))

    def test_length_divisible_by_class_count(self):
        raw = [0] * 3 + [1] * 7 + [2] * 2 + [3] * 11
        indices = balanced_epoch_indices(raw, random.Random(3))
        assert len(indices) % 4 == 0
        counts = Counter(raw[i] for i in indices)
        assert len(set(counts.values())) == 1

    def test_monte_carlo_frequency(self):
        raw = [0] * 1 + [1] * 2 + [2] * 9 + [3] * 8
        rng_ = random.Random(42)
        counts = Counter()
        epochs = 10_000
        for _ in range(epochs):
            for i in balanced_epoch_indices(raw, rng_):
                counts[raw[i]] += 1
        total = sum(counts.values())
        for c in range(4):
            assert abs(counts[c] / total - 0.25) < 0.02

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            balanced_epoch_indices([], random.Random(0))

    def test_bad_class(self):
        with pytest.raises(OutOfRangeLabel):
            balanced_epoch_indices([0, 5], random.Random(0))


class TestStratifiedSplit:
    def test_disjoint_and_complete(self):
        raw = [0] * 4 + [1] * 8 + [2] * 20 + [3] * 16
        train_idx, val_idx = stratified_split(raw, 0.25, random.Random(0))
        assert sorted(train_idx + val_idx) == list(range(48))
        assert set(train_idx).isdisjoint(val_idx)
        val_counts = Counter(raw[i] for i in val_idx)
        assert val_counts == {0: 1, 1: 2, 2: 5, 3: 4}

    def test_seed_determinism(self):
        raw = [0, 1, 2, 3] * 6
        a = stratified_split(raw, 0.25, random.Random(9))
        b = stratified_split(raw, 0.25, random.Random(9))
        assert a == b
