import numpy as np
import pytest

from edmtt.errors import EmptyDataset
from edmtt.evaluate import (
    DEFAULT_ABLATION_MASKS,
    AblationRow,
    EvalReport,
    ablate,
    evaluate,
    mask_to_groups,
    write_ablation_csv,
)
from edmtt.ingest import ALL_FEATURE_COLUMNS, FeatureGroup, FrameFeatureSequence
from edmtt.loss import mse_loss
from edmtt.model import EdmttModel, ModelConfig

from conftest import make_aggregated


class StubModel:
    """Duck-typed predictor so quartile logic is tested in isolation."""

    def __init__(self, fn, batch_size=16):
        self.fn = fn
        self.config = type("C", (), {"batch_size": batch_size})()

    def predict_engagement(self, batch):
        return [self.fn(seq) for seq in batch]


def labeled_set(labels):
    rng = np.random.default_rng(0)
    return [make_aggregated(f"s{i}", rng.normal(size=(2, 3)), label=v)
            for i, v in enumerate(labels)]


class TestEvaluate:
    def test_perfect_predictor(self):
        data = labeled_set([0.0, 1 / 3, 1 / 3, 2 / 3, 1.0])
        report = evaluate(StubModel(lambda s: s.label), data)
        assert report.mse == 0.0
        assert sum(s.count for s in report.per_class.values()) == 5
        for value, stats in report.per_class.items():
            assert stats.min == stats.q1 == stats.median == stats.q3 == stats.max \
                == pytest.approx(value)

    def test_constant_half_predictor_hand_value(self):
        data = labeled_set([0.0, 1 / 3, 2 / 3, 1.0])
        report = evaluate(StubModel(lambda s: 0.5), data)
        # mean of (0.25, 1/36, 1/36, 0.25) = 5/36
        assert report.mse == pytest.approx(5 / 36, abs=1e-12)
        assert report.mse == pytest.approx(0.1389, abs=1e-4)

    def test_quartiles_inclusive_linear_interpolation(self):
        preds = iter([1.0, 2.0, 3.0, 4.0])
        data = labeled_set([1.0, 1.0, 1.0, 1.0])
        report = evaluate(StubModel(lambda s: next(preds)), data)
        stats = report.per_class[1.0]
        assert stats.q1 == pytest.approx(1.75)
        assert stats.median == pytest.approx(2.5)
        assert stats.q3 == pytest.approx(3.25)
        assert stats.min == 1.0 and stats.max == 4.0
        assert stats.count == 4

    def test_mse_single_source_of_truth(self):
        config = ModelConfig(feature_dim=3, num_recurrent_layers=1, hidden_size=4,
                             fc_sizes=(4, 2), window_count=2, seed=3)
        model = EdmttModel(config)
        data = labeled_set([0.0, 1 / 3, 2 / 3, 1.0, 1.0])
        report = evaluate(model, data)
        preds = model.predict_engagement(data)
        assert report.mse == float(mse_loss(preds, [s.label for s in data]))

    def test_deterministic_and_side_effect_free(self):
        data = labeled_set([0.0, 0.5, 1.0])
        model = StubModel(lambda s: 0.4)
        assert evaluate(model, data) == evaluate(model, data)

    def test_json_roundtrip_lossless(self):
        data = labeled_set([0.0, 1 / 3, 1 / 3, 1.0])
        rng = np.random.default_rng(5)
        report = evaluate(StubModel(lambda s: float(rng.uniform())), data)
        again = EvalReport.from_json(report.to_json())
        assert again == report

    def test_render_text_contains_classes(self):
        data = labeled_set([0.0, 1.0])
        text = evaluate(StubModel(lambda s: 0.5), data).render_text()
        assert "mse" in text and "0.00" in text and "1.00" in text

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            evaluate(StubModel(lambda s: 0.5), [])


def synthetic_frame_sequences(rng, labels, num_frames=12):
    seqs = []
    for i, label in enumerate(labels):
        values = rng.normal(size=(num_frames, 29))
        # action-unit block carries the label so masks including AUs can learn
        values[:, 12:] = 3.0 * label + 0.1 * rng.normal(size=(num_frames, 17))
        seqs.append(FrameFeatureSequence(
            sample_id=f"s{i:02d}", values=values,
            feature_names=ALL_FEATURE_COLUMNS, label=label))
    return seqs


class TestAblate:
    def test_default_mask_grid(self):
        assert len(DEFAULT_ABLATION_MASKS) == 12
        assert len(set(DEFAULT_ABLATION_MASKS)) == 12
        assert DEFAULT_ABLATION_MASKS[0] == (1, 0, 0, 0)
        assert DEFAULT_ABLATION_MASKS[3] == (0, 0, 0, 1)
        assert DEFAULT_ABLATION_MASKS[10] == (1, 1, 0, 1)  # reference best row
        assert DEFAULT_ABLATION_MASKS[11] == (1, 1, 1, 1)
        for mask in DEFAULT_ABLATION_MASKS:
            assert any(mask)

    def test_mask_to_groups(self):
        assert mask_to_groups((0, 0, 0, 1)) == (FeatureGroup.ACTION_UNITS,)
        assert mask_to_groups((1, 1, 0, 1)) == (
            FeatureGroup.EYE_GAZE, FeatureGroup.HEAD_POSE,
            FeatureGroup.ACTION_UNITS)
        with pytest.raises(ValueError):
            mask_to_groups((0, 0, 0, 0))
        with pytest.raises(ValueError):
            mask_to_groups((1, 0, 1))

    def test_ablate_dimensions_and_order(self, rng, tmp_path):
        labels = [0.0, 0.0, 1 / 3, 2 / 3, 1.0, 1.0, 1.0, 2 / 3]
        seqs = synthetic_frame_sequences(rng, labels)
        config = ModelConfig(feature_dim=1, num_recurrent_layers=1, hidden_size=4,
                             fc_sizes=(4, 2), window_count=3, epochs=1,
                             batch_size=4, seed=0)
        masks = [(0, 0, 0, 1), (1, 1, 1, 1)]
        rows = ablate(masks, seqs, config, window_count=3,
                      train_indices=[0, 2, 3, 4, 5, 7], val_indices=[1, 6])
        assert [r.mask for r in rows] == masks
        assert all(np.isfinite(r.val_mse) for r in rows)
        path = tmp_path / "ablation.csv"
        write_ablation_csv(rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "gaze,pose,rotation,aus,val_mse"
        assert lines[1].startswith("0,0,0,1,")
        assert len(lines) == 3

    def test_au_only_mask_rebuilds_85_wide_pipeline(self, rng):
        labels = [0.0, 1.0, 1.0, 0.0]
        seqs = synthetic_frame_sequences(rng, labels)
        captured = {}
        import importlib
        eval_mod = importlib.import_module("edmtt.evaluate")
        train_mod = importlib.import_module("edmtt.train")
        real_train = train_mod.train

        def spy(train_set, val_set, cfg, **kw):
            captured["feature_dim"] = cfg.feature_dim
            captured["shape"] = train_set[0].values.shape
            return real_train(train_set, val_set, cfg, **kw)

        config = ModelConfig(feature_dim=1, num_recurrent_layers=1, hidden_size=4,
                             fc_sizes=(4, 2), window_count=3, epochs=1,
                             batch_size=2, seed=0)
        import unittest.mock as mock
        with mock.patch.object(eval_mod, "train", spy, create=True):
            # ablate imports train lazily; patch the module it resolves from
            with mock.patch.object(train_mod, "train", spy):
                ablate([(0, 0, 0, 1)], seqs, config, window_count=3,
                       train_indices=[0, 1], val_indices=[2, 3])
        assert captured["feature_dim"] == 85
        assert captured["shape"] == (3, 85)
