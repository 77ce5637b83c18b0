"""Training loop: balanced triplet batches, joint MSE + triplet optimization
with adam, validation tracking, resumable checkpoints, and the architecture
random search.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .aggregate import AggregatedSequence
from .errors import (
    BudgetExceedsSpace,
    DegenerateClassDistribution,
    EmptyDataset,
    NonFiniteActivation,
)
from .ingest import ALL_GROUPS, FeatureGroup
from .loss import mse_loss, triplet_loss
from .model import (
    EdmttModel,
    ModelConfig,
    model_state_arrays,
    read_checkpoint,
    save_model,
    write_checkpoint,
)
from .sampler import (
    EngagementClass,
    assign_engagement_class,
    balanced_epoch_indices,
    build_triplet_batch,
    raw_class_of,
)

GRAD_CLIP_NORM = 5.0
DEFAULT_CHECKPOINT_EVERY = 50

TRAIN_STATE_FILENAME = "train_state.ckpt"
BEST_MODEL_FILENAME = "model.ckpt"
LOG_FILENAME = "training_log.csv"

LOG_COLUMNS = ("epoch", "train_mse", "train_triplet", "train_total", "val_mse")


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    train_triplet: float
    train_total: float
    val_mse: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mse: float = float("inf")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_mse), repr(r.train_triplet),
                                 repr(r.train_total), repr(r.val_mse)])

    @classmethod
    def read_csv(cls, path: str | Path) -> "TrainingLog":
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                log.records.append(EpochRecord(
                    epoch=int(row["epoch"]),
                    train_mse=float(row["train_mse"]),
                    train_triplet=float(row["train_triplet"]),
                    train_total=float(row["train_total"]),
                    val_mse=float(row["val_mse"]),
                ))
        if log.records:
            best = min(log.records, key=lambda r: (r.val_mse, r.epoch))
            log.best_epoch, log.best_val_mse = best.epoch, best.val_mse
        return log


def triplet_step_loss(
    net,
    x_anchor: torch.Tensor,
    x_positive: torch.Tensor,
    x_negative: torch.Tensor,
    anchor_targets: torch.Tensor,
    positive_targets: torch.Tensor,
    negative_targets: torch.Tensor,
    margin: float,
    triplet_weight: float,
    mse_all_branches: bool = False,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Combined loss of one step: (total, mse, triplet), all differentiable.

    Branches run through the single shared network one at a time so the
    input-normalization batch statistics of the anchor branch match a plain
    (triplet-free) forward pass over the same anchor batch.
    """
    emb_a = net.embed(x_anchor)
    pred_a = net.predict_from_embedding(emb_a)
    emb_p = net.embed(x_positive)
    emb_n = net.embed(x_negative)

    if mse_all_branches:
        preds = torch.cat([
            pred_a,
            net.predict_from_embedding(emb_p),
            net.predict_from_embedding(emb_n),
        ])
        targets = torch.cat([anchor_targets, positive_targets, negative_targets])
    else:
        preds, targets = pred_a, anchor_targets

    mse_t = mse_loss(preds, targets)
    trip_t = triplet_loss(emb_a, emb_p, emb_n, margin)
    total = mse_t + triplet_weight * trip_t
    return total, mse_t, trip_t


def _require_labels(dataset: Sequence[AggregatedSequence], what: str) -> list[float]:
    if len(dataset) == 0:
        raise EmptyDataset(f"{what} set is empty")
    labels = []
    for seq in dataset:
        if seq.label is None:
            raise EmptyDataset(f"{what} sample {seq.sample_id!r} has no label")
        labels.append(seq.label)
    return labels


def validation_mse(model: EdmttModel, val_set: Sequence[AggregatedSequence]) -> float:
    """Plain MSE over the natural distribution, inference mode, no triplets."""
    labels = _require_labels(val_set, "validation")
    preds: list[float] = []
    step = max(1, model.config.batch_size)
    for i in range(0, len(val_set), step):
        preds.extend(model.predict_engagement(val_set[i:i + step]))
    return float(mse_loss(preds, labels))


def _labels_tensor(model: EdmttModel, seqs: Sequence[AggregatedSequence]) -> torch.Tensor:
    return torch.as_tensor([s.label for s in seqs], dtype=model.dtype)


def _snapshot_state(net) -> dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in net.state_dict().items()}


def _optimizer_arrays(optimizer: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for idx, state in optimizer.state_dict()["state"].items():
        for key, value in state.items():
            t = value if isinstance(value, torch.Tensor) else torch.tensor(float(value))
            arrays[f"training/optim/{idx}/{key}"] = t.detach().cpu().numpy()
    return arrays


def _restore_optimizer(
    optimizer: torch.optim.Optimizer, arrays: dict[str, np.ndarray]
) -> None:
    state: dict[int, dict[str, torch.Tensor]] = {}
    for name, arr in arrays.items():
        if not name.startswith("training/optim/"):
            continue
        _, _, idx, key = name.split("/")
        state.setdefault(int(idx), {})[key] = torch.as_tensor(arr)
    if state:
        sd = optimizer.state_dict()
        sd["state"] = state
        optimizer.load_state_dict(sd)


def _check_trainable(train_set: Sequence[AggregatedSequence]) -> None:
    labels = _require_labels(train_set, "training")
    classes = {assign_engagement_class(v) for v in labels}
    if classes != {EngagementClass.LOW, EngagementClass.HIGH}:
        missing = ({EngagementClass.LOW, EngagementClass.HIGH} - classes).pop()
        raise DegenerateClassDistribution(
            f"training set has no {missing.value} engagement samples; "
            f"triplet construction impossible"
        )


def train(
    train_set: Sequence[AggregatedSequence],
    val_set: Sequence[AggregatedSequence],
    config: ModelConfig | None = None,
    *,
    feature_groups: Sequence[FeatureGroup] = ALL_GROUPS,
    out_dir: str | Path | None = None,
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
    resume_from: str | Path | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[EdmttModel, TrainingLog]:
    """Train the shared-weight model, returning the best-validation model.

    Per epoch: draw class-balanced anchor indices, build triplet batches,
    minimize MSE-on-anchor-predictions plus weighted triplet loss with adam
    (gradients clipped to global norm 5.0), then log training losses and the
    validation MSE computed in inference mode. A resumable checkpoint is
    written to ``out_dir`` every ``checkpoint_every`` epochs and whenever
    validation improves. On a non-finite loss the run aborts, retaining the
    last written checkpoint and the log rows of completed epochs.

    ``resume_from`` restarts from a train-state checkpoint (its stored config
    takes precedence); the continuation reproduces an uninterrupted run. A
    KeyboardInterrupt raised from ``on_epoch`` checkpoints the completed epoch
    before propagating, so interrupted runs resume losslessly.
    """
    _check_trainable(train_set)
    _require_labels(val_set, "validation")

    log = TrainingLog()
    start_epoch = 0
    if resume_from is not None:
        header, arrays = read_checkpoint(resume_from)
        config = ModelConfig.from_dict(header["config"])
        feature_groups = tuple(
            FeatureGroup.from_name(n) for n in header["feature_groups"]
        )
        model = EdmttModel(config, feature_groups=feature_groups)
        model.net.load_state_dict({
            k: torch.as_tensor(arrays[k]) for k in model.net.state_dict()
        })
        rng = random.Random(config.seed)
        st = header["extra"]["rng_state"]
        rng.setstate((st[0], tuple(st[1]), st[2]))
        optimizer = torch.optim.Adam(model.net.parameters(), lr=config.learning_rate)
        _restore_optimizer(optimizer, arrays)
        start_epoch = int(header["extra"]["completed_epochs"])
        log.best_epoch = int(header["extra"]["best_epoch"])
        log.best_val_mse = float(header["extra"]["best_val_mse"])
        log.records = [EpochRecord(int(r[0]), *map(float, r[1:]))
                       for r in header["extra"]["records"]]
        best_state = {
            k[len("training/best/"):]: torch.as_tensor(v)
            for k, v in arrays.items() if k.startswith("training/best/")
        }
    else:
        if config is None:
            raise ValueError("config is required unless resume_from is given")
        model = EdmttModel(config, feature_groups=feature_groups)
        rng = random.Random(config.seed)
        optimizer = torch.optim.Adam(model.net.parameters(), lr=config.learning_rate)
        best_state = _snapshot_state(model.net)

    raw_classes = [raw_class_of(s.label) for s in train_set]
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def write_train_state(completed: int) -> None:
        if out_dir is None:
            return
        arrays = model_state_arrays(model)
        arrays.update(_optimizer_arrays(optimizer))
        for k, v in best_state.items():
            arrays[f"training/best/{k}"] = v.cpu().numpy()
        st = rng.getstate()
        extra = {
            "completed_epochs": completed,
            "best_epoch": log.best_epoch,
            "best_val_mse": log.best_val_mse,
            "rng_state": [st[0], list(st[1]), st[2]],
            "records": [[r.epoch, r.train_mse, r.train_triplet, r.train_total,
                         r.val_mse] for r in log.records],
        }
        write_checkpoint(out_dir / TRAIN_STATE_FILENAME, config, feature_groups,
                         model.dtype, arrays, extra=extra)

    def abort(message: str) -> None:
        if out_dir is not None:
            log.write_csv(out_dir / LOG_FILENAME)
        raise NonFiniteActivation(message)

    for epoch in range(start_epoch, config.epochs):
        model.net.train()
        indices = balanced_epoch_indices(raw_classes, rng)
        sums = {"mse": 0.0, "triplet": 0.0, "total": 0.0}
        count = 0
        for i in range(0, len(indices), config.batch_size):
            chunk = indices[i:i + config.batch_size]
            batch = build_triplet_batch(chunk, train_set, rng)
            total_t, mse_t, trip_t = triplet_step_loss(
                model.net,
                model.batch_to_tensor(batch.anchor),
                model.batch_to_tensor(batch.positive),
                model.batch_to_tensor(batch.negative),
                _labels_tensor(model, batch.anchor),
                _labels_tensor(model, batch.positive),
                _labels_tensor(model, batch.negative),
                margin=config.margin,
                triplet_weight=config.triplet_weight,
                mse_all_branches=config.mse_all_branches,
            )
            if not torch.isfinite(total_t):
                abort(f"non-finite loss at epoch {epoch}; training aborted")
            optimizer.zero_grad()
            total_t.backward()
            torch.nn.utils.clip_grad_norm_(model.net.parameters(), GRAD_CLIP_NORM)
            optimizer.step()
            k = len(chunk)
            sums["mse"] += float(mse_t.detach()) * k
            sums["triplet"] += float(trip_t.detach()) * k
            sums["total"] += float(total_t.detach()) * k
            count += k

        val = validation_mse(model, val_set)
        record = EpochRecord(
            epoch=epoch,
            train_mse=sums["mse"] / count,
            train_triplet=sums["triplet"] / count,
            train_total=sums["total"] / count,
            val_mse=val,
        )
        log.records.append(record)
        interrupted = False
        if on_epoch is not None:
            try:
                on_epoch(record)
            except KeyboardInterrupt:
                # finish bookkeeping for the completed epoch, then re-raise
                interrupted = True

        is_best = val < log.best_val_mse
        if is_best:
            log.best_val_mse = val
            log.best_epoch = epoch
            best_state = _snapshot_state(model.net)
        if (is_best or interrupted or (epoch + 1) % checkpoint_every == 0
                or epoch + 1 == config.epochs):
            write_train_state(epoch + 1)
        if interrupted:
            if out_dir is not None:
                log.write_csv(out_dir / LOG_FILENAME)
            raise KeyboardInterrupt(f"training interrupted after epoch {epoch}")

    model.net.load_state_dict(best_state)
    if out_dir is not None:
        save_model(model, out_dir / BEST_MODEL_FILENAME)
        log.write_csv(out_dir / LOG_FILENAME)
    return model, log


# --- architecture random search ----------------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    """Product space of the architecture search (hidden size shared by all
    recurrent layers)."""

    num_layers: tuple[int, ...] = (1, 2, 3)
    hidden_sizes: tuple[int, ...] = (128, 256, 512, 1024)
    fc1_sizes: tuple[int, ...] = (256, 128, 64)
    fc2_sizes: tuple[int, ...] = (32, 16, 8)

    def points(self) -> list[tuple[int, int, int, int]]:
        return list(product(self.num_layers, self.hidden_sizes,
                            self.fc1_sizes, self.fc2_sizes))


def random_search(
    space: SearchSpace,
    budget: int,
    train_set: Sequence[AggregatedSequence],
    val_set: Sequence[AggregatedSequence],
    base_config: ModelConfig,
    seed: int,
    *,
    feature_groups: Sequence[FeatureGroup] = ALL_GROUPS,
) -> list[tuple[ModelConfig, float]]:
    """Train ``budget`` distinct architectures sampled uniformly from the
    space, returned sorted by validation MSE ascending.

    Each trial derives its own seed from the master seed, so results are
    reproducible and independent of trial execution order.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    points = space.points()
    if budget > len(points):
        raise BudgetExceedsSpace(
            f"budget {budget} exceeds the {len(points)} distinct configurations"
        )
    rng = random.Random(seed)
    chosen = rng.sample(points, budget)

    results: list[tuple[ModelConfig, float]] = []
    for i, (layers, hidden, fc1, fc2) in enumerate(chosen):
        cfg = replace(
            base_config,
            num_recurrent_layers=layers,
            hidden_size=hidden,
            fc_sizes=(fc1, fc2),
            seed=seed * 1000 + i,
        )
        _, log = train(train_set, val_set, cfg, feature_groups=feature_groups)
        results.append((cfg, log.best_val_mse))
    results.sort(key=lambda r: (r[1], r[0].num_recurrent_layers, r[0].hidden_size,
                                r[0].fc_sizes))
    return results
