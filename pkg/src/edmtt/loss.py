"""Training objectives: triplet loss, MSE, and their weighted combination.

All three accept torch tensors (differentiable path used by the trainer) or
plain sequences/arrays, which are promoted to float64 tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .errors import DimensionMismatch, EmptyBatch, LengthMismatch

# Keeps the euclidean-distance gradient finite when anchor == positive
# (the self-pair fallback); perturbs distances by < 1e-9.
_DISTANCE_EPS = 1e-24


@dataclass
class LossBreakdown:
    """Scalar loss components of one step: total = mse + triplet_weight * triplet."""

    mse: float
    triplet: float
    total: float
    margin: float
    triplet_weight: float


def _as_batch_tensor(batch, name: str) -> torch.Tensor:
    if isinstance(batch, torch.Tensor):
        t = batch
    else:
        rows = [b.vector if hasattr(b, "vector") else b for b in batch]
        t = torch.stack([torch.as_tensor(r, dtype=torch.float64) for r in rows]) \
            if rows else torch.empty(0, 0, dtype=torch.float64)
    if t.dim() != 2:
        raise DimensionMismatch(f"{name} batch must be 2-d (samples x dim), "
                                f"got shape {tuple(t.shape)}")
    if t.shape[0] == 0:
        raise EmptyBatch(f"{name} batch is empty")
    return t


def euclidean_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Row-wise euclidean distance between two (S, v) tensors."""
    return torch.sqrt(((a - b) ** 2).sum(dim=1) + _DISTANCE_EPS)


def triplet_loss(anchor, positive, negative, margin: float) -> torch.Tensor:
    """Mean over the batch of max(d(a, p) - d(a, n) + margin, 0).

    ``d`` is the euclidean distance between embeddings.
    """
    if margin < 0:
        raise ValueError(f"margin must be non-negative, got {margin}")
    a = _as_batch_tensor(anchor, "anchor")
    p = _as_batch_tensor(positive, "positive")
    n = _as_batch_tensor(negative, "negative")
    if not (a.shape == p.shape == n.shape):
        raise DimensionMismatch(
            f"triplet batches must share one shape, got {tuple(a.shape)}, "
            f"{tuple(p.shape)}, {tuple(n.shape)}"
        )
    per_sample = torch.clamp(
        euclidean_distance(a, p) - euclidean_distance(a, n) + margin, min=0.0
    )
    return per_sample.mean()


def mse_loss(pred, target) -> torch.Tensor:
    """Mean of squared differences."""
    p = pred if isinstance(pred, torch.Tensor) \
        else torch.as_tensor(pred, dtype=torch.float64)
    t = target if isinstance(target, torch.Tensor) \
        else torch.as_tensor(target, dtype=torch.float64)
    if p.shape != t.shape:
        raise LengthMismatch(
            f"prediction/target shapes differ: {tuple(p.shape)} vs {tuple(t.shape)}"
        )
    if p.numel() == 0:
        raise EmptyBatch("cannot take MSE of an empty batch")
    return ((p - t) ** 2).mean()


def combined_loss(
    mse: float | torch.Tensor,
    triplet: float | torch.Tensor,
    margin: float,
    triplet_weight: float,
) -> LossBreakdown:
    """Combine the main (MSE) and auxiliary (triplet) task losses.

    With triplet_weight == 0 the total reduces exactly to plain MSE.
    """
    mse_v = float(mse)
    trip_v = float(triplet)
    return LossBreakdown(
        mse=mse_v,
        triplet=trip_v,
        total=mse_v + triplet_weight * trip_v,
        margin=margin,
        triplet_weight=triplet_weight,
    )
