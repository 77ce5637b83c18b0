"""The siamese sequence model and its checkpoint container.

One parameter set serves all three triplet branches: a trainable per-channel
batch-statistics layer on the window-statistics input, a multi-layer
bidirectional LSTM whose embedding is the concatenated final forward and
backward hidden states of the last layer, and a fully connected head that
squashes to an engagement level in (0, 1).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .aggregate import AggregatedSequence
from .errors import CorruptCheckpoint, NonFiniteActivation, ShapeMismatch, UnsupportedVersion
from .ingest import ALL_GROUPS, FeatureGroup

CHECKPOINT_FORMAT_VERSION = 1
_MAGIC = b"EDMTTCKP"

# Distance from the interval ends guaranteed by predict_engagement; keeps
# saturated sigmoid outputs strictly inside (0, 1) in float32.
_PREDICTION_EPS = 1e-6


@dataclass
class ModelConfig:
    """Architecture and training hyperparameters.

    Defaults follow the reference setup: 2 bidirectional recurrent layers of
    hidden size 1024, fully connected layers of 64 and 32 units, 100 windows,
    learning rate 5e-5, batch size 16, 500 epochs.
    """

    feature_dim: int
    num_recurrent_layers: int = 2
    hidden_size: int = 1024
    fc_sizes: tuple[int, int] = (64, 32)
    window_count: int = 100
    margin: float = 1.0
    triplet_weight: float = 1.0
    learning_rate: float = 5e-5
    epochs: int = 500
    batch_size: int = 16
    seed: int = 0
    mse_all_branches: bool = False

    def __post_init__(self) -> None:
        self.fc_sizes = tuple(self.fc_sizes)  # type: ignore[assignment]
        sizes = (self.feature_dim, self.num_recurrent_layers, self.hidden_size,
                 *self.fc_sizes, self.window_count, self.epochs, self.batch_size)
        if any(int(s) != s or s < 1 for s in sizes):
            raise ValueError(f"all sizes must be integers >= 1, got {self}")
        if len(self.fc_sizes) != 2:
            raise ValueError(f"fc_sizes must hold two layer widths, got {self.fc_sizes}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.triplet_weight < 0:
            raise ValueError(f"triplet_weight must be >= 0, got {self.triplet_weight}")
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")

    @property
    def embedding_dim(self) -> int:
        return 2 * self.hidden_size

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fc_sizes"] = list(self.fc_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["fc_sizes"] = tuple(d["fc_sizes"])
        return cls(**d)


@dataclass
class Embedding:
    """A sample's sequence embedding (length 2 x hidden_size)."""

    vector: np.ndarray


class _EdmttNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        fc1, fc2 = config.fc_sizes
        self.input_norm = nn.BatchNorm1d(config.feature_dim)
        self.lstm = nn.LSTM(
            input_size=config.feature_dim,
            hidden_size=config.hidden_size,
            num_layers=config.num_recurrent_layers,
            bidirectional=True,
            batch_first=True,
        )
        self.head = nn.Sequential(
            nn.Linear(config.embedding_dim, fc1),
            nn.ReLU(),
            nn.Linear(fc1, fc2),
            nn.ReLU(),
            nn.Linear(fc2, 1),
        )

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        # x: (batch, windows, channels); normalize per channel over batch x window
        x = self.input_norm(x.transpose(1, 2)).transpose(1, 2)
        _, (h_n, _) = self.lstm(x)
        # h_n layout: (layers * 2, batch, hidden); last layer is [-2] fwd, [-1] bwd
        return torch.cat([h_n[-2], h_n[-1]], dim=1)

    def predict_from_embedding(self, emb: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.head(emb)).squeeze(-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.predict_from_embedding(self.embed(x))


def _init_parameters(net: nn.Module, seed: int) -> None:
    # Uniform fan-in scaling for every weight matrix, zero biases, unit
    # batch-norm scale; deterministic given the seed.
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in net.named_parameters():
            if "weight" in name and p.dim() >= 2:
                bound = 1.0 / math.sqrt(p.shape[-1])
                p.uniform_(-bound, bound, generator=gen)
            elif "weight" in name:
                p.fill_(1.0)
            else:
                p.zero_()


class EdmttModel:
    """Shared-weight siamese model: config plus one trainable network."""

    def __init__(
        self,
        config: ModelConfig,
        feature_groups: Sequence[FeatureGroup] = ALL_GROUPS,
        dtype: torch.dtype = torch.float32,
    ):
        self.config = config
        self.feature_groups = tuple(feature_groups)
        self.dtype = dtype
        self.net = _EdmttNet(config).to(dtype)
        _init_parameters(self.net, config.seed)

    @property
    def format_version(self) -> int:
        return CHECKPOINT_FORMAT_VERSION

    def batch_to_tensor(self, batch: Sequence[AggregatedSequence]) -> torch.Tensor:
        expected = (self.config.window_count, self.config.feature_dim)
        arrays = []
        for seq in batch:
            if seq.values.shape != expected:
                raise ShapeMismatch(
                    f"sample {seq.sample_id!r} has shape {seq.values.shape}, "
                    f"model expects {expected}"
                )
            arrays.append(seq.values)
        return torch.as_tensor(np.stack(arrays), dtype=self.dtype)

    def embed(self, batch: Sequence[AggregatedSequence]) -> list[Embedding]:
        """Embeddings in inference mode (running normalizer statistics)."""
        x = self.batch_to_tensor(batch)
        was_training = self.net.training
        self.net.eval()
        try:
            with torch.no_grad():
                emb = self.net.embed(x)
        finally:
            self.net.train(was_training)
        if not torch.isfinite(emb).all():
            raise NonFiniteActivation("embedding contains NaN or inf")
        return [Embedding(vector=row) for row in emb.cpu().numpy()]

    def predict_engagement(self, batch: Sequence[AggregatedSequence]) -> list[float]:
        """Engagement levels strictly inside (0, 1), order-preserving."""
        x = self.batch_to_tensor(batch)
        was_training = self.net.training
        self.net.eval()
        try:
            with torch.no_grad():
                pred = self.net(x)
        finally:
            self.net.train(was_training)
        if not torch.isfinite(pred).all():
            raise NonFiniteActivation("prediction contains NaN or inf")
        pred = torch.clamp(pred, _PREDICTION_EPS, 1.0 - _PREDICTION_EPS)
        return [float(v) for v in pred.cpu().numpy()]


def embed(model: EdmttModel, batch: Sequence[AggregatedSequence]) -> list[Embedding]:
    return model.embed(batch)


def predict_engagement(
    model: EdmttModel, batch: Sequence[AggregatedSequence]
) -> list[float]:
    return model.predict_engagement(batch)


# --- checkpoint container ---------------------------------------------------
#
# Self-describing single file:
#   magic | u64 header length | JSON header | flat little-endian arrays
# The header carries format_version, the config, a manifest of array
# names/shapes/dtypes in payload order, a sha256 over the payload, and an
# optional "extra" dict (used by the trainer for resumable state).

_DTYPE_CODES = {
    torch.float32: "<f4",
    torch.float64: "<f8",
    torch.int64: "<i8",
}
_TORCH_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def write_checkpoint(
    path: str | Path,
    config: ModelConfig,
    feature_groups: Sequence[FeatureGroup],
    model_dtype: torch.dtype,
    arrays: dict[str, np.ndarray],
    extra: dict | None = None,
) -> None:
    manifest = []
    chunks = []
    for name, arr in arrays.items():
        code = arr.dtype.newbyteorder("<").str
        if code not in _TORCH_DTYPES:
            raise ValueError(f"unsupported array dtype {arr.dtype} for {name!r}")
        data = np.ascontiguousarray(arr, dtype=np.dtype(code)).tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": code})
        chunks.append(data)
    payload = b"".join(chunks)

    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config.to_dict(),
        "feature_groups": [g.value for g in feature_groups],
        "model_dtype": _DTYPE_CODES[model_dtype],
        "manifest": manifest,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    header_bytes = json.dumps(header).encode("utf-8")

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        fh.write(payload)
    os.replace(tmp, path)


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise CorruptCheckpoint(f"{path}: not a checkpoint file (bad magic)")
    offset = len(_MAGIC)
    if len(blob) < offset + 8:
        raise CorruptCheckpoint(f"{path}: truncated header length")
    header_len = int.from_bytes(blob[offset:offset + 8], "little")
    offset += 8
    if len(blob) < offset + header_len:
        raise CorruptCheckpoint(f"{path}: truncated header")
    try:
        header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header ({exc})") from None
    offset += header_len

    version = header.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise UnsupportedVersion(
            f"{path}: format_version {version!r} not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )

    payload = blob[offset:]
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CorruptCheckpoint(f"{path}: payload checksum mismatch")

    arrays: dict[str, np.ndarray] = {}
    pos = 0
    for entry in header["manifest"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        if pos + nbytes > len(payload):
            raise CorruptCheckpoint(f"{path}: payload shorter than manifest")
        arrays[entry["name"]] = np.frombuffer(
            payload, dtype=dtype, count=count, offset=pos
        ).reshape(entry["shape"]).copy()
        pos += nbytes
    return header, arrays


def model_state_arrays(model: EdmttModel) -> dict[str, np.ndarray]:
    return {
        name: tensor.detach().cpu().numpy()
        for name, tensor in model.net.state_dict().items()
    }


def save_model(model: EdmttModel, path: str | Path) -> None:
    """Write the model (parameters and normalizer statistics) to one file."""
    write_checkpoint(
        path,
        model.config,
        model.feature_groups,
        model.dtype,
        model_state_arrays(model),
    )


def load_model(path: str | Path) -> EdmttModel:
    """Reconstruct a model from a checkpoint, bit-exactly on one platform."""
    header, arrays = read_checkpoint(path)
    config = ModelConfig.from_dict(header["config"])
    groups = tuple(FeatureGroup.from_name(n) for n in header["feature_groups"])
    dtype = _TORCH_DTYPES[header["model_dtype"]]
    model = EdmttModel(config, feature_groups=groups, dtype=dtype)

    state = {}
    for name, ref in model.net.state_dict().items():
        if name not in arrays:
            raise CorruptCheckpoint(f"{path}: missing model array {name!r}")
        state[name] = torch.as_tensor(arrays[name]).to(ref.dtype)
    model.net.load_state_dict(state)
    return model
