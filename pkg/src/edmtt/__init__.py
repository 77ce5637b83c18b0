"""Engagement regression from facial-feature sequences, trained jointly on
MSE and triplet loss with a shared-weight bidirectional recurrent embedder.
"""

from .aggregate import AggregatedSequence, ShortPolicy, aggregate_all, aggregate_windows
from .evaluate import EvalReport, evaluate
from .ingest import (
    ALL_GROUPS,
    FeatureGroup,
    FrameFeatureSequence,
    load_dataset,
    map_raw_label,
    parse_openface_csv,
)
from .loss import LossBreakdown, combined_loss, mse_loss, triplet_loss
from .model import (
    EdmttModel,
    Embedding,
    ModelConfig,
    embed,
    load_model,
    predict_engagement,
    save_model,
)
from .sampler import (
    EngagementClass,
    TripletBatch,
    assign_engagement_class,
    balanced_epoch_indices,
    build_triplet_batch,
)
from .synthdata import generate, write_dataset
from .train import SearchSpace, TrainingLog, random_search, train

__version__ = "0.1.0"
