"""Fair deep clustering through an information-bottleneck objective.

An autoencoder is trained so its latent codes cluster well under k-means,
keep enough information to reconstruct the input, and carry as little
information as possible about a sensitive attribute, which may be a group
label or a real-valued quantity.
"""

from .data import Dataset, SchemaConfig, load_csv, synth_blobs
from .metrics import MetricsReport
from .trainer import FairClusterModels, TrainConfig, TrainReport, train

__all__ = [
    "Dataset",
    "FairClusterModels",
    "MetricsReport",
    "SchemaConfig",
    "TrainConfig",
    "TrainReport",
    "load_csv",
    "synth_blobs",
    "train",
]
__version__ = "0.1.0"
