"""Social bot detection with relational graph convolutions.

A from-scratch pipeline: multi-modal user feature encoding, two-relation
follow-graph construction, relational graph convolutional training on a
hand-rolled reverse-mode tape, and accuracy/F1/MCC evaluation with feature,
architecture and depth ablations.
"""

__version__ = "0.1.0"

from .errors import BotgnnError, DataError, NumericalError  # noqa: F401
from .graph import GnnVariant  # noqa: F401
from .ingest import Dataset, load_bundle, save_bundle  # noqa: F401
from .model import ModelConfig, ModelParams  # noqa: F401
from .train import Metrics, TrainConfig, TrainResult, evaluate, train  # noqa: F401
