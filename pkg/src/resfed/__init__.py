"""Residual-based federated learning: trajectory predictors, residual codec, protocol and experiment harness."""

from .codec import CompressionConfig, ResidualMessage, compress, decompress
from .config import ExperimentConfig, parse_config
from .data import Dataset, make_blobs, partition_iid, partition_label_shard, read_idx
from .model import MlpModel, TrainConfig, init_model, local_train
from .params import ParamVector
from .predictor import PredictorConfig, Trajectory, predict, recover, residual
from .protocol import ProtocolConfig, aggregate, run

__version__ = "0.1.0"
