"""Trajectory-space human motion prediction with learnable-graph GCNs."""

from .encoding import build_basis, compose_residual, dct, idct, pad_replicate
from .errors import (ConfigError, DataError, ShapeError, StateError, TrainingError,
                     TrajGCNError)
from .evaluation import build_variant, horizon_frames, mpjpe_at, euler_error_at
from .gcn import FullyConnectedNet, GraphConvLayer, MotionGCN, param_count
from .numeric import ParameterStore, global_l2_norm, make_rng
from .optimize import train
from .pipeline import Pipeline, VariantConfig, zero_velocity_predict

__version__ = "0.1.0"
