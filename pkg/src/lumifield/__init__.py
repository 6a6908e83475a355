"""Unsupervised low-light radiance field training and enhancement toolkit."""

__version__ = "0.1.0"

from .tensor import Tensor, Tape, no_grad, precision  # noqa: F401
from .field import FieldConfig, FieldNetworks, EncodingConfig  # noqa: F401
from .losses import LossConfig  # noqa: F401
from .training import TrainConfig, train  # noqa: F401
