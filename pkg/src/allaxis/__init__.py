"""All-axis attention image restoration toolkit."""

from .errors import (AllAxisError, CheckpointError, ChecksumError, ConfigError,
                     DataError, FingerprintError, NumericError, PartitionError,
                     ShapeError, UsageError)
from .tensor import (GradTape, Tensor, add, backward, concat, conv2d, conv3d,
                     conv_transpose2d, finite_checks, gelu, layer_norm, linear,
                     matmul, mul, no_grad, reshape, smooth_l1, softmax, tmean,
                     transpose, tsum)

__version__ = "0.1.0"
