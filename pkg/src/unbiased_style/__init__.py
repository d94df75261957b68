"""Unbiased style-transfer learning at desk scale.

An encoder / transformer / decoder network trained with biased, unbiased
(alpha = 0 reconstruction) and anchored (intermediate-alpha) losses, plus
the evaluation harness measuring losses against style weight and alpha.
"""

from .errors import ContractError, FormatError, GraphStateError, ParseError, ShapeError, TrainingDiverged, UsageError
from .losses import LossBreakdown, LossWeights
from .networks import IDENTITY, SQRT, RegressionFn, StyleNet, load_checkpoint, save_checkpoint
from .training import TrainConfig, train

__version__ = "0.1.0"
