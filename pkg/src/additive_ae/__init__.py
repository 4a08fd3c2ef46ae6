"""Intrinsic dimension estimation with additive (bias + PCA + residual network) autoencoders."""

__version__ = "0.1.0"

from .dataio import (  # noqa: E402
    DataError, Dataset, FeatureMask, NormalizationParams, RawTable, apply_normalization,
    eliminate_constant_features, load_csv, normalize, prepare,
)
from .linear import PcaBasis, linear_mrse_curve, pca_fit, residual  # noqa: E402
from .metrics import mrse  # noqa: E402
from .network import (  # noqa: E402
    FAMILIES, Architecture, TrainConfig, WeightStack, build_architecture, cost, fold_linear,
    forward, gradient, init_weights,
)
from .optim import OptimResult, OptimSettings, check_gradient, minimize  # noqa: E402
from .train import TrainedModel, encode, reconstruct, train_additive, weight_change_report  # noqa: E402
from .sweep import (  # noqa: E402
    DetectionConfig, DetectionResult, DimGrid, Trajectory, detect_id, efficiency_table,
    generalization_score, make_grid, run_sweep,
)
