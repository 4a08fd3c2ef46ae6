"""Reconstruction error measures."""

import numpy as np


def mrse(targets, outputs) -> float:
    """Mean root squared error ``(1/N) * sqrt(sum_i ||x_i - N(x_i)||^2)``.

    Differs from RMSE by the 1/N factor outside the root (RMSE uses 1/sqrt(N)).
    """
    targets = np.asarray(targets, dtype=np.float64)
    outputs = np.asarray(outputs, dtype=np.float64)
    if targets.shape != outputs.shape:
        raise ValueError(f"shape mismatch: {targets.shape} vs {outputs.shape}")
    if targets.ndim == 1:
        targets = targets[None, :]
        outputs = outputs[None, :]
    return float(np.sqrt(np.sum((targets - outputs) ** 2)) / targets.shape[0])
