"""Loading, constant-feature elimination and bias normalization of tabular data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Numerical zero for a feature range: sqrt of float64 machine epsilon.
RANGE_EPS = math.sqrt(np.finfo(np.float64).eps)


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class RawTable:
    values: np.ndarray
    column_names: list[str] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError(f"expected a 2-D table, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError("table is empty")
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {i}, column {j}")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class FeatureMask:
    kept: np.ndarray

    @property
    def n(self) -> int:
        return int(np.count_nonzero(self.kept))

    @property
    def p(self) -> int:
        return int(self.kept.size)


@dataclass(frozen=True)
class NormalizationParams:
    means: np.ndarray
    scales: np.ndarray


@dataclass(frozen=True)
class Dataset:
    data: np.ndarray
    params: NormalizationParams
    mask: FeatureMask
    column_names: list[str] | None = field(default=None)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) / self.params.scales + self.params.means


def load_csv(path: str | Path, has_header: bool = False) -> RawTable:
    """Read a comma-separated numeric table, one observation per row.

    Errors name the 1-based file line and column of the offending cell.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    names = None
    rows: list[list[float]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if has_header and names is None:
                names = [c.strip() for c in record]
                continue
            row = []
            for col, cell in enumerate(record, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {col}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: line {lineno}, column {col}: non-finite value {cell!r}"
                    )
                row.append(value)
            if rows and len(row) != len(rows[0]):
                raise DataError(
                    f"{path}: line {lineno}: expected {len(rows[0])} columns, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if names is not None and len(names) != len(rows[0]):
        raise DataError(f"{path}: header has {len(names)} names for {len(rows[0])} columns")
    return RawTable(np.array(rows, dtype=np.float64), names)


def eliminate_constant_features(table: RawTable) -> FeatureMask:
    """Keep features whose range is at least sqrt(machine epsilon)."""
    values = table.values
    spread = values.max(axis=0) - values.min(axis=0)
    kept = spread >= RANGE_EPS
    if not kept.any():
        raise DataError("no informative features: every column is constant")
    return FeatureMask(kept)


def normalize(table: RawTable, mask: FeatureMask) -> Dataset:
    """Subtract feature means and scale each kept feature by 2/(max - min)."""
    if mask.p != table.shape[1]:
        raise DataError(f"mask covers {mask.p} features, table has {table.shape[1]}")
    x = table.values[:, mask.kept]
    means = x.mean(axis=0)
    scales = 2.0 / (x.max(axis=0) - x.min(axis=0))
    params = NormalizationParams(means, scales)
    return _apply(params, mask, table)


def apply_normalization(params: NormalizationParams, mask: FeatureMask, table: RawTable) -> Dataset:
    """Normalize unseen data with stored training statistics (no refit, no clipping)."""
    if table.shape[1] != mask.p:
        raise DataError(
            f"feature-count mismatch: model expects {mask.p} features, table has {table.shape[1]}"
        )
    return _apply(params, mask, table)


def _apply(params, mask, table):
    x = (table.values[:, mask.kept] - params.means) * params.scales
    names = None
    if table.column_names is not None:
        names = [c for c, k in zip(table.column_names, mask.kept) if k]
    return Dataset(x, params, mask, names)


def prepare(table: RawTable) -> Dataset:
    return normalize(table, eliminate_constant_features(table))


def split_rows(table: RawTable, fraction: float, seed: int = 0) -> tuple[RawTable, RawTable]:
    """Random train/validation split of the rows of ``table``."""
    if not 0.0 < fraction < 1.0:
        raise DataError("split fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(table.shape[0])
    cut = int(round(fraction * table.shape[0]))
    if cut < 2 or cut >= table.shape[0]:
        raise DataError("split leaves an empty or degenerate part")
    train = RawTable(table.values[np.sort(order[:cut])], table.column_names)
    valid = RawTable(table.values[np.sort(order[cut:])], table.column_names)
    return train, valid
