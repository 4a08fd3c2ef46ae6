"""Squeezing-dimension sweeps, threshold detection of the intrinsic dimension,
efficiency statistics against the 1Hid baseline, and validation scoring."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .dataio import Dataset, RawTable, apply_normalization
from .linear import full_basis, residual
from .metrics import mrse
from .network import TrainConfig
from .optim import OptimSettings
from .serialize import save_model
from .train import TrainedModel, reconstruct, train_additive

logger = logging.getLogger(__name__)

BASELINE = "1Hid"
MIN_OVER_MODELS = "min_over_models"
DEFAULT_TAU = {"small": 4e-3, "large": 3e-3}

__all__ = [
    "mrse", "DimGrid", "make_grid", "Trajectory", "DetectionConfig", "DetectionResult",
    "run_sweep", "detect_id", "efficiency_table", "generalization_score", "CellStore",
]


@dataclass(frozen=True)
class DimGrid:
    values: tuple[int, ...]
    step: int

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if not vals:
            raise ValueError("empty dimension grid")
        if any(b - a != self.step for a, b in zip(vals, vals[1:])) or vals[0] < 1 or self.step < 1:
            raise ValueError(f"grid must be positive and uniformly spaced by {self.step}: {vals}")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def make_grid(n: int, mode: str = "small") -> DimGrid:
    """1..n-1 by ones (small) or 10, 20, ... up to floor(0.6 n) (large)."""
    if n < 2:
        raise ValueError("need at least two features to sweep")
    if mode == "small":
        return DimGrid(tuple(range(1, n)), 1)
    if mode == "large":
        top = (6 * n) // 10
        vals = tuple(range(10, top + 1, 10))
        if not vals:
            raise ValueError(f"large-mode grid is empty for n={n} (needs n >= 17)")
        return DimGrid(vals, 10)
    raise ValueError(f"unknown grid mode {mode!r}")


@dataclass
class Trajectory:
    grid: DimGrid
    mrse: dict[str, np.ndarray]
    linear_mrse: np.ndarray
    n: int
    N: int
    dataset: str = ""
    seed: int = 0

    def series(self, source: str) -> np.ndarray:
        if source == MIN_OVER_MODELS:
            return min_series(self)
        if source not in self.mrse:
            raise KeyError(f"no MRSE series for family {source!r}")
        return self.mrse[source]

    def to_rows(self) -> list[dict]:
        rows = []
        for fam, vals in self.mrse.items():
            for dim, v, lin in zip(self.grid, vals, self.linear_mrse):
                rows.append(dict(dataset=self.dataset, family=fam, dim=dim, mrse=float(v),
                                 linear_mrse=float(lin), seed=self.seed))
        return rows


def min_series(traj: Trajectory) -> np.ndarray:
    stacked = np.vstack(list(traj.mrse.values()))
    with np.errstate(all="ignore"):
        return np.nanmin(stacked, axis=0)


@dataclass(frozen=True)
class DetectionConfig:
    tau: float = 4e-3
    source: str = "single_model"
    family: str = BASELINE

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.source not in ("single_model", MIN_OVER_MODELS):
            raise ValueError(f"unknown detection source {self.source!r}")

    @property
    def series_key(self) -> str:
        return MIN_OVER_MODELS if self.source == MIN_OVER_MODELS else self.family


@dataclass
class DetectionResult:
    detected: bool
    id: int | None
    reduction_rate: float | None
    mrse_at_id: float | None
    triggering_dim: int | None
    series: str
    tau: float
    max_gain_dim: int | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("detected", "id", "reduction_rate", "mrse_at_id",
                                              "triggering_dim", "series", "tau", "max_gain_dim")}


def threshold_knee(values, grid: Iterable[int], tau: float) -> int | None:
    """First grid value whose backward MRSE difference drops below ``tau``."""
    values = np.asarray(values, dtype=np.float64)
    grid = list(grid)
    for k in range(1, len(grid)):
        if values[k - 1] - values[k] < tau:
            return grid[k]
    return None


def detect_id(traj: Trajectory, model: str | None = None, cfg: DetectionConfig | None = None) -> DetectionResult:
    """Intrinsic dimension = (first dim with backward difference below tau) - step.

    ``model`` names a family or ``"min_over_models"``; it overrides ``cfg``.
    """
    cfg = cfg or DetectionConfig()
    key = model or cfg.series_key
    if len(traj.grid) < 2:
        raise ValueError("detection needs at least two grid points")
    s = traj.series(key)
    gain = traj.linear_mrse - s
    max_gain = int(traj.grid.values[int(np.nanargmax(gain))]) if np.any(np.isfinite(gain)) else None
    trig = threshold_knee(s, traj.grid, cfg.tau)
    if trig is None:
        return DetectionResult(False, None, None, None, None, key, cfg.tau, max_gain)
    dim = trig - traj.grid.step
    at = float(s[traj.grid.values.index(dim)])
    return DetectionResult(True, dim, dim / traj.n, at, trig, key, cfg.tau, max_gain)


@dataclass
class EfficiencyStats:
    mean: float
    max: float
    argmax_dim: int | None
    dims: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    excluded: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "max": self.max, "argmax_dim": self.argmax_dim,
                "dims": self.dims, "values": self.values, "excluded": self.excluded}


def efficiency_table(traj: Trajectory, detection: DetectionResult,
                     families: Iterable[str] | None = None) -> dict[str, EfficiencyStats]:
    """Reciprocal relative MRSE against 1Hid over grid dims up to ID - step."""
    if BASELINE not in traj.mrse:
        raise ValueError("efficiency needs the 1Hid series")
    if not detection.detected:
        raise ValueError("efficiency needs a detected intrinsic dimension")
    base = traj.mrse[BASELINE]
    last = detection.id - traj.grid.step
    idx = [k for k, d in enumerate(traj.grid) if d <= last]
    out = {}
    for fam in families or traj.mrse:
        s = traj.mrse[fam]
        dims, vals, excluded = [], [], []
        for k in idx:
            d = traj.grid.values[k]
            if not base[k] > 0 or not np.isfinite(s[k]) or not s[k] > 0:
                excluded.append(d)
                continue
            dims.append(d)
            vals.append(float(base[k] / s[k]))
        if vals:
            j = int(np.argmax(vals))
            out[fam] = EfficiencyStats(float(np.mean(vals)), vals[j], dims[j], dims, vals, excluded)
        else:
            out[fam] = EfficiencyStats(math.nan, math.nan, None, dims, vals, excluded)
    return out


def grand_means(tables: Iterable[dict[str, EfficiencyStats]]) -> dict[str, float]:
    """Unweighted mean over datasets of each family's mean efficiency."""
    acc: dict[str, list[float]] = {}
    for table in tables:
        for fam, st in table.items():
            acc.setdefault(fam, []).append(st.mean)
    return {fam: float(np.mean(v)) for fam, v in acc.items()}


class CellStore:
    """One JSON record (and optionally one model file) per (family, dim) cell."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "cells").mkdir(parents=True, exist_ok=True)
        (self.root / "models").mkdir(parents=True, exist_ok=True)

    def cell_path(self, family, m):
        return self.root / "cells" / f"{family}_m{m:05d}.json"

    def model_path(self, family, m):
        return self.root / "models" / f"{family}_m{m:05d}.npz"

    def get(self, family, m):
        p = self.cell_path(family, m)
        if not p.exists():
            return None
        try:
            rec = json.loads(p.read_text())
        except json.JSONDecodeError:
            return None
        return rec if rec.get("status") == "ok" else None

    def put(self, record: dict) -> None:
        p = self.cell_path(record["family"], record["dim"])
        tmp = p.with_suffix(".tmp")
        tmp.write_text(json.dumps(record))
        tmp.replace(p)


def _cell_job(args):
    dataset, family, m, cfg, settings, basis = args
    try:
        model = train_additive(dataset, family, m, cfg, settings, basis)
        return family, m, model, None
    except Exception as exc:  # recorded as a missing cell
        return family, m, None, f"{type(exc).__name__}: {exc}"


def run_sweep(dataset: Dataset, families: Iterable[str], grid: DimGrid,
              cfg: TrainConfig | None = None, settings: OptimSettings | None = None,
              store: CellStore | None = None, resume: bool = True,
              map_fn: Callable = map, name: str = "", save_models: bool = True,
              on_model: Callable[[TrainedModel], None] | None = None) -> Trajectory:
    """Train every (family, dim) cell and assemble the MRSE trajectory.

    Cells already recorded in ``store`` are skipped when ``resume`` is set.
    Failed cells become NaN and the sweep continues.
    """
    cfg = cfg or TrainConfig()
    settings = settings or OptimSettings()
    families = list(families)
    if not families:
        raise ValueError("no model families given")
    if grid.values[-1] >= dataset.n:
        raise ValueError(f"grid exceeds n - 1 = {dataset.n - 1}")
    basis = full_basis(dataset.data)
    lin = np.array([mrse(dataset.data, dataset.data - residual(basis.truncate(m), dataset.data))
                    for m in grid])
    values = {f: np.full(len(grid), np.nan) for f in families}
    pos = {m: k for k, m in enumerate(grid)}
    jobs = []
    for fam in families:
        for m in grid:
            rec = store.get(fam, m) if (store is not None and resume) else None
            if rec is not None:
                values[fam][pos[m]] = rec["mrse"]
            else:
                jobs.append((dataset, fam, m, cfg, settings, basis))
    for fam, m, model, err in map_fn(_cell_job, jobs):
        k = pos[m]
        if err is not None:
            logger.warning("cell %s m=%d failed: %s", fam, m, err)
            if store is not None:
                store.put(dict(family=fam, dim=m, status="failed", error=err, seed=cfg.seed))
            continue
        values[fam][k] = model.train_mrse
        logger.info("%s m=%d: MRSE %.4e (linear %.4e, %d its, %s)", fam, m, model.train_mrse,
                    lin[k], model.optim_result.iterations, model.optim_result.stop_reason)
        if store is not None:
            if save_models:
                save_model(model, store.model_path(fam, m))
            store.put(dict(family=fam, dim=m, status="ok", mrse=model.train_mrse,
                           linear_mrse=float(lin[k]), seed=cfg.seed,
                           iterations=model.optim_result.iterations,
                           stop_reason=model.optim_result.stop_reason))
        if on_model is not None:
            on_model(model)
    return Trajectory(grid, values, lin, dataset.n, dataset.N, name, cfg.seed)


@dataclass
class GeneralizationReport:
    dims: list[int]
    train_mrse: list[float]
    valid_mrse: list[float]
    correlation: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"dims": self.dims, "train_mrse": self.train_mrse, "valid_mrse": self.valid_mrse,
                "correlation": None if self.degenerate else self.correlation,
                "degenerate": self.degenerate}


def pearson(a, b) -> float | None:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def generalization_score(models: Iterable[TrainedModel], validation: RawTable) -> GeneralizationReport:
    """Validation MRSE per squeezing dimension and its Pearson correlation with training MRSE."""
    models = sorted(models, key=lambda mdl: mdl.m)
    dims, tr, va = [], [], []
    for model in models:
        x = apply_normalization(model.params, model.mask, validation).data
        dims.append(model.m)
        tr.append(model.train_mrse)
        va.append(mrse(x, reconstruct(model, validation)))
    r = pearson(tr, va)
    return GeneralizationReport(dims, tr, va, math.nan if r is None else r, r is None)


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    fields = ["dataset", "family", "dim", "mrse", "linear_mrse", "seed"]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in traj.to_rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_trajectory_csv(path: str | Path, n: int, N: int) -> Trajectory:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise ValueError(f"{path}: empty trajectory")
    dims = sorted({int(r["dim"]) for r in rows})
    step = dims[1] - dims[0] if len(dims) > 1 else 1
    grid = DimGrid(tuple(dims), step)
    pos = {d: k for k, d in enumerate(dims)}
    fams: dict[str, np.ndarray] = {}
    lin = np.full(len(dims), np.nan)
    for r in rows:
        arr = fams.setdefault(r["family"], np.full(len(dims), np.nan))
        arr[pos[int(r["dim"])]] = float(r["mrse"])
        lin[pos[int(r["dim"])]] = float(r["linear_mrse"])
    return Trajectory(grid, fams, lin, n, N, rows[0]["dataset"], int(rows[0]["seed"]))


def write_plot_csv(traj: Trajectory, path: str | Path) -> None:
    """Per-dimension MRSE and backward differences for each series, ready to plot."""
    series = {"linear": traj.linear_mrse, **traj.mrse}
    if len(traj.mrse) > 1:
        series[MIN_OVER_MODELS] = min_series(traj)
    header = ["dim"]
    for key in series:
        header += [f"{key}_mrse", f"{key}_dmrse"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, d in enumerate(traj.grid):
            row = [d]
            for s in series.values():
                row += [repr(float(s[k])), "" if k == 0 else repr(float(s[k - 1] - s[k]))]
            w.writerow(row)
