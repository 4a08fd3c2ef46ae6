"""Training of the additive model: normalization, PCA trend, and nonlinear residual network."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import network as nw
from .dataio import Dataset, FeatureMask, NormalizationParams, RawTable, apply_normalization
from .linear import PcaBasis, full_basis, residual
from .metrics import mrse
from .optim import OptimResult, OptimSettings, minimize

logger = logging.getLogger(__name__)


@dataclass
class TrainedModel:
    arch: nw.Architecture
    weights: nw.WeightStack
    basis: PcaBasis
    params: NormalizationParams
    mask: FeatureMask
    train_mrse: float
    pretrain_costs: list[float] = field(default_factory=list)
    optim_result: OptimResult | None = None
    cfg: nw.TrainConfig = field(default_factory=nw.TrainConfig)
    settings: OptimSettings = field(default_factory=OptimSettings)

    @property
    def family(self) -> str:
        return self.arch.family

    @property
    def m(self) -> int:
        return self.arch.m


@dataclass
class LayerChangeReport:
    changes: list[float]
    absolute: list[bool]

    def __iter__(self):
        return iter(self.changes)


def pretrain_settings(settings: OptimSettings, max_iters: int = 500) -> OptimSettings:
    return replace(settings, max_iters=min(max_iters, settings.max_iters))


def _fit(weights, arch, data, settings):
    res = minimize(nw.make_objective(weights, arch, data), nw.flatten(weights), settings)
    W = nw.unflatten(res.x, arch)
    return nw.WeightStack(W, weights.W0, weights.beta, weights.alpha, weights.seed), res


def train_1sym(data, m, cfg, settings, rng=None):
    """One-matrix symmetric autoencoder ``d -> W^T tanh(W d)`` from a random start."""
    data = np.asarray(data, dtype=np.float64)
    arch = nw.Architecture((data.shape[1], m), tied=True, family="1Sym")
    ws = nw.init_weights(arch, cfg, rng)
    return _fit(ws, arch, data, settings)


def pretrain_stack(arch, residual_data, cfg, settings, rng=None):
    """Greedy pretraining of a tied stack from the outermost layer inwards.

    Stage ``k`` fits a one-matrix symmetric autoencoder on ``D_k``; the next
    stage's data is ``D_k W_k^T`` (or its tanh when ``cfg.pretrain_target`` is
    ``"post_activation"``).  Returns the pretrained stack, anchored at itself,
    and the final cost of each stage.
    """
    if not arch.tied:
        raise ValueError("layerwise pretraining needs a tied architecture")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    data = np.asarray(residual_data, dtype=np.float64)
    stack, costs = [], []
    for k in range(arch.half_depth):
        ws, res = train_1sym(data, arch.encoder_sizes[k + 1], cfg, settings, rng)
        W = ws.W[0]
        logger.debug("pretrain stage %d/%d: cost %.6e after %d its (%s)",
                     k + 1, arch.half_depth, res.cost, res.iterations, res.stop_reason)
        stack.append(W)
        costs.append(res.cost)
        data = data @ W.T
        if cfg.pretrain_target == "post_activation":
            data = np.tanh(data)
    beta = nw.regularization_weight(arch, cfg.alpha)
    return nw.WeightStack(stack, [w.copy() for w in stack], beta, cfg.alpha, cfg.seed), costs


def finetune(pretrained, arch, residual_data, cfg, settings):
    """Joint optimization of all stored matrices, anchored at the starting weights."""
    start = nw.WeightStack([w.copy() for w in pretrained.W], [w.copy() for w in pretrained.W],
                           nw.regularization_weight(arch, cfg.alpha), cfg.alpha, cfg.seed)
    return _fit(start, arch, residual_data, settings)


def warmstart_1hid(residual_data, m, cfg, settings, rng=None):
    """Train 1Sym, then the untied 1Hid network started from ``(W, W^T)``."""
    data = np.asarray(residual_data, dtype=np.float64)
    n = data.shape[1]
    if not 1 <= m < n:
        raise ValueError(f"squeezing dimension must be in [1, {n - 1}]")
    sym, sym_res = train_1sym(data, m, cfg, settings, rng)
    arch = nw.build_architecture("1Hid", n, m)
    W1 = sym.W[0]
    start = nw.WeightStack([W1.copy(), W1.T.copy()], [W1.copy(), W1.T.copy()],
                           nw.regularization_weight(arch, cfg.alpha), cfg.alpha, cfg.seed)
    ws, res = _fit(start, arch, data, settings)
    return ws, arch, res, sym_res


def train_additive(dataset: Dataset, family: str, m: int, cfg: nw.TrainConfig | None = None,
                   settings: OptimSettings | None = None, basis: PcaBasis | None = None) -> TrainedModel:
    """Fit PCA with ``m`` components and a residual network of the given family."""
    cfg = cfg or nw.TrainConfig()
    settings = settings or OptimSettings()
    x = dataset.data
    n = x.shape[1]
    if not 1 <= m < n:
        raise ValueError(f"squeezing dimension must be in [1, {n - 1}], got {m}")
    basis = (basis if basis is not None else full_basis(x))
    if basis.m < m:
        raise ValueError("supplied basis has too few components")
    basis = basis.truncate(m)
    xr = residual(basis, x)
    rng = np.random.default_rng(cfg.seed)
    arch = nw.build_architecture(family, n, m)
    if family == "1Hid":
        ws, arch, res, sym_res = warmstart_1hid(xr, m, cfg, settings, rng)
        stage_costs = [sym_res.cost]
    elif arch.half_depth == 1:
        # the single pretraining stage is the whole model
        ws, res = train_1sym(xr, m, cfg, settings, rng)
        stage_costs = [res.cost]
    else:
        pre, stage_costs = pretrain_stack(arch, xr, cfg, pretrain_settings(settings), rng)
        ws, res = finetune(pre, arch, xr, cfg, settings)
    out = nw.forward(ws, arch, xr).output
    return TrainedModel(arch, ws, basis, dataset.params, dataset.mask, mrse(xr, out),
                        stage_costs, res, cfg, settings)


def weight_change_report(model: TrainedModel) -> LayerChangeReport:
    """Relative change of each stored matrix's Frobenius norm from the anchor."""
    changes, absolute = [], []
    for w, w0 in zip(model.weights.W, model.weights.W0):
        n0, n1 = np.linalg.norm(w0), np.linalg.norm(w)
        if n0 == 0:
            changes.append(float(abs(n1)))
            absolute.append(True)
        else:
            changes.append(float(abs(n0 - n1) / n0))
            absolute.append(False)
    return LayerChangeReport(changes, absolute)


def _normalized(model, rows):
    if isinstance(rows, Dataset):
        return rows.data
    if not isinstance(rows, RawTable):
        rows = RawTable(np.atleast_2d(np.asarray(rows, dtype=np.float64)))
    return apply_normalization(model.params, model.mask, rows).data


def _network_trace(model, x, fold):
    if fold:
        return nw.forward(model.weights, model.arch, x,
                          first_layer=nw.fold_linear(model.weights, model.basis))
    return nw.forward(model.weights, model.arch, residual(model.basis, x))


def encode(model: TrainedModel, raw_rows, fold: bool = True) -> np.ndarray:
    """m-dimensional codes: PC coordinates plus the squeezing-layer output."""
    x = _normalized(model, raw_rows)
    trace = _network_trace(model, x, fold)
    return model.basis.project(x) + trace.o[model.arch.half_depth]


def reconstruct(model: TrainedModel, raw_rows, fold: bool = True) -> np.ndarray:
    """Reconstruction in normalized space: PCA projection plus network output."""
    x = _normalized(model, raw_rows)
    trace = _network_trace(model, x, fold)
    return model.basis.reconstruct(x) + trace.output


def model_mrse(model: TrainedModel, rows) -> float:
    return mrse(_normalized(model, rows), reconstruct(model, rows))
