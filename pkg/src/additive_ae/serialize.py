"""Versioned on-disk container for trained additive models."""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import network as nw
from .dataio import FeatureMask, NormalizationParams
from .linear import PcaBasis
from .optim import OptimSettings
from .train import TrainedModel

MODEL_FORMAT = "additive-ae-model"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """The file is not a readable model container of a supported version."""


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_model(model: TrainedModel, path: str | Path, extra: dict | None = None) -> None:
    meta = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "tool_version": __version__,
        "family": model.arch.family,
        "encoder_sizes": list(model.arch.encoder_sizes),
        "tied": model.arch.tied,
        "seed": model.cfg.seed,
        "alpha": model.weights.alpha,
        "beta": model.weights.beta,
        "train_mrse": model.train_mrse,
        "pretrain_costs": list(model.pretrain_costs),
        "cfg": asdict(model.cfg),
        "settings": asdict(model.settings),
    }
    if model.optim_result is not None:
        meta["optim"] = {"iterations": model.optim_result.iterations,
                         "stop_reason": model.optim_result.stop_reason,
                         "final_cost": model.optim_result.cost}
    meta["config_hash"] = config_hash({"cfg": meta["cfg"], "settings": meta["settings"]})
    if extra:
        meta.update(extra)
    buf = io.BytesIO()
    np.savez(buf, meta=np.array(json.dumps(meta)), means=model.params.means,
             scales=model.params.scales, kept=model.mask.kept, U=model.basis.U,
             eigenvalues=model.basis.eigenvalues, weights=nw.flatten(model.weights),
             anchor=nw.flatten(model.weights.W0))
    Path(path).write_bytes(buf.getvalue())


def load_model(path: str | Path) -> TrainedModel:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError, EOFError, zipfile.BadZipFile, KeyError) as exc:
        raise ModelFormatError(f"{path}: cannot read model container ({exc})") from exc
    try:
        meta = json.loads(str(arrays["meta"]))
    except (KeyError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: missing or corrupt metadata") from exc
    if meta.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not an additive-ae model file")
    if meta.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {meta.get('version')}")
    try:
        arch = nw.Architecture(tuple(meta["encoder_sizes"]), meta["tied"], meta["family"])
        weights = nw.WeightStack(nw.unflatten(arrays["weights"], arch),
                                 nw.unflatten(arrays["anchor"], arch),
                                 meta["beta"], meta["alpha"], meta["seed"])
        cfg = nw.TrainConfig(**meta["cfg"])
        settings = OptimSettings(**meta["settings"])
        return TrainedModel(arch, weights, PcaBasis(arrays["U"], arrays["eigenvalues"]),
                            NormalizationParams(arrays["means"], arrays["scales"]),
                            FeatureMask(arrays["kept"].astype(bool)), float(meta["train_mrse"]),
                            list(meta.get("pretrain_costs", [])), None, cfg, settings)
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelFormatError(f"{path}: inconsistent model container ({exc})") from exc


def read_meta(path: str | Path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        return json.loads(str(z["meta"]))
