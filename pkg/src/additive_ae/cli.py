"""Command-line interface: ``additive-ae {estimate,sweep,validate,check}``.

Settings are resolved as defaults < config file < ``ADDAE_*`` environment
variables < command-line flags.  Exit codes: 0 success, 1 error, 2 intrinsic
dimension not detected.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import network as nw
from .dataio import DataError, RawTable, load_csv, prepare
from .linear import full_basis
from .optim import OptimSettings, check_gradient
from .serialize import ModelFormatError, config_hash, load_model
from .sweep import (
    DEFAULT_TAU, MIN_OVER_MODELS, CellStore, DetectionConfig, detect_id, efficiency_table,
    generalization_score, make_grid, run_sweep, write_plot_csv, write_trajectory_csv,
)

log = logging.getLogger("additive_ae")

CONFIG_SCHEMA = 1
ENV_PREFIX = "ADDAE_"
EXIT_OK, EXIT_ERROR, EXIT_NOT_DETECTED = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: list[str] = field(default_factory=list)
    has_header: bool = False
    mode: str = "small"
    families: list[str] = field(default_factory=lambda: ["1Hid", "1Sym"])
    tau: float | None = None
    seed: int = 0
    jobs: int | None = None
    out: str = "results"
    resume: bool = True
    pretrain_target: str = "pre_activation"
    detection_source: str = "single_model"
    detection_family: str = "1Hid"
    alpha: float = 1e-6
    init_halfwidth: float = 0.1
    optimizer: dict = field(default_factory=dict)

    @property
    def effective_tau(self) -> float:
        return self.tau if self.tau is not None else DEFAULT_TAU[self.mode]

    def train_config(self) -> nw.TrainConfig:
        return nw.TrainConfig(self.alpha, self.init_halfwidth, self.seed, self.pretrain_target)

    def optim_settings(self) -> OptimSettings:
        try:
            return OptimSettings(**self.optimizer)
        except TypeError as exc:
            raise ConfigError(f"bad optimizer settings: {exc}") from None

    def detection_config(self) -> DetectionConfig:
        return DetectionConfig(self.effective_tau, self.detection_source, self.detection_family)

    def validate(self, need_data: bool = True, need_detection: bool = True) -> None:
        if not self.families:
            raise ConfigError("families must not be empty")
        bad = [f for f in self.families if f not in nw.FAMILIES]
        if bad:
            raise ConfigError(f"unknown families {bad}; choose from {list(nw.FAMILIES)}")
        if self.mode not in ("small", "large"):
            raise ConfigError(f"mode must be 'small' or 'large', not {self.mode!r}")
        if self.tau is not None and not self.tau > 0:
            raise ConfigError("tau must be positive")
        if need_data:
            if not self.data:
                raise ConfigError("no dataset given (use --data or the config file)")
            missing = [p for p in self.data if not Path(p).exists()]
            if missing:
                raise ConfigError(f"dataset files not found: {missing}")
        if self.detection_source not in ("single_model", MIN_OVER_MODELS):
            raise ConfigError(f"unknown detection source {self.detection_source!r}")
        if (need_detection and self.detection_source == "single_model"
                and self.detection_family not in self.families):
            raise ConfigError(f"detection family {self.detection_family} is not being trained")
        self.train_config()
        self.optim_settings()

    def hash(self) -> str:
        d = asdict(self)
        for k in ("jobs", "out", "resume", "data"):
            d.pop(k)
        return config_hash(d)


def _split_list(v):
    if isinstance(v, str):
        return [s.strip() for s in v.split(",") if s.strip()]
    return list(v)


def _coerce(name, value):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    kind = kinds[name]
    if value is None:
        return None
    if name in ("data", "families"):
        return _split_list(value)
    if "bool" in kind:
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if "float" in kind:
        return float(value)
    if "int" in kind:
        return int(value)
    if "dict" in kind:
        return json.loads(value) if isinstance(value, str) else dict(value)
    return str(value)


def load_config_file(path: str | Path) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config file must be a mapping")
    schema = doc.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {schema} (expected {CONFIG_SCHEMA})")
    flat = {}
    for k, v in doc.items():
        if k == "detection" and isinstance(v, dict):
            flat.update({f"detection_{kk}": vv for kk, vv in v.items()})
        elif k == "train" and isinstance(v, dict):
            flat.update(v)
        else:
            flat[k] = v
    known = {f.name for f in fields(RunConfig)}
    unknown = set(flat) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return flat


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    values: dict = {}
    cfg_path = getattr(args, "config", None) or environ.get(ENV_PREFIX + "CONFIG")
    if cfg_path:
        values.update(load_config_file(cfg_path))
    for f in fields(RunConfig):
        env = environ.get(ENV_PREFIX + f.name.upper())
        if env is not None:
            values[f.name] = env
    for name in ("data", "has_header", "mode", "families", "tau", "seed", "jobs", "out", "resume",
                 "pretrain_target", "detection_source"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        return RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _stamp(cfg: RunConfig) -> dict:
    return {"tool_version": __version__, "config_hash": cfg.hash(), "seed": cfg.seed}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _prepend_comment(path: Path, stamp: dict) -> None:
    text = path.read_text()
    path.write_text("# " + json.dumps(stamp, sort_keys=True) + "\n" + text)


def _mapper(jobs):
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1:
        return map, None
    pool = ProcessPoolExecutor(max_workers=jobs)
    return (lambda fn, items: pool.map(fn, items, chunksize=1)), pool


def _sweep_dataset(cfg: RunConfig, path: str, out_root: Path):
    name = Path(path).stem
    out = out_root / name
    out.mkdir(parents=True, exist_ok=True)
    table = load_csv(path, cfg.has_header)
    dataset = prepare(table)
    grid = make_grid(dataset.n, cfg.mode)
    store = CellStore(out)
    mapper, pool = _mapper(cfg.jobs)
    try:
        traj = run_sweep(dataset, cfg.families, grid, cfg.train_config(), cfg.optim_settings(),
                         store=store, resume=cfg.resume, map_fn=mapper, name=name)
    finally:
        if pool is not None:
            pool.shutdown()
    stamp = _stamp(cfg)
    write_trajectory_csv(traj, out / "trajectory.csv")
    _prepend_comment(out / "trajectory.csv", stamp)
    write_plot_csv(traj, out / "plot.csv")
    _prepend_comment(out / "plot.csv", stamp)
    return name, out, dataset, traj, store


def cmd_sweep(cfg: RunConfig) -> int:
    cfg.validate(need_detection=False)
    out_root = Path(cfg.out)
    for path in cfg.data:
        name, out, dataset, traj, _ = _sweep_dataset(cfg, path, out_root)
        print(f"{name}: swept {len(traj.grid)} dims x {len(cfg.families)} families -> {out}")
    return EXIT_OK


def cmd_estimate(cfg: RunConfig) -> int:
    cfg.validate()
    out_root = Path(cfg.out)
    status = EXIT_OK
    for path in cfg.data:
        name, out, dataset, traj, store = _sweep_dataset(cfg, path, out_root)
        dcfg = cfg.detection_config()
        det = detect_id(traj, cfg=dcfg)
        eff = {}
        if det.detected and "1Hid" in traj.mrse:
            eff = {f: s.to_dict() for f, s in efficiency_table(traj, det).items()}
        report = {
            "dataset": name, "n": dataset.n, "N": dataset.N, "grid": list(traj.grid.values),
            "tau": dcfg.tau, "source": dcfg.source, "series": det.series,
            "id": det.id, "reduction_rate": det.reduction_rate, "mrse_at_id": det.mrse_at_id,
            "detected": det.detected, "triggering_dim": det.triggering_dim,
            "max_gain_dim": det.max_gain_dim, "per_family_efficiency": eff, **_stamp(cfg),
        }
        _write_json(out / "detection.json", report)
        _write_json(out / "efficiency.json", {"dataset": name, "id": det.id,
                                              "efficiency": eff, **_stamp(cfg)})
        if det.detected:
            k = traj.grid.values.index(det.id)
            fam = det.series
            if fam == MIN_OVER_MODELS:
                fam = min(traj.mrse, key=lambda f: np.nan_to_num(traj.mrse[f][k], nan=np.inf))
            src = store.model_path(fam, det.id)
            if src.exists():
                shutil.copyfile(src, out / "model_at_id.npz")
            print(f"{name}: ID = {det.id} (n = {dataset.n}, Red = {det.reduction_rate:.2f}, "
                  f"MRSE = {det.mrse_at_id:.3e}, series {det.series}, tau = {dcfg.tau:g})")
        else:
            print(f"{name}: intrinsic dimension not detected with tau = {dcfg.tau:g}")
            status = EXIT_NOT_DETECTED
    return status


def _models_from(path: Path, family: str | None):
    if path.is_file():
        return [load_model(path)]
    cand = sorted((path / "models").glob("*.npz")) or sorted(path.glob("*.npz"))
    if not cand:
        raise ModelFormatError(f"{path}: no model files found")
    models = [load_model(p) for p in cand]
    fams = sorted({m.family for m in models})
    if family is None:
        family = "1Hid" if "1Hid" in fams else fams[0]
    return [m for m in models if m.family == family]


def cmd_validate(model_path: str, data_path: str, has_header: bool, family: str | None,
                 out: str | None) -> int:
    models = _models_from(Path(model_path), family)
    table = load_csv(data_path, has_header)
    rep = generalization_score(models, table)
    doc = {"model": str(model_path), "validation": str(data_path), "family": models[0].family,
           **rep.to_dict(), "tool_version": __version__, "seed": models[0].cfg.seed}
    text = json.dumps(doc, indent=2, default=_json_default)
    if out:
        Path(out).write_text(text)
    print(text)
    return EXIT_OK


def run_checks(dataset_table: RawTable | None = None, seed: int = 0, gradient_fn=None,
               tol: float = 1e-5) -> list[tuple[str, bool, str]]:
    """Gradient, PCA-oracle and normalization diagnostics as (name, passed, detail)."""
    rng = np.random.default_rng(seed)
    grad = gradient_fn or nw.cost_and_gradient
    rows = []
    for fam in nw.FAMILIES:
        n, m, N = 6, 2, 8
        arch = nw.build_architecture(fam, n, m)
        cfg = nw.TrainConfig(alpha=1e-2, seed=int(rng.integers(2**31)))
        ws = nw.init_weights(arch, cfg)
        ws.W = [w + rng.uniform(-0.3, 0.3, w.shape) for w in ws.W]
        batch = rng.normal(size=(N, n))

        def obj(x, arch=arch, ws=ws, batch=batch):
            st = nw.WeightStack(nw.unflatten(x, arch), ws.W0, ws.beta)
            J, g = grad(st, arch, batch)
            return J, nw.flatten(g)

        err = check_gradient(obj, nw.flatten(ws), 1e-6)
        rows.append((f"gradient {fam}", bool(err <= tol), f"max rel err {err:.2e}"))
    if dataset_table is None:
        dataset_table = RawTable(rng.normal(size=(40, 7)))
    ds = prepare(dataset_table)
    mean_dev = float(np.max(np.abs(ds.data.mean(axis=0))))
    range_dev = float(np.max(np.abs(np.ptp(ds.data, axis=0) - 2.0)))
    rows.append(("normalization mean", mean_dev <= 1e-10, f"max |mean| {mean_dev:.1e}"))
    rows.append(("normalization range", range_dev <= 1e-10, f"max |range-2| {range_dev:.1e}"))
    basis = full_basis(ds.data)
    _, sv, vt = np.linalg.svd(ds.data, full_matrices=False)
    worst = 0.0
    for k in range(1, ds.n + 1):
        if k < ds.n and np.isclose(sv[k - 1], sv[k], rtol=1e-8):
            continue
        P = basis.U[:, :k] @ basis.U[:, :k].T
        Q = vt[:k].T @ vt[:k]
        worst = max(worst, float(np.max(np.abs(P - Q))))
    rows.append(("PCA projector vs SVD", worst <= 1e-8, f"max diff {worst:.1e}"))
    trace = float(np.sum(ds.data**2) / ds.N)
    rel = abs(basis.eigenvalues.sum() - trace) / trace
    rows.append(("PCA trace identity", rel <= 1e-8, f"rel diff {rel:.1e}"))
    return rows


def cmd_check(cfg: RunConfig, gradient_fn=None) -> int:
    table = load_csv(cfg.data[0], cfg.has_header) if cfg.data else None
    rows = run_checks(table, cfg.seed, gradient_fn)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = [r for r in rows if not r[1]]
    if failed:
        print(f"{len(failed)} check(s) FAILED", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="additive-ae", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    def run_flags(sp):
        sp.add_argument("--config")
        sp.add_argument("--data", action="append", help="CSV file (repeatable)")
        sp.add_argument("--header", dest="has_header", action="store_const", const=True,
                        help="first CSV row holds column names")
        sp.add_argument("--out")
        sp.add_argument("--tau", type=float)
        sp.add_argument("--families", help="comma-separated, e.g. 1Hid,1Sym,3Sym")
        sp.add_argument("--mode", choices=["small", "large"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--resume", action=argparse.BooleanOptionalAction, default=None)
        sp.add_argument("--pretrain-target", dest="pretrain_target",
                        choices=["pre_activation", "post_activation"])
        sp.add_argument("--source", dest="detection_source",
                        choices=["single_model", MIN_OVER_MODELS])

    run_flags(sub.add_parser("estimate", parents=[common], help="sweep, detect the intrinsic dimension, report"))
    run_flags(sub.add_parser("sweep", parents=[common], help="sweep squeezing dimensions without detection"))
    run_flags(sub.add_parser("check", parents=[common], help="gradient, PCA and normalization diagnostics"))
    v = sub.add_parser("validate", parents=[common], help="score trained models on validation data")
    v.add_argument("--model", required=True, help="model file or directory of models")
    v.add_argument("--data", required=True)
    v.add_argument("--header", dest="has_header", action="store_true")
    v.add_argument("--family")
    v.add_argument("--out")
    return p


def main(argv=None, environ=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args.model, args.data, args.has_header, args.family, args.out)
        if args.data:
            args.data = [d for item in args.data for d in _split_list(item)]
        cfg = resolve_config(args, environ)
        if args.command == "estimate":
            return cmd_estimate(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_check(cfg)
    except (ConfigError, DataError, ModelFormatError, ValueError, OSError) as exc:
        err = {"error": str(exc), "type": type(exc).__name__, "command": args.command,
               "tool_version": __version__}
        print(json.dumps(err), file=sys.stderr)
        out = getattr(args, "out", None)
        if out and args.command != "validate":
            try:
                Path(out).mkdir(parents=True, exist_ok=True)
                (Path(out) / "error.json").write_text(json.dumps(err, indent=2))
            except OSError:
                pass
        if args.verbose:
            traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
