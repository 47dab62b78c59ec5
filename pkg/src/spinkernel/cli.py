"""Experiment runner: kernel profiles, MQ spectra, regression, classification, Gram export.

Every artifact starts with '#'-prefixed ``key = value`` lines holding the full
resolved configuration, so ``--config <artifact>`` reruns it.

Exit codes: 0 success, 2 configuration error, 3 singular linear system,
4 SVM non-convergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import _io, datasets
from .learners import (
    DEFAULT_LAMBDA_GRID,
    ConvergenceError,
    SingularSystemError,
    hinge_loss,
    krr_predict,
    mse,
    numerical_rank,
    select_lambda,
    svm_decision,
    svm_fit,
)
from .qkernel import (
    MQ_DEFAULT_SAMPLES,
    cross_kernel,
    gram,
    kernel_profile_1d,
    mq_grid,
    mq_spectrum,
    profile_fwhm,
)
from .spinsim import DEFAULT_DT, EncodingParams, draw_couplings

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SINGULAR = 3
EXIT_NONCONVERGENCE = 4

COMMANDS = ("profile", "mqspec", "regress", "classify", "gram")

DEFAULT_TAUS = {
    "profile": (0.02, 0.04, 0.06, 0.08, 0.1, 0.12),
    "mqspec": (0.02, 0.04, 0.06, 0.08, 0.1, 0.12),
    "regress": (0.02, 0.04, 0.06, 0.08, 0.1, 0.12),
    "classify": (0.03, 0.06, 0.09),
    "gram": (0.06,),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    spins: int = 12
    tau: tuple = ()
    dt: float = DEFAULT_DT
    seed: int = 0
    data_seed: int = 0
    task: str = ""
    kernel: str = "pure"
    units: str = ""
    count: int = 0
    noise: float = 0.08
    factor: float = 0.5
    range_deg: tuple = (-45.0, 45.0)
    eval_count: int = 64
    eval_mode: str = "grid"
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    c_cap: float = 1e6
    svm_tol: float = 1e-6
    svm_max_iter: int = 100_000_000
    halfwidth: float = datasets.DEFAULT_HALFWIDTH
    grid_size: int = 50
    profile_points: int = 181
    profile_halfrange: float = math.pi / 2
    mq_samples: int = MQ_DEFAULT_SAMPLES
    fast_1d: bool = True
    workers: int = 1
    dataset: str = ""

    def header(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
    tuple: _parse_floats,
}
_FIELD_TYPES = {f.name: type(f.default) if f.default is not dataclasses.MISSING else str
                for f in fields(ExperimentConfig)}


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; a leading '#' is tolerated so artifact headers load as configs.

    Lines that are not ``key = value`` with a known key are ignored only when
    commented; otherwise they are errors.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        commented = line.startswith("#")
        body = line.lstrip("#").strip()
        key, sep, value = body.partition("=")
        key = key.strip()
        if not sep or key not in _FIELD_TYPES:
            if commented or "," in line:
                # comments and CSV data rows
                continue
            raise ConfigError(f"line {lineno}: unrecognised config entry {raw!r}")
        try:
            out[key] = _PARSERS[_FIELD_TYPES[key]](value.strip())
        except ValueError as err:
            raise ConfigError(f"line {lineno}: bad value for {key}: {err}") from None
    return out


def resolve(values: dict) -> ExperimentConfig:
    """Fill command-dependent defaults and validate; raises ConfigError."""
    values = dict(values)
    command = values.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {command!r}")
    unknown = set(values) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**values)
    if not cfg.tau:
        cfg.tau = DEFAULT_TAUS[command]
    cfg.tau = tuple(float(t) for t in cfg.tau)
    cfg.lambda_grid = tuple(float(v) for v in cfg.lambda_grid)
    cfg.range_deg = tuple(float(v) for v in cfg.range_deg)
    if not cfg.task:
        cfg.task = {"regress": "sin", "classify": "circles"}.get(command, "none")
    if not cfg.units:
        cfg.units = "degrees" if command == "regress" else "radians"
    if not cfg.count:
        cfg.count = {"regress": 40, "classify": 100}.get(command, 0)

    def check(cond: bool, message: str):
        if not cond:
            raise ConfigError(message)

    check(cfg.spins >= 1, f"spins must be >= 1, got {cfg.spins}")
    check(all(math.isfinite(t) and t >= 0 for t in cfg.tau), f"tau values must be finite and >= 0, got {cfg.tau}")
    check(cfg.dt > 0, f"dt must be > 0, got {cfg.dt}")
    check(cfg.kernel in ("pure", "trace"), f"kernel must be pure or trace, got {cfg.kernel!r}")
    check(cfg.units in ("degrees", "radians"), f"units must be degrees or radians, got {cfg.units!r}")
    check(cfg.units == "radians" or command == "regress", "degree inputs are only accepted by regress")
    check(cfg.workers >= 1, "workers must be >= 1")
    if command == "regress":
        check(cfg.task in ("sin", "sinc"), f"regress task must be sin or sinc, got {cfg.task!r}")
        check(cfg.count >= 1, "count must be >= 1")
        check(len(cfg.range_deg) == 2 and cfg.range_deg[1] > cfg.range_deg[0], f"bad range_deg {cfg.range_deg}")
        check(cfg.eval_count >= 2, "eval_count must be >= 2")
        check(cfg.eval_mode in ("grid", "union"), f"eval_mode must be grid or union, got {cfg.eval_mode!r}")
        check(len(cfg.lambda_grid) > 0 and all(v >= 0 for v in cfg.lambda_grid), "lambda_grid must be non-empty, >= 0")
    if command == "classify":
        check(cfg.task in ("circles", "moons"), f"classify task must be circles or moons, got {cfg.task!r}")
        check(cfg.count >= 2, "count must be >= 2")
        check(0 < cfg.factor < 1, "factor must lie in (0, 1)")
        check(cfg.noise >= 0, "noise must be >= 0")
        check(cfg.halfwidth > 0, "halfwidth must be > 0")
        check(cfg.grid_size >= 2, "grid_size must be >= 2")
        check(cfg.c_cap > 0 and cfg.svm_tol > 0, "c_cap and svm_tol must be > 0")
        check(cfg.svm_max_iter >= 1, "svm_max_iter must be >= 1")
    if command == "profile":
        check(cfg.profile_points >= 2, "profile_points must be >= 2")
    if command == "mqspec":
        check(cfg.mq_samples >= 2 * cfg.spins + 1, f"mq_samples must be >= {2 * cfg.spins + 1}")
    if command == "gram":
        check(bool(cfg.dataset), "gram needs --dataset")
    return cfg


# ---------------------------------------------------------------------------
# commands


def _params(cfg: ExperimentConfig, tau: float, feature_dim: int = 1) -> EncodingParams:
    return EncodingParams.from_dt(tau, cfg.dt, feature_dim)


def _col(prefix: str, tau: float) -> str:
    return f"{prefix}_tau{tau:g}"


def cmd_profile(cfg: ExperimentConfig, out: Path) -> dict:
    system = draw_couplings(cfg.spins, cfg.seed)
    deltas = np.linspace(-cfg.profile_halfrange, cfg.profile_halfrange, cfg.profile_points)
    cols, widths = [deltas], {}
    for tau in cfg.tau:
        prof = kernel_profile_1d(system, _params(cfg, tau), deltas, fast=cfg.fast_1d)
        cols.append(prof[:, 1])
        widths[tau] = profile_fwhm(deltas, prof[:, 1])
    _io.write_csv(out / "profile.csv", cfg.header(), ["delta"] + [_col("k", t) for t in cfg.tau], np.column_stack(cols))
    return {"fwhm": widths}


def cmd_mqspec(cfg: ExperimentConfig, out: Path) -> dict:
    system = draw_couplings(cfg.spins, cfg.seed)
    grid = mq_grid(cfg.mq_samples)
    orders, cols = None, []
    for tau in cfg.tau:
        prof = kernel_profile_1d(system, _params(cfg, tau), grid, fast=cfg.fast_1d)
        spec = mq_spectrum(grid, prof[:, 1], cfg.spins)
        orders = spec.orders
        cols.append(spec.intensities)
    _io.write_csv(out / "mqspec.csv", cfg.header(), ["m"] + [_col("I", t) for t in cfg.tau],
                  np.column_stack([orders] + cols))
    return {}


def _to_radians(cfg: ExperimentConfig, x):
    return np.deg2rad(x) if cfg.units == "degrees" else np.asarray(x, dtype=np.float64)


def cmd_regress(cfg: ExperimentConfig, out: Path) -> dict:
    system = draw_couplings(cfg.spins, cfg.seed)
    train = datasets.regression_1d(cfg.task, cfg.count, cfg.range_deg, cfg.data_seed)
    ev = datasets.eval_grid_1d(cfg.eval_count, cfg.range_deg)
    if cfg.eval_mode == "union":
        ev = np.unique(np.concatenate([ev[:, 0], train.points[:, 0]]))[:, None]
    truth = datasets.regression_target(cfg.task, ev[:, 0])
    xr_train, xr_eval = _to_radians(cfg, train.points), _to_radians(cfg, ev)

    report = {"config": cfg.header(), "results": []}
    preds = []
    for tau in cfg.tau:
        params = _params(cfg, tau)
        fast = cfg.fast_1d and cfg.kernel == "pure"
        G = gram(system, params, xr_train, kind=cfg.kernel, fast_1d=fast, workers=cfg.workers)
        rows = cross_kernel(system, params, xr_train, xr_eval, kind=cfg.kernel, fast_1d=fast, workers=cfg.workers)
        sel = select_lambda(G, train.targets, rows, truth, cfg.lambda_grid)
        pred = krr_predict(sel.model, rows)
        preds.append(pred)
        rank = numerical_rank(G.entries)
        report["results"].append({
            "tau": tau,
            "substeps": params.substeps,
            "best_lambda": sel.best,
            "mse": mse(pred, truth),
            "train_mse": mse(krr_predict(sel.model, G.entries), train.targets),
            "gram_rank": rank,
            "degenerate": rank <= 1,
            "lambda_table": [{"lambda": lam, "mse": m, "relative_residual": r} for lam, m, r in sel.table],
        })
    _io.write_csv(out / "regress.csv", cfg.header(), ["x", "y_true"] + [_col("y_pred", t) for t in cfg.tau],
                  np.column_stack([ev[:, 0], truth] + preds))
    train.to_csv(out / "regress_train.csv")
    _io.write_json(out / "regress_report.json", report)
    return report


def _classification_set(cfg: ExperimentConfig) -> datasets.LabeledSet:
    if cfg.task == "circles":
        raw = datasets.make_circles(cfg.count, cfg.noise, cfg.factor, cfg.data_seed)
    else:
        raw = datasets.make_moons(cfg.count, cfg.noise, cfg.data_seed)
    return datasets.scale_features(raw, cfg.halfwidth)


def cmd_classify(cfg: ExperimentConfig, out: Path) -> dict:
    system = draw_couplings(cfg.spins, cfg.seed)
    data = _classification_set(cfg)
    axis = np.linspace(-cfg.halfwidth, cfg.halfwidth, cfg.grid_size)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    grid_pts = np.column_stack([gx.ravel(), gy.ravel()])

    report = {"config": cfg.header(), "results": []}
    train_cols, grid_cols = [], []
    for tau in cfg.tau:
        params = _params(cfg, tau, feature_dim=2)
        G = gram(system, params, data.points, kind=cfg.kernel, workers=cfg.workers)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model = svm_fit(G, data.targets, c_cap=cfg.c_cap, tol=cfg.svm_tol, max_iter=cfg.svm_max_iter)
        f_train = svm_decision(model, G.entries)
        f_grid = svm_decision(model, cross_kernel(system, params, data.points, grid_pts, kind=cfg.kernel,
                                                  workers=cfg.workers))
        train_cols.append(f_train)
        grid_cols.append(f_grid)
        report["results"].append({
            "tau": tau,
            "substeps": params.substeps,
            "hinge_loss": hinge_loss(f_train, data.targets),
            "train_accuracy": float(np.mean(np.where(f_train >= 0, 1.0, -1.0) == data.targets)),
            "support_vectors": int(len(model.support_indices)),
            "at_cap": int(np.sum(model.alphas >= model.c_cap)),
            "bias": model.bias,
            "max_kkt_violation": model.max_violation,
            "smo_iterations": model.iterations,
            "dual_objective": model.objective,
            "warnings": model.warnings,
        })
    _io.write_csv(out / "classify_train.csv", cfg.header(), ["x1", "x2", "label"] + [_col("decision", t) for t in cfg.tau],
                  np.column_stack([data.points, data.targets] + train_cols))
    _io.write_csv(out / "classify_grid.csv", cfg.header(), ["x1", "x2"] + [_col("decision", t) for t in cfg.tau],
                  np.column_stack([grid_pts] + grid_cols))
    _io.write_json(out / "classify_report.json", report)
    return report


def cmd_gram(cfg: ExperimentConfig, out: Path) -> dict:
    system = draw_couplings(cfg.spins, cfg.seed)
    data = datasets.LabeledSet.from_csv(cfg.dataset)
    pts = data.points
    if cfg.units == "degrees":
        pts = np.deg2rad(pts)
    for tau in cfg.tau:
        G = gram(system, _params(cfg, tau, pts.shape[1]), pts, kind=cfg.kernel, workers=cfg.workers)
        G.meta = {**cfg.header(), **{k: v for k, v in G.meta.items() if k not in ("tau",)}, "tau_value": tau}
        G.to_csv(out / f"gram_tau{tau:g}.csv")
        G.to_json(out / f"gram_tau{tau:g}.json")
    return {}


RUNNERS = {
    "profile": cmd_profile,
    "mqspec": cmd_mqspec,
    "regress": cmd_regress,
    "classify": cmd_classify,
    "gram": cmd_gram,
}


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file, or any artifact written by this tool")
    common.add_argument("--spins", type=int)
    common.add_argument("--tau", type=float, action="append", help="segment time; repeat for several")
    common.add_argument("--dt", type=float, help="Trotter step (default 0.001)")
    common.add_argument("--seed", type=int, help="coupling RNG seed")
    common.add_argument("--data-seed", type=int, dest="data_seed")
    common.add_argument("--task")
    common.add_argument("--kernel", choices=("pure", "trace"))
    common.add_argument("--units", choices=("degrees", "radians"))
    common.add_argument("--workers", type=int)
    common.add_argument("--out", default="results", help="output directory (default: results)")

    parser = argparse.ArgumentParser(prog="spinkernel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("profile", parents=[common], help="1-D kernel profile k(delta)")
    p.add_argument("--points", type=int, dest="profile_points")
    p.add_argument("--direct", action="store_false", dest="fast_1d", default=None,
                   help="encode every delta instead of using the shift fast path")
    p = sub.add_parser("mqspec", parents=[common], help="multiple-quantum spectrum")
    p.add_argument("--samples", type=int, dest="mq_samples")
    p = sub.add_parser("regress", parents=[common], help="kernel ridge regression on sin / sinc")
    p.add_argument("--count", type=int)
    p.add_argument("--eval-count", type=int, dest="eval_count")
    p.add_argument("--eval-mode", choices=("grid", "union"), dest="eval_mode")
    p.add_argument("--direct", action="store_false", dest="fast_1d", default=None)
    p = sub.add_parser("classify", parents=[common], help="hard-margin SVM on circles / moons")
    p.add_argument("--count", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--factor", type=float)
    p.add_argument("--grid-size", type=int, dest="grid_size")
    p.add_argument("--halfwidth", type=float)
    p = sub.add_parser("gram", parents=[common], help="export a Gram matrix for a dataset CSV")
    p.add_argument("--dataset")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    values = {}
    try:
        if args.config:
            values.update(parse_config_text(Path(args.config).read_text()))
        flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "out")}
        if "tau" in flags:
            flags["tau"] = tuple(flags["tau"])
        values.update(flags)
        cfg = resolve(values)
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        summary = RUNNERS[cfg.command](cfg, out)
    except SingularSystemError as err:
        print(f"singular system: {err}", file=sys.stderr)
        return EXIT_SINGULAR
    except ConvergenceError as err:
        print(f"no convergence: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    if cfg.command == "profile":
        for tau, w in summary["fwhm"].items():
            print(f"tau={tau:g}  fwhm={w:.6f}")
    elif cfg.command in ("regress", "classify"):
        for r in summary["results"]:
            keys = ("best_lambda", "mse") if cfg.command == "regress" else ("hinge_loss", "train_accuracy")
            print(f"tau={r['tau']:g}  " + "  ".join(f"{k}={r[k]:.6g}" for k in keys))
    print(f"wrote {cfg.command} artifacts to {out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
