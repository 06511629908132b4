"""Command-line front end: ``smgplvm <subcommand> [options]``.

Configuration files use ``key = value`` lines.  Keys before any section header
apply to every subcommand; ``[train]``, ``[generate]`` and so on hold keys for
one subcommand.  Command-line flags override file values, unknown keys or
sections are rejected.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""
import argparse
import configparser
import os
import sys
import time
from dataclasses import fields

import numpy as np

from . import data, dppca, evaluation, plotting, trainer
from .errors import (ConfigError, KernelNotPD, NegativeUnderRoot, NoConvergence, NoHiddenEntries,
                     NonFiniteObjective, NonPositiveSigma, NotPositiveDefinite, SmGplvmError)
from .kernels import PRESETS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

NUMERICAL_ERRORS = (NotPositiveDefinite, NoConvergence, NonFiniteObjective, KernelNotPD,
                    NonPositiveSigma, NegativeUnderRoot)

ROOT_SECTION = "global"
GLOBAL_KEYS = {"seed": int, "out": str}


def _parse_bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


def _train_keys():
    conv = {}
    for f in fields(trainer.TrainConfig):
        if f.name == "learn_sigma2":
            conv[f.name] = _parse_bool
        elif f.name == "fixed_sigma2":
            conv[f.name] = _optional_float
        elif f.type in (int, "int"):
            conv[f.name] = int
        else:
            conv[f.name] = float
    conv.pop("seed")
    conv.update({"data": str, "mask": str})
    return conv


COMMAND_KEYS = {
    "generate": {"preset": str, "n": int, "m": int, "noise_var": float, "missing": float},
    "train": _train_keys(),
    "diagnose": {"data": str, "q": int, "sigma2_grid": str, "grid_points": int},
    "eval": {"latents": str, "truth": str, "labels": str, "r2": _parse_bool,
             "knn": _parse_bool, "k": int, "folds": int},
    "impute": {"data": str, "mask": str, "checkpoint": str},
    "plot": {"latents": str, "labels": str, "bins": int},
}

ALL_KEYS = set().union(*COMMAND_KEYS.values())

DEFAULTS = {
    "generate": {"preset": "rbf", "n": 500, "m": 100, "noise_var": 0.01, "missing": 0.0},
    "train": {"data": None, "mask": None},
    "diagnose": {"data": None, "q": 2, "sigma2_grid": None, "grid_points": 20},
    "eval": {"latents": None, "truth": None, "labels": None, "r2": False, "knn": False,
             "k": 1, "folds": 5},
    "impute": {"data": None, "mask": None, "checkpoint": None},
    "plot": {"latents": None, "labels": None, "bins": 30},
}
DEFAULTS["train"].update({f.name: f.default for f in fields(trainer.TrainConfig)
                          if f.name != "seed"})


def read_config(path, command):
    """Values for ``command`` from a config file (root keys, then its section)."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", key="config") from exc
    try:
        parser.read_string(f"[{ROOT_SECTION}]\n" + text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}", key="config") from exc
    values = {}
    for section in parser.sections():
        if section != ROOT_SECTION and section not in COMMAND_KEYS:
            raise ConfigError(f"unknown config section [{section}]", key=section)
        allowed = dict(GLOBAL_KEYS)
        if section != ROOT_SECTION:
            allowed.update(COMMAND_KEYS[section])
        for key, raw in parser.items(section):
            name = key.replace("-", "_")
            known = name in allowed or (section == ROOT_SECTION and name in ALL_KEYS)
            if not known:
                raise ConfigError(f"unknown config key '{key}' in [{section}]", key=key)
            if section == command or (section == ROOT_SECTION and (
                    name in GLOBAL_KEYS or name in COMMAND_KEYS[command])):
                conv = allowed.get(name) or COMMAND_KEYS[command][name]
                try:
                    values[name] = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value for '{key}': {exc}", key=key) from exc
    return values


def _add_globals(p, suppress):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="key = value configuration file")
    p.add_argument("--seed", type=int, default=default, help="random seed (u64)")
    p.add_argument("--out", default=default, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="smgplvm", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic S-curve data")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--n", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--noise-var", type=float, dest="noise_var")
    g.add_argument("--missing", type=float, help="fraction of entries to hide")

    t = sub.add_parser("train", help="fit the model with Adam")
    t.add_argument("--data")
    t.add_argument("--mask")
    for name in ("iterations", "m", "L", "Q", "I", "trace_every"):
        t.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int)
    for name in ("lr", "beta1", "beta2", "eps", "zero_col_tol"):
        t.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    t.add_argument("--fixed-sigma2", dest="fixed_sigma2", type=float,
                   help="freeze the projection variance at this value")
    t.add_argument("--learn-sigma2", dest="learn_sigma2", type=_parse_bool)

    d = sub.add_parser("diagnose", help="eigenspectrum and collapse regimes")
    d.add_argument("--data")
    d.add_argument("--q", "--Q", dest="q", type=int)
    d.add_argument("--sigma2-grid", dest="sigma2_grid", help="comma separated sigma2 values")
    d.add_argument("--grid-points", dest="grid_points", type=int)

    e = sub.add_parser("eval", help="R^2 and k-NN accuracy of latents")
    e.add_argument("--latents")
    e.add_argument("--truth")
    e.add_argument("--labels")
    e.add_argument("--r2", action="store_const", const=True)
    e.add_argument("--knn", action="store_const", const=True)
    e.add_argument("--k", type=int)
    e.add_argument("--folds", type=int)

    i = sub.add_parser("impute", help="posterior-mean imputation of hidden entries")
    i.add_argument("--data")
    i.add_argument("--mask")
    i.add_argument("--checkpoint")

    p = sub.add_parser("plot", help="SVG scatter and histograms of latents")
    p.add_argument("--latents")
    p.add_argument("--labels")
    p.add_argument("--bins", type=int)

    for sp in (g, t, d, e, i, p):
        _add_globals(sp, suppress=True)
    return parser


def resolve(args):
    """Merge defaults, config file values and explicit flags (flags win)."""
    cmd = args.command
    opts = dict(DEFAULTS[cmd])
    opts.update({"seed": 0, "out": "."})
    if args.config:
        opts.update(read_config(args.config, cmd))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        opts[key] = value
    if cmd == "train" and "fixed_sigma2" in vars(args) and args.fixed_sigma2 is not None:
        if args.learn_sigma2 is None:
            opts["learn_sigma2"] = False
    return opts


class Console:
    def __init__(self, stream=sys.stdout):
        self.stream = stream
        self.colour = "NO_COLOR" not in os.environ and stream.isatty()

    def ok(self, text):
        if self.colour:
            text = f"\033[32m{text}\033[0m"
        print(text, file=self.stream)

    def error(self, text):
        print(f"error: {text}", file=sys.stderr)


def _require(opts, *keys):
    for key in keys:
        if not opts.get(key):
            raise ConfigError(f"missing required option '{key}'", key=key)


def _load_y(path):
    try:
        return data.load_matrix(path).Y
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", key="data") from exc


def _load_mask(path):
    if not path:
        return None
    M = _load_y(path)
    if not np.all((M == 0) | (M == 1)):
        raise ConfigError(f"mask file {path} must contain only 0/1", key="mask")
    return M.astype(bool)


def _write(out, name, text):
    path = os.path.join(out, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _format_mask(mask):
    return "\n".join(",".join("1" if v else "0" for v in row) for row in mask) + "\n"


def cmd_generate(opts, console):
    ds = data.make_s_curve_dataset(opts["n"], opts["m"], PRESETS[opts["preset"]],
                                   noise_var=opts["noise_var"], seed=opts["seed"])
    out = opts["out"]
    _write(out, "Y.csv", data.format_matrix(ds.Y))
    _write(out, "X_true.csv", data.format_matrix(ds.X_true))
    _write(out, "labels.csv", "\n".join(str(int(v)) for v in ds.labels) + "\n")
    if opts["missing"] > 0:
        ds = data.apply_missing_mask(ds, opts["missing"], seed=opts["seed"])
        _write(out, "mask.csv", _format_mask(ds.mask))
    console.ok(f"generated {ds.N}x{ds.M} ({opts['preset']}) in {out}")


def _train_config(opts):
    kw = {f.name: opts[f.name] for f in fields(trainer.TrainConfig) if f.name in opts}
    try:
        return trainer.TrainConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc), key="train") from exc


def manifest_text(opts):
    lines = ["# smgplvm train manifest; pass back with --config to re-run", ""]
    lines.append(f"seed = {opts['seed']}")
    lines.append(f"out = {opts['out']}")
    lines.append("")
    lines.append("[train]")
    for key in COMMAND_KEYS["train"]:
        value = opts.get(key)
        if value is None:
            if key == "fixed_sigma2":
                lines.append(f"{key} = none")
            continue
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"


def cmd_train(opts, console):
    _require(opts, "data")
    Y = _load_y(opts["data"])
    mask = _load_mask(opts.get("mask"))
    opts["seed"] = int(opts["seed"])
    config = _train_config(dict(opts))
    out = opts["out"]
    start = time.perf_counter()
    try:
        result = trainer.train(Y, config, mask=mask)
    except NonFiniteObjective as exc:
        if exc.last_good is not None:
            trainer.save_checkpoint(os.path.join(out, "checkpoint.aglv"), exc.last_good,
                                    Y.shape[1], config.L)
        raise
    elapsed = time.perf_counter() - start
    trainer.save_checkpoint(os.path.join(out, "checkpoint.aglv"), result, Y.shape[1], config.L)
    _write(out, "trace.csv", result.trace.to_csv())
    _write(out, "latents.csv", data.format_matrix(result.vp.mu))
    _write(out, "manifest.txt", manifest_text(opts))
    # wall time lives in its own file so the other artifacts stay byte-reproducible
    _write(out, "timing.txt", f"wall_time_seconds = {elapsed:.3f}\n")
    last = result.trace.records[-1]
    console.ok(f"trained {config.iterations} iterations: elbo {last.elbo:.4f}, "
               f"sigma2 {last.sigma2:.4g}, zero columns {last.zero_cols}")


def _sigma2_grid(opts, eigvals):
    if opts.get("sigma2_grid"):
        try:
            grid = [float(v) for v in str(opts["sigma2_grid"]).split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad sigma2_grid: {exc}", key="sigma2_grid") from exc
        if not grid or min(grid) <= 0:
            raise ConfigError("sigma2_grid values must be positive", key="sigma2_grid")
        return grid
    n = int(opts["grid_points"])
    if n < 1:
        raise ConfigError("grid_points must be >= 1", key="grid_points")
    top = 2.0 * float(eigvals[0]) if eigvals[0] > 0 else 1.0
    return [float(v) for v in top * np.arange(1, n + 1) / (n + 1)]


def cmd_diagnose(opts, console):
    _require(opts, "data")
    Y = _load_y(opts["data"])
    Q = int(opts["q"])
    if not 1 <= Q < Y.shape[0]:
        raise ConfigError(f"q must satisfy 1 <= q < N={Y.shape[0]}", key="q")
    report = dppca.diagnose(Y, Q)
    out = opts["out"]
    _write(out, "eigvals.csv", "eigval\n" + "".join(f"{float(v)!r}\n" for v in report.eigvals))
    _write(out, "report.txt", report.to_text())
    rows = ["sigma2,regime,predicted_zero_cols"]
    for s2 in _sigma2_grid(opts, report.eigvals):
        regime, zc = dppca.classify_regime(report.eigvals, s2, Q)
        rows.append(f"{s2!r},{regime},{zc}")
    _write(out, "regimes.csv", "\n".join(rows) + "\n")
    console.ok(f"sigma2_hat {report.sigma2_hat:.6g}, regime {report.regime}")


def cmd_eval(opts, console):
    _require(opts, "latents")
    if not (opts["r2"] or opts["knn"]):
        raise ConfigError("choose at least one of --r2 / --knn", key="r2")
    X = _load_y(opts["latents"])
    reports = []
    if opts["r2"]:
        _require(opts, "truth")
        T = _load_y(opts["truth"])
        reports.append(evaluation.EvalReport("r2", evaluation.affine_r2(X, T), 0.0, {}))
    if opts["knn"]:
        _require(opts, "labels")
        labels = _load_y(opts["labels"]).ravel()
        reports.append(evaluation.knn_cv_accuracy(X, labels, k=opts["k"], folds=opts["folds"],
                                                  seed=opts["seed"]))
    _write(opts["out"], "eval.csv", evaluation.reports_to_csv(reports))
    for r in reports:
        console.ok(f"{r.metric}: {r.value:.6f}")


def cmd_impute(opts, console):
    _require(opts, "data", "checkpoint")
    Y = _load_y(opts["data"])
    mask = _load_mask(opts.get("mask"))
    if mask is None or mask.all():
        raise NoHiddenEntries("impute needs a mask with at least one hidden entry")
    try:
        result, _ = trainer.load_checkpoint(opts["checkpoint"])
    except OSError as exc:
        raise ConfigError(f"cannot read {opts['checkpoint']}: {exc.strerror}",
                          key="checkpoint") from exc
    Y_hat = evaluation.impute_posterior_mean(Y, mask, result.vp.mu, result.params)
    mse = evaluation.imputation_mse(Y_hat, Y, mask)
    base = evaluation.imputation_mse(evaluation.column_mean_impute(Y, mask), Y, mask)
    out = opts["out"]
    _write(out, "imputed.csv", data.format_matrix(Y_hat))
    hidden = int((~mask).sum())
    _write(out, "impute_report.csv", evaluation.reports_to_csv([
        evaluation.EvalReport("imputation_mse", mse, 0.0, {"hidden": hidden}),
        evaluation.EvalReport("column_mean_mse", base, 0.0, {"hidden": hidden}),
    ]))
    console.ok(f"imputation mse {mse:.6g} (column-mean baseline {base:.6g})")


def cmd_plot(opts, console):
    _require(opts, "latents")
    X = _load_y(opts["latents"])
    labels = _load_y(opts["labels"]).ravel() if opts.get("labels") else None
    out = opts["out"]
    _write(out, "latents.svg", plotting.scatter_svg(X, labels))
    for q in range(X.shape[1]):
        _write(out, f"hist_dim{q}.svg",
               plotting.histogram_svg(X[:, q], bins=opts["bins"], title=f"latent dim {q}"))
    console.ok(f"wrote {1 + X.shape[1]} SVG files to {out}")


COMMANDS = {
    "generate": cmd_generate, "train": cmd_train, "diagnose": cmd_diagnose,
    "eval": cmd_eval, "impute": cmd_impute, "plot": cmd_plot,
}


def main(argv=None):
    console = Console()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        opts = resolve(args)
        if opts["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer", key="seed")
        os.makedirs(opts["out"], exist_ok=True)
        COMMANDS[args.command](opts, console)
    except (ConfigError, NoHiddenEntries) as exc:
        console.error(str(exc))
        return EXIT_CONFIG
    except SmGplvmError as exc:
        # remaining package errors are numerical (not PD, non-finite, ...) or bad input data
        console.error(str(exc))
        return EXIT_NUMERIC if isinstance(exc, NUMERICAL_ERRORS) else EXIT_CONFIG
    except OSError as exc:
        console.error(str(exc))
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
