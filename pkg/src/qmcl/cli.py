"""Command-line interface: ``qmcl generate-data | train | simulate | diagnose``.

Configuration is a flat ``key = value`` text file (``#`` starts a comment).
Command-line flags and ``--set key=value`` override file values. See
``CONFIG_KEYS`` for the recognized keys; unset keys take per-system defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .closure import TrainingConfig, TrajectoryDataset, initialize, run, train
from .container import dataset_fingerprint, load_model, save_model
from .diagnostics import (
    compare_series,
    hovmoller_export,
    write_autocorr_csv,
    write_histogram_csv,
)
from .dynamics import IntegratorConfig, get_system, integrate_truth, run_palmer, write_trajectory_csv
from .errors import ConfigError, QMCLError

__all__ = ["CONFIG_KEYS", "RunConfig", "load_config", "main", "read_csv"]

log = logging.getLogger("qmcl")


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(v) for v in str(s).replace(" ", "").split(",") if v)


def _names(s):
    return tuple(v.strip() for v in str(s).split(",") if v.strip())


# key -> (parser, description)
CONFIG_KEYS = {
    "system": (str, "l63 or l96"),
    "seed": (int, "random seed (non-negative)"),
    "out": (str, "output directory"),
    "data": (str, "dataset directory written by generate-data"),
    "model": (str, "model container directory written by train"),
    "dt": (float, "sampling interval"),
    "substeps": (int, "RK4 substeps per sampling interval for truth runs"),
    "K": (int, "L96 number of sectors"),
    "J": (int, "L96 fast variables per sector"),
    "F": (float, "L96 forcing"),
    "h_x": (float, "L96 fast-to-slow coupling"),
    "h_y": (float, "L96 slow-to-fast coupling"),
    "epsilon_scale": (float, "L96 time-scale separation"),
    "n_samples": (int, "generate-data: samples after burn-in"),
    "burn_in": (float, "generate-data: equilibration time"),
    "initial_state": (_floats, "generate-data: full initial state"),
    "observe": (str, "generate-data: full or a1 (L63 kernel input)"),
    "L": (int, "train: number of basis functions"),
    "feature_bandwidth": (float, "train: feature-map bandwidth"),
    "basis_bandwidth": (float, "train: basis kernel bandwidth (tuned if unset)"),
    "k_nn": (int, "train: nearest neighbours kept per kernel row"),
    "r": (int, "train: steps between conditionings"),
    "delays": (int, "train: delay-embedding window Q (even)"),
    "solver": (str, "train: auto, dense or lanczos"),
    "tune_max_points": (int, "train: subsample size for bandwidth tuning"),
    "n_steps": (int, "simulate: number of steps"),
    "mode": (str, "simulate: deterministic, stochastic or palmer-baseline"),
    "init": (str, "simulate: uninformative or feature_map"),
    "x0": (_floats, "simulate: initial resolved state"),
    "sim_initial_state": (_floats, "simulate: full state to equilibrate from if x0 unset"),
    "sim_burn_in": (float, "simulate: equilibration time if x0 unset"),
    "palmer_sigma": (float, "simulate: Gaussian closure std (default: training flux std)"),
    "palmer_euler": (_bool, "simulate: forward Euler for the Gaussian closure"),
    "recover_uninformative": (_bool, "simulate: reset annihilated states"),
    "bins": (int, "diagnose: histogram bins"),
    "max_lag": (float, "diagnose: maximum autocorrelation lag (time units)"),
    "columns": (_names, "diagnose: columns to compare (default: all shared)"),
}

_SYSTEM_DEFAULTS = {
    "l63": {"substeps": 1, "n_samples": 150000, "burn_in": 500.0, "r": 10,
            "sim_burn_in": 500.0},
    "l96": {"substeps": 16, "n_samples": 40000, "burn_in": 200.0, "r": 5,
            "sim_burn_in": 200.0},
}

_DEFAULTS = {
    "system": "l63", "seed": 0, "out": ".", "dt": 0.01, "observe": "full",
    "feature_bandwidth": 2.0, "delays": 0, "solver": "auto", "tune_max_points": 2000,
    "n_steps": 20000, "mode": "deterministic", "init": "uninformative",
    "palmer_euler": False, "recover_uninformative": False, "bins": 45, "max_lag": 2.0,
}

MODES = ("deterministic", "stochastic", "palmer-baseline")


class RunConfig(dict):
    """Parsed configuration; missing keys fall back to defaults."""

    def get_value(self, key):
        if key in self:
            return self[key]
        sysd = _SYSTEM_DEFAULTS.get(self.get("system", _DEFAULTS["system"]), {})
        if key in sysd:
            return sysd[key]
        return _DEFAULTS.get(key)

    def require(self, key):
        v = self.get_value(key)
        if v is None:
            raise ConfigError(f"missing required key {key!r}")
        return v

    def system(self):
        name = self.get_value("system")
        params = {k: self[k] for k in ("K", "J", "F", "h_x", "h_y", "epsilon_scale") if k in self}
        try:
            return get_system(name, **params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self):
        if self.get_value("system") not in ("l63", "l96"):
            raise ConfigError(f"system must be l63 or l96, got {self.get_value('system')!r}")
        for key in ("L", "r", "n_samples", "substeps", "bins", "k_nn", "tune_max_points"):
            v = self.get_value(key)
            if v is not None and v < 1:
                raise ConfigError(f"{key} must be at least 1, got {v}")
        for key in ("dt", "feature_bandwidth", "basis_bandwidth", "palmer_sigma"):
            v = self.get_value(key)
            if v is not None and not v > 0:
                raise ConfigError(f"{key} must be positive, got {v}")
        for key in ("seed", "n_steps", "burn_in", "sim_burn_in", "max_lag"):
            v = self.get_value(key)
            if v is not None and v < 0:
                raise ConfigError(f"{key} must be non-negative, got {v}")
        d = self.get_value("delays")
        if d < 0 or d % 2:
            raise ConfigError(f"delays must be a non-negative even integer, got {d}")
        if self.get_value("mode") not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.get_value("init") not in ("uninformative", "feature_map"):
            raise ConfigError("init must be uninformative or feature_map")
        if self.get_value("observe") not in ("full", "a1"):
            raise ConfigError("observe must be full or a1")
        if self.get_value("solver") not in ("auto", "dense", "lanczos"):
            raise ConfigError("solver must be auto, dense or lanczos")
        if self.get_value("observe") == "a1" and self.get_value("system") != "l63":
            raise ConfigError("observe = a1 applies to l63 only")
        return self


def _parse_value(key, raw, where):
    if key not in CONFIG_KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        return CONFIG_KEYS[key][0](raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None


def load_config(path=None, overrides=()):
    """Read ``path`` (optional) and apply ``key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            for n, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, raw = line.partition("=")
                if not sep:
                    raise ConfigError(f"{path}:{n}: expected 'key = value'")
                cfg[key.strip()] = _parse_value(key.strip(), raw.strip(), f"{path}:{n}")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        cfg[key.strip()] = _parse_value(key.strip(), raw.strip(), "override")
    return cfg


# --------------------------------------------------------------------------
# CSV helpers
# --------------------------------------------------------------------------

def read_csv(path):
    """Return ``(columns, data)`` for a headered numeric CSV."""
    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    with open(path) as fh:
        header = fh.readline().strip()
    cols = [c.strip() for c in header.split(",")]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size and data.shape[1] != len(cols):
        raise ConfigError(f"{path}: header has {len(cols)} columns, rows have {data.shape[1]}")
    return cols, data


def _write_csv(path, header, data):
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def _default_initial_state(system, first=1.1):
    if system.name == "l63":
        return np.array([2.0, 2.0, 2.0])
    K, J = system.p.K, system.p.J
    x = np.zeros(K)
    x[0] = 1.0
    y = np.zeros((J, K))
    y[0, 0] = first
    return system.pack(x, y)


def _initial_state(system, values, first):
    if values is None:
        return _default_initial_state(system, first)
    s = np.asarray(values, dtype=float)
    if s.size != system.state_dim:
        raise ConfigError(f"initial state needs {system.state_dim} values, got {s.size}")
    return s


def _integrator(cfg):
    return IntegratorConfig(dt=cfg.get_value("dt"), substeps=cfg.get_value("substeps"))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_generate_data(cfg):
    """Integrate the truth system and write dataset CSVs to ``out``."""
    system = cfg.system()
    icfg = _integrator(cfg)
    dt = icfg.dt
    out = cfg.get_value("out")
    os.makedirs(out, exist_ok=True)

    s0 = _initial_state(system, cfg.get_value("initial_state"), first=1.1)
    n_burn = int(round(cfg.get_value("burn_in") / dt))
    if n_burn:
        s0 = integrate_truth(system, s0, icfg, n_burn)[-1]
    n = cfg.get_value("n_samples")
    traj = integrate_truth(system, s0, icfg, n - 1)
    t = dt * np.arange(n)
    X, Z = system.resolved(traj), system.flux(traj)
    xcols, zcols = system.resolved_columns(), system.flux_columns()

    if system.name == "l63":
        write_trajectory_csv(os.path.join(out, "trajectory.csv"), t, traj, system.state_columns())
        if cfg.get_value("observe") == "a1":
            W, wcols = traj[:, :1], ["a1"]
        else:
            W, wcols = traj, system.state_columns()
    else:
        write_trajectory_csv(os.path.join(out, "trajectory.csv"), t, np.column_stack([X, Z]),
                             xcols + zcols)
        hovmoller_export(X, os.path.join(out, "hovmoller.csv"), dt=dt)
        W, wcols = X, xcols
    write_trajectory_csv(os.path.join(out, "w.csv"), t, W, wcols)
    write_trajectory_csv(os.path.join(out, "x.csv"), t, X, xcols)
    write_trajectory_csv(os.path.join(out, "z.csv"), t, Z, zcols)

    meta = {"system": system.name, "dt": repr(dt), "substeps": icfg.substeps,
            "burn_in": repr(cfg.get_value("burn_in")), "n_samples": n,
            "observe": cfg.get_value("observe"),
            "initial_state": ",".join(repr(float(v)) for v in
                                      _initial_state(system, cfg.get_value("initial_state"), 1.1))}
    meta.update({f"system.{k}": repr(v) if isinstance(v, float) else v
                 for k, v in system.params().items()})
    with open(os.path.join(out, "metadata.txt"), "w") as fh:
        fh.writelines(f"{k} = {v}\n" for k, v in meta.items())
    print(f"wrote {n} samples to {out}")
    return 0


def _load_dataset(path, dt):
    if path is None:
        raise ConfigError("no dataset: pass --data or set data")
    parts = {}
    for name in ("w", "x", "z"):
        cols, data = read_csv(os.path.join(path, f"{name}.csv"))
        if cols[0] != "t":
            raise ConfigError(f"{name}.csv: first column must be t")
        parts[name] = data[:, 1:]
        t = data[:, 0]
    if len(t) > 1:
        dt = float(t[1] - t[0])
    return TrajectoryDataset(dt=dt, **parts)


def cmd_train(cfg):
    """Train a model on the dataset at ``data`` and save it to ``out``."""
    system = cfg.system()
    data = _load_dataset(cfg.get_value("data"), cfg.get_value("dt"))
    try:
        tcfg = TrainingConfig(
            L=cfg.require("L"), feature_bandwidth=cfg.get_value("feature_bandwidth"),
            r=cfg.get_value("r"), k_nn=cfg.get_value("k_nn"),
            basis_bandwidth=cfg.get_value("basis_bandwidth"), delays=cfg.get_value("delays"),
            solver=cfg.get_value("solver"), seed=cfg.get_value("seed"),
            tune_max_points=cfg.get_value("tune_max_points"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if data.x.shape[1] != system.resolved_dim or data.z.shape[1] != system.flux_dim:
        raise ConfigError(f"dataset shapes do not match system {system.name}")
    model = train(data, tcfg, system)
    out = cfg.get_value("out")
    save_model(model, out, fingerprint=dataset_fingerprint(data.w, data.x, data.z))
    print(f"basis_bandwidth = {model.basis_bandwidth!r}")
    top = model.basis.eigenvalues[:10]
    print("top_eigenvalues = " + ",".join(f"{v:.17g}" for v in top))
    print(f"saved model to {out}")
    return 0


def _simulation_x0(cfg, system):
    x0 = cfg.get_value("x0")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.size != system.resolved_dim:
            raise ConfigError(f"x0 needs {system.resolved_dim} values, got {x0.size}")
        return x0
    icfg = _integrator(cfg)
    s = _initial_state(system, cfg.get_value("sim_initial_state"), first=1.0)
    if system.name == "l63" and cfg.get_value("sim_initial_state") is None:
        s = np.array([1.99, 2.0, 2.0])
    n_burn = int(round(cfg.get_value("sim_burn_in") / icfg.dt))
    if n_burn:
        s = integrate_truth(system, s, icfg, n_burn)[-1]
    return system.resolved(s)


def cmd_simulate(cfg):
    """Run the closure (or the Gaussian baseline) and write ``run.csv``."""
    mode = cfg.get_value("mode")
    n = cfg.get_value("n_steps")
    out = cfg.get_value("out")
    model_path = cfg.get_value("model")
    model = load_model(model_path) if model_path is not None else None
    system = model.system if model is not None else cfg.system()
    dt = model.dt if model is not None else cfg.get_value("dt")
    x0 = _simulation_x0(cfg, system)
    events = []

    if mode == "palmer-baseline":
        if system.name != "l63":
            raise ConfigError("palmer-baseline applies to l63 only")
        sigma = cfg.get_value("palmer_sigma")
        if sigma is None:
            if model is None:
                raise ConfigError("palmer-baseline needs palmer_sigma or a model")
            sigma = float(np.std(model.train_z[:, 0]))
        rng = np.random.default_rng(cfg.get_value("seed"))
        xs, zs = run_palmer(x0, sigma, n, rng, dt=dt, euler=cfg.get_value("palmer_euler"))
    else:
        if model is None:
            raise ConfigError("no model: pass --model or set model")
        state = initialize(model, x0, cfg.get_value("init"))
        rng = np.random.default_rng(cfg.get_value("seed")) if mode == "stochastic" else None
        res = run(model, state, n, mode=mode, rng=rng,
                  recover_uninformative=cfg.get_value("recover_uninformative"),
                  record_conditioning=True)
        xs, zs, events = res.x, res.z, res.events

    os.makedirs(out, exist_ok=True)
    steps = np.arange(1, n + 1)
    header = ["step", "t"] + system.resolved_columns() + system.flux_columns()
    _write_csv(os.path.join(out, "run.csv"), header,
               np.column_stack([steps, steps * dt, xs, zs]))
    with open(os.path.join(out, "events.log"), "w") as fh:
        fh.write(f"mode={mode} n_steps={n} x0={','.join(repr(float(v)) for v in x0)}\n")
        fh.writelines(f"step={s} event={kind}\n" for s, kind in events)
    if system.name == "l96":
        hovmoller_export(xs, os.path.join(out, "hovmoller.csv"), dt=dt, t0=dt)
    n_rec = sum(1 for _, kind in events if kind == "recovered")
    print(f"wrote {n} steps to {out} ({n_rec} recoveries)")
    return 0


def cmd_diagnose(cfg, truth_path, run_path):
    """Compare two trajectory CSVs column by column."""
    tcols, tdata = read_csv(truth_path)
    mcols, mdata = read_csv(run_path)
    if "t" not in tcols:
        raise ConfigError(f"{truth_path}: no t column")
    columns = cfg.get_value("columns") or tuple(c for c in tcols if c not in ("step", "t"))
    for c in columns:
        if c not in tcols:
            raise ConfigError(f"column {c!r} missing from {truth_path}")
        if c not in mcols:
            raise ConfigError(f"column {c!r} missing from {run_path}")
    if len(tdata) < 2:
        raise ConfigError(f"{truth_path}: need at least two rows")
    t = tdata[:, tcols.index("t")]
    dt = float(t[1] - t[0])
    max_lag_steps = int(round(cfg.get_value("max_lag") / dt))
    B = cfg.get_value("bins")

    out = cfg.get_value("out")
    os.makedirs(out, exist_ok=True)
    rows = []
    for c in columns:
        res = compare_series(tdata[:, tcols.index(c)], mdata[:, mcols.index(c)],
                             B=B, max_lag_steps=max_lag_steps, dt=dt)
        write_histogram_csv(os.path.join(out, f"hist_{c}_truth.csv"), res["hist_ref"])
        write_histogram_csv(os.path.join(out, f"hist_{c}_model.csv"), res["hist_other"])
        write_autocorr_csv(os.path.join(out, f"acf_{c}_truth.csv"), res["acf_ref"])
        write_autocorr_csv(os.path.join(out, f"acf_{c}_model.csv"), res["acf_other"])
        rows.append((c, res["tv"], res["acf_max_dev"]))

    with open(os.path.join(out, "tv.csv"), "w") as fh:
        fh.write("column,tv\n")
        fh.writelines(f"{c},{tv:.17g}\n" for c, tv, _ in rows)
    with open(os.path.join(out, "summary.csv"), "w") as fh:
        fh.write("column,tv,acf_max_dev\n")
        fh.writelines(f"{c},{tv:.17g},{acf:.17g}\n" for c, tv, acf in rows)
    print(f"{'column':<8} {'tv':>10} {'acf_max_dev':>12}")
    for c, tv, acf in rows:
        print(f"{c:<8} {tv:>10.4f} {acf:>12.4f}")
    return 0


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override a configuration key (repeatable)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="qmcl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qmcl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("generate-data", parents=[common], help="integrate the truth system")
    t = sub.add_parser("train", parents=[common], help="train a closure model")
    t.add_argument("--data", metavar="DIR", help="dataset directory")
    s = sub.add_parser("simulate", parents=[common], help="run a trained model")
    s.add_argument("--model", metavar="DIR", help="model container directory")
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--recover-uninformative", action="store_true", default=None,
                   help="reset annihilated states instead of aborting")
    d = sub.add_parser("diagnose", parents=[common], help="compare two trajectory CSVs")
    d.add_argument("truth", help="reference trajectory CSV")
    d.add_argument("run", help="model trajectory CSV")
    return p


def _config_from_args(args):
    overrides = list(args.set)
    for key in ("seed", "out", "data", "model", "mode"):
        v = getattr(args, key, None)
        if v is not None:
            overrides.append(f"{key}={v}")
    if getattr(args, "recover_uninformative", None):
        overrides.append("recover_uninformative=true")
    return load_config(args.config, overrides).validate()


def main(argv=None):
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        if args.command == "generate-data":
            return cmd_generate_data(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_diagnose(cfg, args.truth, args.run)
    except (QMCLError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"qmcl: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
