"""Command-line front end: ``gibbsmple {fit,simulate,vcov,stats,gnz}``.

Exit status: 0 success, 1 input or infeasibility error, 2 numerical
non-convergence (the result file is still written).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GibbsError, InvalidInput, NumericError
from .geometry import Window
from .inference import (
    FitOptions,
    _clean,
    confidence_intervals,
    default_cell,
    fit_mple,
    identifiability_diagnostic,
    neighbour_radius,
    residual_from_contrast,
    sandwich_covariance,
    sigma_hat,
)
from .models import ModelSpec, data_statistics, global_statistics, require_theta
from .patterns import erode_window, read_pattern, write_pattern
from .pseudolikelihood import Contrast
from .quadrature import DEFAULT_GRID, DEFAULT_MARK_NODES, build_quadrature
from .simulate import DEFAULT_BURN_IN, DEFAULT_MIX, DEFAULT_STEPS, SimConfig, run_chain

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2

_SECTIONS = {"window", "simulation", "fit"}
_SIM_KEYS = {"steps", "burn_in", "seed", "mix"}
_FIT_KEYS = {"dvee", "cell", "grid", "mark_nodes", "level", "tol", "max_iter"}


def load_config(path) -> dict:
    """Read a TOML or JSON config file (JSON when the suffix is ``.json``)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from None
    if path.suffix.lower() == ".json":
        try:
            cfg = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from None
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            cfg = tomllib.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigurationError(f"{path}: invalid TOML: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: top level must be a table")
    for sec, keys in (("simulation", _SIM_KEYS), ("fit", _FIT_KEYS), ("window", {"xmin", "xmax", "ymin", "ymax"})):
        extra = set(cfg.get(sec, {})) - keys
        if extra:
            raise ConfigurationError(f"{path}: unknown keys in [{sec}]: {sorted(extra)}")
    return cfg


def _model_of(cfg: dict) -> ModelSpec:
    return ModelSpec.from_dict({k: v for k, v in cfg.items() if k not in _SECTIONS})


def _parse_grid(text) -> tuple:
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).lower().split("x")
    try:
        nx, ny = (int(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigurationError(f"grid must look like 256x256, got {text!r}") from None
    if nx < 2 or ny < 2:
        raise ConfigurationError(f"grid must be at least 2x2, got {text!r}")
    return nx, ny


def _parse_floats(text, what) -> list:
    try:
        return [float(t) for t in str(text).split(",")]
    except ValueError:
        raise ConfigurationError(f"cannot parse {what} {text!r}") from None


def _window(args, cfg) -> Window:
    if args.window:
        vals = _parse_floats(args.window, "window")
        if len(vals) != 4:
            raise ConfigurationError("--window takes xmin,xmax,ymin,ymax")
        return Window(*vals)
    w = cfg.get("window")
    if not w:
        raise ConfigurationError("no observation window: give --window or a [window] table in the config")
    try:
        return Window(float(w["xmin"]), float(w["xmax"]), float(w["ymin"]), float(w["ymax"]))
    except KeyError as exc:
        raise ConfigurationError(f"[window] lacks {exc.args[0]!r}") from None


def _setting(args, cfg, name, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get("fit", {}).get(name, default)


def _threads(args) -> int:
    if args.threads is None:
        return os.cpu_count() or 1
    if args.threads < 1:
        raise ConfigurationError(f"--threads must be >= 1, got {args.threads}")
    return args.threads


def _theta(args, cfg, model):
    if getattr(args, "fit", None):
        try:
            doc = json.loads(Path(args.fit).read_text(encoding="utf-8"))
            th = doc["theta_hat"]
        except OSError as exc:
            raise ConfigurationError(f"cannot read fit result {args.fit}: {exc.strerror or exc}") from None
        except (ValueError, KeyError, TypeError):
            raise ConfigurationError(f"{args.fit} is not a fit result") from None
        return require_theta(model, th)
    if getattr(args, "theta", None):
        return require_theta(model, _parse_floats(args.theta, "theta"))
    if "theta" in cfg:
        return require_theta(model, cfg["theta"])
    return None


class _Setup:
    """Model, data and geometry shared by the data-driven commands."""

    def __init__(self, args):
        if not args.model:
            raise ConfigurationError("--model is required")
        self.cfg = load_config(args.model)
        self.model = _model_of(self.cfg)
        self.window = _window(args, self.cfg)
        if not args.data:
            raise ConfigurationError("--data is required")
        path = Path(args.data)
        if not path.is_file():
            raise ConfigurationError(f"data file not found: {path}")
        self.pattern = read_pattern(path, self.model.mark_space, self.window)
        m = self.model
        self.dvee = float(_setting(args, self.cfg, "dvee", m.D))
        self.cell = float(_setting(args, self.cfg, "cell", default_cell(m)))
        self.grid = _parse_grid(_setting(args, self.cfg, "grid", f"{DEFAULT_GRID[0]}x{DEFAULT_GRID[1]}"))
        self.mark_nodes = int(_setting(args, self.cfg, "mark_nodes", DEFAULT_MARK_NODES))
        self.level = float(_setting(args, self.cfg, "level", 0.95))
        if not 0 < self.level < 1:
            raise ConfigurationError(f"level must lie in (0, 1), got {self.level}")
        if self.dvee < m.D * (1 - 1e-12):
            raise ConfigurationError(f"dvee = {self.dvee!r} is below the interaction range D = {m.D!r}")
        self.threads = _threads(args)
        self.fit_window = erode_window(self.window, self.dvee)
        self.quad = build_quadrature(self.fit_window, m.mark_space, self.grid, self.mark_nodes)

    def echo(self, args, command) -> dict:
        return {
            "command": command,
            "model": self.model.to_dict(),
            "data": str(args.data),
            "window": list(self.window.as_tuple()),
            "dvee": self.dvee,
            "cell": self.cell,
            "grid": list(self.grid),
            "mark_nodes": self.mark_nodes,
            "level": self.level,
        }


def _write_json(obj, out):
    text = json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_fit(args) -> int:
    s = _Setup(args)
    opts = FitOptions(
        tol=float(_setting(args, s.cfg, "tol", 1e-8)),
        max_iter=int(_setting(args, s.cfg, "max_iter", 100)),
        level=s.level,
        threads=s.threads,
    )
    fit = fit_mple(s.model, s.pattern, s.fit_window, s.quad, s.cell, s.dvee, opts, s.echo(args, "fit"))
    _write_json(fit.to_dict(), args.out)
    if not fit.converged:
        print(f"gibbsmple: fit did not converge after {fit.iterations} iterations "
              f"(gradient {fit.grad_norm:.3g})", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _theta_or_fit(args, s):
    th = _theta(args, s.cfg, s.model)
    if th is not None:
        return th, None
    opts = FitOptions(level=s.level, threads=s.threads)
    fit = fit_mple(s.model, s.pattern, s.fit_window, s.quad, s.cell, s.dvee, opts)
    return fit.theta_hat, fit


def cmd_vcov(args) -> int:
    s = _Setup(args)
    th, fit = _theta_or_fit(args, s)
    c = Contrast(s.model, s.pattern, s.fit_window, s.quad, s.threads)
    _, _, H = c.evaluate(th)
    u2 = H / c.area
    sig = sigma_hat(c.cell_gradients(th, s.cell), s.cell, s.dvee, c.area)
    diag = identifiability_diagnostic(u2, sig)
    vcov = sandwich_covariance(u2, sig, c.area)
    out = {
        "theta": th,
        "names": list(s.model.names),
        "vcov": vcov,
        "ci": confidence_intervals(th, vcov, s.level),
        "level": s.level,
        "sigma_hat": sig,
        "u2": u2,
        "neighbour_radius": neighbour_radius(s.cell, s.dvee),
        "identifiability": diag,
        "config": s.echo(args, "vcov"),
    }
    _write_json(out, args.out)
    if fit is not None and not fit.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_gnz(args) -> int:
    s = _Setup(args)
    th, fit = _theta_or_fit(args, s)
    c = Contrast(s.model, s.pattern, s.fit_window, s.quad, s.threads)
    raw = residual_from_contrast(c, th, "raw")
    per = residual_from_contrast(c, th, "stats")
    out = {
        "theta": th,
        "names": list(s.model.names),
        "raw": raw,
        "per_statistic": per,
        "raw_per_area": raw / c.area,
        "per_statistic_per_area": per / c.area,
        "n_points": c.n_data,
        "area": c.area,
        "config": s.echo(args, "gnz"),
    }
    _write_json(out, args.out)
    if fit is not None and not fit.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_stats(args) -> int:
    if not args.model:
        raise ConfigurationError("--model is required")
    cfg = load_config(args.model)
    model = _model_of(cfg)
    window = _window(args, cfg)
    if not args.data:
        raise ConfigurationError("--data is required")
    path = Path(args.data)
    if not path.is_file():
        raise ConfigurationError(f"data file not found: {path}")
    pattern = read_pattern(path, model.mark_space, window)
    out = {
        "names": list(model.names),
        "global": global_statistics(model, pattern),
        "n_points": len(pattern),
        "config": {"command": "stats", "model": model.to_dict(), "data": str(path), "window": list(window.as_tuple())},
    }
    if args.local:
        st, hard = data_statistics(model, pattern, threads=_threads(args))
        out["local"] = st
        out["hard_core_violation"] = hard.astype(bool)
    _write_json(out, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not args.model:
        raise ConfigurationError("--model is required")
    cfg = load_config(args.model)
    model = _model_of(cfg)
    window = _window(args, cfg)
    th = _theta(args, cfg, model)
    if th is None:
        raise ConfigurationError("simulation needs theta: give --theta or 'theta' in the config")
    if not args.out:
        raise ConfigurationError("--out is required for simulate")
    sim = cfg.get("simulation", {})
    steps = args.steps if args.steps is not None else int(sim.get("steps", DEFAULT_STEPS))
    burn = args.burn_in if args.burn_in is not None else int(sim.get("burn_in", min(DEFAULT_BURN_IN, steps)))
    seed = args.seed if args.seed is not None else int(sim.get("seed", 0))
    mix = tuple(sim.get("mix", DEFAULT_MIX))
    conf = SimConfig(model, tuple(th), window, steps=steps, burn_in=burn, seed=seed, mix=mix)
    pattern, manifest = run_chain(conf)
    write_pattern(pattern, args.out)
    manifest_path = args.manifest or (str(args.out) + ".manifest.json")
    _write_json(manifest, manifest_path)
    return EXIT_OK


def _u64(text) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors, so they exit 1 rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gibbsmple", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--model", help="model config file (TOML or JSON)")
        if data:
            sp.add_argument("--data", help="pattern CSV with header x,y,mark or x,y")
        sp.add_argument("--out", help="output file (stdout when omitted, JSON commands only)")
        sp.add_argument("--window", help="observation window xmin,xmax,ymin,ymax (overrides [window])")
        sp.add_argument("--threads", type=int, help="worker threads (default: all cores)")

    def geometry(sp):
        sp.add_argument("--dvee", type=float, help="erosion distance D-vee (default: D)")
        sp.add_argument("--cell", type=float, help="cell size D-tilde for the covariance blocks (default: D)")
        sp.add_argument("--grid", help="quadrature grid <nx>x<ny> (default 256x256)")
        sp.add_argument("--mark-nodes", dest="mark_nodes", type=int, help="Gauss-Legendre nodes for interval marks")
        sp.add_argument("--level", type=float, help="confidence level (default 0.95)")

    def theta_opts(sp):
        sp.add_argument("--theta", help="comma-separated parameter vector")
        sp.add_argument("--fit", help="take theta from a fit result JSON")

    sp = sub.add_parser("fit", help="maximum pseudolikelihood fit")
    common(sp)
    geometry(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("vcov", help="sandwich covariance at theta (fits first when none is given)")
    common(sp)
    geometry(sp)
    theta_opts(sp)
    sp.set_defaults(func=cmd_vcov)

    sp = sub.add_parser("gnz", help="GNZ residuals at theta (fits first when none is given)")
    common(sp)
    geometry(sp)
    theta_opts(sp)
    sp.set_defaults(func=cmd_gnz)

    sp = sub.add_parser("stats", help="sufficient statistics of a pattern")
    common(sp)
    sp.add_argument("--local", action="store_true", help="also report each point's local statistics")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("simulate", help="Metropolis-Hastings simulation")
    common(sp, data=False)
    sp.add_argument("--theta", help="comma-separated parameter vector")
    sp.add_argument("--seed", type=_u64, help="64-bit seed")
    sp.add_argument("--steps", type=int, help=f"total iterations (default {DEFAULT_STEPS})")
    sp.add_argument("--burn-in", dest="burn_in", type=int, help=f"burn-in iterations (default {DEFAULT_BURN_IN})")
    sp.add_argument("--manifest", help="run manifest path (default <out>.manifest.json)")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"gibbsmple: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (GibbsError, InvalidInput) as exc:
        print(f"gibbsmple: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"gibbsmple: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
