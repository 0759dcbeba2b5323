"""Command-line interface.

Every command reads an optional JSON config (``--config``) whose entries can
be overridden with ``--set key.path=value`` or the command's own flags, and
writes its outputs plus a ``<output>.manifest.json`` run manifest.
Stochastic commands require ``--seed``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bayes import (
    BayesConfig,
    axial_mean_deg,
    ChainDivergedError,
    line_density_raster,
    raster_to_csv,
    raster_to_pgm,
    run_chain,
)
from .envelopes import binomial_pattern, rank_envelope, simulate_curves
from .fit import ContrastConfig, FitError, min_contrast_fit, project_pattern, simulate_thomas, uniformity_check
from .geometry import BoxWindow, angle_to_unit, as_unit
from .patterns import PatternFormatError, PointOutsideWindowError, read_pattern, write_pattern
from .plcpp import PlcppParams, simulate
from .summaries import (
    Correction,
    InsufficientPointsError,
    SummaryCurve,
    cylindrical_k,
    directional_scan,
    f_function,
    fgj_estimates,
    g_function,
    isotropic_k,
)

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class CliError(Exception):
    exit_code = 1
    code = "error"


class ConfigError(CliError):
    exit_code = EXIT_CONFIG
    code = "config_error"


class DataError(CliError):
    exit_code = EXIT_DATA
    code = "data_error"


class NumericError(CliError):
    exit_code = EXIT_NUMERIC
    code = "numeric_error"


# ----------------------------------------------------------------- config

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path, overrides) -> dict:
    cfg: dict = {}
    if path:
        try:
            cfg = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for item in overrides or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: {part} is not an object")
        node[parts[-1]] = _parse_value(val)
    return cfg


def _put(cfg: dict, path: str, value) -> None:
    if value is None:
        return
    node = cfg
    parts = path.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _get(cfg: dict, path: str, kind=float, default=..., check=None, why: str = ""):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is ...:
                raise ConfigError(f"{path}: required setting is missing")
            return default
        node = node[part]
    try:
        val = kind(node)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if check is not None and not check(val):
        raise ConfigError(f"{path}: {why or 'invalid value'} (got {node!r})")
    return val


def _mapping(v) -> dict:
    if not isinstance(v, dict):
        raise TypeError(f"expected an object, got {type(v).__name__}")
    return v


def _window(cfg: dict, path: str) -> BoxWindow | None:
    """A window given as ``{"lower": [...], "upper": [...]}`` or ``[lower, upper]``."""
    d = _get(cfg, path, lambda v: v, None)
    if d is None:
        return None
    try:
        if isinstance(d, list):
            if len(d) != 2:
                raise ValueError("expected [lower, upper]")
            return BoxWindow(d[0], d[1])
        return BoxWindow.from_dict(_mapping(d))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _direction(value, path: str) -> np.ndarray:
    try:
        if np.ndim(value) == 0:
            return angle_to_unit(np.radians(float(value)))
        return as_unit(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _r_grid(cfg: dict, default_max: float) -> np.ndarray:
    if "r" in cfg:
        r = _get(cfg, "r", lambda v: np.asarray(v, dtype=float))
    else:
        r_max = _get(cfg, "r_max", float, default_max, lambda v: v > 0, "must be positive")
        n_r = _get(cfg, "n_r", int, 50, lambda v: v >= 1, "must be at least 1")
        r = np.linspace(r_max / n_r, r_max, n_r)
    if r.ndim != 1 or r.size == 0 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ConfigError("r: must be a non-empty, strictly increasing list of positive radii")
    return r


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ------------------------------------------------------------------ output

class Run:
    """Collects outputs and writes the manifest next to the primary output."""

    def __init__(self, command: str, args, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.seed = getattr(args, "seed", None)
        self.inputs = [str(p) for p in ([getattr(args, "input", None)] + list(getattr(args, "extra_inputs", [])))
                       if p]
        self.outputs: list[Path] = []
        self.t0 = time.perf_counter()

    def text(self, path, content: str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content)
        self.outputs.append(path)
        return path

    def binary(self, path, content: bytes) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(content)
        self.outputs.append(path)
        return path

    def register(self, path) -> None:
        self.outputs.append(Path(path))

    def manifest(self) -> Path:
        primary = self.outputs[0]
        m = {
            "command": self.command,
            "config": self.cfg,
            "config_digest": _digest(self.cfg),
            "seed": self.seed,
            "inputs": {p: _file_digest(Path(p)) for p in self.inputs},
            "outputs": {str(p): _file_digest(p) for p in self.outputs},
            "versions": {"cylk": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "wall_clock_seconds": round(time.perf_counter() - self.t0, 3),
        }
        path = primary.with_name(primary.name + ".manifest.json")
        path.write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
        return path


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def _read(path, window=None):
    try:
        return read_pattern(path, window)
    except (PatternFormatError, PointOutsideWindowError) as exc:
        raise DataError(str(exc)) from exc


# ---------------------------------------------------------------- commands

def cmd_simulate(args, cfg):
    _put(cfg, "exact", args.exact)
    try:
        params = PlcppParams.from_dict(_get(cfg, "params", _mapping))
    except KeyError as exc:
        raise ConfigError(f"params.{exc.args[0]}: required setting is missing") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params: {exc}") from exc
    w = _window(cfg, "window")
    if w is None:
        raise ConfigError("window: required setting is missing")
    w_ext = _window(cfg, "window_ext")
    exact = _get(cfg, "exact", bool, True)
    try:
        real = simulate(params, w, w_ext, _rng(args.seed), keep_latent=bool(args.latent), exact=exact)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run = Run("simulate", args, cfg)
    write_pattern(real.pattern, args.out)
    run.register(args.out)
    if args.latent:
        run.text(args.latent, real.to_json() + "\n")
    return run


def _correction(cfg) -> Correction:
    try:
        return Correction(_get(cfg, "correction", str, "translation"))
    except ValueError as exc:
        raise ConfigError(f"correction: {exc}") from exc


def cmd_kfun(args, cfg):
    _put(cfg, "direction", args.direction)
    _put(cfg, "t", args.t)
    _put(cfg, "r_max", args.r_max)
    _put(cfg, "n_r", args.n_r)
    _put(cfg, "correction", args.correction)
    p = _read(args.input)
    u = _direction(_get(cfg, "direction", lambda v: v, list(np.eye(p.dim)[-1])), "direction")
    if u.shape[0] != p.dim:
        raise ConfigError(f"direction: has {u.shape[0]} components, pattern dimension is {p.dim}")
    t = _get(cfg, "t", float, 0.25 * float(p.window.sides.min()), lambda v: v > 0, "must be positive")
    r = _r_grid(cfg, 0.25 * float(p.window.sides.min()))
    try:
        curve = cylindrical_k(p, u, r, t, _correction(cfg), naive=bool(args.naive))
    except InsufficientPointsError as exc:
        raise DataError(str(exc)) from exc
    run = Run("kfun", args, cfg)
    run.text(args.out, curve.to_csv())
    return run


def cmd_scan(args, cfg):
    _put(cfg, "r", args.r)
    _put(cfg, "t", args.t)
    _put(cfg, "n_angles", args.n_angles)
    p = _read(args.input)
    if p.dim != 2:
        raise DataError("scan needs a planar pattern")
    r = _get(cfg, "r", float, 0.05 * float(p.window.sides.min()), lambda v: v > 0, "must be positive")
    t = _get(cfg, "t", float, 0.25 * float(p.window.sides.min()), lambda v: v > 0, "must be positive")
    m = _get(cfg, "n_angles", int, 180, lambda v: v >= 1, "must be at least 1")
    phis = np.arange(m) * np.pi / m
    try:
        curve = directional_scan(p, phis, r, t)
    except InsufficientPointsError as exc:
        raise DataError(str(exc)) from exc
    curve = SummaryCurve(np.degrees(phis), curve.values, {**curve.meta, "arg": "phi_degrees"})
    run = Run("scan", args, cfg)
    run.text(args.out, curve.to_csv())
    return run


def _fgj_table(f, g, j) -> str:
    jv = dict(zip(j.args.tolist(), j.values.tolist()))
    lines = ["r,F,G,J"]
    for r, fv, gv in zip(f.args, f.values, g.values):
        lines.append(",".join(repr(float(v)) for v in (r, fv, gv, jv.get(float(r), float("nan")))))
    return "\n".join(lines) + "\n"


def cmd_fgj(args, cfg):
    _put(cfg, "r_max", args.r_max)
    _put(cfg, "n_r", args.n_r)
    p = _read(args.input)
    if p.dim != 2:
        raise DataError("fgj needs a planar pattern")
    r = _r_grid(cfg, 0.1 * float(p.window.sides.min()))
    n_anchor = _get(cfg, "n_anchor", int, 10_000, lambda v: v >= 1, "must be at least 1")
    try:
        f, g, j = fgj_estimates(p, r, n_anchor)
    except InsufficientPointsError as exc:
        raise DataError(str(exc)) from exc
    run = Run("fgj", args, cfg)
    run.text(args.out, _fgj_table(f, g, j))
    return run


def statistic_from_config(cfg: dict, dim: int, window: BoxWindow):
    """Build ``pattern -> values`` for the envelope command."""
    kind = _get(cfg, "statistic", str, "kcyl")
    side = float(window.sides.min())
    if kind == "kcyl":
        u = _direction(_get(cfg, "direction", lambda v: v, list(np.eye(dim)[-1])), "direction")
        t = _get(cfg, "t", float, 0.25 * side, lambda v: v > 0, "must be positive")
        r = _r_grid(cfg, 0.25 * side)
        corr = _correction(cfg)
        return r, lambda q: cylindrical_k(q, u, r, t, corr).values
    if kind == "kiso":
        r = _r_grid(cfg, 0.25 * side)
        return r, lambda q: isotropic_k(q, r).values
    if kind in ("F", "G", "J"):
        r = _r_grid(cfg, 0.1 * side)
        n_anchor = _get(cfg, "n_anchor", int, 10_000)
        if kind == "F":
            return r, lambda q: f_function(q, r, n_anchor).values
        if kind == "G":
            return r, lambda q: g_function(q, r).values

        def jfun(q):
            f = f_function(q, r, n_anchor).values
            g = g_function(q, r).values
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(f < 1, (1 - g) / (1 - f), np.nan)

        return r, jfun
    raise ConfigError(f"statistic: unknown statistic {kind!r} (kcyl, kiso, F, G, J)")


def cmd_envelope(args, cfg):
    _put(cfg, "s", args.s)
    _put(cfg, "level", args.level)
    _put(cfg, "statistic", args.statistic)
    p = _read(args.input)
    s = _get(cfg, "s", int, 999, lambda v: v >= 1, "must be at least 1")
    level = _get(cfg, "level", float, 0.95, lambda v: 0 < v < 1, "must be in (0, 1)")
    r, stat = statistic_from_config(cfg, p.dim, p.window)
    null = _get(cfg, "null", _mapping, {"model": "csr"})
    model = null.get("model", "csr")
    if model == "csr":
        sim = lambda rng: binomial_pattern(p.n, p.window, rng)  # noqa: E731
    elif model == "thomas":
        if p.dim != 2:
            raise ConfigError("null.model: the Thomas null is planar")
        rho = _get(null, "rho_L", float, check=lambda v: v > 0, why="must be positive")
        s2 = _get(null, "sigma2", float, check=lambda v: v > 0, why="must be positive")
        mpp = _get(null, "mean_per_parent", float, check=lambda v: v > 0, why="must be positive")
        sim = lambda rng: simulate_thomas(rho, s2, mpp, p.window, rng)  # noqa: E731
    else:
        raise ConfigError(f"null.model: unknown null model {model!r} (csr, thomas)")
    try:
        data = stat(p)
        sims = simulate_curves(sim, stat, s, args.seed, threads=args.threads)
        res = rank_envelope(data, sims, level)
    except InsufficientPointsError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res.args = r
    run = Run("envelope", args, cfg)
    run.text(args.out, res.to_csv())
    run.text(Path(args.out).with_suffix(".summary.json"), res.summary_json())
    return run


def cmd_fit_thomas(args, cfg):
    _put(cfg, "axis", args.axis)
    _put(cfg, "I_length", args.I_length)
    p = _read(args.input)
    contrast = dict(_get(cfg, "contrast", _mapping, {}))
    contrast.setdefault("seed", args.seed)
    report = {}
    if p.dim == 3:
        axis = _get(cfg, "axis", int, 2, lambda v: v in (0, 1, 2), "must be 0, 1 or 2")
        p2, interval = project_pattern(p, axis)
        length = interval[1] - interval[0]
        uni = uniformity_check(p.points[:, axis], interval) if p.n else None
        if uni is not None:
            report["uniformity"] = {"statistic": uni["statistic"], "p_value": uni["p_value"], "n": uni["n"]}
    else:
        p2 = p
        length = _get(cfg, "I_length", float, check=lambda v: v > 0, why="must be positive")
    try:
        fit = min_contrast_fit(p2, length, ContrastConfig.from_dict(contrast))
    except KeyError as exc:
        raise ConfigError(f"contrast: {exc.args[0]}") from exc
    except InsufficientPointsError as exc:
        raise DataError(str(exc)) from exc
    except FitError as exc:
        raise NumericError(f"{exc} (best iterate: {exc.best})") from exc
    out = json.loads(fit.to_json())
    out.update(report)
    run = Run("fit-thomas", args, cfg)
    run.text(args.out, json.dumps(out, indent=2, sort_keys=True) + "\n")
    return run


def _lines_csv(samples, iterations) -> str:
    d = samples[0][0].shape[1] if samples else 2
    names = ["x", "y", "z"][:d]
    head = ["sample", "iteration", "line"] + [f"y_{a}" for a in names] + [f"u_{a}" for a in names]
    rows = [",".join(head)]
    for k, ((anc, dirs), it) in enumerate(zip(samples, iterations)):
        for j, (y, u) in enumerate(zip(anc, dirs)):
            rows.append(",".join([str(k), str(int(it)), str(j)] + [repr(float(v)) for v in (*y, *u)]))
    return "\n".join(rows) + "\n"


def read_lines_csv(path):
    """Read line samples written by the bayes command: list of (anchors, directions)."""
    try:
        text = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not text:
        raise DataError(f"{path}: empty lines file")
    head = text[0].split(",")
    d = (len(head) - 3) // 2
    if d not in (2, 3) or head[:3] != ["sample", "iteration", "line"]:
        raise DataError(f"{path}: unexpected header {text[0]!r}")
    groups: dict[int, list] = {}
    for lineno, row in enumerate(text[1:], start=2):
        cells = row.split(",")
        if len(cells) != len(head):
            raise DataError(f"{path}: line {lineno}: expected {len(head)} fields")
        try:
            vals = [float(c) for c in cells[3:]]
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from exc
        groups.setdefault(int(cells[0]), []).append(vals)
    return [(np.array(v)[:, :d], np.array(v)[:, d:]) for _, v in sorted(groups.items())]


def cmd_bayes(args, cfg):
    _put(cfg, "iterations", args.iterations)
    _put(cfg, "burn_in", args.burn_in)
    p = _read(args.input)
    w_ext = _window(cfg, "window_ext") or p.window
    n_samples = _get(cfg, "line_samples", int, 100, lambda v: v >= 1, "must be at least 1")
    settings = {k: v for k, v in cfg.items() if k not in ("window_ext", "line_samples")}
    settings["seed"] = args.seed
    try:
        bc = BayesConfig.from_dict(settings)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if p.n < 1:
        raise DataError("the sampler needs at least one data point")
    try:
        trace = run_chain(p, bc, w_ext)
    except ChainDivergedError as exc:
        raise NumericError(f"{exc}; state: {json.dumps(exc.dump)}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run = Run("bayes", args, cfg)
    run.text(args.out, trace.to_csv())
    idx = np.unique(np.linspace(0, len(trace.lines) - 1, min(n_samples, len(trace.lines))).round().astype(int))
    samples = [trace.lines[i] for i in idx]
    run.text(Path(args.out).with_suffix(".lines.csv"), _lines_csv(samples, trace.iterations[idx]))
    summary = {
        "acceptance": {k: (None if np.isnan(v) else v) for k, v in trace.acceptance.items()},
        "null_moves": trace.null_moves,
        "posterior_mean": {"rho_L": float(trace.rho_L.mean()), "alpha": float(trace.alpha.mean()),
                           "sigma2": float(trace.sigma2.mean()), "rho": float(trace.rho.mean()),
                           "k": float(trace.k.mean())},
    }
    if p.dim == 2:
        summary["posterior_mean"]["phi_axial_deg"] = axial_mean_deg(trace.phi_deg)
    run.text(Path(args.out).with_suffix(".summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return run


def cmd_raster(args, cfg):
    _put(cfg, "resolution", args.resolution)
    samples = read_lines_csv(args.input)
    w = _window(cfg, "window")
    if w is None and args.pattern:
        w = _read(args.pattern).window
    if w is None:
        raise ConfigError("window: required (config 'window' or --pattern)")
    res = _get(cfg, "resolution", lambda v: v, 100)
    try:
        raster = line_density_raster(samples, w, res)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    run = Run("raster", args, cfg)
    if str(args.out).endswith(".pgm"):
        run.binary(args.out, raster_to_pgm(raster))
    else:
        run.text(args.out, raster_to_csv(raster, w))
    return run


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


STOCHASTIC = {"simulate", "envelope", "fit-thomas", "bayes"}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cylk", description="Cylindrical K-functions and Poisson line cluster point processes.")
    ap.add_argument("--version", action="version", version=f"cylk {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(name, help_, inp=True):
        sp = sub.add_parser(name, help=help_)
        if inp:
            sp.add_argument("input", help="input file")
        sp.add_argument("-o", "--out", required=True, help="primary output file")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted path, JSON value)")
        sp.add_argument("--seed", type=int, required=name in STOCHASTIC, help="random seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        return sp

    sp = common("simulate", "simulate a line cluster pattern", inp=False)
    sp.add_argument("--latent", help="also write lines/parents/links as JSON")
    sp.add_argument("--exact", type=lambda s: s.lower() in ("1", "true", "yes"), default=None,
                    help="exact direction sampling for lines hitting the extended window (default true)")
    sp.set_defaults(func=cmd_simulate)

    sp = common("kfun", "cylindrical K-function")
    sp.add_argument("--direction", type=_parse_value, help="axis as angle in degrees (2-d) or JSON vector")
    sp.add_argument("--t", type=float, help="cylinder half-height")
    sp.add_argument("--r-max", dest="r_max", type=float)
    sp.add_argument("--n-r", dest="n_r", type=int)
    sp.add_argument("--correction", choices=[c.value for c in Correction])
    sp.add_argument("--naive", action="store_true", help="use the O(n^2) reference sum")
    sp.set_defaults(func=cmd_kfun)

    sp = common("scan", "directional K scan over angles (planar)")
    sp.add_argument("--r", type=float)
    sp.add_argument("--t", type=float)
    sp.add_argument("--n-angles", dest="n_angles", type=int)
    sp.set_defaults(func=cmd_scan)

    sp = common("fgj", "F, G and J functions (planar)")
    sp.add_argument("--r-max", dest="r_max", type=float)
    sp.add_argument("--n-r", dest="n_r", type=int)
    sp.set_defaults(func=cmd_fgj)

    sp = common("envelope", "global rank envelope test")
    sp.add_argument("--s", type=int, help="number of simulations")
    sp.add_argument("--level", type=float)
    sp.add_argument("--statistic", choices=["kcyl", "kiso", "F", "G", "J"])
    sp.set_defaults(func=cmd_envelope)

    sp = common("fit-thomas", "minimum contrast fit of the projected (Thomas) process")
    sp.add_argument("--axis", type=int, help="axis projected out for 3-d input (0-based)")
    sp.add_argument("--I-length", dest="I_length", type=float, help="projected interval length (2-d input)")
    sp.set_defaults(func=cmd_fit_thomas)

    sp = common("bayes", "posterior simulation of the line cluster model")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--burn-in", dest="burn_in", type=int)
    sp.set_defaults(func=cmd_bayes)

    sp = common("raster", "posterior line density raster from a bayes lines file")
    sp.add_argument("--pattern", help="pattern file supplying the window")
    sp.add_argument("--resolution", type=_parse_value)
    sp.set_defaults(func=cmd_raster)
    return ap


def _fail(exc: CliError) -> int:
    sys.stderr.write(json.dumps({"error": {"code": exc.code, "exit": exc.exit_code, "message": str(exc)}}) + "\n")
    return exc.exit_code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config, args.set)
        run = args.func(args, cfg)
        run.manifest()
        return 0
    except CliError as exc:
        return _fail(exc)
    except (InsufficientPointsError, PatternFormatError, PointOutsideWindowError) as exc:
        return _fail(DataError(str(exc)))
    except (FloatingPointError, FitError, ChainDivergedError) as exc:
        return _fail(NumericError(str(exc)))
    except OSError as exc:
        return _fail(DataError(str(exc)))


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
