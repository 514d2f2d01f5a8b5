"""
Command-line experiment runner.

Subcommands: persist, afun, vfun, corrector, diffusion, verify.  Every
subcommand accepts ``--config FILE`` with a JSON object whose keys mirror the
long flags (dashes or underscores); explicit flags win over the file.
Curves are written as CSV, reports as JSON, and both embed the resolved
configuration, the package version, the RNG algorithm and the seed.

Exit status: 0 success, 1 verification failure, 2 configuration error,
3 insufficient survivors.
"""
import argparse
import csv
import io
import json
import math
import os
import sys

from . import __version__
from .diffusion import bm_survival_asymptotic, kappa, mc_bm_survival
from .harmonic import h_kernel
from .potential import (CorrectorSpec, InsufficientSurvivorsError, amplitude_C, conditional_limit_sample,
                        corrector_f, estimate_V0_limit, estimate_V_series)
from .rng import RNG_ALGORITHM
from .stats import DEFAULT_CHUNK_SIZE
from .verify import run_suite
from .walk import IncrementDistribution, estimate_survival

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SURVIVORS = 0, 1, 2, 3

# Execution details that must not change the output bytes.
_NOT_EMBEDDED = {"workers", "output", "config", "command"}

CSV_COLUMNS = {
    "persist": ["n", "p_hat", "stderr", "n_paths"],
    "diffusion": ["t", "p_hat", "stderr", "n_paths", "n_steps", "asymptotic"],
}


class ConfigError(ValueError):
    pass


def _count(text):
    """Path counts such as ``1e6`` or ``250000``."""
    v = float(text)
    if v != int(v) or v < 1:
        raise argparse.ArgumentTypeError(f"not a positive integer count: {text}")
    return int(v)


def _point(text):
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    return (float(parts[0]), float(parts[1]))


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(float(v)) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


# name -> (type, default, help); default None with required=True below
_COMMON = {
    "seed": (_seed, None, "master seed (mandatory)"),
    "chunk_size": (_count, DEFAULT_CHUNK_SIZE, "paths per chunk"),
    "workers": (int, None, "worker processes (default: PERSISTKIT_THREADS or 1)"),
}

_SPECS = {
    "persist": {
        "dist": (str, "gaussian", "increment law"),
        "pmf": (str, None, "lattice pmf as JSON text or file"),
        "start": (_point, (0.0, 0.0), "start point x,y"),
        "ns": (_int_list, [64, 256, 1024], "comma-separated horizons"),
        "paths": (_count, 100_000, "number of paths"),
    },
    "afun": {
        "dist": (str, "rademacher", "increment law"),
        "pmf": (str, None, "lattice pmf as JSON text or file"),
        "paths": (_count, 10_000, "number of (outer) paths"),
        "horizon": (_count, 1024, "series horizon / limit time"),
        "method": (str, "series", "series or limit"),
    },
    "vfun": {
        "dist": (str, "rademacher", "increment law"),
        "pmf": (str, None, "lattice pmf as JSON text or file"),
        "start": (_point, (2.0, 1.0), "state x,y"),
        "mode": (str, "both", "series, limit or both"),
        "horizon": (_count, 256, "series horizon and limit time"),
        "paths": (_count, 10_000, "series paths"),
        "limit_paths": (_count, 200_000, "limit-estimator paths"),
    },
    "corrector": {
        "dist": (str, "gaussian", "increment law"),
        "pmf": (str, None, "lattice pmf as JSON text or file"),
        "points": (str, None, "semicolon-separated states x,y;x,y"),
        "ray": (str, None, "up, down or flat: states (t^3, +-t or 0)"),
        "ts": (_float_list, [5, 10, 20, 40, 80], "ray parameters"),
    },
    "diffusion": {
        "start": (_point, (1.0, 0.0), "start point x,y"),
        "t": (_float_list, [64.0], "comma-separated times"),
        "n_steps": (_count, None, "monitoring grid size (default 64 t)"),
        "paths": (_count, 100_000, "number of paths"),
    },
    "verify": {
        "suite": (str, "all", "specfun, harmonic, martingale, corrector, diffusion or all"),
    },
    "conditional": {
        "dist": (str, "gaussian", "increment law"),
        "pmf": (str, None, "lattice pmf as JSON text or file"),
        "start": (_point, (1.0, 0.0), "start point x,y"),
        "n": (_count, 256, "time"),
        "paths": (_count, 100_000, "number of paths"),
        "max_survivors": (_count, None, "keep only the first survivors"),
    },
}

_NEEDS_SEED = {"persist", "afun", "vfun", "diffusion", "conditional"}


def build_parser():
    p = argparse.ArgumentParser(prog="persistkit", description="Persistence of integrated random walks.")
    p.add_argument("--version", action="version", version=f"persistkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, spec in _SPECS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="JSON file with parameters")
        sp.add_argument("--output", "-o", default=None, help="output file (default stdout)")
        items = dict(spec)
        if name in _NEEDS_SEED:
            items.update(_COMMON)
        else:
            items["workers"] = _COMMON["workers"]
        for key, (typ, _, hlp) in items.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=hlp)
    return p


def resolve_config(args):
    """Merge defaults, the JSON config file and explicit flags; validate."""
    cmd = args.command
    spec = dict(_SPECS[cmd])
    if cmd in _NEEDS_SEED:
        spec.update(_COMMON)
    else:
        spec["workers"] = _COMMON["workers"]
    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        unknown = set(file_cfg) - set(spec) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys for {cmd}: {sorted(unknown)}")
    cfg = {}
    for key, (typ, default, _) in spec.items():
        val = getattr(args, key, None)
        if val is None and key in file_cfg:
            raw = file_cfg[key]
            try:
                val = raw if raw is None else typ(raw)
            except (argparse.ArgumentTypeError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
        if val is None:
            val = default
        cfg[key] = val
    if cmd in _NEEDS_SEED and cfg.get("seed") is None:
        raise ConfigError("a master seed is required (--seed or 'seed' in the config file)")
    if cfg.get("workers") is None:
        env = os.environ.get("PERSISTKIT_THREADS")
        cfg["workers"] = int(env) if env else 1
    return cfg


def _dist(cfg):
    name = cfg.get("dist")
    if cfg.get("pmf"):
        text = cfg["pmf"]
        if os.path.exists(text):
            with open(text) as fh:
                text = fh.read()
        try:
            return IncrementDistribution.from_json(text)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad lattice pmf: {exc}") from exc
    try:
        return IncrementDistribution.from_name(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _header(cmd, cfg):
    embedded = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items() if k not in _NOT_EMBEDDED}
    return {"command": cmd, "version": __version__, "rng": RNG_ALGORITHM, "seed": cfg.get("seed"),
            "config": embedded}


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def _csv_text(header, columns, rows):
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json_text(header, body):
    return json.dumps(dict(header, result=body), indent=2, sort_keys=True) + "\n"


def _est(e):
    return {"value": e.value, "stderr": e.stderr, "n_samples": e.n_samples,
            **{k: v for k, v in e.info.items()}}


def cmd_persist(cfg):
    dist = _dist(cfg)
    curve = estimate_survival(dist, cfg["start"], cfg["ns"], cfg["paths"], cfg["seed"],
                              cfg["chunk_size"], cfg["workers"])
    rows = [(n, e.value, e.stderr, e.n_samples) for n, e in curve.rows]
    return _csv_text(_header("persist", cfg), CSV_COLUMNS["persist"], rows), EXIT_OK


def cmd_diffusion(cfg):
    rows = []
    for t in cfg["t"]:
        e = mc_bm_survival(cfg["start"], t, cfg["n_steps"], cfg["paths"], cfg["seed"], cfg["chunk_size"],
                           cfg["workers"])
        asym = bm_survival_asymptotic(cfg["start"], t) if t > 0 else 1.0
        rows.append((t, e.value, e.stderr, e.n_samples, e.info["n_steps"], asym))
    return _csv_text(_header("diffusion", cfg), CSV_COLUMNS["diffusion"], rows), EXIT_OK


def cmd_afun(cfg):
    if cfg["method"] not in ("series", "limit"):
        raise ConfigError("method must be series or limit")
    spec = CorrectorSpec(_dist(cfg))
    e = amplitude_C(spec, cfg["paths"], cfg["seed"], cfg["horizon"], cfg["method"], cfg["workers"],
                    cfg["chunk_size"])
    body = {"C": _est(e), "kappa": kappa(), "kappa_times_C": kappa() * e.value}
    return _json_text(_header("afun", cfg), body), EXIT_OK


def cmd_vfun(cfg):
    if cfg["mode"] not in ("series", "limit", "both"):
        raise ConfigError("mode must be series, limit or both")
    spec = CorrectorSpec(_dist(cfg))
    z = cfg["start"]
    if not z[0] > 0:
        raise ConfigError("vfun needs a start with x > 0")
    body = {"h": h_kernel(*z)}
    ser = lim = None
    if cfg["mode"] in ("series", "both"):
        ser = estimate_V_series(spec, z, cfg["horizon"], cfg["paths"], cfg["seed"], cfg["chunk_size"],
                                cfg["workers"])
        body["series"] = _est(ser)
    if cfg["mode"] in ("limit", "both"):
        # independent stream family for the second estimator
        lim = estimate_V0_limit(spec, z, [cfg["horizon"]], cfg["limit_paths"], cfg["seed"] ^ 0x5DEECE66D,
                                cfg["chunk_size"], cfg["workers"])[0]
        body["limit"] = _est(lim)
    if ser is not None and lim is not None:
        body["agreement_zscore"] = ser.zscore(lim)
    return _json_text(_header("vfun", cfg), body), EXIT_OK


def cmd_corrector(cfg):
    spec = CorrectorSpec(_dist(cfg))
    pts = []
    if cfg["points"]:
        pts = [_point(p) for p in cfg["points"].split(";") if p.strip()]
    elif cfg["ray"]:
        sgn = {"up": 1.0, "down": -1.0, "flat": 0.0}.get(cfg["ray"])
        if sgn is None:
            raise ConfigError("ray must be up, down or flat")
        pts = [(t**3, sgn * t) for t in cfg["ts"]]
    else:
        raise ConfigError("give --points or --ray")
    rows = []
    for x, y in pts:
        f = corrector_f(spec, (x, y))
        a = max(abs(x) ** (1 / 3), abs(y))
        rows.append({"x": x, "y": y, "h": h_kernel(x, y), "f": f, "abs_f_alpha_1.5": abs(f) * a**1.5})
    return _json_text(_header("corrector", cfg), {"points": rows}), EXIT_OK


def cmd_verify(cfg):
    try:
        report = run_suite(cfg["suite"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return _json_text(_header("verify", cfg), report), EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_conditional(cfg):
    cs = conditional_limit_sample(_dist(cfg), cfg["start"], cfg["n"], cfg["paths"], cfg["seed"],
                                  max_survivors=cfg["max_survivors"], chunk_size=cfg["chunk_size"],
                                  workers=cfg["workers"])
    body = {"n": cs.n, "survivors": int(cs.points.shape[0]), "distance": cs.distance, "ks_x": cs.ks_x,
            "ks_y": cs.ks_y}
    return _json_text(_header("conditional", cfg), body), EXIT_OK


COMMANDS = {
    "persist": cmd_persist,
    "afun": cmd_afun,
    "vfun": cmd_vfun,
    "corrector": cmd_corrector,
    "diffusion": cmd_diffusion,
    "verify": cmd_verify,
    "conditional": cmd_conditional,
}


def run(argv=None):
    """Parse ``argv``, execute, write output; returns the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        text, status = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"persistkit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientSurvivorsError as exc:
        print(f"persistkit: {exc}", file=sys.stderr)
        return EXIT_SURVIVORS
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
