"""Command-line front end.

Every subcommand resolves its settings as built-in defaults, then a JSON
config file (``--config``, which may also be a previous run manifest), then
explicit flags. It writes its outputs plus ``manifest.json`` into ``--output``.
Failures print a JSON error object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .baseline import McrConfig, mcr_als
from .container import read_container, write_container
from .dictinit import DEFAULT_ATOMS, NnlsConfig
from .exceptions import XrfError
from .experiment import CSV_HEADER, METHODS, denoise, initialize, sweep
from .metrics import band_map, default_bands, evaluate
from .objective import ALPHA, BETA, LAMBDA_EN, LAMBDA_TV, ObjectiveConfig
from .phantom import DEFAULT_PEAK_RATE, PhantomConfig, make_phantom
from .scansim import DEFAULT_FACTORS, REFERENCE_DWELL, SimConfig, simulate_scan
from .solver import SolverConfig
from .volume import Abundance, CountVolume, Dictionary, RateVolume, RgbImage

EXIT_FAILURE = 1
EXIT_USAGE = 2

_OBJECTIVE = {"lambda_tv": LAMBDA_TV, "lambda_en": LAMBDA_EN, "alpha": ALPHA, "beta": BETA}
_SOLVER = {
    "patience": 100,
    "max_iters": 2000,
    "lasso_tau": 1e-3,
    "prune_every": 200,
    "alt_block": 10,
    "lr_a": None,
    "lr_d": None,
    "atom_norm": "max",
}
_COMMON = {"seed": 0, "threads": 1, "output": "."}

DEFAULTS = {
    "phantom": {
        **_COMMON,
        "height": 32,
        "width": 32,
        "channels": 32,
        "true_atoms": 4,
        "regions": 12,
        "peak_rate": DEFAULT_PEAK_RATE,
        "rgb_correlation": 0.9,
    },
    "simulate": {**_COMMON, "input": None, "dwell": REFERENCE_DWELL},
    "init": {**_COMMON, "input": None, "atoms": DEFAULT_ATOMS, "kmeans_iters": 100,
             "normalize": "none"},
    "denoise": {**_COMMON, "input": None, "rgb": None, "init_dict": None, "init_abund": None,
                "atoms": DEFAULT_ATOMS, **_OBJECTIVE, **_SOLVER},
    "baseline": {**_COMMON, "input": None, "atoms": DEFAULT_ATOMS, "max_outer": 200, "tol": 1e-5},
    "evaluate": {**_COMMON, "input": None, "gt": None, "counts": None, "bands": 8, "pgm": False},
    "sweep": {**_COMMON, "input": None, "rgb": None, "dwell": REFERENCE_DWELL,
              "factors": list(DEFAULT_FACTORS), "methods": list(METHODS), "atoms": DEFAULT_ATOMS,
              "max_outer": 200, "tol": 1e-5, **_OBJECTIVE, **_SOLVER},
}
_PATH_KEYS = ("input", "rgb", "gt", "counts", "init_dict", "init_abund", "output")
_REQUIRED = {
    "simulate": ("input",),
    "init": ("input",),
    "denoise": ("input", "rgb"),
    "baseline": ("input",),
    "evaluate": ("input", "gt"),
    "sweep": ("input", "rgb"),
}


class UsageError(Exception):
    """Bad flags or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _factors(text):
    try:
        values = [float(v) if "." in v or "e" in v.lower() else int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid factor list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty factor list")
    return values


def _methods(text):
    return [m for m in text.split(",") if m]


def _flag(p, name, **kw):
    p.add_argument(name, default=argparse.SUPPRESS, **kw)


def _objective_flags(p):
    _flag(p, "--lambda-tv", type=float, help="adaptive TV weight")
    _flag(p, "--lambda-en", type=float, help="elastic net weight")
    _flag(p, "--alpha", type=float, help="elastic net l2/l1 mix")
    _flag(p, "--beta", type=float, help="RGB edge sensitivity of the TV weights")


def _solver_flags(p):
    _flag(p, "--patience", type=int, help="stop this many iterations after the best loss")
    _flag(p, "--max-iters", type=int)
    _flag(p, "--lasso-tau", type=float, help="pruning threshold on A/t (photons/s)")
    _flag(p, "--prune-every", type=int)
    _flag(p, "--alt-block", type=int, help="abundance steps per dictionary step")
    _flag(p, "--lr-a", type=float)
    _flag(p, "--lr-d", type=float)
    _flag(p, "--atom-norm", choices=["none", "l1", "l2", "max"])


def build_parser():
    parser = _Parser(prog="xrfdenoise", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _flag(p, "--config", help="JSON config or run manifest")
        _flag(p, "--output", help="output directory")
        _flag(p, "--seed", type=int)
        _flag(p, "--threads", type=int)
        return p

    p = command("phantom", "generate a synthetic scene")
    for name in ("--height", "--width", "--channels", "--true-atoms", "--regions"):
        _flag(p, name, type=int)
    _flag(p, "--peak-rate", type=float)
    _flag(p, "--rgb-correlation", type=float)

    p = command("simulate", "simulate a scan from a rate volume")
    _flag(p, "--input", help="rates container")
    _flag(p, "--dwell", type=float, help="seconds per pixel")

    p = command("init", "K-means dictionary and NNLS abundances")
    _flag(p, "--input", help="counts container")
    _flag(p, "--atoms", type=int)
    _flag(p, "--kmeans-iters", type=int)
    _flag(p, "--normalize", choices=["none", "l2"])

    p = command("denoise", "restore a fast scan")
    _flag(p, "--input", help="counts container")
    _flag(p, "--rgb", help="rgb container")
    _flag(p, "--init-dict", help="dictionary container to start from")
    _flag(p, "--init-abund", help="abundance container to start from")
    _flag(p, "--atoms", type=int)
    _objective_flags(p)
    _solver_flags(p)

    p = command("baseline", "MCR-ALS factorization")
    _flag(p, "--input", help="counts container")
    _flag(p, "--atoms", type=int)
    _flag(p, "--max-outer", type=int)
    _flag(p, "--tol", type=float)

    p = command("evaluate", "score an estimate against ground truth")
    _flag(p, "--input", help="estimated rates container")
    _flag(p, "--gt", help="ground-truth rates container")
    _flag(p, "--counts", help="counts container for the PNLL metric")
    _flag(p, "--bands", type=int, help="number of equal channel bands")
    _flag(p, "--pgm", action="store_true", help="write 16-bit band maps")

    p = command("sweep", "score all methods across a dwell grid")
    _flag(p, "--input", help="reference counts, or rates to simulate the reference from")
    _flag(p, "--rgb", help="rgb container")
    _flag(p, "--dwell", type=float, help="reference dwell when --input holds rates")
    _flag(p, "--factors", type=_factors, help="comma-separated speedups, e.g. 5,20,100")
    _flag(p, "--methods", type=_methods, help=f"subset of {','.join(METHODS)}")
    _flag(p, "--atoms", type=int)
    _flag(p, "--max-outer", type=int)
    _flag(p, "--tol", type=float)
    _objective_flags(p)
    _solver_flags(p)

    p = sub.add_parser("replay", help="rerun a recorded manifest")
    p.add_argument("manifest")
    _flag(p, "--output", help="write to this directory instead of the recorded one")
    _flag(p, "--threads", type=int)
    return parser


def _load_config_file(path):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    # a manifest nests the settings under "config"
    return data.get("config", data) if "subcommand" in data else data


def resolve_config(command, flags, file_cfg=None):
    """Merge defaults, file settings and explicit flags; rejects unknown keys."""
    cfg = dict(DEFAULTS[command])
    for source in (file_cfg or {}, flags):
        unknown = set(source) - set(cfg)
        if unknown:
            raise UsageError(f"unknown settings for {command}: {sorted(unknown)}")
        cfg.update(source)
    for key in _REQUIRED.get(command, ()):
        if cfg.get(key) is None:
            raise UsageError(f"{command} needs --{key.replace('_', '-')}")
    for key in _PATH_KEYS:
        if cfg.get(key) is not None:
            cfg[key] = str(Path(cfg[key]).resolve())
    if not isinstance(cfg["threads"], int) or cfg["threads"] < 1:
        raise UsageError("threads must be a positive integer")
    return cfg


def _read(path, kind, what):
    obj = read_container(path)
    if not isinstance(obj, kind):
        raise XrfError(f"{what} {path} holds a {type(obj).__name__}, expected {kind.__name__}")
    return obj


def _objective(cfg):
    return ObjectiveConfig(lambda_tv=cfg["lambda_tv"], lambda_en=cfg["lambda_en"],
                           alpha=cfg["alpha"], beta=cfg["beta"])


def _solver(cfg):
    return SolverConfig(**{k: cfg[k] for k in _SOLVER})


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- subcommands -------------------------------------------------------------
# each takes the resolved config and the output directory and returns a dict of
# written files


def cmd_phantom(cfg, out):
    ph = make_phantom(PhantomConfig(
        height=cfg["height"], width=cfg["width"], channels=cfg["channels"],
        atoms=cfg["true_atoms"], regions=cfg["regions"], peak_rate=cfg["peak_rate"],
        rgb_correlation=cfg["rgb_correlation"], seed=cfg["seed"],
    ))
    files = {"rates": out / "rates.xrfc", "rgb": out / "rgb.xrfc",
             "dictionary": out / "dictionary.xrfc", "abundance": out / "abundance.xrfc"}
    for obj, path in zip((ph.rates, ph.rgb, ph.dictionary, ph.abundance), files.values()):
        write_container(obj, path)
    return files


def cmd_simulate(cfg, out):
    rates = _read(cfg["input"], RateVolume, "input")
    counts = simulate_scan(rates, SimConfig(cfg["dwell"], cfg["seed"]))
    path = out / "counts.xrfc"
    write_container(counts, path)
    return {"counts": path}


def cmd_init(cfg, out):
    counts = _read(cfg["input"], CountVolume, "input")
    d0, a0 = initialize(counts, cfg["atoms"], cfg["seed"], cfg["kmeans_iters"], cfg["normalize"])
    files = {"dictionary": out / "init_dictionary.xrfc", "abundance": out / "init_abundance.xrfc"}
    write_container(d0, files["dictionary"])
    write_container(a0, files["abundance"])
    return files


def cmd_denoise(cfg, out):
    counts = _read(cfg["input"], CountVolume, "input")
    rgb = _read(cfg["rgb"], RgbImage, "rgb")
    init = None
    if (cfg["init_dict"] is None) != (cfg["init_abund"] is None):
        raise UsageError("--init-dict and --init-abund must be given together")
    if cfg["init_dict"] is not None:
        init = (_read(cfg["init_dict"], Dictionary, "init-dict"),
                _read(cfg["init_abund"], Abundance, "init-abund"))
    res = denoise(counts, rgb, cfg["atoms"], cfg["seed"], _objective(cfg), _solver(cfg), init)
    files = {"rates": out / "rates.xrfc", "dictionary": out / "dictionary.xrfc",
             "abundance": out / "abundance.xrfc", "report": out / "report.json"}
    write_container(res.rates, files["rates"])
    write_container(res.dictionary, files["dictionary"])
    write_container(res.abundance, files["abundance"])
    files["report"].write_text(res.report.to_json() + "\n")
    return files


def cmd_baseline(cfg, out):
    counts = _read(cfg["input"], CountVolume, "input")
    mcr = McrConfig(atoms=cfg["atoms"], max_outer=cfg["max_outer"], tol=cfg["tol"],
                    seed=cfg["seed"], nnls=NnlsConfig())
    d, a, rates, report = mcr_als(counts, mcr)
    files = {"rates": out / "rates.xrfc", "dictionary": out / "dictionary.xrfc",
             "abundance": out / "abundance.xrfc", "report": out / "report.json"}
    write_container(rates, files["rates"])
    write_container(d, files["dictionary"])
    write_container(a, files["abundance"])
    files["report"].write_text(report.to_json() + "\n")
    return files


def write_pgm16(path, image):
    """Binary 16-bit PGM (big-endian samples), scaled so the maximum maps to 65535."""
    image = np.asarray(image, dtype=np.float64)
    peak = image.max()
    scaled = np.zeros(image.shape) if peak <= 0 else image / peak * 65535.0
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(np.rint(scaled).astype(">u2").tobytes())


def cmd_evaluate(cfg, out):
    est = _read(cfg["input"], RateVolume, "input")
    gt = _read(cfg["gt"], RateVolume, "gt")
    counts = _read(cfg["counts"], CountVolume, "counts") if cfg["counts"] else None
    bands = default_bands(gt.shape[2], cfg["bands"]) if cfg["bands"] else []
    result = evaluate(est, gt, counts, bands)
    files = {"json": out / "eval.json", "csv": out / "eval.csv"}
    files["json"].write_text(result.to_json() + "\n")
    files["csv"].write_text(result.to_csv())
    if cfg["pgm"]:
        for start, stop in bands:
            for name, vol in (("est", est), ("gt", gt)):
                path = out / f"{name}_band_{start}-{stop}.pgm"
                write_pgm16(path, band_map(vol, (start, stop)))
                files[path.stem] = path
    return files


def cmd_sweep(cfg, out):
    source = read_container(cfg["input"])
    if isinstance(source, CountVolume):
        reference = source
    elif isinstance(source, RateVolume):
        reference = simulate_scan(source, SimConfig(cfg["dwell"], cfg["seed"]))
    else:
        raise XrfError(f"sweep input must hold counts or rates, got {type(source).__name__}")
    rgb = _read(cfg["rgb"], RgbImage, "rgb")
    runs = out / "runs"
    runs.mkdir(exist_ok=True)
    mcr = McrConfig(atoms=cfg["atoms"], max_outer=cfg["max_outer"], tol=cfg["tol"], seed=cfg["seed"])

    def record(row):
        name = f"f{row.factor}_{row.method}"
        _write_json(runs / f"{name}.json", {
            "dwell": row.dwell, "factor": row.factor, "method": row.method,
            "mse": row.mse, "psnr": "inf" if row.psnr == float("inf") else row.psnr,
            "pnll": row.pnll, **row.details,
        })
        # a single-row sweep config: replaying it reproduces just this run
        single = {**cfg, "factors": [row.factor], "methods": [row.method],
                  "output": str(runs / name)}
        _write_json(runs / f"{name}.manifest.json",
                    _manifest("sweep", single, {"result": runs / f"{name}.json"}, row.seconds))

    rows = sweep(reference, rgb, cfg["factors"], cfg["seed"], cfg["atoms"], _objective(cfg),
                 _solver(cfg), mcr, cfg["methods"], on_row=record)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    path = out / "sweep.csv"
    path.write_text(buf.getvalue())
    return {"csv": path, "runs": runs}


COMMANDS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "init": cmd_init,
    "denoise": cmd_denoise,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def _manifest(command, cfg, files, seconds):
    return {
        "subcommand": command,
        "config": cfg,
        "inputs": {k: cfg[k] for k in _PATH_KEYS if k != "output" and cfg.get(k) is not None},
        "outputs": {k: str(v) for k, v in files.items()},
        "seed": cfg.get("seed"),
        "version": __version__,
        "backend": kernels.BACKEND,
        "duration_s": seconds,
    }


def run(command, cfg):
    """Execute a resolved configuration; returns the manifest it wrote."""
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    with kernels.thread_limit(cfg["threads"]):
        files = COMMANDS[command](cfg, out)
    manifest = _manifest(command, cfg, files, time.perf_counter() - start)
    _write_json(out / "manifest.json", manifest)
    return manifest


def _replay(args):
    data = json.loads(Path(args.manifest).read_text())
    command = data.get("subcommand")
    if command not in COMMANDS:
        raise UsageError(f"{args.manifest} is not a run manifest")
    overrides = {k: getattr(args, k) for k in ("output", "threads") if hasattr(args, k)}
    cfg = resolve_config(command, overrides, data["config"])
    return command, cfg


def main(argv=None) -> int:
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        if command == "replay":
            command, cfg = _replay(args)
        else:
            flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
            file_cfg = _load_config_file(args.config) if hasattr(args, "config") else None
            cfg = resolve_config(command, flags, file_cfg)
        run(command, cfg)
    except UsageError as exc:
        return _fail(command, exc, EXIT_USAGE)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
        return _fail(command, exc, EXIT_FAILURE)
    return 0


def _fail(command, exc, code):
    payload = {"error": {"type": type(exc).__name__, "message": str(exc),
                         "subcommand": command, "exit_code": code}}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
