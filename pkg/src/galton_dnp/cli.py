"""Command-line front end: ``galton-dnp <command> [options]``.

Option values come from three layers: built-in defaults, then the JSON file
given by ``--config`` (keys are option names with dashes replaced by
underscores), then explicit flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    Spectrum,
    fit_biexponential,
    fit_gaussian,
    fit_relaxation,
    gaussian_model,
    load_csv,
    short_time_rate,
)
from .checkerboard import checkerboard_from_eta, galton_board
from .engine import (
    PopulationVector,
    analytic_full_sweep,
    dp_sweep,
    hyperpolarization,
    path_sum_exits,
)
from .errors import GaltonError, NoConvergence, NumericalError, ValidationError
from .io import csv_text, json_text, sha256_file, write_json, write_manifest
from .plotting import Series, emit_plot
from .spin_model import build_levels, load_config, locate_lacs, perturbative_board
from .sweep import (
    BuildupModel,
    DosModel,
    SweepSpec,
    accumulate_buildup,
    check_seed,
    compare_directions,
    map_spectrum,
    sample_ensemble_from_dos,
)

log = logging.getLogger("galton_dnp")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON file of option values")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0,
                   help="64-bit seed for all randomness (default 0)")
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS if suppress else 1,
                   help="worker processes (default 1)")
    p.add_argument("--out", default=argparse.SUPPRESS if suppress else "out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS if suppress else "csv",
                   help="format of tabular outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="galton-dnp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("levels", help="level diagram of the electron-nuclear system")
    _global_options(p, suppress=True)
    p.add_argument("--system", required=False, help="spin-system JSON file")
    p.add_argument("--f0-min", type=float)
    p.add_argument("--f0-max", type=float)
    p.add_argument("--points", type=int, default=201)

    p = sub.add_parser("board", help="anti-crossing checkerboard of a spin system")
    _global_options(p, suppress=True)
    p.add_argument("--system", help="spin-system JSON file")
    p.add_argument("--method", choices=("exact", "perturbative"), default="exact")
    p.add_argument("--rate", type=float, default=None, help="sweep rate in MHz^2 (default: keep 1.0)")

    p = sub.add_parser("sweep", help="full sweep of a uniform Galton board")
    _global_options(p, suppress=True)
    p.add_argument("--n", type=int, default=4, help="number of nuclei")
    p.add_argument("--p", type=float, default=0.5, help="probability of moving down")
    p.add_argument("--q", type=float, default=None, help="probability of moving right (default 1-p)")
    p.add_argument("--analytic", action="store_true", help="use the closed binomial form")

    p = sub.add_parser("spectrum", help="windowed-sweep spectral map over a model DOS")
    _global_options(p, suppress=True)
    p.add_argument("--dos", choices=("gaussian", "tabulated"), default="gaussian")
    p.add_argument("--center", type=float, default=0.0)
    p.add_argument("--width", type=float, default=13.5, help="Gaussian standard deviation, MHz")
    p.add_argument("--table", help="CSV of frequency,density for a tabulated DOS")
    p.add_argument("--df", type=float, default=10.0, help="window width, MHz")
    p.add_argument("--sweep", choices=("forward", "reverse", "both"), default="forward")
    p.add_argument("--n", type=int, default=6, help="number of nuclei")
    p.add_argument("--gap", type=float, default=5.0, help="same-state gap, MHz")
    p.add_argument("--off-diagonal", type=float, default=0.3, help="relative gap of the other nodes")
    p.add_argument("--rate", type=float, default=1.0, help="sweep rate, MHz^2")
    p.add_argument("--pairs", type=int, default=4, help="board pairs in the ensemble")
    p.add_argument("--placement", choices=("quantile", "random"), default="quantile")
    p.add_argument("--f0-min", type=float, default=None)
    p.add_argument("--f0-max", type=float, default=None)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--n-sweeps", type=int, default=1)

    p = sub.add_parser("buildup", help="polarization buildup from the rate equation")
    _global_options(p, suppress=True)
    p.add_argument("--injection", type=float, default=0.1, help="injection rate r, 1/s")
    p.add_argument("--relaxation", type=float, default=1 / 30, help="relaxation rate, 1/s")
    p.add_argument("--pmax", type=float, default=1.0)
    p.add_argument("--t-max", type=float, default=120.0)
    p.add_argument("--points", type=int, default=121)

    p = sub.add_parser("fit", help="fit a model to x,y[,sigma] CSV data")
    _global_options(p, suppress=True)
    p.add_argument("--input", required=False, help="CSV file with a one-line header")
    p.add_argument("--model", choices=("gaussian", "biexponential", "relaxation", "linear"), default="gaussian")
    p.add_argument("--peaks", type=int, default=1)
    p.add_argument("--t-max", type=float, default=1.0, help="short-time cutoff for --model linear")

    p = sub.add_parser("oracle-check", help="compare the DP against path enumeration on random boards")
    _global_options(p, suppress=True)
    p.add_argument("--n", type=int, default=3, help="largest number of nuclei")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-12)
    return parser


GLOBAL_KEYS = ("seed", "jobs", "out", "format")


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise ValidationError(f"config file not found: {cfg_path}")
        try:
            cfg = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as e:
            raise ValidationError(f"config is not valid JSON: {e}") from e
        if not isinstance(cfg, dict):
            raise ValidationError("config must be a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        known = set(vars(args)) - {"command", "config"}
        extra = set(cfg) - known
        if extra:
            raise ValidationError(f"unknown config keys for '{args.command}': {sorted(extra)}")
        glob = {k: v for k, v in cfg.items() if k in GLOBAL_KEYS}
        local = {k: v for k, v in cfg.items() if k not in GLOBAL_KEYS}
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        subparser.set_defaults(**local)
        parser.set_defaults(**glob)
        args = parser.parse_args(argv)
    return args


# -- commands ----------------------------------------------------------------

def _table(out: Path, stem: str, rows, fmt: str, columns=None) -> Path:
    if fmt == "csv":
        p = out / f"{stem}.csv"
        p.write_text(csv_text(rows, columns), newline="")
    else:
        p = write_json(out / f"{stem}.json", list(rows))
    return p


def _system(args):
    if not args.system:
        raise ValidationError("--system <file> is required")
    return load_config(args.system)


def cmd_levels(args, out: Path) -> list[Path]:
    cfg = _system(args)
    lo = args.f0_min if args.f0_min is not None else cfg.offset - 3 * cfg.rabi - sum(
        n.omega0 + n.omega1 for n in cfg.nuclei)
    hi = args.f0_max if args.f0_max is not None else cfg.offset + 3 * cfg.rabi + sum(
        n.omega0 + n.omega1 for n in cfg.nuclei)
    if args.points < 1:
        raise ValidationError("--points must be positive")
    diagram = build_levels(cfg, np.linspace(lo, hi, args.points))
    files = [_table(out, "levels", diagram.rows(), args.format, ["f0", "manifold", "index", "energy"])]
    series = [Series(diagram.f0_grid, diagram.energies0[:, i], f"m_s=0 #{i + 1}" if i == 0 else "")
              for i in range(cfg.n_states)]
    series += [Series(diagram.f0_grid, diagram.energies1[:, i], "m_s=+1" if i == 0 else "")
               for i in range(cfg.n_states)]
    svg = out / "levels.svg"
    svg.write_text(emit_plot(series, {"xlabel": "f0 (MHz)", "ylabel": "energy (MHz)"}))
    return files + [svg]


def cmd_board(args, out: Path) -> list[Path]:
    cfg = _system(args)
    board = locate_lacs(cfg) if args.method == "exact" else perturbative_board(cfg)
    if args.rate is not None:
        board = board.with_sweep_rate(args.rate)
    cols = ["k", "l", "f_cross", "gap", "eta"] + ([] if board.symmetric else ["eta_h"])
    files = [_table(out, "board", board.table_rows(), args.format, cols)]
    field = dp_sweep(board, record=False)
    files.append(_table(out, "populations", field.populations.rows(), args.format,
                        ["manifold", "index", "population"]))
    sign = -1 if any(n.a_parallel < 0 for n in cfg.nuclei) else 1
    summary = {"n_states": board.n_states, "hyperpolarization": hyperpolarization(field.populations, sign),
               "degenerate_ties": board.degenerate_ties}
    files.append(write_json(out / "summary.json", summary))
    return files


def cmd_sweep(args, out: Path) -> list[Path]:
    q = 1.0 - args.p if args.q is None else args.q
    m = 2 ** args.n
    if args.analytic:
        pops = analytic_full_sweep(m, args.p, q)
    else:
        pops = dp_sweep(galton_board(m, args.p, q), record=False).populations.reset()
    files = [_table(out, "populations", pops.rows(), args.format, ["manifold", "index", "population"])]
    files.append(write_json(out / "summary.json", {
        "n_states": m, "p": args.p, "q": q, "method": "analytic" if args.analytic else "dp",
        "hyperpolarization": hyperpolarization(pops), "total": pops.total,
    }))
    svg = out / "populations.svg"
    svg.write_text(emit_plot([Series(np.arange(1, m + 1), pops.nuclear, "population", markers=True)],
                             {"xlabel": "Hamming index n", "ylabel": "population"}))
    return files + [svg]


def _dos(args) -> DosModel:
    if args.dos == "tabulated":
        if not args.table:
            raise ValidationError("--table is required for a tabulated DOS")
        x, y, _ = load_csv(args.table)
        return DosModel("tabulated", table=np.column_stack([x, y]))
    return DosModel("gaussian", args.center, args.width)


def cmd_spectrum(args, out: Path) -> list[Path]:
    dos = _dos(args)
    span = 4.5 * dos.width if dos.kind == "gaussian" else 0.0
    if dos.kind == "tabulated":
        lo_def, hi_def = dos.table[0, 0] - args.df, dos.table[-1, 0]
    else:
        lo_def, hi_def = dos.center - span - args.df, dos.center + span
    lo = lo_def if args.f0_min is None else args.f0_min
    hi = hi_def if args.f0_max is None else args.f0_max
    boards = sample_ensemble_from_dos(dos, 2 ** args.n, args.gap, args.seed, n_pairs=args.pairs,
                                      placement=args.placement, off_diagonal=args.off_diagonal,
                                      sweep_rate=args.rate)
    base = SweepSpec(lo, args.df, args.rate, "forward", args.n_sweeps)
    meta = {"seed": args.seed, "dos": dos.to_dict(), "n_nuclei": args.n, "gap": args.gap,
            "off_diagonal": args.off_diagonal, "pairs": args.pairs, "placement": args.placement}
    files = []
    maps = {}
    if args.sweep == "both":
        cmp = compare_directions(boards, (lo, hi), args.step, base, jobs=args.jobs)
        maps = {"forward": cmp["forward"], "reverse": cmp["reverse"]}
        meta.update(sign_flip=cmp["sign_flip"], max_asymmetry=cmp["max_asymmetry"],
                    center_shift=cmp["center_shift"])
    else:
        spec = base if args.sweep == "forward" else base.flipped()
        maps[args.sweep] = map_spectrum(boards, (lo, hi), args.step, spec, jobs=args.jobs)

    series = []
    fits = {}
    for direction, res in maps.items():
        stem = "spectrum" if len(maps) == 1 else f"spectrum_{direction}"
        files.append(_table(out, stem, res.rows(), args.format, ["f0", "P"]))
        series.append(Series(res.f0, res.P, f"P ({direction})", markers=True))
        try:
            fit = fit_gaussian(Spectrum(res.window_centers, res.P))
            fits[direction] = fit.to_dict()
            c = fit.params
            series.append(Series(res.f0, gaussian_model(res.window_centers, (c["amplitude"], c["center"], c["sigma"])),
                                 f"Gaussian fit ({direction})"))
        except GaltonError as e:
            fits[direction] = {"error": type(e).__name__, "message": str(e)}
    files.append(write_json(out / "spectrum_meta.json", {**meta, "spec": vars_spec(base), "fits": fits}))
    svg = out / "spectrum.svg"
    svg.write_text(emit_plot(series, {"xlabel": "window edge f0 (MHz)", "ylabel": "hyperpolarization P"}))
    return files + [svg]


def vars_spec(spec: SweepSpec) -> dict:
    return {"window_width": spec.window_width, "sweep_rate": spec.sweep_rate,
            "direction": spec.direction, "n_sweeps": spec.n_sweeps}


def cmd_buildup(args, out: Path) -> list[Path]:
    model = BuildupModel(args.injection, args.relaxation, args.pmax)
    if args.points < 2:
        raise ValidationError("--points must be at least 2")
    t = np.linspace(0.0, args.t_max, args.points)
    P = accumulate_buildup(model, t)
    files = [_table(out, "buildup", [{"t": float(a), "P": float(b)} for a, b in zip(t, P)], args.format, ["t", "P"])]
    files.append(write_json(out / "buildup_meta.json", {
        "injection_rate": model.injection_rate, "relaxation": model.relaxation, "p_max": model.p_max,
        "t1": model.t1, "steady_state": model.steady_state, "initial_slope": model.p_max * model.injection_rate,
    }))
    svg = out / "buildup.svg"
    svg.write_text(emit_plot([Series(t, P, "P(t)")], {"xlabel": "t (s)", "ylabel": "P"}))
    return files + [svg]


def cmd_fit(args, out: Path) -> list[Path]:
    if not args.input:
        raise ValidationError("--input <csv> is required")
    x, y, s = load_csv(args.input)
    if args.model == "gaussian":
        res = fit_gaussian(Spectrum(x, y, s), args.peaks)
    elif args.model == "biexponential":
        res = fit_biexponential(x, y)
    elif args.model == "relaxation":
        res = fit_relaxation(x, y)
    else:
        res = short_time_rate(x, y, args.t_max)
    if not res.converged:
        raise NoConvergence(f"{args.model} fit did not reach the gradient tolerance")
    return [write_json(out / "fit.json", res.to_dict())]


def cmd_oracle_check(args, out: Path) -> list[Path]:
    if not 1 <= args.n <= 3:
        raise ValidationError("--n must be between 1 and 3 for explicit path enumeration")
    if args.trials < 1:
        raise ValidationError("--trials must be positive")
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(args.trials):
        n = int(rng.integers(1, args.n + 1))
        m = 2 ** n
        board = checkerboard_from_eta(rng.random((m, m)))
        init = PopulationVector(rng.dirichlet(np.ones(m)), np.zeros(m))
        field = dp_sweep(board, init, record=False)
        bottom, right = path_sum_exits(board, init, method="enumerate")
        worst = max(worst, float(np.max(np.abs(field.exit_bottom - bottom))),
                    float(np.max(np.abs(field.exit_right - right))))
    report = {"trials": args.trials, "max_n": args.n, "max_abs_diff": worst, "tol": args.tol,
              "passed": worst < args.tol, "seconds": round(time.perf_counter() - t0, 3), "seed": args.seed}
    print(f"max |DP - path-sum| = {worst:.3e} over {args.trials} boards")
    files = [write_json(out / "oracle_report.json", {k: v for k, v in report.items() if k != "seconds"})]
    if not report["passed"]:
        raise NumericalError(f"DP and path-sum differ by {worst:.3e} (tolerance {args.tol:g})")
    return files


COMMANDS = {
    "levels": cmd_levels,
    "board": cmd_board,
    "sweep": cmd_sweep,
    "spectrum": cmd_spectrum,
    "buildup": cmd_buildup,
    "fit": cmd_fit,
    "oracle-check": cmd_oracle_check,
}


def _input_hashes(args) -> dict:
    out = {}
    for key in ("config", "system", "input", "table"):
        v = getattr(args, key, None)
        if v and Path(v).is_file():
            out[key] = sha256_file(v)
    return out


def run(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = check_seed(args.seed)
    if args.jobs < 1:
        raise ValidationError("--jobs must be at least 1")
    files = COMMANDS[args.command](args, out)
    inputs = {k: v for k, v in sorted(vars(args).items()) if k not in ("out",)}
    inputs["file_hashes"] = _input_hashes(args)
    write_manifest(out, args.command, inputs, seed, files)
    return 0


def _emit_error(err: Exception, code: int, out: str | None) -> int:
    payload = {"error": type(err).__name__, "message": str(err), "exit_code": code}
    sys.stderr.write(json_text(payload))
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            write_json(Path(out) / "error.json", payload)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    level = os.environ.get("GALTON_DNP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    out = None
    try:
        args = parse_args(argv)
        out = args.out
        return run(args)
    except (ValidationError, FileNotFoundError, ValueError) as e:
        return _emit_error(e, 1, out)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as e:
        return _emit_error(e, 2, out)


if __name__ == "__main__":
    sys.exit(main())
