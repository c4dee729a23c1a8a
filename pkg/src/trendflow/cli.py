"""Command-line front end: ``trendflow {fit,evaluate,compare,portrait,trending,predict}``.

Options come from three layers, highest first: command-line flags, an
optional JSON ``--config`` file, built-in defaults. The merged settings are
copied into the provenance block of every JSON file a command writes.

Exit status: 0 success, 1 usage error (bad flag or value, missing file,
unreadable config), 2 computation error (bad data, schema mismatch, a fit
or integration that fails).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import field as fieldmod
from . import forecast as ev
from ._io import dump_json, write_atomic
from .export import export_portrait
from .field import Domain, PolyVectorField
from .fit import ds_fit_fn, ds_predict_fn, fit_frame, pick_best, select_degree
from .integrate import DEFAULT_H, HORIZON, advance
from .portrait import trending_check, working_box
from .series import SeriesFrame, load_csv, normalize_by_exogenous, rescale, split
from .var import select_lag, var_fit_fn, var_predict

log = logging.getLogger("trendflow")

TIE_RTOL = 1e-6
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    """Bad invocation; reported with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would print usage and exit with 2
        raise UsageError(f"{message} (see '{self.prog} --help')")


# -- defaults per subcommand -------------------------------------------------

_DATA_DEFAULTS = {
    "input": None,
    "columns": None,
    "time_column": None,
    "dt": 1.0,
    "divide_by": None,
    "adjust_by": None,
    "scale": "max",
}

DEFAULTS = {
    "fit": {
        **_DATA_DEFAULTS,
        "degree": "auto",
        "degrees": "1..5",
        "basis": "full",
        "ridge": 0.0,
        "test_len": ev.DEFAULT_TEST_LEN,
        "h": DEFAULT_H,
        "domain": "positive",
        "out": None,
    },
    "evaluate": {
        **_DATA_DEFAULTS,
        "model": "ds",
        "degree": "4",
        "degrees": "1..5",
        "basis": "full",
        "ridge": 0.0,
        "baseline": "var",
        "lag": "auto",
        "lags": "1..4",
        "test_len": ev.DEFAULT_TEST_LEN,
        "h": DEFAULT_H,
        "report_dir": None,
        "table": None,
    },
    "compare": {"reports": None, "out": None},
    "portrait": {
        "model": None,
        "box": None,
        "grid": 20,
        "out": None,
        "svg": None,
        "trending_grid": None,
        "no_trending": False,
        "trajectory_horizon": 50.0,
    },
    "trending": {
        "model": None,
        "box": None,
        "grid": 21,
        "horizon": HORIZON,
        "interior_only": False,
        "out": None,
    },
    "predict": {
        "model": None,
        "input": None,
        "start": None,
        "columns": None,
        "time_column": None,
        "steps": 1,
        "dt": None,
        "h": DEFAULT_H,
        "out": None,
    },
}

_PATH_KEYS = {"input", "out", "svg", "report_dir", "table", "model", "reports"}


# -- value parsing -----------------------------------------------------------


def parse_range(text: str) -> list[int]:
    """``"1..5"`` or ``"1,2,4"`` into a list of ints."""
    text = str(text).strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad range {text!r}; use e.g. 1..5 or 1,2,3") from None


def parse_floats(text, what: str) -> list[float]:
    if isinstance(text, (list, tuple)):
        vals = text
    else:
        vals = str(text).split(",")
    try:
        return [float(v) for v in vals]
    except ValueError:
        raise UsageError(f"bad {what} {text!r}; expected comma-separated numbers") from None


def parse_box(text, n: int) -> Domain:
    vals = parse_floats(text, "--box")
    if len(vals) != 2 * n:
        raise UsageError(f"--box needs {2 * n} numbers (lo,hi per axis) for a {n}-variable model, got {len(vals)}")
    try:
        return Domain.box(vals)
    except ValueError as exc:
        raise UsageError(f"bad --box: {exc}") from None


def _int_or_auto(value, flag: str):
    if str(value) == "auto":
        return "auto"
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise UsageError(f"{flag} must be a positive integer or 'auto', got {value!r}") from None
    if v < 1:
        raise UsageError(f"{flag} must be >= 1, got {v}")
    return v


def _positive(value, flag: str, kind=float):
    try:
        v = kind(value)
    except (TypeError, ValueError):
        raise UsageError(f"{flag} must be a number, got {value!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise UsageError(f"{flag} must be positive, got {value!r}")
    return v


def _existing(path, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: file not found: {p}")
    return p


# -- config merging ----------------------------------------------------------


def load_config(path: str | None, command: str) -> dict:
    """Read the optional JSON config. Either a flat object of option names or
    one keyed by subcommand (``{"fit": {...}}``); keys use underscores."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"--config: file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config: cannot read {p}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("--config must hold a JSON object")
    if any(k in DEFAULTS for k in doc):
        doc = doc.get(command, {})
        if not isinstance(doc, dict):
            raise UsageError(f"--config section {command!r} must be an object")
    known = DEFAULTS[command]
    unknown = sorted(k for k in doc if k.replace("-", "_") not in known)
    if unknown:
        raise UsageError(f"--config: unknown option(s) for {command}: {', '.join(unknown)}")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def effective_settings(command: str, given: dict, config: dict) -> dict:
    return {**DEFAULTS[command], **config, **given}


def _provenance(command: str, settings: dict) -> dict:
    return {
        "tool": f"trendflow {__version__}",
        "command": command,
        "config": {k: settings[k] for k in sorted(settings)},
    }


# -- shared pipeline pieces --------------------------------------------------


def _columns(value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    return [c.strip() for c in str(value).split(",") if c.strip()]


def load_series(s: dict) -> SeriesFrame:
    """Load, optionally normalize by exogenous columns, then rescale."""
    path = _existing(s["input"], "--input")
    dt = _positive(s["dt"], "--dt")
    cols = _columns(s["columns"])
    exo_cols = [c for c in (s.get("divide_by"), s.get("adjust_by")) if c]
    frame = load_csv(path, cols, time_column=s["time_column"], dt=dt)
    if exo_cols:
        if cols is None:
            keep = [v for v in frame.variable_names if v not in exo_cols]
            frame = load_csv(path, keep, time_column=s["time_column"], dt=dt)
        div = adj = None
        if s.get("divide_by"):
            d = load_csv(path, [s["divide_by"]], time_column=s["time_column"], dt=dt)
            div = {v: d for v in frame.variable_names}
        if s.get("adjust_by"):
            a = load_csv(path, [s["adjust_by"]], time_column=s["time_column"], dt=dt)
            adj = {v: a for v in frame.variable_names}
        frame = normalize_by_exogenous(frame, div, adj)
    scale = s["scale"]
    if scale not in ("max", "none"):
        scale = parse_floats(scale, "--scale")
    return rescale(frame, scale)


def _fit_kw(s: dict) -> dict:
    if s["basis"] not in fieldmod.BASIS_MODES:
        raise UsageError(f"--basis must be one of {', '.join(fieldmod.BASIS_MODES)}")
    ridge = float(s["ridge"])
    if not (math.isfinite(ridge) and ridge >= 0):
        raise UsageError("--ridge must be a nonnegative number")
    return {"basis_mode": s["basis"], "ridge": ridge}


def _selection_table(label: str, rows) -> str:
    lines = [f"{label:>6} | total error", "-------+------------"]
    for r in rows:
        lines.append(f"{r.key:>6} | " + (f"{r.total:.6g}" if r.total is not None else f"failed: {r.error}"))
    return "\n".join(lines) + "\n"


def _load_model(path) -> PolyVectorField:
    p = _existing(path, "--model")
    try:
        return fieldmod.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise fieldmod.ModelError(f"{p}: not valid JSON ({exc})") from None


# -- subcommands -------------------------------------------------------------


def cmd_fit(s: dict, out) -> None:
    frame = load_series(s)
    kw = _fit_kw(s)
    degree = _int_or_auto(s["degree"], "--degree")
    h = _positive(s["h"], "--h")
    domain = s["domain"]
    if domain == "positive":
        dom = Domain.positive_orthant(frame.n)
    else:
        dom = parse_box(domain, frame.n)
    if degree == "auto":
        test_len = _positive(s["test_len"], "--test-len", int)
        model, rows = select_degree(frame, parse_range(s["degrees"]), test_len, h=h, domain=dom, **kw)
        out.write(_selection_table("degree", rows))
        out.write(f"selected degree {model.degree}\n")
    else:
        model = fit_frame(frame, degree, domain=dom, **kw)
    prov = dict(model.provenance)
    prov["series"] = {"origin": frame.origin_label, "rows": frame.T, "dt": format(frame.dt, ".17g")}
    prov.update(_provenance("fit", s))
    model = model.replace(provenance=prov)
    if s["out"]:
        write_atomic(s["out"], fieldmod.dumps(model))
        log.info("wrote %s", s["out"])
    else:
        out.write(fieldmod.dumps(model))


def _report_name(descriptor: str) -> str:
    return "".join(ch for ch in descriptor.lower() if ch.isalnum()) + ".json"


def cmd_evaluate(s: dict, out) -> None:
    frame = load_series(s)
    kw = _fit_kw(s)
    test_len = _positive(s["test_len"], "--test-len", int)
    h = _positive(s["h"], "--h")
    prov = _provenance("evaluate", s)
    train, _ = split(frame, test_len)

    specs = []
    for role in ("model", "baseline"):
        kind = s[role]
        if kind in (None, "none"):
            continue
        if kind not in ("ds", "var", "persistence"):
            raise UsageError(f"--{role} must be ds, var or persistence, got {kind!r}")
        specs.append(kind)
    if not specs:
        raise UsageError("nothing to evaluate")

    reports = []
    for kind in specs:
        if kind == "ds":
            degree = _int_or_auto(s["degree"], "--degree")
            if degree == "auto":
                model, rows = select_degree(train, parse_range(s["degrees"]), test_len, h=h, **kw)
                out.write(_selection_table("degree", rows))
                degree = model.degree
            rep = ev.walk_forward(frame, test_len, ds_fit_fn(degree, **kw), ds_predict_fn(h),
                                  descriptor=f"DS({degree})", meta=prov)
        elif kind == "var":
            lag = _int_or_auto(s["lag"], "--lag")
            if lag == "auto":
                _, rows = select_lag(train, parse_range(s["lags"]), test_len)
                out.write(_selection_table("lag", rows))
                lag = pick_best(rows, TIE_RTOL).key
            rep = ev.walk_forward(frame, test_len, var_fit_fn(lag), var_predict, descriptor=f"VAR({lag})", meta=prov)
        else:
            rep = ev.walk_forward(frame, test_len, lambda f: None, ev.persistence_predict,
                                  descriptor="persistence", meta=prov)
        reports.append(rep)

    table = ev.compare(reports)
    out.write(table.to_text())
    if s["report_dir"]:
        for rep in reports:
            path = Path(s["report_dir"]) / _report_name(rep.descriptor)
            write_atomic(path, rep.dumps())
            log.info("wrote %s", path)
    if s["table"]:
        write_atomic(s["table"], table.to_csv())


def cmd_compare(s: dict, out) -> None:
    paths = s["reports"]
    if not paths:
        raise UsageError("compare needs at least one --reports file")
    reports = []
    for p in paths:
        path = _existing(p, "--reports")
        try:
            reports.append(ev.EvalReport.from_dict(json.loads(path.read_text(encoding="utf-8"))))
        except json.JSONDecodeError as exc:
            raise ev.EvalError(f"{path}: not valid JSON ({exc})") from None
    table = ev.compare(reports)
    out.write(table.to_text())
    if s["out"]:
        write_atomic(s["out"], table.to_csv())


def _analysis_box(model: PolyVectorField, box_text) -> Domain:
    return parse_box(box_text, model.n) if box_text is not None else working_box(model)


def cmd_portrait(s: dict, out) -> None:
    model = _load_model(s["model"])
    box = _analysis_box(model, s["box"])
    grid = _positive(s["grid"], "--grid", int)
    tgrid = None if s["trending_grid"] is None else _positive(s["trending_grid"], "--trending-grid", int)
    horizon = _positive(s["trajectory_horizon"], "--trajectory-horizon")
    doc, svg, notices = export_portrait(
        model, box, grid, trending=not s["no_trending"], trending_grid=tgrid,
        trajectory_horizon=horizon, model_ref=Path(s["model"]).name,
    )
    doc["provenance"] = _provenance("portrait", s)
    for msg in notices:
        out.write(msg + "\n")
    out.write(f"{len(doc['fixed_points'])} fixed point(s) in the box\n")
    for k, fp in enumerate(doc["fixed_points"]):
        out.write(f"  {k}: {fp['class']} at ({', '.join(f'{float(v):.6g}' for v in fp['location'])})\n")
    text = dump_json(doc)
    if s["out"]:
        write_atomic(s["out"], text)
    else:
        out.write(text)
    if s["svg"]:
        if svg is None:
            out.write(f"no SVG written to {s['svg']}\n")
        else:
            write_atomic(s["svg"], svg)


def cmd_trending(s: dict, out) -> None:
    model = _load_model(s["model"])
    box = _analysis_box(model, s["box"])
    grid = _positive(s["grid"], "--grid", int)
    horizon = _positive(s["horizon"], "--horizon")
    rep = trending_check(model, box, grid, horizon, interior_only=bool(s["interior_only"]))
    c = rep.counts
    out.write(f"converged: {c['converged']}, escaped: {c['escaped']}, undecided: {c['undecided']}, {rep.verdict}\n")
    for note in rep.notes:
        out.write(note + "\n")
    if s["out"]:
        doc = rep.to_dict()
        doc["provenance"] = _provenance("trending", s)
        write_atomic(s["out"], dump_json(doc))


def cmd_predict(s: dict, out) -> None:
    model = _load_model(s["model"])
    scaling = model.scaling
    steps = _positive(s["steps"], "--steps", int)
    h = _positive(s["h"], "--h")
    dt = s["dt"]
    if dt is None:
        dt = model.provenance.get("series", {}).get("dt", 1.0) if isinstance(model.provenance, dict) else 1.0
    dt = _positive(dt, "--dt")
    if (s["start"] is None) == (s["input"] is None):
        raise UsageError("predict needs exactly one of --start or --input")
    if s["start"] is not None:
        raw = np.array(parse_floats(s["start"], "--start"))
        if raw.shape != (model.n,):
            raise UsageError(f"--start needs {model.n} values, got {raw.size}")
    else:
        cols = _columns(s["columns"]) or list(model.names)
        frame = load_csv(_existing(s["input"], "--input"), cols, time_column=s["time_column"], dt=dt)
        raw = frame.values[-1]
    x = scaling.to_scaled(raw) if scaling is not None else raw.astype(float)
    rows = [x]
    for _ in range(steps):
        x = advance(model, x, dt, h)
        rows.append(x)
    scaled = np.array(rows)
    raw_rows = scaling.to_raw(scaled) if scaling is not None else scaled
    names = model.names
    header = ["step", "time", *(f"{v}_scaled" for v in names), *(f"{v}_raw" for v in names)]
    lines = [",".join(header)]
    for k, (a, b) in enumerate(zip(scaled, raw_rows)):
        lines.append(",".join([str(k), format(k * dt, ".17g"), *(format(v, ".17g") for v in (*a, *b))]))
    text = "\n".join(lines) + "\n"
    if s["out"]:
        write_atomic(s["out"], text)
    else:
        out.write(text)


COMMANDS = {
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "portrait": cmd_portrait,
    "trending": cmd_trending,
    "predict": cmd_predict,
}


# -- parser ------------------------------------------------------------------


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="CSV file with a header row")
    p.add_argument("--columns", help="comma-separated columns to model (default: all but the time column)")
    p.add_argument("--time-column", help="label column (auto-detected when named time/date/month/t)")
    p.add_argument("--dt", help="sampling interval (default 1)")
    p.add_argument("--divide-by", help="column every variable is divided by, e.g. a population series")
    p.add_argument("--adjust-by", help="column whose growth factor a(t)/a(0) every variable is divided by")
    p.add_argument("--scale", help="max (default), none, or comma-separated factors")


def build_parser() -> argparse.ArgumentParser:
    sup = argparse.SUPPRESS
    parser = _Parser(prog="trendflow", description=__doc__.split("\n")[0], argument_default=sup)
    parser.add_argument("--version", action="version", version=f"trendflow {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, description=help_, argument_default=sup)
        p.add_argument("--config", help="JSON file of option defaults (flags override it)")
        return p

    p = add("fit", "fit a polynomial vector field to a series and write model.json")
    _data_flags(p)
    p.add_argument("--degree", help="polynomial degree or 'auto' (default)")
    p.add_argument("--degrees", help="candidate degrees for auto, e.g. 1..5")
    p.add_argument("--basis", help="full (default) or separable")
    p.add_argument("--ridge", help="ridge penalty (default 0)")
    p.add_argument("--test-len", help="walk-forward window for degree selection (default 24)")
    p.add_argument("--h", help="RK4 step (default 0.01)")
    p.add_argument("--domain", help="'positive' (default) or a box lo1,hi1,lo2,hi2,...")
    p.add_argument("--out", help="model file (default: stdout)")

    p = add("evaluate", "walk-forward one-step evaluation against a baseline")
    _data_flags(p)
    p.add_argument("--model", help="ds (default), var or persistence")
    p.add_argument("--degree", help="DS degree or 'auto' (default 4)")
    p.add_argument("--degrees", help="candidate degrees for auto")
    p.add_argument("--basis", help="full (default) or separable")
    p.add_argument("--ridge", help="ridge penalty (default 0)")
    p.add_argument("--baseline", help="var (default), persistence or none")
    p.add_argument("--lag", help="VAR lag or 'auto' (default)")
    p.add_argument("--lags", help="candidate lags for auto (default 1..4)")
    p.add_argument("--test-len", help="number of one-step forecasts (default 24)")
    p.add_argument("--h", help="RK4 step (default 0.01)")
    p.add_argument("--report-dir", help="directory for one eval report JSON per model")
    p.add_argument("--table", help="CSV copy of the comparison table")

    p = add("compare", "tabulate saved evaluation reports")
    p.add_argument("--reports", nargs="+", help="eval report JSON files")
    p.add_argument("--out", help="CSV copy of the table")

    p = add("portrait", "fixed points, nullclines, separatrices and trajectories as JSON and SVG")
    p.add_argument("--model", help="model JSON")
    p.add_argument("--box", help="lo1,hi1,lo2,hi2,... (default: working box)")
    p.add_argument("--grid", help="field samples per axis (default 20)")
    p.add_argument("--out", help="portrait JSON (default: stdout)")
    p.add_argument("--svg", help="SVG figure path")
    p.add_argument("--trending-grid", help="grid for the embedded trending sweep")
    p.add_argument("--no-trending", action="store_true", help="skip the trending sweep")
    p.add_argument("--trajectory-horizon", help="time span of drawn trajectories (default 50)")

    p = add("trending", "integrate a grid of starts and report converged/escaped/undecided")
    p.add_argument("--model", help="model JSON")
    p.add_argument("--box", help="lo1,hi1,lo2,hi2,... (default: working box)")
    p.add_argument("--grid", help="samples per axis (default 21)")
    p.add_argument("--horizon", help="integration horizon (default 500)")
    p.add_argument("--interior-only", action="store_true", help="drop grid nodes on the box faces")
    p.add_argument("--out", help="trending report JSON")

    p = add("predict", "forecast from a state with a fitted model, in scaled and raw units")
    p.add_argument("--model", help="model JSON")
    p.add_argument("--input", help="CSV whose last row (raw units) is the start state")
    p.add_argument("--columns", help="columns of --input to read (default: model variables)")
    p.add_argument("--time-column", help="label column of --input")
    p.add_argument("--start", help="start state in raw units, comma-separated")
    p.add_argument("--steps", help="number of sampling intervals to forecast (default 1)")
    p.add_argument("--dt", help="sampling interval (default: the one recorded at fit time)")
    p.add_argument("--h", help="RK4 step (default 0.01)")
    p.add_argument("--out", help="CSV path (default: stdout)")
    return parser


def _setup_logging() -> None:
    # unset: warnings are shown; "quiet" silences them as well
    level_name = os.environ.get("TRENDFLOW_LOG", "").strip().lower()
    if level_name and level_name not in LOG_LEVELS:
        raise UsageError(f"TRENDFLOW_LOG must be one of {', '.join(LOG_LEVELS)}, got {level_name!r}")
    logging.basicConfig(level=LOG_LEVELS.get(level_name, logging.WARNING), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    if level_name == "quiet":
        warnings.simplefilter("ignore")


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        _setup_logging()
        ns = vars(parser.parse_args(argv))
        command = ns.pop("command")
        config = load_config(ns.pop("config", None), command)
        settings = effective_settings(command, ns, config)
        for key in _PATH_KEYS & settings.keys():
            if isinstance(settings[key], Path):
                settings[key] = str(settings[key])
        COMMANDS[command](settings, out)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"trendflow: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"trendflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
