"""Command-line front end for the access-protocol laboratory.

One executable, ten subcommands: point evaluations (analytic, approx),
Monte Carlo runs (simulate, delay, sweep), the canned reproduction
recipes (table1, fig4, fig5), the interference-cancellation complexity
bench (iic-bench) and the set-difference identity self-test (check-eq2).
Output is data (CSV or JSON), never images; an optional --gnuplot-script
flag writes a plotting script next to the figure CSVs.

Every command is deterministic for a fixed --seed: rerunning writes
byte-identical files.  Exit codes: 0 success, 2 parameter error,
3 resource budget exceeded, 4 check failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys

import numpy as np

from .analytics import (
    DEFAULT_TERM_BUDGET,
    ENGINE_APPROX,
    ENGINE_EXACT,
    ENGINE_FLOAT,
    access_probability,
    approx_access_probability,
    message_delay,
    resolve_rb_count,
)
from .branching import build_near_exclusive_map, run_generic_iic
from .combinatorics import (
    FiniteEventSpace,
    set_difference_probability_lhs,
    set_difference_probability_rhs,
)
from .core import (
    IC_MODES,
    IC_PRECISE,
    SCHEME_NO_RS,
    SCHEME_RS,
    SCHEMES,
    SELECTIONS,
    SystemConfig,
    generate_access_map,
)
from .errors import ResourceBudgetError
from .montecarlo import (
    CSV_COLUMNS,
    derive_seed,
    estimate_access_probability,
    estimate_message_delay,
    sweep,
)
from .reference import (
    APPROX_DEV_FACTOR,
    FIG4_GAMMAS,
    FIG4_KS,
    FIG4_N,
    FIG4_Q,
    FIG5_GAMMAS,
    FIG5_KS,
    FIG5_M,
    FIG5_N,
    FIG5_QS,
    MODEL_DEV_LIMIT_PCT,
    SIM_TOLERANCE_PP,
    TABLE_CELLS,
    rb_count_for,
)

DEFAULT_SEED = 1
TABLE1_TRIALS = 10**6
FIGURE_TRIALS = 2 * 10**5


class ParameterError(Exception):
    """Bad or missing command parameter; maps to exit code 2."""


# ---------------------------------------------------------------------------
# parameter plumbing


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"not a boolean: {text!r}")


def _int_list(text):
    return tuple(int(x) for x in str(text).split(","))


def _float_list(text):
    return tuple(float(x) for x in str(text).split(","))


def _str_list(text):
    return tuple(s.strip() for s in str(text).split(","))


def read_config_file(path) -> dict:
    """Flat `key = value` manifest; '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(
                    f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args, schema):
    """Merge flag values, config-file values and defaults.

    schema: name -> (converter, default); a default of REQUIRED marks a
    mandatory parameter.  Flags win over the config file; unknown config
    keys are rejected so typos cannot silently change an experiment.
    """
    config = read_config_file(args.config) if args.config else {}
    unknown = set(config) - set(schema)
    if unknown:
        raise ParameterError(
            f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for name, (conv, default) in schema.items():
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            out[name] = flag_value
        elif name in config:
            try:
                out[name] = conv(config[name])
            except ParameterError:
                raise
            except (TypeError, ValueError) as exc:
                raise ParameterError(f"config key {name}: {exc}") from exc
        elif default is REQUIRED:
            raise ParameterError(f"missing required parameter: {name}")
        else:
            out[name] = default
    return out


REQUIRED = object()

_COMMON = {
    "seed": (int, DEFAULT_SEED),
    "threads": (int, 1),
}


def _common_post(params):
    if params["seed"] < 0:
        raise ParameterError("seed must be a non-negative integer")
    if params["threads"] < 1:
        raise ParameterError("threads must be >= 1")


def _build_config(params) -> SystemConfig:
    """SystemConfig from r-or-gamma style parameters."""
    r = params.get("r")
    gamma = params.get("gamma")
    n = params["n"]
    meta = {}
    if r is None and gamma is None:
        raise ParameterError("one of r or gamma is required")
    if r is not None and gamma is not None:
        raise ParameterError("give either r or gamma, not both")
    if r is None:
        r, meta = resolve_rb_count(n, gamma, params.get("rb_rounding", "nearest"))
    try:
        cfg = SystemConfig(
            r=r, n=n, k=params.get("k", 1), q=params.get("q", 1),
            alpha=params.get("alpha", 2), beta=params.get("beta", 1),
            m=params.get("m"), scheme=params.get("scheme", SCHEME_RS),
            ic=params.get("ic", "none"),
            selection=params.get("selection", "uniform-stf"))
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    return cfg, meta


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj):
    return json.dumps(obj, indent=2) + "\n"


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return x


def _report_row_dict(report):
    row = report.to_csv_row()
    out = dict(zip(CSV_COLUMNS, row))
    out["p_hat"] = report.p_hat
    out["ci95"] = report.ci95
    out["mean_delay"] = report.mean_delay
    out["gamma"] = report.config.gamma
    return out


# ---------------------------------------------------------------------------
# point evaluations


def _cmd_analytic(args):
    schema = dict(_COMMON)
    schema.update({
        "r": (int, None), "gamma": (float, None), "n": (int, REQUIRED),
        "k": (int, 1), "q": (int, 1),
        "engine": (str, ENGINE_EXACT),
        "budget_terms": (int, DEFAULT_TERM_BUDGET),
        "rb_rounding": (str, "nearest"),
        "format": (str, "json"), "out": (str, None),
    })
    p = _resolve(args, schema)
    _common_post(p)
    if p["engine"] not in (ENGINE_EXACT, ENGINE_FLOAT, ENGINE_APPROX):
        raise ParameterError(f"unknown engine {p['engine']!r}")
    try:
        if p["engine"] == ENGINE_APPROX and p["gamma"] is not None:
            # scale-free engine: honor the requested load exactly
            result = approx_access_probability(p["gamma"], p["k"], p["q"])
        else:
            cfg, meta = _build_config(p)
            result = access_probability(
                cfg.r, cfg.n, cfg.k, cfg.q, engine=p["engine"],
                budget=p["budget_terms"], metadata=meta)
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    doc = result.to_json_dict()
    if p["format"] == "json":
        _emit(_json_text(doc), p["out"])
    elif p["format"] == "csv":
        header = ["engine", "R", "N", "K", "Q", "gamma", "p_d1", "p_d2",
                  "total", "term_count", "warnings"]
        row = [doc[h] if h != "warnings" else ";".join(doc["warnings"])
               for h in header]
        row[5] = _fmt(doc["gamma"])
        _emit(_csv_text(header, [row]), p["out"])
    else:
        raise ParameterError(f"unknown format {p['format']!r}")
    return 0


def _cmd_approx(args):
    schema = dict(_COMMON)
    schema.update({
        "gamma": (float, REQUIRED), "k": (int, 1), "q": (int, 1),
        "format": (str, "json"), "out": (str, None),
    })
    p = _resolve(args, schema)
    _common_post(p)
    if p["gamma"] < 0:
        raise ParameterError("gamma must be non-negative")
    result = approx_access_probability(p["gamma"], p["k"], p["q"])
    doc = result.to_json_dict()
    doc["gamma"] = p["gamma"]
    if p["format"] == "json":
        _emit(_json_text(doc), p["out"])
    elif p["format"] == "csv":
        header = ["engine", "gamma", "K", "Q", "p_d1", "p_d2", "total"]
        row = [doc["engine"], _fmt(p["gamma"]), p["k"], p["q"],
               doc["p_d1"], doc["p_d2"], doc["total"]]
        _emit(_csv_text(header, [row]), p["out"])
    else:
        raise ParameterError(f"unknown format {p['format']!r}")
    return 0


# ---------------------------------------------------------------------------
# Monte Carlo commands


_SIM_SCHEMA = {
    "r": (int, None), "gamma": (float, None), "n": (int, REQUIRED),
    "k": (int, 1), "q": (int, 1), "alpha": (int, 2), "beta": (int, 1),
    "scheme": (str, SCHEME_RS), "selection": (str, "uniform-stf"),
    "rb_rounding": (str, "nearest"),
    "trials": (int, 10**5), "estimator": (str, "pooled"),
    "format": (str, "csv"), "out": (str, None),
}


def _cmd_simulate(args):
    schema = dict(_COMMON)
    schema.update(_SIM_SCHEMA)
    p = _resolve(args, schema)
    _common_post(p)
    cfg, _ = _build_config(p)
    try:
        report = estimate_access_probability(
            cfg, p["trials"], p["seed"], estimator=p["estimator"])
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    if p["format"] == "csv":
        _emit(_csv_text(CSV_COLUMNS, [report.to_csv_row()]), p["out"])
    elif p["format"] == "json":
        _emit(_json_text(_report_row_dict(report)), p["out"])
    else:
        raise ParameterError(f"unknown format {p['format']!r}")
    return 0


def _cmd_delay(args):
    schema = dict(_COMMON)
    schema.update(_SIM_SCHEMA)
    schema["m"] = (int, REQUIRED)
    schema["trials"] = (int, 10**4)
    del schema["estimator"]  # the delay path is tagged by construction
    p = _resolve(args, schema)
    _common_post(p)
    cfg, _ = _build_config(p)
    try:
        report = estimate_message_delay(cfg, p["trials"], p["seed"])
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    if p["format"] == "csv":
        _emit(_csv_text(CSV_COLUMNS, [report.to_csv_row()]), p["out"])
    elif p["format"] == "json":
        _emit(_json_text(_report_row_dict(report)), p["out"])
    else:
        raise ParameterError(f"unknown format {p['format']!r}")
    return 0


def _cmd_sweep(args):
    schema = dict(_COMMON)
    schema.update({
        "r": (_int_list, None), "gamma": (_float_list, None),
        "n": (_int_list, REQUIRED), "k": (_int_list, (1,)),
        "q": (_int_list, (1,)), "alpha": (_int_list, (2,)),
        "beta": (_int_list, (1,)), "scheme": (_str_list, (SCHEME_RS,)),
        "selection": (_str_list, ("uniform-stf",)),
        "rb_rounding": (str, "nearest"),
        "trials": (int, 10**5), "estimator": (str, "pooled"),
        "format": (str, "csv"), "out": (str, None),
    })
    p = _resolve(args, schema)
    _common_post(p)
    if p["r"] is None and p["gamma"] is None:
        raise ParameterError("one of r or gamma is required")
    if p["r"] is not None and p["gamma"] is not None:
        raise ParameterError("give either r or gamma, not both")
    for scheme in p["scheme"]:
        if scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {scheme!r}")
    for sel in p["selection"]:
        if sel not in SELECTIONS:
            raise ParameterError(f"unknown selection {sel!r}")
    loads = p["r"] if p["r"] is not None else p["gamma"]
    configs = []
    # documented grid order: load, n, k, q, alpha, beta, scheme, selection
    for load, n, k, q, alpha, beta, scheme, sel in itertools.product(
            loads, p["n"], p["k"], p["q"], p["alpha"], p["beta"],
            p["scheme"], p["selection"]):
        if p["r"] is not None:
            r = load
        else:
            r, _ = resolve_rb_count(n, load, p["rb_rounding"])
        try:
            configs.append(SystemConfig(
                r=r, n=n, k=k, q=q, alpha=alpha, beta=beta,
                scheme=scheme, selection=sel))
        except ValueError as exc:
            raise ParameterError(str(exc)) from exc
    try:
        reports = sweep(configs, p["trials"], p["seed"],
                        estimator=p["estimator"])
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    if p["format"] == "csv":
        _emit(_csv_text(CSV_COLUMNS, [r.to_csv_row() for r in reports]),
              p["out"])
    elif p["format"] == "json":
        _emit(_json_text([_report_row_dict(r) for r in reports]), p["out"])
    else:
        raise ParameterError(f"unknown format {p['format']!r}")
    return 0


# ---------------------------------------------------------------------------
# reproduction recipes


def _table1_rows(trials, seed, budget):
    """One row per baseline cell, published-table column layout.

    Deviation columns are against this run's own simulation, as the
    baseline's caption defines them; the approximation is evaluated at
    the realized load n/r of the simulated system.
    """
    rows = []
    for cell in TABLE_CELLS:
        r = cell.r
        realized = cell.n / r
        cell_seed = derive_seed(seed, "table1", cell.q, cell.k,
                                f"{cell.gamma:.4g}", cell.n)
        cfg = SystemConfig(r=r, n=cell.n, k=cell.k, q=cell.q,
                           alpha=2, beta=1, scheme=SCHEME_RS)
        report = estimate_access_probability(cfg, trials, cell_seed)
        p_sim = report.p_hat * 100.0
        approx_only = False
        p_model = None
        try:
            exact = access_probability(r, cell.n, cell.k, cell.q,
                                        budget=budget)
            p_model = exact.total.as_float() * 100.0
        except ResourceBudgetError:
            approx_only = True
        p_approx = float(
            approx_access_probability(realized, cell.k, cell.q)
            .total.value) * 100.0
        dev_model = (abs(p_model - p_sim) / p_sim * 100.0
                     if p_model is not None and p_sim > 0 else None)
        dev_approx = abs(p_approx - p_sim) / p_sim * 100.0 if p_sim > 0 else None
        rows.append({
            "Q": cell.q, "K": cell.k, "gamma": cell.gamma, "N": cell.n,
            "R": r, "trials": trials, "seed": cell_seed,
            "p_sim_pct": p_sim, "p_model_pct": p_model,
            "p_approx_pct": p_approx, "ana_pct": dev_model,
            "app_pct": dev_approx, "approx_only": int(approx_only),
            "cell": cell,
        })
    return rows


def _check_table1(rows):
    """Compare a table run against the frozen baselines; returns failures."""
    lines = []
    failures = 0
    for row in rows:
        cell = row["cell"]
        checks = []
        tol_pp = SIM_TOLERANCE_PP[cell.n]
        d_sim = abs(row["p_sim_pct"] - cell.sim_pct)
        checks.append((f"sim {row['p_sim_pct']:.4f} ref {cell.sim_pct:.4f} "
                       f"|d|={d_sim:.4f}pp (<={tol_pp})", d_sim <= tol_pp))
        if cell.n in (100, 250):
            if row["p_model_pct"] is None:
                checks.append(("model skipped (budget)", False))
            else:
                d_model = (abs(row["p_model_pct"] - cell.sim_pct)
                           / cell.sim_pct * 100.0)
                checks.append((f"model dev {d_model:.4f}% "
                               f"(<={MODEL_DEV_LIMIT_PCT})",
                               d_model <= MODEL_DEV_LIMIT_PCT))
        d_app = abs(row["p_approx_pct"] - cell.sim_pct) / cell.sim_pct * 100.0
        lim = APPROX_DEV_FACTOR * cell.dev_approx_pct
        checks.append((f"approx dev {d_app:.4f}% (<={lim:.4g})",
                       d_app <= lim))
        ok = all(flag for _, flag in checks)
        failures += 0 if ok else 1
        detail = "; ".join(f"{msg} {'PASS' if flag else 'FAIL'}"
                           for msg, flag in checks)
        lines.append(f"CHECK Q={cell.q} K={cell.k} gamma={cell.gamma:g} "
                     f"N={cell.n}: {detail}")
    lines.append(f"CHECK RESULT: {len(rows) - failures}/{len(rows)} cells OK")
    return lines, failures


_TABLE1_HEADER = ["Q", "K", "gamma", "N", "R", "trials", "seed",
                  "p_sim_pct", "p_model_pct", "p_approx_pct",
                  "ana_pct", "app_pct", "approx_only"]


def _cmd_table1(args):
    schema = dict(_COMMON)
    schema.update({
        "trials": (int, TABLE1_TRIALS),
        "budget_terms": (int, DEFAULT_TERM_BUDGET),
        "check": (_parse_bool, False),
        "format": (str, "csv"), "out": (str, None),
    })
    p = _resolve(args, schema)
    _common_post(p)
    rows = _table1_rows(p["trials"], p["seed"], p["budget_terms"])
    csv_rows = [[_fmt(row[h]) if row[h] is None or isinstance(row[h], float)
                 else row[h] for h in _TABLE1_HEADER] for row in rows]
    if p["format"] == "csv":
        text = _csv_text(_TABLE1_HEADER, csv_rows)
    elif p["format"] == "json":
        docs = [{h: row[h] for h in _TABLE1_HEADER} for row in rows]
        text = _json_text(docs)
    else:
        raise ParameterError(f"unknown format {p['format']!r}")
    if p["check"]:
        lines, failures = _check_table1(rows)
        if p["out"]:
            _emit(text, p["out"])
        sys.stdout.write("\n".join(lines) + "\n")
        return 4 if failures else 0
    _emit(text, p["out"])
    return 0


_FIG4_VARIANTS = ((1, SCHEME_NO_RS), (1, SCHEME_RS),
                  (2, SCHEME_NO_RS), (2, SCHEME_RS))
_FIG4_HEADER = ["gamma", "K", "Q", "N", "R", "trials", "seed",
                "p_a1b1_nors", "ci_a1b1_nors", "p_a1b1_rs", "ci_a1b1_rs",
                "p_a2b1_nors", "ci_a2b1_nors", "p_a2b1_rs", "ci_a2b1_rs"]


def fig4_rows(trials, seed):
    """Recovery probability of the four protocol variants over K.

    All four variants of one (gamma, K) cell share a seed, hence
    identical access maps: differences are purely decoder-side, and the
    K=1 RS/no-RS pair coincides exactly.
    """
    rows = []
    for gamma in FIG4_GAMMAS:
        r = rb_count_for(FIG4_N, gamma)
        for k in FIG4_KS:
            cell_seed = derive_seed(seed, "fig4", f"{gamma:.4g}", k)
            row = [gamma, k, FIG4_Q, FIG4_N, r, trials, cell_seed]
            for alpha, scheme in _FIG4_VARIANTS:
                cfg = SystemConfig(r=r, n=FIG4_N, k=k, q=FIG4_Q,
                                   alpha=alpha, beta=1, scheme=scheme)
                rep = estimate_access_probability(cfg, trials, cell_seed)
                row.extend([rep.p_hat, rep.ci95])
            rows.append(row)
    return rows


_FIG4_GNUPLOT = """\
set datafile separator ','
set key autotitle columnhead outside
set xlabel 'K'
set ylabel 'access probability'
set yrange [0:1]
plot for [g in "{gammas}"] \\
  '{csv}' using (column(1)==g+0?column(2):1/0):8  with lp title '(1,1) no-RS g='.g, \\
  for [g in "{gammas}"] \\
  '{csv}' using (column(1)==g+0?column(2):1/0):10 with lp title '(1,1) RS g='.g, \\
  for [g in "{gammas}"] \\
  '{csv}' using (column(1)==g+0?column(2):1/0):12 with lp title '(2,1) no-RS g='.g, \\
  for [g in "{gammas}"] \\
  '{csv}' using (column(1)==g+0?column(2):1/0):14 with lp title '(2,1) RS g='.g
"""


def _cmd_fig4(args):
    schema = dict(_COMMON)
    schema.update({
        "trials": (int, FIGURE_TRIALS),
        "out": (str, None), "gnuplot_script": (str, None),
        "format": (str, "csv"),
    })
    p = _resolve(args, schema)
    _common_post(p)
    if p["gnuplot_script"] and not p["out"]:
        raise ParameterError("--gnuplot-script needs --out for the CSV path")
    rows = fig4_rows(p["trials"], p["seed"])
    if p["format"] == "csv":
        text = _csv_text(_FIG4_HEADER,
                         [[_fmt(v) if isinstance(v, float) else v for v in row]
                          for row in rows])
    elif p["format"] == "json":
        text = _json_text([dict(zip(_FIG4_HEADER, row)) for row in rows])
    else:
        raise ParameterError(f"unknown format {p['format']!r}")
    _emit(text, p["out"])
    if p["gnuplot_script"]:
        gammas = " ".join(f"{g:g}" for g in FIG4_GAMMAS)
        _emit(_FIG4_GNUPLOT.format(csv=p["out"], gammas=gammas),
              p["gnuplot_script"])
    return 0


_FIG5_HEADER = ["gamma", "K", "Q", "N", "R", "M", "trials", "seed",
                "p_hat", "ci95", "delay_frames", "p_model"]


def fig5_rows(trials, seed, budget=DEFAULT_TERM_BUDGET):
    """DU access probability and message delay over the frame count Q.

    Delay is frames to deliver an M-packet message at the measured
    access probability; the closed-form column is filled only where the
    accelerated evaluator fits the term budget.
    """
    rows = []
    for gamma in FIG5_GAMMAS:
        r = rb_count_for(FIG5_N, gamma)
        for k in FIG5_KS:
            for q in FIG5_QS:
                cell_seed = derive_seed(seed, "fig5", f"{gamma:.4g}", k, q)
                cfg = SystemConfig(r=r, n=FIG5_N, k=k, q=q, alpha=2, beta=1,
                                   scheme=SCHEME_RS, m=FIG5_M)
                rep = estimate_access_probability(cfg, trials, cell_seed)
                delay = message_delay(FIG5_M, rep.p_hat)
                try:
                    model = access_probability(r, FIG5_N, k, q,
                                               budget=budget).total.as_float()
                except ResourceBudgetError:
                    model = None
                rows.append([gamma, k, q, FIG5_N, r, FIG5_M, trials,
                             cell_seed, rep.p_hat, rep.ci95, delay, model])
    return rows


_FIG5_GNUPLOT = """\
set datafile separator ','
set key autotitle columnhead outside
set logscale x 2
set xlabel 'Q'
set ylabel 'access probability'
plot for [g in "{gammas}"] for [k in "{ks}"] \\
  '{csv}' using (column(1)==g+0 && column(2)==k+0?column(3):1/0):9 \\
  with lp title 'K='.k.' g='.g
"""


def _cmd_fig5(args):
    schema = dict(_COMMON)
    schema.update({
        "trials": (int, FIGURE_TRIALS),
        "budget_terms": (int, DEFAULT_TERM_BUDGET),
        "out": (str, None), "gnuplot_script": (str, None),
        "format": (str, "csv"),
    })
    p = _resolve(args, schema)
    _common_post(p)
    if p["gnuplot_script"] and not p["out"]:
        raise ParameterError("--gnuplot-script needs --out for the CSV path")
    rows = fig5_rows(p["trials"], p["seed"], p["budget_terms"])
    if p["format"] == "csv":
        text = _csv_text(_FIG5_HEADER,
                         [[_fmt(v) if isinstance(v, (float, type(None)))
                           else v for v in row] for row in rows])
    elif p["format"] == "json":
        text = _json_text([dict(zip(_FIG5_HEADER, row)) for row in rows])
    else:
        raise ParameterError(f"unknown format {p['format']!r}")
    _emit(text, p["out"])
    if p["gnuplot_script"]:
        _emit(_FIG5_GNUPLOT.format(
            csv=p["out"],
            gammas=" ".join(f"{g:g}" for g in FIG5_GAMMAS),
            ks=" ".join(str(k) for k in FIG5_KS)), p["gnuplot_script"])
    return 0


# ---------------------------------------------------------------------------
# complexity bench


def _fit_through_origin(xs, ys):
    """Least-squares slope of y = c*x plus the usual R^2 on the residuals."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    c = float(xs @ ys / (xs @ xs)) if xs.any() else 0.0
    resid = ys - c * xs
    ss_res = float(resid @ resid)
    centered = ys - ys.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return c, r2


_BENCH_COUNTERS = ("decode_attempts", "memory_reads", "memory_writes",
                   "ic_subtractions", "matrices_materialized",
                   "mai_signals_generated", "peak_buffered_signals")


def iic_bench(k=2, q=2, maps=25, seed=DEFAULT_SEED, ic=IC_PRECISE,
              n_grid=(4, 6, 8, 10, 12), r_grid=(20, 30, 40, 60)):
    """Counter scaling study for the branching interference canceller.

    Constructed near-exclusive maps pin the exact MAI-signal count and,
    across the (N, R) grid, expose the linear work scalings, so the
    fits run on them; the second iteration always engages there.  On
    random maps the second iteration often has nothing to do (light
    load) or is recovery-pattern bound, so those only feed the counter
    distributions.
    """
    report = {"k": k, "q": q, "ic": ic, "maps_per_point": maps,
              "seed": seed}

    scalings = {
        "qknr": lambda n, r: q * k * n * r,
        "2qknr": lambda n, r: 2 * q * k * n * r,
        "r_plus_qkn": lambda n, r: r + q * k * n,
    }

    constructed = []
    if k >= 2:
        for n in n_grid:
            for r in r_grid:
                if r < n + k - 1:
                    continue
                amap = build_near_exclusive_map(r=r, n=n, k=k, q=q, ic=ic)
                outcome = run_generic_iic(amap)
                expected = q * (k - 1) * (n - 1)
                constructed.append({
                    "n": n, "r": r,
                    "counters": outcome.counters.to_json_dict(),
                    "expected_mai_signals": expected,
                    "signals_exact":
                        outcome.counters.mai_signals_generated == expected,
                })
    report["constructed"] = constructed

    fits = {}
    if constructed:
        for counter in _BENCH_COUNTERS:
            ys = [pt["counters"][counter] for pt in constructed]
            fits[counter] = {}
            for name, fn in scalings.items():
                xs = [fn(pt["n"], pt["r"]) for pt in constructed]
                c, r2 = _fit_through_origin(xs, ys)
                fits[counter][name] = {"c": c, "r2": r2}
    report["fits"] = fits

    points = []
    for n in n_grid:
        for r in r_grid:
            if r < k:
                continue
            cfg = SystemConfig(r=r, n=n, k=k, q=q, alpha=2, beta=1,
                               scheme=SCHEME_RS, ic=ic)
            sums = {name: 0 for name in _BENCH_COUNTERS}
            lows = {name: math.inf for name in _BENCH_COUNTERS}
            highs = {name: 0 for name in _BENCH_COUNTERS}
            for i in range(maps):
                amap = generate_access_map(
                    cfg, derive_seed(seed, "iic-bench", n, r, i))
                outcome = run_generic_iic(amap)
                for name in _BENCH_COUNTERS:
                    value = getattr(outcome.counters, name)
                    sums[name] += value
                    lows[name] = min(lows[name], value)
                    highs[name] = max(highs[name], value)
            points.append({
                "n": n, "r": r, "qknr": q * k * n * r,
                "counters": {name: {"mean": sums[name] / maps,
                                    "min": lows[name],
                                    "max": highs[name]}
                             for name in _BENCH_COUNTERS},
            })
    report["random_grid"] = points

    sanity_cfg = SystemConfig(r=r_grid[0], n=n_grid[0], k=k, q=q,
                              alpha=1, beta=1, scheme=SCHEME_RS, ic=ic)
    sanity_map = generate_access_map(
        sanity_cfg, derive_seed(seed, "iic-bench", "alpha1"))
    sanity = run_generic_iic(sanity_map)
    report["alpha1_matrices_materialized"] = \
        sanity.counters.matrices_materialized
    return report


def _cmd_iic_bench(args):
    schema = dict(_COMMON)
    schema.update({
        "k": (int, 2), "q": (int, 2), "maps": (int, 25),
        "ic": (str, IC_PRECISE),
        "out": (str, None), "format": (str, "json"),
    })
    p = _resolve(args, schema)
    _common_post(p)
    if p["ic"] not in IC_MODES or p["ic"] == "none":
        raise ParameterError(
            f"ic must be one of the active modes, got {p['ic']!r}")
    if p["k"] < 1 or p["q"] < 1 or p["maps"] < 1:
        raise ParameterError("k, q and maps must be positive")
    if p["format"] != "json":
        raise ParameterError("iic-bench reports JSON only")
    report = iic_bench(k=p["k"], q=p["q"], maps=p["maps"],
                       seed=p["seed"], ic=p["ic"])
    _emit(_json_text(report), p["out"])
    return 0


# ---------------------------------------------------------------------------
# identity self-test


def random_event_space(rng, max_events=4):
    outcomes = int(rng.integers(2, 7))
    probs = rng.dirichlet(np.ones(outcomes))
    count = int(rng.integers(1, max_events + 1))
    events = []
    for _ in range(count):
        mask = rng.random(outcomes) < 0.5
        events.append(frozenset(np.flatnonzero(mask).tolist()))
    return FiniteEventSpace(probabilities=tuple(probs.tolist()),
                            events=tuple(events))


def check_eq2(spaces=100, max_events=4, tol=1e-10, seed=DEFAULT_SEED):
    """Exercise the set-difference identity on random event spaces."""
    worst = 0.0
    for i in range(spaces):
        rng = np.random.Generator(np.random.Philox(
            key=[derive_seed(seed, "eq2", i), 0]))
        space = random_event_space(rng, max_events)
        for count in range(1, space.event_count + 1):
            lhs = set_difference_probability_lhs(space, count)
            rhs = set_difference_probability_rhs(space, count)
            worst = max(worst, abs(lhs - rhs))
    return worst, worst <= tol


def _cmd_check_eq2(args):
    schema = dict(_COMMON)
    schema.update({
        "spaces": (int, 100), "max_events": (int, 4),
        "tol": (float, 1e-10), "out": (str, None),
    })
    p = _resolve(args, schema)
    _common_post(p)
    if p["spaces"] < 1 or p["max_events"] < 1:
        raise ParameterError("spaces and max-events must be positive")
    worst, ok = check_eq2(p["spaces"], p["max_events"], p["tol"], p["seed"])
    verdict = "PASS" if ok else "FAIL"
    _emit(f"CHECK identity over {p['spaces']} spaces "
          f"(<= {p['max_events']} events): worst |lhs-rhs| = {worst:.3e} "
          f"(tol {p['tol']:g}) {verdict}\n", p["out"])
    return 0 if ok else 4


# ---------------------------------------------------------------------------
# entry point


def _add_common(sub):
    sub.add_argument("--config", help="flat key = value parameter file")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--threads", type=int,
                     help="reserved; the vectorized engine is process-local")
    sub.add_argument("--out")


_COMMANDS = {}


def _register(name, handler, configure):
    _COMMANDS[name] = (handler, configure)


def _conf_analytic(sub):
    _add_common(sub)
    sub.add_argument("--r", type=int)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--n", type=int)
    sub.add_argument("--k", type=int)
    sub.add_argument("--q", type=int)
    sub.add_argument("--engine", choices=["exact", "float", "approx"])
    sub.add_argument("--budget-terms", type=int, dest="budget_terms")
    sub.add_argument("--rb-rounding", choices=["nearest", "floor"],
                     dest="rb_rounding")
    sub.add_argument("--format", choices=["csv", "json"])


def _conf_approx(sub):
    _add_common(sub)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--k", type=int)
    sub.add_argument("--q", type=int)
    sub.add_argument("--format", choices=["csv", "json"])


def _conf_sim_common(sub, lists=False):
    _add_common(sub)
    number = (_int_list if lists else int)
    floats = (_float_list if lists else float)
    sub.add_argument("--r", type=number)
    sub.add_argument("--gamma", type=floats)
    sub.add_argument("--n", type=number)
    sub.add_argument("--k", type=number)
    sub.add_argument("--q", type=number)
    sub.add_argument("--alpha", type=number)
    sub.add_argument("--beta", type=number)
    sub.add_argument("--scheme", type=(_str_list if lists else str))
    sub.add_argument("--selection", type=(_str_list if lists else str))
    sub.add_argument("--rb-rounding", choices=["nearest", "floor"],
                     dest="rb_rounding")
    sub.add_argument("--trials", type=int)
    sub.add_argument("--format", choices=["csv", "json"])


def _conf_simulate(sub):
    _conf_sim_common(sub)
    sub.add_argument("--estimator", choices=["pooled", "tagged"])


def _conf_delay(sub):
    _conf_sim_common(sub)
    sub.add_argument("--m", type=int)


def _conf_sweep(sub):
    _conf_sim_common(sub, lists=True)
    sub.add_argument("--estimator", choices=["pooled", "tagged"])


def _conf_table1(sub):
    _add_common(sub)
    sub.add_argument("--trials", type=int)
    sub.add_argument("--budget-terms", type=int, dest="budget_terms")
    sub.add_argument("--check", action="store_const", const=True)
    sub.add_argument("--format", choices=["csv", "json"])


def _conf_fig4(sub):
    _add_common(sub)
    sub.add_argument("--trials", type=int)
    sub.add_argument("--gnuplot-script", dest="gnuplot_script")
    sub.add_argument("--format", choices=["csv", "json"])


def _conf_fig5(sub):
    _add_common(sub)
    sub.add_argument("--trials", type=int)
    sub.add_argument("--budget-terms", type=int, dest="budget_terms")
    sub.add_argument("--gnuplot-script", dest="gnuplot_script")
    sub.add_argument("--format", choices=["csv", "json"])


def _conf_iic_bench(sub):
    _add_common(sub)
    sub.add_argument("--k", type=int)
    sub.add_argument("--q", type=int)
    sub.add_argument("--maps", type=int)
    sub.add_argument("--ic", choices=["precise", "context-aware", "blind"])
    sub.add_argument("--format", choices=["csv", "json"])


def _conf_check_eq2(sub):
    _add_common(sub)
    sub.add_argument("--spaces", type=int)
    sub.add_argument("--max-events", type=int, dest="max_events")
    sub.add_argument("--tol", type=float)


_register("analytic", _cmd_analytic, _conf_analytic)
_register("approx", _cmd_approx, _conf_approx)
_register("simulate", _cmd_simulate, _conf_simulate)
_register("delay", _cmd_delay, _conf_delay)
_register("sweep", _cmd_sweep, _conf_sweep)
_register("table1", _cmd_table1, _conf_table1)
_register("fig4", _cmd_fig4, _conf_fig4)
_register("fig5", _cmd_fig5, _conf_fig5)
_register("iic-bench", _cmd_iic_bench, _conf_iic_bench)
_register("check-eq2", _cmd_check_eq2, _conf_check_eq2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgfa",
        description="grant-free access protocol laboratory")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, (_handler, configure) in _COMMANDS.items():
        configure(subs.add_parser(name))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler, _ = _COMMANDS[args.command]
    try:
        return handler(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
