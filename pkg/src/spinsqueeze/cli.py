"""Command-line front end: ``spinsqueeze <subcommand> [--config FILE] [flags]``.

Every subcommand resolves one validated ExperimentConfig (file, then
environment, then flags), writes its artifacts atomically under
``<output_dir>/<experiment_id>/`` and finishes with ``manifest.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import metadata

import numpy as np
import scipy

from . import analysis, percolation, spectral, spinwave
from .config import ConfigError, from_dict, point_seed
from .dtwa import EnsembleSpec, SqueezeTrace, default_time_grid, run_ensemble, sample_seeds
from .fitting import FitError
from .graphgen import build_graph, mean_degree, save as save_graph
from .io import atomic_write_text, read_csv, write_csv, write_json

log = logging.getLogger("spinsqueeze")

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2
ENV_THREADS = "SPINSQUEEZE_THREADS"
ENV_OUTPUT = "SPINSQUEEZE_OUTPUT_DIR"
MINIMA_HEADER = ("value", "size", "t_min", "xi2_min", "xi2_err", "at_edge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2, which is reserved for partial sweep failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --- configuration resolution ----------------------------------------------

def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


_PARAM_FLAGS = {"alpha": "alpha", "dimension": "dimension", "dilution": "dilution_p",
                "bond_C": "bond_C", "kappa_scale": "kappa_scale"}


def resolve_config(args, environ=None):
    """Raw config dict from --config, overlaid by env vars and flags, validated."""
    environ = os.environ if environ is None else environ
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError([f"<file>: cannot read {args.config}: {exc.strerror}"]) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<root>: malformed JSON ({exc})"]) from exc
        if not isinstance(raw, dict):
            raise ConfigError(["<root>: expected a JSON object"])
    raw.setdefault("experiment_id", args.id or args.command)
    if ENV_OUTPUT in environ:
        raw["output_dir"] = environ[ENV_OUTPUT]
    if ENV_THREADS in environ:
        try:
            raw["workers"] = int(environ[ENV_THREADS])
        except ValueError:
            raise ConfigError([f"{ENV_THREADS}: expected an integer"]) from None
    for flag, key in (("id", "experiment_id"), ("geometry", "geometry"), ("delta", "delta"),
                      ("spin_s", "spin_s"), ("samples", "n_samples"), ("seed", "seed"),
                      ("out", "output_dir"), ("dense_cap", "dense_cap"), ("workers", "workers"),
                      ("method", "method"), ("chunk", "chunk")):
        v = getattr(args, flag, None)
        if v is not None:
            raw[key] = v
    if getattr(args, "sizes", None):
        raw["sizes"] = _ints(args.sizes)
    params = dict(raw.get("params") or {})
    for flag, key in _PARAM_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            params[key] = v
    if getattr(args, "no_kac", False):
        params["apply_kac"] = False
    if params:
        raw["params"] = params
    tg = dict(raw.get("t_grid") or {})
    for flag, key in (("t_kind", "kind"), ("t_max", "t_max"), ("n_points", "n_points")):
        v = getattr(args, flag, None)
        if v is not None:
            tg[key] = v
    if tg:
        raw["t_grid"] = tg
    if getattr(args, "sweep", None):
        var, _, vals = args.sweep.partition("=")
        raw["sweep"] = {"variable": var.strip(), "values": _floats(vals)}
    return from_dict(raw)


# --- shared pipeline pieces ------------------------------------------------

def _graph(cfg, n, seed=None):
    """The graph of DTWA sample 0 for this seed, used by single-graph commands."""
    gseed = sample_seeds(cfg.seed if seed is None else seed, 0)[0]
    return build_graph(cfg.geometry, cfg.params, n, gseed)


def _spec(cfg, n):
    return EnsembleSpec(cfg.geometry, cfg.params, n, cfg.delta, cfg.spin_s)


def _explicit_grid(tg):
    if tg.kind == "linear":
        return np.linspace(0.0, tg.t_max, tg.n_points)
    return np.r_[0.0, np.logspace(math.log10(tg.t_max) - 3.0, math.log10(tg.t_max),
                                  tg.n_points - 1)]


def _time_grid(cfg, n, seed, chi=None, n_nodes=None):
    tg = cfg.t_grid
    if tg.kind != "auto":
        return _explicit_grid(tg)
    if chi is not None:
        return spinwave.default_times(n_nodes, chi, tg.n_points, tg.factor)
    return default_time_grid(_spec(cfg, n), seed, tg.n_points, tg.factor)


def _value_tag(v):
    return f"{v:.10g}"


def run_traces(cfg, seed, out_dir, methods=None):
    """Squeezing traces for every size; returns {method: [(n, trace, t_floor)]}.

    With both methods the rotor trace is evaluated on the DTWA time grid so
    the two overlay point by point.
    """
    methods = methods or (("rotor_sw", "dtwa") if cfg.method == "both" else (cfg.method,))
    out = {m: [] for m in methods}
    files = []
    for n in cfg.sizes:
        g = _graph(cfg, n, seed)
        deg = mean_degree(g)
        if g.n_active < 2 or deg <= 0:
            raise spinwave.SpinWaveError(
                f"N={n}: {g.n_active} active sites without bonds; squeezing is undefined")
        floor = 1.0 / deg
        grid = None
        if "dtwa" in methods:
            grid = _time_grid(cfg, n, seed)
            ck = os.path.join(out_dir, f"checkpoint_N{n}.bin")
            tr = run_ensemble(_spec(cfg, n), cfg.n_samples, grid, seed, cfg.chunk,
                              cfg.workers, checkpoint=ck)
            path = os.path.join(out_dir, f"dtwa_N{n}.csv")
            tr.to_csv(path)
            files.append(path)
            out["dtwa"].append((n, tr, floor))
        if "rotor_sw" in methods:
            swc = spinwave.SWConfig(cfg.delta, cfg.spin_s)
            sol = spinwave.regular_approx_spectrum(g, swc)
            if grid is None:
                grid = _time_grid(cfg, n, seed, sol.chi, sol.n_nodes)
            tr = spinwave.xi2_rotor_sw(g, swc, grid, sol=sol)
            path = os.path.join(out_dir, f"rotor_N{n}.csv")
            tr.to_csv(path)
            files.append(path)
            out["rotor_sw"].append((n, tr, floor))
            try:
                rep = spinwave.heisenberg_perturbation(g, cfg.delta, cfg.spin_s)
                path = os.path.join(out_dir, f"perturbation_N{n}.json")
                rep.to_json(path)
                files.append(path)
            except (spinwave.SpinWaveError, spectral.SpectralError) as exc:
                log.warning("perturbation report for N=%d skipped: %s", n, exc)
    return out, files


def _minima_rows(value, series):
    rows = []
    for n, tr, floor in series:
        m = analysis.locate_minimum(tr.times, tr.xi2, getattr(tr, "xi2_err", None), floor)
        rows.append((value, n, m.t, m.xi2, m.err, m.at_edge))
    return rows


def _series_report(series):
    sizes = [n for n, _, _ in series]
    traces = [tr for _, tr, _ in series]
    floors = [f for _, _, f in series]
    rep = {"mu": None, "nu": None, "classification": None}
    try:
        mu, nu = analysis.fit_mu_nu(sizes, traces, floors)
        rep["mu"], rep["nu"] = mu.as_dict(), nu.as_dict()
    except (FitError, analysis.AnalysisError) as exc:
        rep["fit_error"] = str(exc)
    try:
        rep["classification"], _ = analysis.classify_scalability(sizes, traces, floors)
    except analysis.AnalysisError as exc:
        rep["classification_error"] = str(exc)
    return rep


def _gnuplot(path, csv_files, ylabel="xi2", logx=True):
    lines = ['set datafile separator ","', "set key autotitle columnhead",
             "set logscale y", f'set ylabel "{ylabel}"', 'set xlabel "t"']
    if logx:
        lines.append("set logscale x")
    plots = ", ".join(f'"{os.path.basename(f)}" using 1:2 with lines title "{os.path.basename(f)}"'
                      for f in csv_files)
    lines.append(f"plot {plots}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# --- subcommands -----------------------------------------------------------

def cmd_graph_stats(cfg, args, run):
    rows = []
    for n in cfg.sizes:
        g = _graph(cfg, n)
        rep = percolation.find_clusters(g)
        est = percolation.threshold_from_moments(rep.z0_mean, rep.z0_second_moment)
        rows.append((n, g.n_active, g.bond_count(), mean_degree(g), len(rep.components),
                     percolation.giant_fraction(rep), rep.z0_mean, rep.z0_second_moment,
                     est.value))
        if args.save_graph:
            path = os.path.join(run.dir, f"graph_N{n}.json")
            save_graph(g, path)
            run.files.append(path)
    header = ("size", "n_active", "bonds", "mean_degree", "components", "giant_fraction",
              "z0_mean", "z0_second_moment", "moment_threshold")
    path = os.path.join(run.dir, "graph_stats.csv")
    write_csv(path, header, rows)
    run.files.append(path)
    print(json.dumps([dict(zip(header, r)) for r in rows], indent=2, default=float))
    return EXIT_OK


def cmd_spectrum(cfg, args, run):
    report, gaps, comps = {}, [], []
    for n in cfg.sizes:
        g = _graph(cfg, n)
        summ = spectral.summarize(g, dense_cap=cfg.dense_cap)
        path = os.path.join(run.dir, f"spectrum_N{n}.csv")
        spectral.write_spectrum_csv(path, summ.eigenvalues)
        run.files.append(path)
        zeros = spectral.count_zero_modes(summ.eigenvalues)
        gaps.append(summ.gap)
        comps.append(zeros)
        report[str(n)] = {"gap": summ.gap, "ds_from_dos": summ.ds_from_dos,
                          "ds_from_dos_err": summ.ds_from_dos_err, "zero_modes": zeros,
                          "n_active": summ.n_active}
        if args.recurrence:
            times = np.logspace(-1, math.log10(max(10.0, 10.0 * n)), 200)
            rec = spectral.recurrence_probability(g, times)
            path = os.path.join(run.dir, f"recurrence_N{n}.csv")
            spectral.write_recurrence_csv(path, rec)
            run.files.append(path)
            report[str(n)].update(recurrence_slope=rec.fitted_slope,
                                  recurrence_slope_err=rec.slope_err, t_star=rec.t_star)
    out = {"sizes": report, "ds_from_gap": None}
    try:
        out["predicted_ds"] = spectral.predicted_ds(cfg.geometry, cfg.params.alpha,
                                                    cfg.params.dimension)
    except ValueError:
        out["predicted_ds"] = None
    try:
        out["ds_from_gap"] = spectral.ds_from_gap(list(cfg.sizes), gaps, comps).as_dict()
    except FitError as exc:
        out["ds_from_gap_error"] = str(exc)
    path = os.path.join(run.dir, "spectrum_report.json")
    write_json(path, out)
    run.files.append(path)
    return EXIT_OK


def cmd_percolate(cfg, args, run):
    var = "bond_C" if cfg.geometry == "correlated_bond" else "dilution_p"
    grid = _floats(args.grid) if args.grid else (
        list(np.linspace(0.1, 1.0, 19)) if var == "bond_C" else list(np.linspace(0.0, 0.95, 20)))

    def builder(param, size, seed):
        return build_graph(cfg.geometry, replace(cfg.params, **{var: float(param)}), size, seed)

    res = percolation.empirical_threshold(builder, grid, list(cfg.sizes), args.seeds_per_point,
                                          args.level, seed=cfg.seed,
                                          decreasing=(var == "dilution_p"))
    points, summary = [], {}
    for n, entry in res.items():
        points.extend(entry["points"])
        summary[str(n)] = {k: entry.get(k) for k in ("threshold", "threshold_err", "flag", "gamma")}
        if cfg.geometry == "pw2":
            summary[str(n)]["formula"] = percolation.pw2_threshold(n)
        elif cfg.geometry == "ring1d" and cfg.params.alpha == 0:
            summary[str(n)]["formula"] = percolation.complete_graph_threshold(n)
    out = {"control": var, "level": args.level, "sizes": summary}
    if cfg.geometry == "correlated_bond":
        out["bethe_bound"] = percolation.bethe_bound(cfg.params.alpha)
    path = os.path.join(run.dir, "percolation.csv")
    percolation.write_points_csv(path, points)
    run.files.append(path)
    path = os.path.join(run.dir, "percolation.json")
    write_json(path, out)
    run.files.append(path)
    return EXIT_OK


def cmd_squeeze(cfg, args, run):
    series, files = run_traces(cfg, cfg.seed, run.dir)
    run.files.extend(files)
    run.seeds["traces"] = cfg.seed
    report, rows = {}, []
    for method, ser in series.items():
        rows.extend((method,) + r[1:] for r in _minima_rows(0.0, ser))
        report[method] = _series_report(ser)
        report[method].update(critical_point=None, scaling_test=None)
    path = os.path.join(run.dir, "minima.csv")
    write_csv(path, ("method",) + MINIMA_HEADER[1:], rows)
    run.files.append(path)
    path = os.path.join(run.dir, "analysis.json")
    write_json(path, {cfg.experiment_id: report})
    run.files.append(path)
    if args.gnuplot:
        path = os.path.join(run.dir, "squeeze.gp")
        _gnuplot(path, [f for f in files if f.endswith(".csv")])
        run.files.append(path)
    return EXIT_OK


def with_value(cfg, variable, value):
    if variable == "delta":
        return replace(cfg, delta=float(value))
    return replace(cfg, params=replace(cfg.params, **{variable: float(value)}))


def sweep_point(cfg, value, root):
    """Run one sweep point; module errors are caught and reported."""
    var = cfg.sweep.variable
    seed = point_seed(cfg.seed, var, value)
    out_dir = os.path.join(root, f"{var}={_value_tag(value)}")
    res = {"value": float(value), "seed": seed, "files": [], "rows": [], "error": None,
           "classification": None}
    try:
        pcfg = with_value(cfg, var, value)
        method = "dtwa" if cfg.method in ("dtwa", "both") else "rotor_sw"
        series, files = run_traces(pcfg, seed, out_dir, (method,))
        ser = series[method]
        res["files"] = files
        res["rows"] = _minima_rows(float(value), ser)
        try:
            res["classification"], _ = analysis.classify_scalability(
                [n for n, _, _ in ser], [t for _, t, _ in ser], [f for _, _, f in ser])
        except analysis.AnalysisError as exc:
            res["classification"] = analysis.UNDECIDED
            res["classification_note"] = str(exc)
    except Exception as exc:  # noqa: BLE001  one failed point must not stop the sweep
        log.error("sweep point %s=%g failed: %s", var, value, exc)
        res["error"] = f"{type(exc).__name__}: {exc}"
    return res


def cmd_sweep(cfg, args, run):
    if cfg.sweep is None:
        raise ConfigError(["sweep: required for the sweep subcommand"])
    var = cfg.sweep.variable
    root = run.dir
    inner = replace(cfg, workers=1) if cfg.workers > 1 else cfg
    values = list(cfg.sweep.values)
    if cfg.workers > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(sweep_point, [inner] * len(values), values,
                                    [root] * len(values)))
    else:
        results = [sweep_point(cfg, v, root) for v in values]
    done = {r["value"]: r for r in results}

    def classify(v):
        if v not in done:
            done[v] = sweep_point(cfg, v, root)
        r = done[v]
        return analysis.UNDECIDED if r["error"] else r["classification"]

    report = {"variable": var, "classification": {}, "critical_point": None,
              "size_crossing": None, "mu": None, "nu": None, "scaling_test": None}
    try:
        cp = analysis.extract_critical_point(values, classify, args.refine)
        report["critical_point"] = cp.as_dict()
    except analysis.AnalysisError as exc:
        report["critical_point_error"] = str(exc)
    ok = sorted(v for v, r in done.items() if not r["error"])
    rows = [row for v in ok for row in done[v]["rows"]]
    if len(ok) >= 2:
        M = np.array([[row[3] for row in done[v]["rows"]] for v in ok]).T
        try:
            report["size_crossing"] = analysis.size_crossing(ok, list(cfg.sizes), M).as_dict()
        except (analysis.AnalysisError, ValueError) as exc:
            report["size_crossing_error"] = str(exc)
    if var == "delta" and report["critical_point"] is not None:
        report["perturbative"] = _perturbative(cfg)
    for v in sorted(done):
        r = done[v]
        report["classification"][_value_tag(v)] = r["classification"]
        run.seeds[f"{var}={_value_tag(v)}"] = r["seed"]
        run.files.extend(r["files"])
        if r["error"]:
            run.failures.append({"value": v, "error": r["error"]})
    path = os.path.join(root, "sweep_minima.csv")
    write_csv(path, MINIMA_HEADER, rows)
    run.files.append(path)
    path = os.path.join(root, "analysis.json")
    write_json(path, {cfg.experiment_id: report})
    run.files.append(path)
    if args.gnuplot:
        path = os.path.join(root, "sweep.gp")
        atomic_write_text(path, "\n".join([
            'set datafile separator ","', "set logscale y", f'set xlabel "{var}"',
            'set ylabel "xi2_min"',
            "plot for [n in \"" + " ".join(str(s) for s in cfg.sizes) + "\"] "
            "\"sweep_minima.csv\" every ::1 using ($2==n ? $1 : 1/0):4 with linespoints "
            "title \"N=\".n"]) + "\n")
        run.files.append(path)
    return EXIT_PARTIAL if run.failures else EXIT_OK


def _perturbative(cfg):
    """Gap-criterion estimate 1 - Delta_c = dlambda / (s deg) for each size."""
    out = {}
    for n in cfg.sizes:
        g = _graph(cfg, n)
        try:
            rep = spinwave.heisenberg_perturbation(g, 0.0, cfg.spin_s)
            out[str(n)] = rep.as_dict()
        except (spinwave.SpinWaveError, spectral.SpectralError) as exc:
            out[str(n)] = {"error": str(exc)}
    return out


_SIZE_RE = re.compile(r"_N(\d+)")


def load_trace_csv(path):
    """A trace CSV (rotor or DTWA layout) as a lightweight trace object."""
    header, rows = read_csv(path)
    cols = {h: i for i, h in enumerate(header)}
    for need in ("t", "xi2"):
        if need not in cols:
            raise ConfigError([f"{path}: missing column {need!r}"])
    data = np.array([[float(r[i]) for i in range(len(header))] for r in rows]) \
        if rows else np.zeros((0, len(header)))

    def col(name):
        return data[:, cols[name]] if name in cols else np.zeros(len(data))

    zero = np.zeros(len(data))
    return SqueezeTrace(col("t"), col("xi2"), col("xi2_err"), col("Sx"), zero, zero, zero, zero,
                        col("varmin"), col("m_xy"), col("m_xy_err"), zero, zero,
                        int(col("n_samples")[0]) if "n_samples" in cols and len(data) else 0,
                        0.0, col("breakdown_flag").astype(bool))


def cmd_fit(cfg_unused, args, run):
    sizes, traces = [], []
    for p in args.traces:
        m = _SIZE_RE.search(os.path.basename(p))
        if not m:
            raise ConfigError([f"{p}: cannot infer system size (expected '_N<size>' in the name)"])
        sizes.append(int(m.group(1)))
        traces.append(load_trace_csv(p))
    floors = [args.t_floor] * len(sizes)
    ser = sorted(zip(sizes, traces, floors), key=lambda x: x[0])
    rep = _series_report(ser)
    rep.update(critical_point=None, scaling_test=None)
    path = os.path.join(run.dir, "minima.csv")
    write_csv(path, MINIMA_HEADER, _minima_rows(0.0, ser))
    run.files.append(path)
    path = os.path.join(run.dir, "analysis.json")
    write_json(path, {run.experiment_id: rep})
    run.files.append(path)
    print(json.dumps(rep, indent=2, default=float))
    return EXIT_OK


# --- run bookkeeping -------------------------------------------------------

class Run:
    def __init__(self, command, cfg, out_dir, experiment_id):
        self.command = command
        self.cfg = cfg
        self.experiment_id = experiment_id
        self.dir = os.path.join(out_dir, experiment_id)
        self.files, self.failures, self.seeds = [], [], {}
        self.start = time.perf_counter()
        os.makedirs(self.dir, exist_ok=True)

    def manifest(self, status):
        versions = {"python": platform.python_version(), "numpy": np.__version__,
                    "scipy": scipy.__version__}
        try:
            versions["spinsqueeze"] = metadata.version("artifact")
        except metadata.PackageNotFoundError:
            versions["spinsqueeze"] = None
        m = {"command": self.command, "experiment_id": self.experiment_id, "exit_code": status,
             "versions": versions, "wall_time_s": time.perf_counter() - self.start,
             "seeds": self.seeds, "failures": self.failures,
             "files": sorted({os.path.relpath(f, self.dir) for f in self.files})}
        if self.cfg is not None:
            m.update(config_sha256=self.cfg.digest(), config=self.cfg.to_dict(),
                     master_seed=self.cfg.seed, warnings=list(self.cfg.warnings))
        write_json(os.path.join(self.dir, "manifest.json"), m)


def _common(p, graph=True):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--id", help="experiment id (default: subcommand name)")
    p.add_argument("--out", help=f"output directory (env {ENV_OUTPUT})")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help=f"worker processes (env {ENV_THREADS})")
    if not graph:
        return
    p.add_argument("--geometry")
    p.add_argument("--sizes", help="comma-separated system sizes")
    p.add_argument("--alpha", type=float)
    p.add_argument("--dimension", type=int)
    p.add_argument("--dilution", type=float, help="site dilution probability p")
    p.add_argument("--bond-C", dest="bond_C", type=float)
    p.add_argument("--kappa-scale", dest="kappa_scale", type=float)
    p.add_argument("--no-kac", action="store_true", help="skip Kac normalization")
    p.add_argument("--dense-cap", dest="dense_cap", type=int,
                   help="largest size diagonalized densely")


def _dynamics(p):
    p.add_argument("--delta", type=float)
    p.add_argument("--spin-s", dest="spin_s", type=float)
    p.add_argument("--samples", type=int, help="DTWA samples")
    p.add_argument("--chunk", type=int)
    p.add_argument("--t-kind", dest="t_kind", choices=("auto", "linear", "log"))
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--n-points", dest="n_points", type=int)
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")


def build_parser():
    ap = _Parser(prog="spinsqueeze", description="Spin squeezing on disordered graphs")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("graph-stats", help="graph statistics per size")
    _common(p)
    p.add_argument("--save-graph", action="store_true")
    p = sub.add_parser("spectrum", help="Laplacian spectra and spectral dimension")
    _common(p)
    p.add_argument("--recurrence", action="store_true", help="also write return probabilities")
    p = sub.add_parser("percolate", help="Monte Carlo percolation thresholds")
    _common(p)
    p.add_argument("--grid", help="comma-separated control values")
    p.add_argument("--seeds-per-point", dest="seeds_per_point", type=int, default=100)
    p.add_argument("--level", type=float, default=0.5)
    p = sub.add_parser("squeeze", help="squeezing traces per size")
    _common(p)
    _dynamics(p)
    p.add_argument("--method", choices=("rotor_sw", "dtwa", "both"))
    p = sub.add_parser("sweep", help="scan a control variable and locate the transition")
    _common(p)
    _dynamics(p)
    p.add_argument("--method", choices=("rotor_sw", "dtwa", "both"))
    p.add_argument("--sweep", help="VARIABLE=v1,v2,...")
    p.add_argument("--refine", type=int, default=3, help="bisection rounds")
    p = sub.add_parser("fit", help="exponents and classification from trace CSVs")
    _common(p, graph=False)
    p.add_argument("traces", nargs="+", help="trace CSVs named *_N<size>.csv")
    p.add_argument("--t-floor", dest="t_floor", type=float, default=0.0)
    return ap


_COMMANDS = {"graph-stats": cmd_graph_stats, "spectrum": cmd_spectrum,
             "percolate": cmd_percolate, "squeeze": cmd_squeeze, "sweep": cmd_sweep,
             "fit": cmd_fit}


def main(argv=None, environ=None):
    environ = os.environ if environ is None else environ
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"spinsqueeze: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            cfg = None
            out = args.out or environ.get(ENV_OUTPUT, "out")
            exp_id = args.id or "fit"
        else:
            cfg = resolve_config(args, environ)
            out, exp_id = cfg.output_dir, cfg.experiment_id
        run = Run(args.command, cfg, out, exp_id)
        status = _COMMANDS[args.command](cfg, args, run)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"spinsqueeze: config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    run.manifest(status)
    return status


if __name__ == "__main__":
    sys.exit(main())
