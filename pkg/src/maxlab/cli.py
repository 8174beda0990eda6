"""Command line entry point: ``maxlab``.

Runs one scenario (a preset or a config file) and writes into the output
directory::

    energies.csv      diagnostic time series (empty body when t_final = 0)
    summary.json      decay fits, fitted constants, status
    report.txt        every number next to the inequality it checks
    config.txt        the fully resolved configuration
    fields_final.bin  final fields (binary bundle), plus CSV slices
    *.csv             convergence tables of the benchmark scenarios
    figures/*.png     plots

Exit codes: 0 success, 2 configuration error, 3 run failure (solver failure
or barrier exceeded), 4 a configured assertion failed.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from . import __version__
from .config import PRESETS, ConfigError, dump, load, preset, schema_reference
from .diagnostics import EnergyRecord
from .io import write_energies, write_fields, write_slice, write_summary
from .solver import COMPLETED

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_ASSERT = 0, 2, 3, 4
log = logging.getLogger("maxlab")


def build_parser():
    p = argparse.ArgumentParser(prog="maxlab", description=__doc__.split("\n")[0])
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="scenario configuration file")
    src.add_argument("--scenario", metavar="NAME", help=f"preset: {', '.join(PRESETS)}")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--grid", type=int, metavar="N", help="override the resolution (N per axis)")
    p.add_argument("--tfinal", type=float, metavar="T", help="override the final time")
    p.add_argument("--dt", type=float, metavar="DT", help="override the time step")
    p.add_argument("--backend", choices=("yee", "collocated"), help="override the layout")
    p.add_argument("--seed", type=int, metavar="U64", help="override the initial-data seed")
    p.add_argument("--threads", type=int, metavar="K", help="limit BLAS/FFT worker threads")
    p.add_argument("--verify", choices=("unit", "property", "convergence"),
                   help="run the verification suite at this level instead of a scenario")
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint file")
    p.add_argument("--schema", action="store_true", help="print the config schema and exit")
    p.add_argument("--print-config", action="store_true",
                   help="print the resolved config and exit")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    p.add_argument("--version", action="version", version=f"maxlab {__version__}")
    return p


def resolve_config(args):
    if args.config:
        cfg = load(args.config)
    else:
        cfg = preset(args.scenario or "linear-damped-cavity")
    over = {}
    if args.grid is not None:
        over["domain.resolution"] = (args.grid,) * 3
    if args.tfinal is not None:
        over["run.t_final"] = args.tfinal
    if args.dt is not None:
        over["run.dt"] = args.dt
    if args.backend is not None:
        over["domain.layout"] = args.backend
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        over["initial.seed"] = args.seed
    return cfg.with_overrides(**{k.replace(".", "__"): v for k, v in over.items()}) if over else cfg


def output_dir(args, cfg):
    if args.out:
        return Path(args.out)
    if cfg["output.dir"]:
        return Path(cfg["output.dir"])
    root = os.environ.get("MAXLAB_OUT", "maxlab-out")
    return Path(root) / cfg["scenario.name"]


def _thread_limit(k):
    if not k:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=k)


# -- report ----------------------------------------------------------------------------

INEQUALITIES = {
    "C1": "observability: e(t) + int_s^t e <= C1 e(s) + C2 int_s^t z^{3/2}",
    "C2": "nonlinear coefficient of the observability bound (fixed to 0 in the primary fit)",
    "c2": "dissipation lower bound: int_s^t e <= c2 int_s^t d + c3 (e(t) + e(s)) + c4 int z^{3/2}",
    "c3": "endpoint coefficient of the dissipation lower bound",
    "c4": "nonlinear coefficient of the dissipation lower bound (fixed to 0)",
    "c5": "regularity: z(t) + int_s^t z <= c5 (z(s) + e3(t) + z(t)^2) + c6 int_s^t (e3 + z^{3/2})",
    "c6": "integral coefficient of the regularity bound (fixed to 0)",
    "Cbar": "barrier: (1 + (t - s)/C) z(t) <= C z(s) for all windows; z halves every 2C^2 - C",
}


def _fmt(v):
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6g}" if math.isfinite(v) else str(v)
    return str(v)


def render_report(cfg, outcome):
    s = outcome.summary
    lines = [f"scenario: {s['scenario']}  ({outcome.kind})", f"status: {outcome.status}", ""]
    if outcome.kind == "maxwell":
        g = s["grid"]
        lines += [
            f"grid: {g['shape']} {g['layout']}, extents {g['extents']}",
            f"initial data: {s['style']}, seed {s['seed']}, pair H^3 norm {s['amplitude']}",
            f"positivity radius (largest admissible field value): {_fmt(s['delta_tilde'])}",
            f"steps: {s['steps']} of dt = {_fmt(s['dt'])}, samples: {s['samples']}",
            "",
            "Compatibility of the initial data (all should vanish):",
        ]
        lines += [f"  {k}: {_fmt(v)}" for k, v in s["compatibility"].items()]
        lines += [
            "",
            "Divergence constraints:",
            f"  max |Div B|: {_fmt(s['divergence']['magnetic'])}",
            "  max |Div D^n - Div D^0 + int Div(sigma E)| (trapezoidal in time): "
            f"{_fmt(s['divergence']['electric'])}",
            "",
            "Exponential decay e0(t) ~ M e0(0) exp(-omega t) on the fit window:",
            f"  omega = {_fmt(s['omega'])}, M = {_fmt(s['M'])}, r2 = {_fmt(s['r2'])}",
        ]
        if s.get("z_fit"):
            z = s["z_fit"]
            lines.append(f"  z: omega = {_fmt(z['omega'])}, M = {_fmt(z['M'])}, r2 = {_fmt(z['r2'])}")
        if s.get("energy_inequality"):
            ei = s["energy_inequality"]
            lines += [
                "",
                "Energy inequality e0(t) + int d0 <= e0(s) + c1 int z^{3/2} over the whole run:",
                f"  minimal c1 = {_fmt(ei['c1'])}, defect e0(s) - e0(t) - int d0 = {_fmt(ei['defect'])}",
                "  modified discrete energy balance defect (exact for linear laws): "
                f"{_fmt(ei['discrete_defect'])}",
            ]
        lines += ["", "Fitted constants (smallest values that hold on every window):"]
        for k, v in s["constants"].items():
            lines.append(f"  {k:5s} = {_fmt(v):>12s}   {INEQUALITIES[k]}")
        if s.get("variants"):
            lines += ["", "Variants of the fits:"]
            for name, var in s["variants"].items():
                items = ", ".join(f"{k}={_fmt(v)}" for k, v in var.items())
                lines.append(f"  {name}: {items}")
    else:
        for name, rows in outcome.tables.items():
            lines.append(f"{name}:")
            for r in rows:
                lines.append("  " + ", ".join(f"{k}={_fmt(v)}" for k, v in r.items()))
            lines.append("")
    lines += ["", "Assertions:"]
    if not outcome.assertions:
        lines.append("  none configured")
    for name, ok, detail in outcome.assertions:
        lines.append(f"  [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    lines += ["", "Geometry: rectangular box (simply connected, connected boundary), so the",
              "harmonic part of the Helmholtz decomposition is zero."]
    return "\n".join(lines) + "\n"


def _write_table(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join("" if r.get(k) is None else format(float(r[k]), ".17g") for k in keys))
    Path(path).write_text("\n".join(lines) + "\n")


def write_artifacts(out, cfg, outcome, figures=True):
    from . import plotting
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump(cfg))
    write_summary(out / "summary.json", outcome.summary)
    (out / "report.txt").write_text(render_report(cfg, outcome))
    figs = out / "figures"
    if outcome.kind == "maxwell":
        rec = outcome.extras.get("record", EnergyRecord())
        write_energies(out / "energies.csv", rec)
        res = outcome.extras.get("result")
        if res is not None:
            grid = outcome.extras["medium"].grid
            if cfg["output.fields"]:
                write_fields(out / "fields_final.bin", grid,
                             {"E": res.state.E, "H": res.state.H},
                             {"t": float(res.state.t).hex()})
            if cfg["output.slices"]:
                write_slice(out / "slice_E.csv", grid, res.state.E)
                write_slice(out / "slice_H.csv", grid, res.state.H)
        if figures and len(rec) >= 2:
            from .decay import FitError, fit_decay
            try:
                fit = fit_decay(rec.t, rec.series("e0"), cfg["analysis.fit_window"],
                                norm=rec.series("e0")[0])
            except FitError:
                fit = None
            plotting.plot_energies(rec, figs / "energies.png", fit)
            plotting.plot_divergence(rec, figs / "divergence.png")
            plotting.plot_commutators(rec, figs / "commutators.png")
            if res is not None:
                plotting.plot_slice(grid, res.state.E, figs / "slice_E.png", title="|E| at mid-plane")
    for name, rows in outcome.tables.items():
        _write_table(out / f"{name}.csv", rows)
        if figures and rows:
            _table_figure(plotting, name, rows, figs / f"{name}.png")
    return out


def _table_figure(plotting, name, rows, path):
    if name == "aux_convergence":
        plotting.plot_convergence(rows, "dt", ["abs_residual"], path)
    elif name == "frame_convergence":
        plotting.plot_convergence(rows, "N", ["normal_error", "tangential_error"], path)
    elif name == "frame_ode":
        plotting.plot_convergence(rows, "dt", ["gap"], path)
    elif name == "helmholtz":
        plotting.plot_convergence(rows, "N", ["poincare", "curl_div_sup"], path, loglog=False)


def _empty_outcome(cfg):
    from .scenarios import ScenarioOutcome, _empty_constants, build_grid
    grid = build_grid(cfg)
    summary = {"scenario": cfg["scenario.name"],
               "grid": {"shape": list(grid.shape), "extents": list(grid.extents),
                        "layout": grid.layout},
               "amplitude": cfg["initial.amplitude"], "omega": None, "M": None, "r2": None,
               "constants": _empty_constants(), "status": COMPLETED, "style": cfg["initial.style"],
               "seed": cfg["initial.seed"], "delta_tilde": None, "steps": 0, "dt": None,
               "samples": 0, "compatibility": {},
               "divergence": {"magnetic": None, "electric": None}}
    return ScenarioOutcome("maxwell", summary, extras={"record": EnergyRecord()})


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.schema:
        print(schema_reference())
        return EXIT_OK
    if args.verify:
        from .verify import run_suite
        with _thread_limit(args.threads):
            return run_suite(args.verify, out=Path(args.out) if args.out else None)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"maxlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        print(dump(cfg), end="")
        return EXIT_OK
    out = output_dir(args, cfg)
    if args.threads is not None and args.threads < 1:
        print("maxlab: configuration error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG

    from .scenarios import run_scenario
    with _thread_limit(args.threads):
        try:
            if cfg["scenario.kind"] == "maxwell" and cfg["run.t_final"] == 0 and not args.resume:
                outcome = _empty_outcome(cfg)
            else:
                kw = {}
                if cfg["scenario.kind"] == "maxwell":
                    kw["checkpoint_dir"] = out / "checkpoints" if cfg["run.checkpoint_stride"] else None
                    if args.resume:
                        from .io import read_checkpoint
                        kw["resume_state"] = read_checkpoint(args.resume)[1]
                log.info("running %s (%s) -> %s", cfg["scenario.name"], cfg["scenario.kind"], out)
                outcome = run_scenario(cfg, **kw)
        except Exception as exc:  # any failure while building or running the scenario
            print(f"maxlab: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_RUN
        write_artifacts(out, cfg, outcome, figures=cfg["output.figures"] and not args.no_figures)
    for name, ok, detail in outcome.assertions:
        log.info("[%s] %s: %s", "PASS" if ok else "FAIL", name, detail)
    if outcome.status != COMPLETED:
        print(f"maxlab: run ended with status {outcome.status}: "
              f"{outcome.summary.get('message', '')}", file=sys.stderr)
        return EXIT_RUN
    if not outcome.passed:
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
