"""Command-line front end.

Commands::

    spatialmca steady            --config run.toml [--out profile.csv] [--cells N]
    spatialmca transient         --config run.toml [--out traj.csv]
    spatialmca control           --config run.toml [--fd-step h]
    spatialmca verify            --config run.toml [--tol x]
    spatialmca reproduce-figure  {4,5} [--points 60] [--param M=2]

Exit codes: 0 ok, 1 audit failure, 2 config error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import analytic, control
from .config import ConfigError, RunConfig, load_config
from .discretize import assemble, build_mesh
from .errors import ControlError, ModelError, SolverError, ZeroTarget
from .model import HalfLine, ModulationVector, apply_modulation
from .networks import slab_network, sphere_network
from .solve import initial_field, integrate_transient, moiety_totals, solve_steady

log = logging.getLogger("spatialmca")

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def fmt(x: float) -> str:
    return f"{x:.12g}"


class _Output:
    """CSV sink on a file or stdout."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self.buffer = io.StringIO()
        self.writer = csv.writer(self.buffer, lineterminator="\n")

    def row(self, cells) -> None:
        self.writer.writerow([fmt(c) if isinstance(c, float) else c for c in cells])

    def close(self) -> None:
        if self.path:
            with open(self.path, "w", newline="") as fh:
                fh.write(self.buffer.getvalue())
        else:
            sys.stdout.write(self.buffer.getvalue())


def _mesh_for(cfg: RunConfig, cells: Optional[int]):
    return build_mesh(cfg.spec.geometry, cells or cfg.cells)


def _settings(cfg: RunConfig, args):
    if args.tol is not None:
        return replace(cfg.settings, newton_tol=args.tol)
    return cfg.settings


# -- steady / transient ------------------------------------------------------


def cmd_steady(cfg: RunConfig, args) -> int:
    mesh = _mesh_for(cfg, args.cells)
    mod = apply_modulation(cfg.spec, ModulationVector.reference(cfg.spec))
    settings = _settings(cfg, args)
    fld = solve_steady(mod, mesh, None, settings)
    J = assemble(mod, mesh, settings.face_extrapolation).flux(fld.values)
    out = _Output(args.out or cfg.output)
    names = list(fld.species)
    out.row(["xi"] + names)
    for k, xi in enumerate(mesh.centers):
        out.row([float(xi)] + [float(fld.values[i, k]) for i in range(len(names))])
    out.row(["J", float(J)] + [""] * (len(names) - 1))
    out.close()
    return EXIT_OK


def cmd_transient(cfg: RunConfig, args) -> int:
    mesh = _mesh_for(cfg, args.cells)
    mod = apply_modulation(cfg.spec, ModulationVector.reference(cfg.spec))
    settings = cfg.settings
    traj = integrate_transient(mod, mesh, initial_field(cfg.spec, mesh), cfg.tau_end, settings.n_steps, settings)
    system = assemble(mod, mesh, settings.face_extrapolation)
    picks = np.unique(np.linspace(0, len(traj.times) - 1, max(cfg.samples, 2)).round().astype(int))
    out = _Output(args.out or cfg.output)
    names = list(traj.species)
    out.row(["tau", "xi"] + names)
    for n in picks:
        for k, xi in enumerate(mesh.centers):
            out.row([float(traj.times[n]), float(xi)] + [float(traj.values[n, i, k]) for i in range(len(names))])
    for n in picks:
        out.row(["J", float(traj.times[n]), float(system.flux(traj.values[n]))] + [""] * (len(names) - 1))
    out.close()
    return EXIT_OK


# -- control -----------------------------------------------------------------

SUM_ROWS = {
    "reaction": "SUM_REACTION_THEOREM",
    "time": "SUM_TIME_THEOREM",
    "size": "SUM_SIZE_THEOREM",
    "size_halfline": "SUM_SIZE_HALFLINE_THEOREM",
}


def cmd_control(cfg: RunConfig, args) -> int:
    mesh = _mesh_for(cfg, args.cells)
    h = args.fd_step or cfg.h
    report = control.control_report(cfg.spec, mesh, cfg.target, h, _settings(cfg, args))
    out = _Output(args.out or cfg.output)
    out.row(["modulator", "coefficient", "trunc_err"])
    if report.zero_target:
        # log-derivative undefined; list plain derivatives dg/dln(alpha)
        out.row(["ZERO_TARGET", float(report.reference_value), ""])
        for k, d in report.derivatives.items():
            out.row([k, float(d), ""])
    else:
        for k, v in report.coefficients.items():
            out.row([k, float(v), float(report.trunc_err[k])])
        bound = float(sum(report.trunc_err.values()))
        for name, res in report.residuals.items():
            out.row([SUM_ROWS[name], float(res), bound])
    out.close()
    return EXIT_OK


# -- verify ------------------------------------------------------------------


def _default_targets(cfg: RunConfig) -> list:
    spec = cfg.spec
    if isinstance(spec.geometry, HalfLine):
        pos = 0.0
    else:
        pos = 0.5 * spec.geometry.length
    return [control.Flux(), control.Concentration(spec.flux_species, pos)]


def _target_label(t) -> str:
    if isinstance(t, control.Flux):
        return "flux"
    if isinstance(t, control.TimedFlux):
        return f"flux@tau={fmt(t.tau)}"
    where = fmt(t.position) if t.minus is None else f"{fmt(t.position)}-{fmt(t.minus)}"
    label = f"concentration[{t.species}@{where}]"
    if isinstance(t, control.TimedConcentration):
        label += f"@tau={fmt(t.tau)}"
    return label


def run_verify(cfg: RunConfig, cells: Optional[int] = None, tol: Optional[float] = None, h: Optional[float] = None,
               emit: Callable[[str], None] = print) -> bool:
    """Run every audit; returns True when all pass."""
    vs = cfg.verify
    tol = vs.tol if tol is None else tol
    h = h or cfg.h
    mesh = _mesh_for(cfg, cells)
    spec = cfg.spec
    settings = cfg.settings
    ok = True

    def check(name: str, value: float, limit: float) -> None:
        nonlocal ok
        passed = bool(np.isfinite(value)) and abs(value) <= limit
        ok &= passed
        emit(f"{'PASS' if passed else 'FAIL'} {name}: residual={value:.3e} tol={limit:.1e}")

    targets = vs.targets or _default_targets(cfg)
    for t in targets:
        label = _target_label(t)
        try:
            report = control.control_report(spec, mesh, t, h, settings)
        except ZeroTarget as exc:
            emit(f"SKIP {label}: target vanishes at the reference state ({exc.value:.3e})")
            continue
        if report.zero_target:
            emit(f"SKIP {label}: target vanishes at the reference state ({report.reference_value:.3e})")
            continue
        for name, res in report.residuals.items():
            check(f"{name.replace('_', '-')}-summation[{label}]", res, tol)

    base = ModulationVector.reference(spec)
    flux_probe = control.Prober(spec, mesh, control.Flux(), settings)
    if flux_probe.is_zero:
        emit("SKIP flux homogeneity: flux vanishes at the reference state")
    else:
        check("rate-homogeneity[flux]",
              control.homogeneity_check(flux_probe, control.RATE_FAMILY, 1.0, vs.lambdas, base), vs.homogeneity_tol)
        check("size-homogeneity[flux]",
              control.homogeneity_check(flux_probe, control.SIZE_FAMILY, 1.0, vs.lambdas, base), vs.homogeneity_tol)
    for t in targets:
        if isinstance(t, control.Concentration):
            probe = control.Prober(spec, mesh, t, settings)
            label = _target_label(t)
            check(f"rate-homogeneity[{label}]",
                  _abs_homogeneity(probe, control.RATE_FAMILY, vs.lambdas, base), vs.homogeneity_tol)
            check(f"size-homogeneity[{label}]",
                  _abs_homogeneity(probe, control.SIZE_FAMILY, vs.lambdas, base), vs.homogeneity_tol)

    timed = control.TimedFlux(vs.tau)
    timed_probe = control.Prober(spec, mesh, timed, settings)
    if timed_probe.is_zero:
        emit(f"SKIP time audits: flux vanishes at tau={fmt(vs.tau)}")
    else:
        check(f"time-homogeneity[{_target_label(timed)}]",
              control.homogeneity_check(timed_probe, control.TIME_FAMILY, 1.0, vs.lambdas, base), vs.homogeneity_tol)
        try:
            report = control.control_report(spec, mesh, timed, h, settings)
            check(f"time-summation[{_target_label(timed)}]", report.residuals["time"], tol)
        except ZeroTarget:
            emit(f"SKIP time-summation: flux changes sign under modulation at tau={fmt(vs.tau)}")

    mod = apply_modulation(spec, base)
    traj = integrate_transient(mod, mesh, initial_field(spec, mesh), vs.tau, settings.n_steps, settings)
    for i, m in enumerate(spec.moieties):
        totals = moiety_totals(traj, mesh, m.weights) / mesh.total_volume
        drift = float(np.abs(totals - totals[0]).max()) / vs.tau
        check(f"moiety-conservation[{i}]", drift, vs.moiety_tol)
    return ok


def _abs_homogeneity(probe, exponents, lambdas, base) -> float:
    # degree-0 outputs: compare on the output's own scale, not relative to a possibly tiny value
    g0 = probe(base)
    scale = max(abs(g0), probe.scale)
    return max(abs(probe(control.scale_modulation(base, lam, exponents)) - g0) for lam in lambdas) / scale


def cmd_verify(cfg: RunConfig, args) -> int:
    ok = run_verify(cfg, args.cells, args.tol, args.fd_step)
    return EXIT_OK if ok else EXIT_AUDIT


# -- figures -----------------------------------------------------------------

FIGURE_DEFAULTS = dict(D=1.0, k_k=1.0, k_p=1.0, kappa_k=10.0, kappa_p=0.1, M=1.0)
COEFFS = ("k", "p", "D", "L")


def _numeric(report: control.ControlReport, phosphatase_key: str) -> dict:
    c = report.coefficients
    return {
        "k": c["f:kinase"],
        "p": c[phosphatase_key],
        "D": report.family_sum("D:"),
        "L": c["L"],
    }


def figure_row(which: int, params: dict, L: float, cells: int, h: float, settings=None) -> dict:
    """Analytic and numeric flux/concentration controls at one system size."""
    if which == 4:
        m = analytic.SlabModel(L=L, **params)
        spec = slab_network(m)
        fa, ca = analytic.slab_flux_controls(m), analytic.slab_conc_controls(m)
        conc_target = control.Concentration("YP", L, 0.0)
        pkey = "f:phosphatase"
        size_sum = 2 * fa["D"] + fa["k"] + fa["p"] + fa["L"]
    else:
        m = analytic.SphereModel(L=L, **params)
        spec = sphere_network(m)
        fa, ca = analytic.sphere_flux_controls(m), analytic.sphere_conc_controls(m)
        conc_target = control.Concentration("YP", 0.5 * L)
        pkey = "v:phosphatase"
        size_sum = 2 * fa["D"] + fa["k"] + fa["L"]
    mesh = build_mesh(spec.geometry, cells)
    fn = _numeric(control.control_report(spec, mesh, control.Flux(), h, settings), pkey)
    cn = _numeric(control.control_report(spec, mesh, conc_target, h, settings), pkey)
    row = {"L": L}
    for prefix, an, nu in (("CJ", fa, fn), ("Cc", ca, cn)):
        for k in COEFFS:
            row[f"{prefix}_{k}_analytic"] = an[k]
            row[f"{prefix}_{k}_numeric"] = nu[k]
            row[f"{prefix}_{k}_absdiff"] = abs(an[k] - nu[k])
    row["CJ_sum_reaction_analytic"] = fa["k"] + fa["p"] + fa["D"]
    row["CJ_sum_size_analytic"] = size_sum
    return row


def figure_columns() -> list[str]:
    cols = ["L"]
    for prefix in ("CJ", "Cc"):
        for k in COEFFS:
            cols += [f"{prefix}_{k}_analytic", f"{prefix}_{k}_numeric", f"{prefix}_{k}_absdiff"]
    return cols + ["CJ_sum_reaction_analytic", "CJ_sum_size_analytic"]


def _parse_params(items: Sequence[str]) -> dict:
    params = dict(FIGURE_DEFAULTS)
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or key not in FIGURE_DEFAULTS:
            raise ConfigError("--param", f"expected one of {sorted(FIGURE_DEFAULTS)} as KEY=VALUE, got {item!r}")
        try:
            params[key] = float(value)
        except ValueError:
            raise ConfigError(f"--param {key}", f"not a number: {value!r}") from None
    return params


def _write_meta(out_path: Optional[str], meta: dict) -> None:
    text = json.dumps(meta, indent=2, sort_keys=True)
    if out_path:
        with open(out_path + ".meta.json", "w") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=sys.stderr)


def cmd_reproduce_figure(args) -> int:
    params = _parse_params(args.param)
    which = int(args.figure)
    if not (0 < args.lmin < args.lmax) or args.points < 2:
        raise ConfigError("--lmin/--lmax/--points", "need 0 < lmin < lmax and at least 2 points")
    grid = np.logspace(math.log10(args.lmin), math.log10(args.lmax), args.points)
    cells = args.cells or 1024
    h = args.fd_step or 1e-3
    meta = {
        "figure": which,
        "system": "slab, kinase and phosphatase on opposite membranes" if which == 4
        else "sphere, membrane kinase, bulk phosphatase",
        "parameters": params,
        "L_grid": {"kind": "log", "min": args.lmin, "max": args.lmax, "points": args.points},
        "cells": cells,
        "fd_step": h,
        "concentration_target": "YP(L) - YP(0)" if which == 4 else "YP(L/2)",
        "phosphatase_modulator": "f:phosphatase" if which == 4 else "v:phosphatase",
    }
    _write_meta(args.out, meta)
    out = _Output(args.out)
    cols = figure_columns()
    out.row(cols)
    for L in grid:
        row = figure_row(which, params, float(L), cells, h)
        out.row([float(row[c]) for c in cols])
    out.close()
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output CSV path (default: config output.path or stdout)")
    common.add_argument("--cells", type=int, help="number of finite-volume cells")
    common.add_argument("--fd-step", type=float, dest="fd_step", help="log-space finite-difference step h")
    common.add_argument("--tol", type=float, help="audit tolerance for verify, Newton tolerance otherwise")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spatialmca", description="Spatial metabolic control analysis toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("steady", "solve for the steady state and write profiles"),
        ("transient", "integrate from the initial profiles and write snapshots"),
        ("control", "estimate control coefficients and theorem residuals"),
        ("verify", "run the theorem, homogeneity and conservation audits"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--config", required=True, help="TOML run configuration")
    p = sub.add_parser("reproduce-figure", parents=[common], help="sweep L for the slab (4) or sphere (5) example")
    p.add_argument("figure", choices=["4", "5"])
    p.add_argument("--points", type=int, default=60)
    p.add_argument("--lmin", type=float, default=0.05)
    p.add_argument("--lmax", type=float, default=20.0)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="override D, k_k, k_p, kappa_k, kappa_p or M")
    return parser


COMMANDS = {
    "steady": cmd_steady,
    "transient": cmd_transient,
    "control": cmd_control,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        if args.command == "reproduce-figure":
            code = cmd_reproduce_figure(args)
        else:
            code = COMMANDS[args.command](load_config(args.config), args)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ControlError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
