"""TOML run configurations.

Schema (all sections but ``geometry``, ``species`` and ``flux`` optional)::

    [geometry]
    kind = "slab"            # slab | sphere | halfline
    length = 1.0             # slab width or sphere radius
    # truncation = 40.0      # halfline only
    # length_scale = 1.0     # halfline only, checked against truncation

    [constants]
    k_k = 1.0

    [[species]]
    name = "Y"
    D = 1.0
    initial = 0.5            # number, or expression in xi and constants

    [[reactions]]
    name = "phosphatase"
    stoich = { YP = -1, Y = 1 }
    rate = "k_p*(YP - kappa_p*Y)"

    [[transports]]
    species = "YP"
    face = "surface"
    rate = "k_k*(YP - kappa_k*Y)"
    group = "kinase"         # optional shared modulator

    [flux]
    species = "YP"
    faces = ["surface"]      # optional

    [[moieties]]
    weights = { Y = 1, YP = 1 }
    total = 1.0              # domain average; optional

    [solver]
    cells = 256
    newton_tol = 1e-10
    n_steps = 100
    tau_end = 10.0           # transient command
    samples = 11             # transient output time points

    [control]
    h = 1e-3
    target = { kind = "flux" }
    # target = { kind = "concentration", species = "YP", position = 0.5, minus = 0.0 }
    # kinds: flux, concentration, timed_flux, timed_concentration (with tau)

    [verify]
    tol = 1e-4               # summation residuals
    homogeneity_tol = 1e-8
    moiety_tol = 1e-10       # drift per unit tau
    lambdas = [0.5, 2.0, 4.0]
    tau = 1.0                # time theorem and moiety drift
    targets = [ { kind = "flux" } ]

    [output]
    path = "out.csv"
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import tomli

from . import ratelang
from .control import Concentration, Flux, Target, TimedConcentration, TimedFlux
from .errors import ModelError, RateError
from .model import HalfLine, Moiety, NetworkSpec, Reaction, Slab, Species, Sphere, TransportLaw, build_network
from .solve import SolveSettings


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass
class VerifySettings:
    tol: float = 1e-4
    homogeneity_tol: float = 1e-8
    moiety_tol: float = 1e-10
    lambdas: tuple[float, ...] = (0.5, 2.0, 4.0)
    tau: float = 1.0
    targets: list = field(default_factory=list)


@dataclass
class RunConfig:
    spec: NetworkSpec
    cells: int = 256
    settings: SolveSettings = field(default_factory=SolveSettings)
    tau_end: float = 10.0
    samples: int = 11
    h: float = 1e-3
    target: Target = field(default_factory=Flux)
    verify: VerifySettings = field(default_factory=VerifySettings)
    output: Optional[str] = None


def _get(table: dict, key: str, where: str, kind=None, default: Any = ...):
    if key not in table:
        if default is ...:
            raise ConfigError(f"{where}.{key}", "missing")
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{where}.{key}", f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _geometry(table: dict):
    kind = _get(table, "kind", "geometry", str)
    try:
        if kind == "slab":
            return Slab(_get(table, "length", "geometry", float))
        if kind == "sphere":
            return Sphere(_get(table, "length", "geometry", float))
        if kind == "halfline":
            return HalfLine(
                _get(table, "truncation", "geometry", float),
                _get(table, "length_scale", "geometry", float, None),
            )
    except ModelError as exc:
        raise ConfigError("geometry", str(exc)) from exc
    raise ConfigError("geometry.kind", f"unknown geometry {kind!r} (slab, sphere, halfline)")


def _rate(text: str, where: str, species, constants) -> ratelang.RateExpr:
    try:
        return ratelang.parse_rate(text, species=species, constants=constants)
    except RateError as exc:
        raise ConfigError(where, str(exc)) from exc


def _profile(value, where: str, constants: dict):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(where, "initial profile must be a number or an expression in xi")
    expr = _rate(value, where, ("xi",), constants)

    def profile(xi, expr=expr):
        return ratelang.eval_rate(expr, {"xi": xi}, constants)

    return profile


def parse_target(table: dict, where: str = "control.target") -> Target:
    kind = _get(table, "kind", where, str)
    if kind == "flux":
        return Flux()
    if kind == "timed_flux":
        return TimedFlux(_get(table, "tau", where, float))
    if kind in ("concentration", "timed_concentration"):
        species = _get(table, "species", where, str)
        position = _get(table, "position", where, float)
        minus = _get(table, "minus", where, float, None)
        if kind == "concentration":
            return Concentration(species, position, minus)
        return TimedConcentration(species, position, _get(table, "tau", where, float), minus)
    raise ConfigError(f"{where}.kind", f"unknown target kind {kind!r}")


def build_spec(doc: dict) -> NetworkSpec:
    geometry = _geometry(_get(doc, "geometry", "config", dict))
    constants = {}
    for k, v in _get(doc, "constants", "config", dict, {}).items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"constants.{k}", "must be a number")
        constants[k] = float(v)

    species = []
    raw_species = _get(doc, "species", "config", list)
    names = [_get(s, "name", f"species[{i}]", str) for i, s in enumerate(raw_species)]
    for i, s in enumerate(raw_species):
        where = f"species[{i}]"
        try:
            species.append(
                Species(names[i], _get(s, "D", where, float), _profile(s.get("initial", 0.0), where + ".initial", constants))
            )
        except ModelError as exc:
            raise ConfigError(where, str(exc)) from exc

    reactions = []
    for i, r in enumerate(_get(doc, "reactions", "config", list, [])):
        where = f"reactions[{i}]"
        stoich = _get(r, "stoich", where, dict)
        reactions.append(
            Reaction(
                _get(r, "name", where, str),
                {k: _get(stoich, k, where + ".stoich", (int, float)) for k in stoich},
                _rate(_get(r, "rate", where, str), where + ".rate", names, constants),
            )
        )

    transports = []
    for i, t in enumerate(_get(doc, "transports", "config", list, [])):
        where = f"transports[{i}]"
        transports.append(
            TransportLaw(
                _get(t, "species", where, str),
                _get(t, "face", where, str),
                _rate(_get(t, "rate", where, str), where + ".rate", names, constants),
                _get(t, "group", where, str, None),
            )
        )

    flux = _get(doc, "flux", "config", dict)
    moieties = []
    for i, m in enumerate(_get(doc, "moieties", "config", list, [])):
        where = f"moieties[{i}]"
        weights = {k: float(v) for k, v in _get(m, "weights", where, dict).items()}
        moieties.append(Moiety(weights, _get(m, "total", where, float, None)))

    try:
        return build_network(
            species,
            reactions,
            transports,
            geometry,
            flux_species=_get(flux, "species", "flux", str),
            constants=constants,
            flux_faces=_get(flux, "faces", "flux", list, None),
            moieties=moieties,
        )
    except ModelError as exc:
        raise ConfigError("network", str(exc)) from exc


def parse_config(doc: dict) -> RunConfig:
    spec = build_spec(doc)
    solver = _get(doc, "solver", "config", dict, {})
    try:
        settings = SolveSettings(
            newton_tol=_get(solver, "newton_tol", "solver", float, 1e-10),
            max_newton_iters=_get(solver, "max_newton_iters", "solver", int, 50),
            n_steps=_get(solver, "n_steps", "solver", int, 100),
            transient_tol=_get(solver, "transient_tol", "solver", float, 1e-10),
        )
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from exc
    control = _get(doc, "control", "config", dict, {})
    target = parse_target(_get(control, "target", "control", dict, {"kind": "flux"}))

    vt = _get(doc, "verify", "config", dict, {})
    verify = VerifySettings(
        tol=_get(vt, "tol", "verify", float, 1e-4),
        homogeneity_tol=_get(vt, "homogeneity_tol", "verify", float, 1e-8),
        moiety_tol=_get(vt, "moiety_tol", "verify", float, 1e-10),
        lambdas=tuple(float(x) for x in _get(vt, "lambdas", "verify", list, [0.5, 2.0, 4.0])),
        tau=_get(vt, "tau", "verify", float, 1.0),
        targets=[parse_target(t, f"verify.targets[{i}]") for i, t in enumerate(_get(vt, "targets", "verify", list, []))],
    )
    out = _get(doc, "output", "config", dict, {})
    return RunConfig(
        spec=spec,
        cells=_get(solver, "cells", "solver", int, 256),
        settings=settings,
        tau_end=_get(solver, "tau_end", "solver", float, 10.0),
        samples=_get(solver, "samples", "solver", int, 11),
        h=_get(control, "h", "control", float, 1e-3),
        target=target,
        verify=verify,
        output=_get(out, "path", "output", str, None),
    )


def load_config(path) -> RunConfig:
    try:
        with open(Path(path), "rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("config", f"TOML syntax error: {exc}") from exc
    return parse_config(doc)
