"""Control coefficients by finite differences in log-modulator space.

A control coefficient of an output ``g`` with respect to modulator ``p`` is
``d ln|g| / d ln p`` at the reference state. It is estimated by central
differences at steps ``h`` and ``h/2`` in ``ln p`` and combined with one
Richardson extrapolation. Every probe re-solves the steady state (warm
started from the reference solution) or re-integrates the transient.

Summation audits check the identities that follow from homogeneity of the
equations under three scaling families:

=====================  ===========================================  ======
name                   combination                                  value
=====================  ===========================================  ======
reaction               sum C_D + sum C_v + sum C_f                  1 / 0
time                   -C_t + sum C_D + sum C_v + sum C_f           1 / 0
size                   2 sum C_D + sum C_f + C_L                    1 / 0
size_halfline          2 sum C_D + sum C_f                          1 / 0
=====================  ===========================================  ======

with 1 for flux targets and 0 for concentration targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .discretize import Mesh, assemble
from .errors import ControlError, ProbeSolveFailed, SolverError, ZeroTarget
from .model import (
    HalfLine,
    ModulationVector,
    NetworkSpec,
    apply_modulation,
    expand_modulators,
    scale_modulation,
)
from .solve import ConcentrationField, SolveSettings, initial_field, integrate_transient, solve_steady

ZERO_THRESHOLD = 1e-12


@dataclass(frozen=True)
class Flux:
    """Steady-state flux ``J``."""


@dataclass(frozen=True)
class Concentration:
    """Steady concentration of ``species`` at ``position``.

    With ``minus`` set, the target is the difference
    ``c(position) - c(minus)``; positions on the domain faces are
    extrapolated from the outermost cells.
    """

    species: str
    position: float
    minus: Optional[float] = None


@dataclass(frozen=True)
class TimedFlux:
    tau: float


@dataclass(frozen=True)
class TimedConcentration:
    species: str
    position: float
    tau: float
    minus: Optional[float] = None


Target = Union[Flux, Concentration, TimedFlux, TimedConcentration]


def is_timed(target: Target) -> bool:
    return isinstance(target, (TimedFlux, TimedConcentration))


def is_flux(target: Target) -> bool:
    return isinstance(target, (Flux, TimedFlux))


def _validate_target(spec: NetworkSpec, target: Target) -> None:
    L = spec.geometry.length
    if isinstance(target, (Concentration, TimedConcentration)):
        spec.species_index(target.species)
        for pos in (target.position, target.minus):
            if pos is not None and not 0.0 <= pos <= L:
                raise ControlError(f"position {pos} lies outside [0, {L}]")
    if is_timed(target) and not target.tau > 0:
        raise ControlError("target time must be positive")


@dataclass(frozen=True)
class Estimate:
    value: float
    trunc_err: float

    def __float__(self) -> float:
        return self.value


class Prober:
    """Evaluates one target under arbitrary modulation vectors.

    Holds the reference solution so probes can warm-start from it; safe to
    reuse across modulators of the same network, mesh and target.
    """

    def __init__(
        self,
        spec: NetworkSpec,
        mesh: Mesh,
        target: Target,
        settings: Optional[SolveSettings] = None,
        init: Optional[ConcentrationField] = None,
    ):
        _validate_target(spec, target)
        self.spec = spec
        self.mesh = mesh
        self.target = target
        self.settings = settings or SolveSettings()
        self.reference_mv = ModulationVector.reference(spec)
        self.init = init if init is not None else initial_field(spec, mesh)
        self.reference_field = self._solve(self.reference_mv, self.init)
        self.reference_value, self.scale = self._measure(self.reference_mv, self.reference_field)

    def _solve(self, mv: ModulationVector, guess: ConcentrationField) -> ConcentrationField:
        mod = apply_modulation(self.spec, mv)
        if is_timed(self.target):
            traj = integrate_transient(mod, self.mesh, self.init, self.target.tau, self.settings.n_steps, self.settings)
            return traj.final()
        return solve_steady(mod, self.mesh, guess, self.settings)

    def _measure(self, mv: ModulationVector, fld: ConcentrationField) -> tuple[float, float]:
        t = self.target
        if is_flux(t):
            system = assemble(apply_modulation(self.spec, mv), self.mesh, self.settings.face_extrapolation)
            return system.flux(fld.values), system.flux_scale(fld.values)
        conc = fld[t.species]
        value = float(self.mesh.sample(conc, t.position))
        if t.minus is not None:
            value -= float(self.mesh.sample(conc, t.minus))
        return value, float(np.abs(fld.values).max())

    def __call__(self, mv: ModulationVector) -> float:
        return self._measure(mv, self._solve(mv, self.reference_field))[0]

    @property
    def is_zero(self) -> bool:
        return abs(self.reference_value) < ZERO_THRESHOLD * self.scale

    def coefficient(self, modulator: Union[str, Iterable[str]], h: float = 1e-3) -> Estimate:
        """Log-log sensitivity to one modulator (or a set moved together)."""
        if not 0 < h <= 0.1:
            raise ControlError("log step h must lie in (0, 0.1]")
        keys = expand_modulators(self.spec, modulator)
        label = ",".join(keys)

        def g(step: float) -> float:
            mv = self.reference_mv.replace({k: self.reference_mv.get(k) * math.exp(step) for k in keys})
            try:
                return self(mv)
            except SolverError as exc:
                raise ProbeSolveFailed(label, exc) from exc

        if self.is_zero:
            deriv = (g(h) - g(-h)) / (2.0 * h)
            raise ZeroTarget(self.reference_value, deriv, label)

        def central(step: float) -> float:
            gp, gm = g(step), g(-step)
            if gp == 0.0 or gm == 0.0 or (gp > 0) != (gm > 0):
                raise ZeroTarget(self.reference_value, (gp - gm) / (2.0 * step), label)
            return (math.log(abs(gp)) - math.log(abs(gm))) / (2.0 * step)

        coarse = central(h)
        fine = central(0.5 * h)
        return Estimate((4.0 * fine - coarse) / 3.0, abs(fine - coarse) / 3.0)

    def derivative(self, modulator: Union[str, Iterable[str]], h: float = 1e-3) -> float:
        """Plain ``dg / d ln(alpha)``; used when the target vanishes."""
        keys = expand_modulators(self.spec, modulator)
        vals = []
        for step in (h, -h):
            mv = self.reference_mv.replace({k: self.reference_mv.get(k) * math.exp(step) for k in keys})
            vals.append(self(mv))
        return (vals[0] - vals[1]) / (2.0 * h)


def control_coefficient(
    spec: NetworkSpec,
    mesh: Mesh,
    target: Target,
    modulator: Union[str, Iterable[str]],
    h: float = 1e-3,
    settings: Optional[SolveSettings] = None,
    init: Optional[ConcentrationField] = None,
) -> float:
    """Control coefficient of ``target`` with respect to ``modulator``.

    ``modulator`` is a key such as ``"D:Y"``, ``"f:kinase"``, ``"L"``, a
    family (``"alpha_D"``), or a list of keys modulated together.
    """
    return Prober(spec, mesh, target, settings, init).coefficient(modulator, h).value


def size_control(
    spec: NetworkSpec,
    mesh: Mesh,
    target: Target,
    h: float = 1e-3,
    settings: Optional[SolveSettings] = None,
) -> float:
    return control_coefficient(spec, mesh, target, "L", h, settings)


def time_control(
    spec: NetworkSpec,
    mesh: Mesh,
    init: Optional[ConcentrationField],
    target: Target,
    h: float = 1e-3,
    settings: Optional[SolveSettings] = None,
) -> float:
    if not is_timed(target):
        raise ControlError("time control needs a TimedFlux or TimedConcentration target")
    return control_coefficient(spec, mesh, target, "t", h, settings, init)


# -- reports -----------------------------------------------------------------


@dataclass
class ControlReport:
    target: Target
    h: float
    coefficients: dict[str, float] = field(default_factory=dict)
    trunc_err: dict[str, float] = field(default_factory=dict)
    sums: dict[str, float] = field(default_factory=dict)
    residuals: dict[str, float] = field(default_factory=dict)
    zero_target: bool = False
    derivatives: dict[str, float] = field(default_factory=dict)
    reference_value: float = float("nan")

    def family_sum(self, prefix: str) -> float:
        return sum(v for k, v in self.coefficients.items() if k.startswith(prefix))

    @property
    def max_trunc_err(self) -> float:
        return max(self.trunc_err.values(), default=0.0)


def _report_modulators(spec: NetworkSpec, target: Target) -> list[str]:
    keys = [k for k in spec.modulators() if k != "t"]
    if is_timed(target):
        keys.append("t")
    return keys


def control_report(
    spec: NetworkSpec,
    mesh: Mesh,
    target: Target,
    h: float = 1e-3,
    settings: Optional[SolveSettings] = None,
    init: Optional[ConcentrationField] = None,
) -> ControlReport:
    """Every control coefficient of ``target`` plus all applicable theorem sums."""
    prober = Prober(spec, mesh, target, settings, init)
    report = ControlReport(target, h, reference_value=prober.reference_value)
    keys = _report_modulators(spec, target)
    if prober.is_zero:
        report.zero_target = True
        for k in keys:
            report.derivatives[k] = prober.derivative(k, h)
        return report
    for k in keys:
        est = prober.coefficient(k, h)
        report.coefficients[k] = est.value
        report.trunc_err[k] = est.trunc_err

    a = 1.0 if is_flux(target) else 0.0
    sD = report.family_sum("D:")
    sv = report.family_sum("v:")
    sf = report.family_sum("f:")
    cL = report.coefficients["L"]
    if is_timed(target):
        report.sums["time"] = -report.coefficients["t"] + sD + sv + sf
    else:
        report.sums["reaction"] = sD + sv + sf
    report.sums["size"] = 2.0 * sD + sf + cL
    if isinstance(spec.geometry, HalfLine):
        report.sums["size_halfline"] = 2.0 * sD + sf
    report.residuals = {k: v - a for k, v in report.sums.items()}
    return report


def summation_audit_reaction(spec, mesh, target, h=1e-3, settings=None) -> ControlReport:
    """Diffusion + reaction + transport controls of a steady output."""
    if is_timed(target):
        raise ControlError("use summation_audit_time for timed targets")
    return control_report(spec, mesh, target, h, settings)


def summation_audit_time(spec, mesh, init, target, h=1e-3, settings=None) -> ControlReport:
    """Time-dependent version: ``-C_t`` joins the reaction sum."""
    if not is_timed(target):
        raise ControlError("summation_audit_time needs a timed target")
    return control_report(spec, mesh, target, h, settings, init)


def summation_audit_size(spec, mesh, target, h=1e-3, settings=None, init=None) -> ControlReport:
    """Size theorem: diffusion counted twice, bulk reactions excluded."""
    return control_report(spec, mesh, target, h, settings, init)


# -- homogeneity -------------------------------------------------------------


def homogeneity_check(
    probe: Callable[[ModulationVector], float],
    exponents: Mapping[str, float],
    gamma: float,
    lambdas: Sequence[float],
    base: ModulationVector,
) -> float:
    """Worst relative deviation of ``g(lam^beta p) / (lam^gamma g(p))`` from 1."""
    g0 = probe(base)
    worst = 0.0
    for lam in lambdas:
        expected = lam**gamma * g0
        got = probe(scale_modulation(base, lam, exponents))
        worst = max(worst, abs(got - expected) / max(abs(expected), 1e-300))
    return worst


RATE_FAMILY = {"alpha_D": 1.0, "alpha_v": 1.0, "alpha_f": 1.0}
SIZE_FAMILY = {"alpha_D": 2.0, "alpha_f": 1.0, "alpha_L": 1.0}
TIME_FAMILY = {"alpha_D": 1.0, "alpha_v": 1.0, "alpha_f": 1.0, "alpha_t": -1.0}
