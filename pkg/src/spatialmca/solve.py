"""Steady-state and transient solvers.

Steady states are found by damped Newton on ``F(c) = 0``. Every declared
moiety makes one balance equation redundant (the moiety-weighted sum of all
rows vanishes identically), so for each moiety one row is replaced by the
constraint that fixes its total; otherwise the Jacobian would be singular.

Transients use implicit Euler in reference time::

    c^{n+1} - c^n = dtau * alpha_t * F(c^{n+1})
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import DiscreteSystem, Mesh, assemble
from .errors import NegativeConcentration, NewtonDiverged, SolverError, StepSolveFailed
from .model import ModulatedSpec, ModulationVector, Moiety

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveSettings:
    newton_tol: float = 1e-10
    max_newton_iters: int = 50
    max_halvings: int = 30
    armijo: float = 1e-4
    n_steps: int = 100  # default step count for transient probes
    transient_tol: float = 1e-10
    face_extrapolation: bool = True

    def __post_init__(self):
        if not (self.newton_tol > 0 and self.transient_tol > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class ConcentrationField:
    """Cell-center concentrations, shape ``(n_species, n_cells)``.

    Transient results carry ``times`` and have shape
    ``(n_times, n_species, n_cells)``.
    """

    values: np.ndarray
    species: tuple[str, ...]
    mesh: Mesh
    mv: Optional[ModulationVector] = None
    times: Optional[np.ndarray] = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[..., self.species.index(name), :]

    @property
    def is_transient(self) -> bool:
        return self.times is not None

    def final(self) -> "ConcentrationField":
        if not self.is_transient:
            return self
        return ConcentrationField(self.values[-1], self.species, self.mesh, self.mv)


def initial_field(spec, mesh: Mesh) -> ConcentrationField:
    """Field built from the species' initial profiles."""
    values = np.vstack([s.initial_values(mesh.centers) for s in spec.species])
    _apply_moiety_totals(spec, mesh, values)
    return ConcentrationField(values, tuple(spec.species_names), mesh)


def _apply_moiety_totals(spec, mesh: Mesh, values: np.ndarray) -> None:
    # rescale the guess so declared moiety averages hold; only used for guesses
    for m in spec.moieties:
        if m.total is None:
            continue
        w = np.array([m.weights.get(n, 0.0) for n in spec.species_names])
        current = (w @ values) @ mesh.volumes / mesh.total_volume
        if current != 0:
            idx = np.nonzero(w)[0]
            values[idx] *= m.total / current


def moiety_totals(field: ConcentrationField, mesh: Mesh, weights: Union[Mapping[str, float], Sequence[float]]):
    """Volume integral of ``sum_i w_i c_i``; one value per time point for transients."""
    if isinstance(weights, Mapping):
        w = np.array([weights.get(n, 0.0) for n in field.species])
    else:
        w = np.asarray(weights, dtype=float)
        if w.size == 0:
            return np.zeros(len(field.times)) if field.is_transient else 0.0
    weighted = np.tensordot(w, field.values, axes=([0], [-2]))
    totals = weighted @ mesh.volumes
    return totals if field.is_transient else float(totals)


# -- steady state ------------------------------------------------------------


def _pivot_rows(spec, moieties: Sequence[Moiety]) -> list[int]:
    """Pick one distinct species per moiety such that the choice is nonsingular."""
    W = np.array([[m.weights.get(n, 0.0) for n in spec.species_names] for m in moieties], dtype=float)
    pivots = []
    for r in range(W.shape[0]):
        col = int(np.argmax(np.abs(W[r])))
        if abs(W[r, col]) < 1e-12:
            raise SolverError("declared moieties are linearly dependent")
        pivots.append(col)
        W[r + 1 :] -= np.outer(W[r + 1 :, col] / W[r, col], W[r])
    return pivots


class _SteadyProblem:
    def __init__(self, system: DiscreteSystem, guess: np.ndarray):
        self.system = system
        spec = system.modulated.spec
        mesh = system.mesh
        S = system.n_species
        self.moieties = list(spec.moieties)
        self.weights = [np.array([m.weights.get(n, 0.0) for n in spec.species_names]) for m in self.moieties]
        self.totals = []
        for m, w in zip(self.moieties, self.weights):
            if m.total is None:
                self.totals.append(float((w @ guess) @ mesh.volumes))
            else:
                self.totals.append(m.total * mesh.total_volume)
        pivots = _pivot_rows(spec, self.moieties) if self.moieties else []
        # replace the balance row of the pivot species in the last cell
        self.rows = [(mesh.n_cells - 1) * S + p for p in pivots]
        self.constraint_rows = []
        for w in self.weights:
            row = np.kron(mesh.volumes, w) / mesh.total_volume
            self.constraint_rows.append(row)
        keep = np.ones(system.size)
        keep[self.rows] = 0.0
        self._keep = sp.diags(keep, format="csr")
        n = system.size
        if self.rows:
            dense = np.zeros((len(self.rows), n))
            for i, crow in enumerate(self.constraint_rows):
                dense[i] = crow
            self._constraints = sp.csr_matrix(dense)
            self._placer = sp.csr_matrix(
                (np.ones(len(self.rows)), (self.rows, np.arange(len(self.rows)))), shape=(n, len(self.rows))
            )

    def residual(self, c: np.ndarray) -> np.ndarray:
        r = self.system.pack(self.system.rhs(c))
        x = self.system.pack(c)
        for row, crow, total in zip(self.rows, self.constraint_rows, self.totals):
            r[row] = crow @ x - total / self.system.mesh.total_volume
        return r

    def jacobian(self, c: np.ndarray) -> sp.csr_matrix:
        J = self._keep @ self.system.jacobian(c)
        if self.rows:
            J = J + self._placer @ self._constraints
        return J.tocsr()

    def norms(self, c: np.ndarray) -> tuple[float, float]:
        """Residual max-norm of the balance rows and of the constraint rows."""
        r = self.residual(c)
        mask = np.ones(r.size, dtype=bool)
        mask[self.rows] = False
        bal = float(np.abs(r[mask]).max()) if mask.any() else 0.0
        con = float(np.abs(r[~mask]).max()) if (~mask).any() else 0.0
        return bal, con


def _linear_solve(J: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            return spla.spsolve(J.tocsc(), b)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SolverError(f"singular Jacobian: {exc}") from exc


def _newton(residual, jacobian, norm, x0: np.ndarray, unpack, tol_ok, settings: SolveSettings, max_iters: int):
    """Damped Newton with backtracking; returns the solution vector.

    ``tol_ok(c)`` decides convergence. After convergence one extra full step
    is taken and kept if it does not increase the residual, so returned
    solutions sit at round-off level rather than just inside the tolerance.
    """
    x = x0.copy()
    c = unpack(x)
    r = residual(c)
    rn = norm(r)
    for it in range(max_iters + 1):
        converged = tol_ok(c, r)
        if it == max_iters and not converged:
            raise NewtonDiverged(it, rn)
        try:
            dx = _linear_solve(jacobian(c), -r)
        except SolverError:
            if converged:
                return x
            raise NewtonDiverged(it, rn)
        if not np.all(np.isfinite(dx)):
            if converged:
                return x
            raise NewtonDiverged(it, rn)
        if converged:
            xp = x + dx
            rp = residual(unpack(xp))
            return xp if norm(rp) <= rn else x
        t = 1.0
        for _ in range(settings.max_halvings):
            xt = x + t * dx
            rt = residual(unpack(xt))
            rtn = norm(rt)
            if np.isfinite(rtn) and rtn <= (1.0 - settings.armijo * t) * rn:
                break
            t *= 0.5
        else:
            raise NewtonDiverged(it, rn)
        x, r, rn = xt, rt, rtn
        c = unpack(x)
        log.debug("newton iter %d: |R| = %.3e (step %.3g)", it, rn, t)
    raise NewtonDiverged(max_iters, rn)


def _check_nonnegative(values: np.ndarray, species: Sequence[str]) -> None:
    floor = -1e-12 * max(1.0, float(np.abs(values).max()))
    bad = np.argwhere(values < floor)
    if bad.size:
        i, k = bad[0][-2], bad[0][-1]
        idx = tuple(bad[0])
        raise NegativeConcentration(int(k), species[int(i)], float(values[idx]))


def solve_steady(
    modulated: ModulatedSpec,
    mesh: Mesh,
    guess: Optional[ConcentrationField] = None,
    settings: Optional[SolveSettings] = None,
) -> ConcentrationField:
    """Steady state of the modulated system on ``mesh``.

    Moiety totals are fixed by the spec when declared, otherwise by the
    guess. Convergence requires the balance residual to fall below
    ``newton_tol`` times the largest single rate term.
    """
    settings = settings or SolveSettings()
    spec = modulated.spec
    system = assemble(modulated, mesh, settings.face_extrapolation)
    if guess is None:
        guess = initial_field(spec, mesh)
    c0 = np.array(guess.final().values if guess.is_transient else guess.values, dtype=float)
    if c0.shape != (len(spec.species), mesh.n_cells):
        raise SolverError(f"guess has shape {c0.shape}, mesh needs {(len(spec.species), mesh.n_cells)}")
    problem = _SteadyProblem(system, c0)
    mask = np.ones(system.size, dtype=bool)
    mask[problem.rows] = False

    def tol_ok(c, r):
        scale = max(system.rate_scale(c), 1e-300)
        cscale = max(float(np.abs(c).max()), 1e-300)
        bal = np.abs(r[mask]).max() if mask.any() else 0.0
        con = np.abs(r[~mask]).max() if (~mask).any() else 0.0
        return bal <= settings.newton_tol * scale and con <= settings.newton_tol * cscale

    def norm(r):
        return float(np.linalg.norm(r))

    x = _newton(
        problem.residual,
        problem.jacobian,
        norm,
        system.pack(c0),
        system.unpack,
        tol_ok,
        settings,
        settings.max_newton_iters,
    )
    values = system.unpack(x)
    _check_nonnegative(values, spec.species_names)
    return ConcentrationField(values, tuple(spec.species_names), mesh, modulated.mv)


# -- transients --------------------------------------------------------------


def integrate_transient(
    modulated: ModulatedSpec,
    mesh: Mesh,
    init: ConcentrationField,
    tau_end: float,
    n_steps: int,
    settings: Optional[SolveSettings] = None,
) -> ConcentrationField:
    """Implicit Euler from ``init`` over ``[0, tau_end]`` in ``n_steps`` equal steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not tau_end > 0:
        raise ValueError("tau_end must be positive")
    settings = settings or SolveSettings()
    spec = modulated.spec
    system = assemble(modulated, mesh, settings.face_extrapolation)
    dt = tau_end / n_steps
    h = dt / modulated.time_factor  # dtau * alpha_t
    n = system.size
    eye = sp.identity(n, format="csr")

    c = np.array(init.final().values if init.is_transient else init.values, dtype=float)
    out = np.empty((n_steps + 1,) + c.shape)
    out[0] = c
    for step in range(1, n_steps + 1):
        prev = system.pack(c)

        def residual(cc, prev=prev):
            return system.pack(cc) - prev - h * system.pack(system.rhs(cc))

        def jacobian(cc):
            return eye - h * system.jacobian(cc)

        def tol_ok(cc, r):
            scale = max(float(np.abs(cc).max()), h * system.rate_scale(cc), 1e-300)
            return np.abs(r).max() <= settings.transient_tol * scale

        try:
            x = _newton(
                residual,
                jacobian,
                lambda r: float(np.linalg.norm(r)),
                prev,
                system.unpack,
                tol_ok,
                settings,
                settings.max_newton_iters,
            )
        except SolverError as exc:
            raise StepSolveFailed(step, exc) from exc
        c = system.unpack(x)
        try:
            _check_nonnegative(c, spec.species_names)
        except NegativeConcentration as exc:
            raise StepSolveFailed(step, exc) from exc
        out[step] = c
    times = np.linspace(0.0, tau_end, n_steps + 1)
    return ConcentrationField(out, tuple(spec.species_names), mesh, modulated.mv, times)
