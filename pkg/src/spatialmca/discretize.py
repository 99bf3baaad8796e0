"""Finite-volume discretization of the rescaled reaction-diffusion system.

Unknowns are cell averages ``c[i, k]`` (species ``i``, cell ``k``). The
semi-discrete balance for every cell is::

    (1/alpha_t) dc/dtau = F(c)
    F = diffusion + sum_j N_ij alpha_vj v_j - (A_face / V_cell) alpha_L^-1 alpha_f f

where the last term only acts in cells touching a face with transport.
Fluxes between cells are exactly antisymmetric, so every moiety conserved by
the reactions and transport laws is conserved by ``F`` to round-off.

Flattened vectors and Jacobians use cell-major order (``k * n_species + i``)
which keeps the Jacobian banded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import ratelang
from .errors import GeometryMismatch, TooFewCells
from .model import Geometry, ModulatedSpec, Sphere


@dataclass(frozen=True)
class Mesh:
    """Uniform 1-D mesh on ``[0, L]`` in reference coordinates.

    For a sphere, volumes and areas are the full shell volumes and sphere
    areas (``4 pi r^2``); for slab-like domains they are per unit
    cross-section.
    """

    geometry: Geometry
    n_cells: int
    edges: np.ndarray
    centers: np.ndarray
    widths: np.ndarray
    volumes: np.ndarray
    edge_areas: np.ndarray

    @property
    def length(self) -> float:
        return float(self.edges[-1])

    @property
    def total_volume(self) -> float:
        return float(self.volumes.sum())

    def face_cells(self, face: str) -> tuple[int, int, float]:
        """(boundary cell, its inner neighbour, face area) for a named face."""
        if face in ("left",):
            return 0, 1, float(self.edge_areas[0])
        if face in ("right", "surface"):
            n = self.n_cells
            return n - 1, n - 2, float(self.edge_areas[-1])
        raise GeometryMismatch(f"no face {face!r} on this mesh")

    def sample(self, values: np.ndarray, xi: float) -> np.ndarray:
        """Piecewise-linear reconstruction at ``xi`` (last axis = cells).

        Positions outside the first/last cell centers, including the domain
        faces, are linearly extrapolated from the two outermost cells.
        """
        c = self.centers
        if xi <= c[0]:
            k = 0
        elif xi >= c[-1]:
            k = self.n_cells - 2
        else:
            k = min(int(np.searchsorted(c, xi)) - 1, self.n_cells - 2)
        w = (xi - c[k]) / (c[k + 1] - c[k])
        return (1.0 - w) * values[..., k] + w * values[..., k + 1]


def build_mesh(geometry: Geometry, n_cells: int) -> Mesh:
    if n_cells < 4:
        raise TooFewCells(f"need at least 4 cells, got {n_cells}")
    L = geometry.length
    edges = np.linspace(0.0, L, n_cells + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    if isinstance(geometry, Sphere):
        volumes = 4.0 * np.pi / 3.0 * np.diff(edges**3)
        areas = 4.0 * np.pi * edges**2
    else:
        volumes = widths.copy()
        areas = np.ones(n_cells + 1)
    return Mesh(geometry, n_cells, edges, centers, widths, volumes, areas)


@dataclass(frozen=True)
class _Boundary:
    transport: int
    species: int
    cell: int
    neighbour: int
    weight: float  # alpha_L^-1 * alpha_f * A_face / V_cell
    rate: ratelang.RateExpr
    derivs: tuple  # (species index, derivative tree)


@dataclass
class DiscreteSystem:
    """Residual and Jacobian of the discretized equations for one modulation."""

    modulated: ModulatedSpec
    mesh: Mesh
    face_extrapolation: bool = True
    _laplacians: list = field(init=False, repr=False)
    _reaction_derivs: list = field(init=False, repr=False)
    _boundaries: list = field(init=False, repr=False)

    def __post_init__(self):
        spec = self.modulated.spec
        mesh = self.mesh
        n = mesh.n_cells
        # conductance between cells k and k+1, before the species coefficient
        g = mesh.edge_areas[1:-1] / (mesh.centers[1:] - mesh.centers[:-1])
        main = np.zeros(n)
        main[:-1] -= g
        main[1:] -= g
        base = sp.diags([g, main, g], [-1, 0, 1], shape=(n, n), format="csr")
        inv_vol = sp.diags(1.0 / mesh.volumes)
        self._laplacians = [(d * (inv_vol @ base)).tocsr() for d in self.modulated.diffusion]

        names = spec.species_names
        self._reaction_derivs = [
            [(names.index(s), ratelang.diff_rate(r.rate, s)) for s in sorted(ratelang.species_of(r.rate))]
            for r in spec.reactions
        ]
        self._boundaries = []
        for ti, t in enumerate(spec.transports):
            if t.is_zero:
                continue
            cell, nb, area = mesh.face_cells(t.face)
            weight = self.modulated.boundary_factor * self.modulated.transport_scale[ti] * area / mesh.volumes[cell]
            derivs = tuple(
                (names.index(s), ratelang.diff_rate(t.rate, s)) for s in sorted(ratelang.species_of(t.rate))
            )
            self._boundaries.append(_Boundary(ti, names.index(t.species), cell, nb, weight, t.rate, derivs))

    @property
    def n_species(self) -> int:
        return len(self.modulated.spec.species)

    @property
    def size(self) -> int:
        return self.n_species * self.mesh.n_cells

    # -- vector layout -------------------------------------------------------

    def pack(self, c: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(c.T).ravel()

    def unpack(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.mesh.n_cells, self.n_species).T.copy()

    # -- evaluation ----------------------------------------------------------

    def _conc(self, c: np.ndarray) -> dict:
        return {name: c[i] for i, name in enumerate(self.modulated.spec.species_names)}

    def face_values(self, c: np.ndarray, face: str) -> np.ndarray:
        """Per-species concentrations on a face."""
        cell, nb, _ = self.mesh.face_cells(face)
        if self.face_extrapolation:
            return 1.5 * c[:, cell] - 0.5 * c[:, nb]
        return c[:, cell].copy()

    def _face_conc(self, c: np.ndarray, b: _Boundary) -> dict:
        if self.face_extrapolation:
            vals = 1.5 * c[:, b.cell] - 0.5 * c[:, b.neighbour]
        else:
            vals = c[:, b.cell]
        return {name: vals[i] for i, name in enumerate(self.modulated.spec.species_names)}

    def parts(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Diffusion, reaction and boundary contributions to ``F(c)``."""
        spec = self.modulated.spec
        consts = spec.constants
        diff = np.vstack([lap @ c[i] for i, lap in enumerate(self._laplacians)])
        react = np.zeros_like(c)
        if spec.reactions:
            conc = self._conc(c)
            N = spec.stoichiometry()
            for j, r in enumerate(spec.reactions):
                v = self.modulated.reaction_scale[j] * np.asarray(ratelang.eval_rate(r.rate, conc, consts))
                for i in np.nonzero(N[:, j])[0]:
                    react[i] += N[i, j] * v
        bnd = np.zeros_like(c)
        for b in self._boundaries:
            f = ratelang.eval_rate(b.rate, self._face_conc(c, b), consts)
            bnd[b.species, b.cell] -= b.weight * f
        return diff, react, bnd

    def rhs(self, c: np.ndarray) -> np.ndarray:
        diff, react, bnd = self.parts(c)
        return diff + react + bnd

    def rate_scale(self, c: np.ndarray) -> float:
        """Largest magnitude of any single term entering ``F``.

        Used to make residual tolerances dimensionless; sums inside rate laws
        are counted as sums of magnitudes so the scale stays meaningful at
        equilibrium.
        """
        spec = self.modulated.spec
        consts = spec.constants
        mag = np.vstack([abs(lap) @ np.abs(c[i]) for i, lap in enumerate(self._laplacians)])
        if spec.reactions:
            conc = self._conc(c)
            N = spec.stoichiometry()
            for j, r in enumerate(spec.reactions):
                v = self.modulated.reaction_scale[j] * np.asarray(ratelang.eval_magnitude(r.rate, conc, consts))
                mag += np.abs(N[:, j])[:, None] * v
        for b in self._boundaries:
            mag[b.species, b.cell] += b.weight * ratelang.eval_magnitude(b.rate, self._face_conc(c, b), consts)
        return float(mag.max())

    def jacobian(self, c: np.ndarray) -> sp.csr_matrix:
        """Sparse ``dF/dc`` in cell-major layout."""
        S = self.n_species
        n = self.mesh.n_cells
        spec = self.modulated.spec
        consts = spec.constants
        rows, cols, vals = [], [], []
        for i, lap in enumerate(self._laplacians):
            coo = lap.tocoo()
            rows.append(coo.row * S + i)
            cols.append(coo.col * S + i)
            vals.append(coo.data)
        if spec.reactions:
            conc = self._conc(c)
            N = spec.stoichiometry()
            cells = np.arange(n)
            for j, derivs in enumerate(self._reaction_derivs):
                scale = self.modulated.reaction_scale[j]
                for l, dexpr in derivs:
                    dv = scale * np.broadcast_to(np.asarray(ratelang.eval_rate(dexpr, conc, consts), dtype=float), (n,))
                    for i in np.nonzero(N[:, j])[0]:
                        rows.append(cells * S + i)
                        cols.append(cells * S + l)
                        vals.append(N[i, j] * dv)
        for b in self._boundaries:
            conc = self._face_conc(c, b)
            for l, dexpr in b.derivs:
                df = float(ratelang.eval_rate(dexpr, conc, consts))
                if self.face_extrapolation:
                    rows += [np.array([b.cell * S + b.species])] * 2
                    cols += [np.array([b.cell * S + l]), np.array([b.neighbour * S + l])]
                    vals += [np.array([-1.5 * b.weight * df]), np.array([0.5 * b.weight * df])]
                else:
                    rows.append(np.array([b.cell * S + b.species]))
                    cols.append(np.array([b.cell * S + l]))
                    vals.append(np.array([-b.weight * df]))
        size = S * n
        J = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
        )
        return J.tocsr()

    def _flux_average(self, c: np.ndarray, evaluate) -> float:
        spec = self.modulated.spec
        total = 0.0
        area = 0.0
        for ti, t in enumerate(spec.transports):
            if t.species != spec.flux_species or t.face not in spec.flux_faces:
                continue
            _, _, a = self.mesh.face_cells(t.face)
            vals = self.face_values(c, t.face)
            conc = {name: vals[i] for i, name in enumerate(spec.species_names)}
            total += self.modulated.transport_scale[ti] * a * float(evaluate(t.rate, conc, spec.constants))
            area += a
        return total / area

    def flux(self, c: np.ndarray) -> float:
        """Surface-averaged export ``J`` of the flux species over the flux faces."""
        return self._flux_average(c, ratelang.eval_rate)

    def flux_scale(self, c: np.ndarray) -> float:
        """Magnitude counterpart of :meth:`flux` (sums taken in absolute value)."""
        return self._flux_average(c, ratelang.eval_magnitude)


def assemble(modulated: ModulatedSpec, mesh: Mesh, face_extrapolation: bool = True) -> DiscreteSystem:
    """Build the discrete system for a modulated network on ``mesh``.

    With ``face_extrapolation`` (default) transport laws see face values
    linearly extrapolated from the two outermost cells, which is exact for
    linear profiles; otherwise the boundary-cell value is used.
    """
    if mesh.geometry != modulated.spec.geometry:
        raise GeometryMismatch(f"mesh built for {mesh.geometry} but network uses {modulated.spec.geometry}")
    return DiscreteSystem(modulated, mesh, face_extrapolation)


def compute_flux(modulated: ModulatedSpec, mesh: Mesh, field, face_extrapolation: bool = True) -> float:
    """Flux ``J`` of a steady field (or of the last time point of a transient)."""
    values = field.values if hasattr(field, "values") else np.asarray(field)
    if values.ndim == 3:
        values = values[-1]
    return assemble(modulated, mesh, face_extrapolation).flux(values)
