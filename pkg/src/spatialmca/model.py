"""Network description, geometry and modulation parameters.

A :class:`NetworkSpec` is the reference system. Modulators never mutate it;
:func:`apply_modulation` produces a :class:`ModulatedSpec` holding the
coefficients of the rescaled equations in reference coordinates:

* ``1/alpha_t`` in front of the time derivative,
* ``alpha_L**-2 * alpha_D * D`` for bulk diffusion,
* ``alpha_L**-1 * alpha_D * D`` in the boundary flux relation,
* ``alpha_v * v`` for bulk reactions and ``alpha_f * f`` for transport.

Modulators are addressed by flat string keys: ``"D:<species>"``,
``"v:<reaction>"``, ``"f:<transport group>"``, ``"L"`` and ``"t"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import ratelang
from .errors import (
    DuplicateName,
    ModelError,
    MoietyNotConserved,
    NoFluxTransport,
    NonPositiveModulator,
    UnknownSpecies,
)
from .ratelang import RateExpr

Profile = Union[float, Callable[[np.ndarray], np.ndarray]]

FAMILIES = ("alpha_D", "alpha_v", "alpha_f", "alpha_L", "alpha_t")
_FAMILY_PREFIX = {"alpha_D": "D:", "alpha_v": "v:", "alpha_f": "f:"}


@dataclass(frozen=True)
class Species:
    name: str
    diffusion_coeff: float
    initial_profile: Profile = 0.0

    def __post_init__(self):
        if not self.diffusion_coeff >= 0:
            raise ModelError(f"species {self.name!r}: diffusion coefficient must be >= 0")

    def initial_values(self, xi: np.ndarray) -> np.ndarray:
        if callable(self.initial_profile):
            return np.broadcast_to(np.asarray(self.initial_profile(xi), dtype=float), xi.shape).copy()
        return np.full(xi.shape, float(self.initial_profile))


@dataclass(frozen=True)
class Reaction:
    """Bulk reaction; ``stoich`` holds net production (products positive)."""

    name: str
    stoich: Mapping[str, int]
    rate: RateExpr


@dataclass(frozen=True)
class TransportLaw:
    """Boundary transport of one species; a positive rate is export.

    Laws sharing a ``group`` share one modulator, which is how a membrane
    enzyme (substrate exported, product imported) is modulated as a unit.
    """

    species: str
    face: str
    rate: RateExpr
    group: Optional[str] = None

    @property
    def modulator(self) -> str:
        return "f:" + (self.group or f"{self.species}@{self.face}")

    @property
    def is_zero(self) -> bool:
        return isinstance(self.rate, ratelang.Num) and self.rate.value == 0.0


@dataclass(frozen=True)
class Slab:
    length: float
    faces = ("left", "right")
    kind = "slab"

    def __post_init__(self):
        if not self.length > 0:
            raise ModelError("slab length must be positive")


@dataclass(frozen=True)
class HalfLine:
    """Half-infinite domain truncated at ``truncation`` with a closed far end.

    Only the face at ``xi = 0`` carries transport. When ``length_scale`` (the
    largest reaction-diffusion length of the problem) is given, the
    truncation must be at least ten times larger.
    """

    truncation: float
    length_scale: Optional[float] = None
    faces = ("left",)
    kind = "halfline"

    def __post_init__(self):
        if not self.truncation > 0:
            raise ModelError("half-line truncation must be positive")
        if self.length_scale is not None and self.truncation < 10.0 * self.length_scale:
            raise ModelError(
                f"half-line truncation {self.truncation} is shorter than 10x the "
                f"reaction-diffusion length {self.length_scale}"
            )

    @property
    def length(self) -> float:
        return self.truncation


@dataclass(frozen=True)
class Sphere:
    radius: float
    faces = ("surface",)
    kind = "sphere"

    def __post_init__(self):
        if not self.radius > 0:
            raise ModelError("sphere radius must be positive")

    @property
    def length(self) -> float:
        return self.radius


Geometry = Union[Slab, HalfLine, Sphere]


@dataclass(frozen=True)
class Moiety:
    """Weighted species sum conserved by every process.

    ``total`` is the domain-averaged value of the sum; ``None`` means it is
    taken from whatever initial guess the solver receives.
    """

    weights: Mapping[str, float]
    total: Optional[float] = None


@dataclass(frozen=True)
class NetworkSpec:
    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]
    transports: tuple[TransportLaw, ...]
    geometry: Geometry
    flux_species: str
    constants: Mapping[str, float] = field(default_factory=dict)
    flux_faces: tuple[str, ...] = ()
    moieties: tuple[Moiety, ...] = ()

    @property
    def species_names(self) -> list[str]:
        return [s.name for s in self.species]

    def species_index(self, name: str) -> int:
        for i, s in enumerate(self.species):
            if s.name == name:
                return i
        raise UnknownSpecies(name)

    def stoichiometry(self) -> np.ndarray:
        """Net stoichiometric matrix, species x bulk reactions."""
        N = np.zeros((len(self.species), len(self.reactions)))
        for j, r in enumerate(self.reactions):
            for name, coeff in r.stoich.items():
                N[self.species_index(name), j] = coeff
        return N

    def modulators(self) -> list[str]:
        """All modulator keys in a stable order (D, v, f, L, t)."""
        keys = [f"D:{s.name}" for s in self.species]
        keys += [f"v:{r.name}" for r in self.reactions]
        for t in self.transports:
            if t.modulator not in keys:
                keys.append(t.modulator)
        return keys + ["L", "t"]

    def flux_transports(self) -> list[TransportLaw]:
        return [t for t in self.transports if t.species == self.flux_species and t.face in self.flux_faces]


def build_network(
    species: Sequence[Species],
    reactions: Sequence[Reaction],
    transports: Sequence[TransportLaw],
    geometry: Geometry,
    flux_species: str,
    constants: Optional[Mapping[str, float]] = None,
    flux_faces: Optional[Iterable[str]] = None,
    moieties: Sequence[Moiety] = (),
) -> NetworkSpec:
    """Validate the pieces of a network and bundle them into a NetworkSpec.

    ``flux_faces`` selects the faces over which the flux ``J`` is
    surface-averaged. By default every face carrying a nonzero transport law
    of ``flux_species`` is used. In a slab with export at one membrane and
    import at the other that average vanishes at steady state, so such
    networks should name the face explicitly.
    """
    constants = dict(constants or {})
    names = set()
    for s in species:
        if s.name in names:
            raise DuplicateName(f"species {s.name!r} declared twice")
        names.add(s.name)

    rnames = set()
    for r in reactions:
        if r.name in rnames:
            raise DuplicateName(f"reaction {r.name!r} declared twice")
        rnames.add(r.name)
        if not r.stoich:
            raise ModelError(f"reaction {r.name!r} has empty stoichiometry")
        for name in r.stoich:
            if name not in names:
                raise UnknownSpecies(f"reaction {r.name!r} refers to unknown species {name!r}")
        _check_symbols(r.rate, names, constants, f"reaction {r.name!r}")

    seen = set()
    for t in transports:
        if t.species not in names:
            raise UnknownSpecies(f"transport refers to unknown species {t.species!r}")
        if t.face not in geometry.faces:
            raise ModelError(f"face {t.face!r} does not exist on a {geometry.kind} (faces: {geometry.faces})")
        if (t.species, t.face) in seen:
            raise DuplicateName(f"two transport laws for {t.species!r} on face {t.face!r}")
        seen.add((t.species, t.face))
        _check_symbols(t.rate, names, constants, f"transport of {t.species!r} on {t.face!r}")

    if flux_species not in names:
        raise UnknownSpecies(f"flux species {flux_species!r} is not declared")
    active = [t.face for t in transports if t.species == flux_species and not t.is_zero]
    if not active:
        raise NoFluxTransport(f"flux species {flux_species!r} has no nonzero transport law")
    if flux_faces is None:
        faces = tuple(f for f in geometry.faces if f in active)
    else:
        faces = tuple(flux_faces)
        for f in faces:
            if f not in active:
                raise NoFluxTransport(f"flux species {flux_species!r} has no nonzero transport law on face {f!r}")
        if not faces:
            raise NoFluxTransport("flux_faces is empty")

    for m in moieties:
        for name in m.weights:
            if name not in names:
                raise UnknownSpecies(f"moiety refers to unknown species {name!r}")

    spec = NetworkSpec(
        species=tuple(species),
        reactions=tuple(reactions),
        transports=tuple(transports),
        geometry=geometry,
        flux_species=flux_species,
        constants=MappingProxyType(constants),
        flux_faces=faces,
        moieties=tuple(moieties),
    )
    for m in spec.moieties:
        _check_moiety(spec, m)
    return spec


def _check_symbols(expr: RateExpr, species: set, constants: Mapping[str, float], where: str) -> None:
    for sym in ratelang.symbols(expr):
        if sym.is_species and sym.name not in species:
            raise UnknownSpecies(f"{where}: unknown species {sym.name!r}")
        if not sym.is_species and sym.name not in constants:
            raise ModelError(f"{where}: constant {sym.name!r} has no value")


def _check_moiety(spec: NetworkSpec, moiety: Moiety, samples: int = 5) -> None:
    w = np.array([moiety.weights.get(n, 0.0) for n in spec.species_names])
    bad = np.nonzero(np.abs(w @ spec.stoichiometry()) > 1e-12 * max(1.0, np.abs(w).max()))[0]
    if bad.size:
        raise MoietyNotConserved(f"moiety {dict(moiety.weights)} is changed by reaction {spec.reactions[bad[0]].name!r}")
    # transport balance per face, probed at a few random positive states
    rng = np.random.default_rng(12345)
    conc = {n: rng.uniform(0.1, 2.0, samples) for n in spec.species_names}
    for face in spec.geometry.faces:
        net = np.zeros(samples)
        size = np.zeros(samples)
        for t in spec.transports:
            if t.face == face and moiety.weights.get(t.species, 0.0) != 0.0:
                wt = moiety.weights[t.species]
                net = net + wt * np.asarray(ratelang.eval_rate(t.rate, conc, spec.constants))
                size = size + abs(wt) * np.asarray(ratelang.eval_magnitude(t.rate, conc, spec.constants))
        if np.any(np.abs(net) > 1e-10 * np.maximum(size, 1e-300)):
            raise MoietyNotConserved(f"moiety {dict(moiety.weights)} leaks through face {face!r}")


# -- modulation --------------------------------------------------------------


@dataclass(frozen=True)
class ModulationVector:
    alpha_v: Mapping[str, float] = field(default_factory=dict)
    alpha_D: Mapping[str, float] = field(default_factory=dict)
    alpha_f: Mapping[str, float] = field(default_factory=dict)
    alpha_L: float = 1.0
    alpha_t: float = 1.0

    @classmethod
    def reference(cls, spec: NetworkSpec) -> "ModulationVector":
        """All-ones vector with an explicit entry for every modulator of ``spec``."""
        return cls.from_items({k: 1.0 for k in spec.modulators()})

    @classmethod
    def from_items(cls, items: Mapping[str, float]) -> "ModulationVector":
        parts = {"v:": {}, "D:": {}, "f:": {}}
        alpha_L = alpha_t = 1.0
        for key, value in items.items():
            if key == "L":
                alpha_L = float(value)
            elif key == "t":
                alpha_t = float(value)
            elif key[:2] in parts:
                parts[key[:2]][key[2:]] = float(value)
            else:
                raise ModelError(f"malformed modulator key {key!r}")
        return cls(parts["v:"], parts["D:"], parts["f:"], alpha_L, alpha_t)

    def items(self) -> dict[str, float]:
        out = {f"D:{k}": v for k, v in self.alpha_D.items()}
        out.update({f"v:{k}": v for k, v in self.alpha_v.items()})
        out.update({f"f:{k}": v for k, v in self.alpha_f.items()})
        out["L"] = self.alpha_L
        out["t"] = self.alpha_t
        return out

    def get(self, key: str) -> float:
        return self.items().get(key, 1.0)

    def replace(self, changes: Mapping[str, float]) -> "ModulationVector":
        items = self.items()
        items.update(changes)
        return ModulationVector.from_items(items)


def expand_modulators(spec: NetworkSpec, selector: Union[str, Iterable[str]]) -> list[str]:
    """Resolve a key, a family name (``"alpha_D"`` ...) or a list of them."""
    if isinstance(selector, str):
        selector = [selector]
    keys: list[str] = []
    known = spec.modulators()
    for sel in selector:
        if sel in _FAMILY_PREFIX:
            found = [k for k in known if k.startswith(_FAMILY_PREFIX[sel])]
        elif sel in ("alpha_L", "alpha_t"):
            found = [sel[-1]]
        elif sel in known:
            found = [sel]
        else:
            raise ModelError(f"unknown modulator {sel!r}; known: {known}")
        keys.extend(k for k in found if k not in keys)
    return keys


def scale_modulation(mv: ModulationVector, lam: float, exponents: Mapping[str, float]) -> ModulationVector:
    """Replace each modulator ``p`` by ``lam**beta * p``.

    ``exponents`` may name whole families (``"alpha_D"``, ``"alpha_v"``,
    ``"alpha_f"``, ``"alpha_L"``, ``"alpha_t"``) or single keys; a single key
    takes precedence over its family. Entries absent from ``mv`` are not
    created, so scale a vector from :meth:`ModulationVector.reference`.
    """
    if not lam > 0:
        raise NonPositiveModulator("scaling factor must be positive")
    out = {}
    for key, value in mv.items().items():
        if key in exponents:
            beta = exponents[key]
        elif key in ("L", "t"):
            beta = exponents.get(f"alpha_{key}", 0.0)
        else:
            family = {"D:": "alpha_D", "v:": "alpha_v", "f:": "alpha_f"}[key[:2]]
            beta = exponents.get(family, 0.0)
        out[key] = value * lam**beta if beta else value
    return ModulationVector.from_items(out)


@dataclass(frozen=True)
class ModulatedSpec:
    """Coefficients of the rescaled equations; arrays follow the spec's order."""

    spec: NetworkSpec
    mv: ModulationVector
    time_factor: float
    diffusion: tuple[float, ...]
    boundary_diffusion: tuple[float, ...]
    reaction_scale: tuple[float, ...]
    transport_scale: tuple[float, ...]
    boundary_factor: float

    @property
    def physical_length(self) -> float:
        return self.mv.alpha_L * self.spec.geometry.length


def apply_modulation(spec: NetworkSpec, mv: ModulationVector) -> ModulatedSpec:
    known = set(spec.modulators())
    for key, value in mv.items().items():
        if key not in known:
            raise ModelError(f"modulator {key!r} does not belong to this network")
        if not (value > 0 and math.isfinite(value)):
            raise NonPositiveModulator(f"modulator {key!r} = {value} must be positive")
    aL = mv.alpha_L
    aD = [mv.alpha_D.get(s.name, 1.0) for s in spec.species]
    return ModulatedSpec(
        spec=spec,
        mv=mv,
        time_factor=1.0 / mv.alpha_t,
        diffusion=tuple(a * s.diffusion_coeff / aL**2 for a, s in zip(aD, spec.species)),
        boundary_diffusion=tuple(a * s.diffusion_coeff / aL for a, s in zip(aD, spec.species)),
        reaction_scale=tuple(mv.alpha_v.get(r.name, 1.0) for r in spec.reactions),
        transport_scale=tuple(mv.get(t.modulator) for t in spec.transports),
        boundary_factor=1.0 / aL,
    )
