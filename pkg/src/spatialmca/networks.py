"""Ready-made kinase/phosphatase networks matching the analytic models."""

from __future__ import annotations

from typing import Optional, Union

from .analytic import SlabModel, SphereModel
from .model import HalfLine, Moiety, NetworkSpec, Reaction, Slab, Species, Sphere, TransportLaw, build_network
from .ratelang import parse_rate

SPECIES = ("Y", "YP")


def _constants(m: Union[SlabModel, SphereModel]) -> dict[str, float]:
    return {"k_k": m.k_k, "k_p": m.k_p, "kappa_k": m.kappa_k, "kappa_p": m.kappa_p}


def _rate(text: str, consts) -> object:
    return parse_rate(text, species=SPECIES, constants=consts)


def _species(m, initial_yp: Optional[float]) -> list[Species]:
    yp = 0.5 * m.M if initial_yp is None else initial_yp
    return [Species("Y", m.D, m.M - yp), Species("YP", m.D, yp)]


def _membrane_enzyme(name: str, face: str, k: str, kappa: str, consts) -> list[TransportLaw]:
    # converts YP -> Y at the membrane when YP > kappa*Y; export of YP, import of Y
    return [
        TransportLaw("YP", face, _rate(f"{k}*(YP - {kappa}*Y)", consts), group=name),
        TransportLaw("Y", face, _rate(f"{k}*({kappa}*Y - YP)", consts), group=name),
    ]


def slab_network(m: SlabModel, initial_yp: Optional[float] = None) -> NetworkSpec:
    """Phosphatase on the membrane at ``xi = 0``, kinase at ``xi = L``.

    ``J`` is the export of Y at the phosphatase membrane, which equals the
    diffusive flux ``-D * YP'`` through the slab.
    """
    consts = _constants(m)
    transports = _membrane_enzyme("phosphatase", "left", "k_p", "kappa_p", consts)
    # kinase converts Y -> YP: same law shape with (k_k, kappa_k)
    transports += _membrane_enzyme("kinase", "right", "k_k", "kappa_k", consts)
    return build_network(
        _species(m, initial_yp),
        [],
        transports,
        Slab(m.L),
        flux_species="Y",
        constants=consts,
        flux_faces=["left"],
        moieties=[Moiety({"Y": 1.0, "YP": 1.0}, m.M)],
    )


def _bulk_phosphatase(consts) -> Reaction:
    return Reaction("phosphatase", {"YP": -1, "Y": 1}, _rate("k_p*(YP - kappa_p*Y)", consts))


def sphere_network(m: SphereModel, initial_yp: Optional[float] = None) -> NetworkSpec:
    """Kinase on the membrane at radius ``L``, phosphatase in the bulk; ``J`` is YP export."""
    consts = _constants(m)
    return build_network(
        _species(m, initial_yp),
        [_bulk_phosphatase(consts)],
        _membrane_enzyme("kinase", "surface", "k_k", "kappa_k", consts),
        Sphere(m.L),
        flux_species="YP",
        constants=consts,
        moieties=[Moiety({"Y": 1.0, "YP": 1.0}, m.M)],
    )


def halfline_network(m: SphereModel, truncation: float, initial_yp: Optional[float] = None) -> NetworkSpec:
    """Planar analogue of the sphere: kinase membrane at ``xi = 0``, bulk phosphatase,
    closed far end at ``xi = truncation``. ``m.L`` is ignored."""
    consts = _constants(m)
    return build_network(
        _species(m, initial_yp),
        [_bulk_phosphatase(consts)],
        _membrane_enzyme("kinase", "left", "k_k", "kappa_k", consts),
        HalfLine(truncation, length_scale=1.0 / m.inverse_length),
        flux_species="YP",
        constants=consts,
        moieties=[Moiety({"Y": 1.0, "YP": 1.0}, m.M)],
    )
