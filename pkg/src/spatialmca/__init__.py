"""Spatial metabolic control analysis for reaction-diffusion networks.

Networks of diffusing species, bulk reactions and boundary transport are
solved on 1-D slab, half-line or spherically symmetric domains with a
finite-volume scheme. Control coefficients with respect to reaction,
diffusion, transport, size and time modulators are estimated by finite
differences and audited against the summation theorems implied by
homogeneity of the governing equations.
"""

from .analytic import (
    SlabModel,
    SphereModel,
    slab_conc_controls,
    slab_flux_controls,
    slab_solution,
    sphere_conc_controls,
    sphere_flux_controls,
    sphere_solution,
)
from .control import (
    Concentration,
    ControlReport,
    Flux,
    Prober,
    TimedConcentration,
    TimedFlux,
    control_coefficient,
    control_report,
    homogeneity_check,
    size_control,
    summation_audit_reaction,
    summation_audit_size,
    summation_audit_time,
    time_control,
)
from .discretize import Mesh, assemble, build_mesh, compute_flux
from .errors import *  # noqa: F401,F403
from .model import (
    HalfLine,
    ModulationVector,
    Moiety,
    NetworkSpec,
    Reaction,
    Slab,
    Species,
    Sphere,
    TransportLaw,
    apply_modulation,
    build_network,
    scale_modulation,
)
from .networks import halfline_network, slab_network, sphere_network
from .ratelang import diff_rate, eval_rate, parse_rate, to_text
from .solve import ConcentrationField, SolveSettings, initial_field, integrate_transient, moiety_totals, solve_steady

__version__ = "0.1.0"
