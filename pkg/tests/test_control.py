import math

import numpy as np
import pytest

from spatialmca.analytic import SlabModel, SphereModel, slab_conc_controls, slab_flux_controls, sphere_flux_controls
from spatialmca.control import (
    RATE_FAMILY,
    SIZE_FAMILY,
    TIME_FAMILY,
    Concentration,
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
from spatialmca.discretize import build_mesh
from spatialmca.errors import ControlError, ModelError, ZeroTarget
from spatialmca.model import ModulationVector, apply_modulation
from spatialmca.networks import halfline_network, slab_network, sphere_network
from spatialmca.solve import SolveSettings, initial_field, solve_steady


@pytest.fixture(scope="module")
def slab16(slab_spec):
    return build_mesh(slab_spec.geometry, 16)


def test_slab_diffusion_control(slab_spec, slab16):
    assert control_coefficient(slab_spec, slab16, Flux(), "alpha_D") == pytest.approx(0.5, abs=1e-6)
    # one species alone carries half of it
    assert control_coefficient(slab_spec, slab16, Flux(), "D:YP") == pytest.approx(0.25, abs=1e-6)


def test_slab_enzyme_controls(slab_spec, slab16):
    expected = slab_flux_controls(SlabModel())
    assert control_coefficient(slab_spec, slab16, Flux(), "f:kinase") == pytest.approx(expected["k"], abs=1e-6)
    assert control_coefficient(slab_spec, slab16, Flux(), "f:phosphatase") == pytest.approx(expected["p"], abs=1e-6)
    assert size_control(slab_spec, slab16, Flux()) == pytest.approx(-0.5, abs=1e-6)


def test_slab_concentration_spread(slab_spec, slab16):
    rep = control_report(slab_spec, slab16, Concentration("YP", 1.0, minus=0.0))
    expected = slab_conc_controls(SlabModel())
    assert rep.family_sum("D:") == pytest.approx(expected["D"], abs=1e-6)
    assert rep.coefficients["L"] == pytest.approx(expected["L"], abs=1e-6)
    assert rep.coefficients["f:kinase"] == pytest.approx(expected["k"], abs=1e-6)
    assert max(abs(r) for r in rep.residuals.values()) < 1e-8


def test_symmetric_slab_is_zero_target():
    spec = slab_network(SlabModel(kappa_k=0.1, kappa_p=0.1))
    mesh = build_mesh(spec.geometry, 8)
    with pytest.raises(ZeroTarget) as info:
        control_coefficient(spec, mesh, Flux(), "f:kinase")
    assert abs(info.value.value) < 1e-12
    rep = control_report(spec, mesh, Flux())
    assert rep.zero_target and not rep.coefficients
    assert set(rep.derivatives) == {"D:Y", "D:YP", "f:phosphatase", "f:kinase", "L"}
    # scaling an enzyme leaves kappa_k == kappa_p, so the flux stays zero
    assert rep.derivatives["f:kinase"] == pytest.approx(0.0, abs=1e-12)


def test_sphere_small_cell_size_control():
    spec = sphere_network(SphereModel(L=0.01))
    mesh = build_mesh(spec.geometry, 16)
    assert size_control(spec, mesh, Flux()) == pytest.approx(1.0, abs=1e-3)


def test_sphere_matches_closed_form(sphere_spec, sphere_mesh):
    rep = control_report(sphere_spec, sphere_mesh, Flux())
    expected = sphere_flux_controls(SphereModel())
    assert rep.family_sum("D:") == pytest.approx(expected["D"], abs=1e-4)
    assert rep.coefficients["v:phosphatase"] == pytest.approx(expected["p"], abs=1e-4)
    assert rep.coefficients["f:kinase"] == pytest.approx(expected["k"], abs=1e-4)
    assert rep.coefficients["L"] == pytest.approx(expected["L"], abs=1e-4)
    assert abs(rep.residuals["reaction"]) < 1e-8
    assert abs(rep.residuals["size"]) < 1e-8
    assert rep.max_trunc_err < 1e-6


def test_halfline_size_control_vanishes():
    spec = halfline_network(SphereModel(), truncation=10.0 / math.sqrt(1.1))
    mesh = build_mesh(spec.geometry, 512)
    rep = summation_audit_size(spec, mesh, Flux())
    assert abs(rep.coefficients["L"]) < 2e-3
    assert abs(rep.residuals["size_halfline"]) < 2e-3
    assert abs(rep.residuals["size"]) < 1e-8


def test_diffusion_control_bounded(slab_spec):
    for L in (0.1, 1.0, 10.0):
        spec = slab_network(SlabModel(L=L))
        mesh = build_mesh(spec.geometry, 8)
        cD = control_coefficient(spec, mesh, Flux(), "alpha_D")
        assert 0.0 <= cD <= 1.0


def test_richardson_consistent_across_steps(sphere_spec):
    mesh = build_mesh(sphere_spec.geometry, 64)
    prober = Prober(sphere_spec, mesh, Flux())
    a = prober.coefficient("f:kinase", 1e-2)
    b = prober.coefficient("f:kinase", 1e-3)
    assert a.value == pytest.approx(b.value, abs=1e-6)
    assert b.trunc_err < a.trunc_err


def test_step_validation(slab_spec, slab16):
    prober = Prober(slab_spec, slab16, Flux())
    with pytest.raises(ControlError):
        prober.coefficient("L", 0.0)
    with pytest.raises(ControlError):
        prober.coefficient("L", 0.5)


def test_target_validation(slab_spec, slab16):
    with pytest.raises(ControlError):
        Prober(slab_spec, slab16, Concentration("YP", 2.0))
    with pytest.raises(ControlError):
        Prober(slab_spec, slab16, TimedFlux(0.0))
    with pytest.raises(ModelError):
        Prober(slab_spec, slab16, Concentration("Z", 0.5))
    with pytest.raises(ControlError):
        time_control(slab_spec, slab16, None, Flux())
    with pytest.raises(ControlError):
        summation_audit_reaction(slab_spec, slab16, TimedFlux(1.0))
    with pytest.raises(ControlError):
        summation_audit_time(slab_spec, slab16, None, Flux())


# -- time ----------------------------------------------------------------------

FAST = SolveSettings(n_steps=40)


def test_time_control_zero_from_steady_start(sphere_spec):
    mesh = build_mesh(sphere_spec.geometry, 16)
    steady = solve_steady(apply_modulation(sphere_spec, ModulationVector.reference(sphere_spec)), mesh)
    ct = time_control(sphere_spec, mesh, steady, TimedFlux(1.0), settings=FAST)
    assert abs(ct) < 1e-8


def test_time_control_decays(slab_spec):
    mesh = build_mesh(slab_spec.geometry, 16)
    init = initial_field(slab_spec, mesh)
    early = time_control(slab_spec, mesh, init, TimedFlux(0.5), settings=FAST)
    late = time_control(slab_spec, mesh, init, TimedFlux(20.0), settings=FAST)
    assert abs(early) > 1e-3
    assert abs(late) < 1e-6


def test_time_theorem_holds(slab_spec):
    mesh = build_mesh(slab_spec.geometry, 16)
    init = initial_field(slab_spec, mesh)
    rep = summation_audit_time(slab_spec, mesh, init, TimedFlux(1.0), settings=FAST)
    assert "t" in rep.coefficients and "reaction" not in rep.sums
    assert abs(rep.residuals["time"]) < 1e-8
    rep = summation_audit_time(slab_spec, mesh, init, TimedConcentration("YP", 0.5, 1.0), settings=FAST)
    assert abs(rep.residuals["time"]) < 1e-8


# -- homogeneity ---------------------------------------------------------------


@pytest.mark.parametrize("family, gamma", [(RATE_FAMILY, 1.0), (SIZE_FAMILY, 1.0)])
def test_flux_homogeneity(sphere_spec, family, gamma):
    mesh = build_mesh(sphere_spec.geometry, 32)
    prober = Prober(sphere_spec, mesh, Flux())
    worst = homogeneity_check(prober, family, gamma, [0.5, 2.0, 4.0], prober.reference_mv)
    assert worst < 1e-8


def test_concentration_homogeneity(sphere_spec):
    mesh = build_mesh(sphere_spec.geometry, 32)
    prober = Prober(sphere_spec, mesh, Concentration("YP", 0.5))
    for family in (RATE_FAMILY, SIZE_FAMILY):
        assert homogeneity_check(prober, family, 0.0, [0.5, 2.0, 4.0], prober.reference_mv) < 1e-8


def test_time_homogeneity(slab_spec):
    mesh = build_mesh(slab_spec.geometry, 8)
    prober = Prober(slab_spec, mesh, TimedFlux(1.0), FAST)
    assert homogeneity_check(prober, TIME_FAMILY, 1.0, [0.5, 2.0], prober.reference_mv) < 1e-8


def test_homogeneity_detects_wrong_degree(sphere_spec):
    mesh = build_mesh(sphere_spec.geometry, 16)
    prober = Prober(sphere_spec, mesh, Flux())
    assert homogeneity_check(prober, RATE_FAMILY, 2.0, [2.0], prober.reference_mv) == pytest.approx(0.5)


def test_report_is_deterministic(slab_spec, slab16):
    a = control_report(slab_spec, slab16, Flux())
    b = control_report(slab_spec, slab16, Flux())
    assert a.coefficients == b.coefficients
    assert np.isfinite(a.reference_value)
