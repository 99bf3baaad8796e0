import math

import numpy as np
import pytest

from spatialmca.analytic import slab_solution, sphere_solution
from spatialmca.discretize import assemble, build_mesh, compute_flux
from spatialmca.errors import NegativeConcentration, NewtonDiverged, StepSolveFailed
from spatialmca.model import (
    Moiety,
    ModulationVector,
    Reaction,
    Slab,
    Species,
    TransportLaw,
    apply_modulation,
    build_network,
    scale_modulation,
)
from spatialmca.control import RATE_FAMILY, SIZE_FAMILY, TIME_FAMILY
from spatialmca.ratelang import parse_rate
from spatialmca.solve import (
    ConcentrationField,
    SolveSettings,
    initial_field,
    integrate_transient,
    moiety_totals,
    solve_steady,
)


def _ref(spec, **changes):
    mv = ModulationVector.reference(spec)
    return apply_modulation(spec, mv.replace(changes) if changes else mv)


def _well_mixed(kf=2.0, kb=0.5):
    sp_names = ("Y", "YP")
    consts = {"kf": kf, "kb": kb, "z": 0.0}
    return build_network(
        [Species("Y", 1.0, 1.0), Species("YP", 1.0, 0.0)],
        [Reaction("conv", {"Y": -1, "YP": 1}, parse_rate("kf*Y - kb*YP", sp_names, consts))],
        [TransportLaw("YP", "left", parse_rate("z*YP", sp_names, consts))],
        Slab(1.0),
        "YP",
        consts,
        moieties=[Moiety({"Y": 1, "YP": 1})],
    )


def test_slab_steady_state_is_exact(slab_spec, slab_model):
    for n in (8, 64):
        mesh = build_mesh(slab_spec.geometry, n)
        fld = solve_steady(_ref(slab_spec), mesh)
        sol = slab_solution(slab_model)
        np.testing.assert_allclose(fld["YP"], sol.YP(mesh.centers), atol=1e-12)
        np.testing.assert_allclose(fld["Y"], sol.Y(mesh.centers), atol=1e-12)
        slope = np.diff(fld["YP"]) / np.diff(mesh.centers)
        np.testing.assert_allclose(slope, 9.9 / 24.2, rtol=1e-9)


def test_sphere_profile_matches_closed_form(sphere_spec, sphere_model, sphere_mesh):
    fld = solve_steady(_ref(sphere_spec), sphere_mesh)
    sol = sphere_solution(sphere_model)
    assert np.abs(fld["YP"] - sol.YP(sphere_mesh.centers)).max() < 1e-4
    assert np.abs(fld["Y"] - sol.Y(sphere_mesh.centers)).max() < 1e-4
    J = compute_flux(_ref(sphere_spec), sphere_mesh, fld)
    assert J == pytest.approx(sol.J, abs=2e-5)


def test_sphere_converges_at_second_order(sphere_spec, sphere_model):
    sol = sphere_solution(sphere_model)
    errs = []
    for n in (32, 64, 128):
        mesh = build_mesh(sphere_spec.geometry, n)
        fld = solve_steady(_ref(sphere_spec), mesh)
        errs.append(np.abs(fld["YP"] - sol.YP(mesh.centers)).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2.0) < 0.2), orders


def test_zero_rates_leave_uniform_guess_unchanged():
    names = ("Y", "YP")
    consts = {"z": 0.0}
    spec = build_network(
        [Species("Y", 1.0), Species("YP", 2.0)],
        [],
        [TransportLaw("YP", "left", parse_rate("z*(YP - Y)", names, consts))],
        Slab(1.0),
        "YP",
        consts,
        moieties=[Moiety({"Y": 1}), Moiety({"YP": 1})],
    )
    mesh = build_mesh(spec.geometry, 8)
    guess = ConcentrationField(np.vstack([np.full(8, 0.7), np.full(8, 0.2)]), ("Y", "YP"), mesh)
    fld = solve_steady(_ref(spec), mesh, guess)
    np.testing.assert_allclose(fld.values, guess.values, atol=1e-14)
    assert compute_flux(_ref(spec), mesh, fld) == 0.0


def test_steady_flux_balance(sphere_spec, sphere_mesh):
    mod = _ref(sphere_spec)
    fld = solve_steady(mod, sphere_mesh)
    system = assemble(mod, sphere_mesh)
    diff, react, bnd = system.parts(fld.values)
    for i in range(2):
        produced = react[i] @ sphere_mesh.volumes
        exported = -(bnd[i] @ sphere_mesh.volumes)
        assert produced == pytest.approx(exported, abs=1e-10 * max(abs(produced), 1e-12))


def test_family_one_leaves_field_unchanged(sphere_spec, sphere_mesh):
    ref = solve_steady(_ref(sphere_spec), sphere_mesh)
    J0 = compute_flux(_ref(sphere_spec), sphere_mesh, ref)
    for lam in (0.5, 3.0):
        mv = scale_modulation(ModulationVector.reference(sphere_spec), lam, RATE_FAMILY)
        mod = apply_modulation(sphere_spec, mv)
        fld = solve_steady(mod, sphere_mesh)
        np.testing.assert_allclose(fld.values, ref.values, atol=1e-12)
        assert compute_flux(mod, sphere_mesh, fld) == pytest.approx(lam * J0, rel=1e-10)


def test_family_two_leaves_field_unchanged(sphere_spec, sphere_mesh):
    ref = solve_steady(_ref(sphere_spec), sphere_mesh)
    J0 = compute_flux(_ref(sphere_spec), sphere_mesh, ref)
    mv = scale_modulation(ModulationVector.reference(sphere_spec), 2.0, SIZE_FAMILY)
    mod = apply_modulation(sphere_spec, mv)
    fld = solve_steady(mod, sphere_mesh)
    np.testing.assert_allclose(fld.values, ref.values, atol=1e-12)
    assert compute_flux(mod, sphere_mesh, fld) == pytest.approx(2.0 * J0, rel=1e-10)


def test_time_family_leaves_transient_unchanged(slab_spec):
    mesh = build_mesh(slab_spec.geometry, 16)
    init = initial_field(slab_spec, mesh)
    ref = integrate_transient(_ref(slab_spec), mesh, init, 1.0, 20)
    mv = scale_modulation(ModulationVector.reference(slab_spec), 4.0, TIME_FAMILY)
    fast = integrate_transient(apply_modulation(slab_spec, mv), mesh, init, 1.0, 20)
    np.testing.assert_allclose(fast.values, ref.values, atol=1e-12)


def test_steady_initial_condition_stays_put(sphere_spec):
    mesh = build_mesh(sphere_spec.geometry, 32)
    steady = solve_steady(_ref(sphere_spec), mesh)
    traj = integrate_transient(_ref(sphere_spec), mesh, steady, 5.0, 10)
    assert np.abs(traj.values - steady.values).max() < 1e-10


def test_well_mixed_relaxation():
    kf, kb = 2.0, 0.5
    spec = _well_mixed(kf, kb)
    mesh = build_mesh(spec.geometry, 8)
    n, tau = 200, 2.0
    traj = integrate_transient(_ref(spec), mesh, initial_field(spec, mesh), tau, n)
    yp = traj["YP"]
    # spatially uniform at every time
    assert np.abs(yp - yp[:, :1]).max() < 1e-12
    eq = kf / (kf + kb)
    # implicit Euler: deviation shrinks by 1/(1 + dt*(kf+kb)) per step
    dt = tau / n
    discrete = eq - eq * (1.0 + dt * (kf + kb)) ** -np.arange(n + 1)
    np.testing.assert_allclose(yp[:, 0], discrete, atol=1e-10)
    exact = eq * (1.0 - np.exp(-(kf + kb) * traj.times))
    assert np.abs(yp[:, 0] - exact).max() < 2 * dt


def test_slab_relaxes_to_steady_flux(slab_spec):
    mesh = build_mesh(slab_spec.geometry, 16)
    mod = _ref(slab_spec)
    traj = integrate_transient(mod, mesh, initial_field(slab_spec, mesh), 20.0, 200)
    system = assemble(mod, mesh)
    J = [system.flux(v) for v in traj.values]
    assert abs(J[0] - J[-1]) > 0.01
    assert J[-1] == pytest.approx(-9.9 / 24.2, abs=1e-9)


def test_moiety_totals(slab_spec, sphere_spec):
    mesh = build_mesh(slab_spec.geometry, 16)
    traj = integrate_transient(_ref(slab_spec), mesh, initial_field(slab_spec, mesh), 5.0, 50)
    totals = moiety_totals(traj, mesh, {"Y": 1, "YP": 1})
    np.testing.assert_allclose(totals, 1.0 * slab_spec.geometry.length, atol=1e-13)
    assert moiety_totals(traj.final(), mesh, []) == 0.0
    smesh = build_mesh(sphere_spec.geometry, 32)
    fld = solve_steady(_ref(sphere_spec), smesh)
    assert moiety_totals(fld, smesh, [1.0, 1.0]) == pytest.approx(4 * math.pi / 3, rel=1e-12)


def test_moiety_drift_per_unit_tau(sphere_spec):
    mesh = build_mesh(sphere_spec.geometry, 64)
    init = ConcentrationField(
        np.vstack([np.linspace(0.2, 0.9, 64), np.linspace(0.8, 0.1, 64)]), ("Y", "YP"), mesh
    )
    tau = 3.0
    traj = integrate_transient(_ref(sphere_spec), mesh, init, tau, 60)
    totals = moiety_totals(traj, mesh, {"Y": 1, "YP": 1})
    assert np.abs(totals - totals[0]).max() / abs(totals[0]) / tau <= 1e-10


def _negative_network():
    names = ("A",)
    consts = {"k": 10.0, "g": 1.0}
    return build_network(
        [Species("A", 1.0, 1.0)],
        [Reaction("sink", {"A": -1}, parse_rate("k", names, consts))],
        [TransportLaw("A", "left", parse_rate("g*(A - 0.1)", names, consts))],
        Slab(1.0),
        "A",
        consts,
    )


def test_negative_steady_state_aborts():
    spec = _negative_network()
    with pytest.raises(NegativeConcentration) as info:
        solve_steady(_ref(spec), build_mesh(spec.geometry, 8))
    assert info.value.species == "A"


def test_negative_transient_step_fails():
    spec = _negative_network()
    mesh = build_mesh(spec.geometry, 8)
    with pytest.raises(StepSolveFailed) as info:
        integrate_transient(_ref(spec), mesh, initial_field(spec, mesh), 5.0, 5)
    assert info.value.step >= 1


def test_newton_iteration_cap(sphere_spec):
    mesh = build_mesh(sphere_spec.geometry, 16)
    with pytest.raises(NewtonDiverged):
        solve_steady(_ref(sphere_spec), mesh, settings=SolveSettings(max_newton_iters=0))


def test_settings_validation():
    with pytest.raises(ValueError):
        SolveSettings(newton_tol=0.0)
    with pytest.raises(ValueError):
        integrate_transient(None, None, None, 1.0, 0)
