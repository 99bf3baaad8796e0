import numpy as np
import pytest

from spatialmca.analytic import slab_solution, sphere_solution
from spatialmca.discretize import assemble, build_mesh, compute_flux
from spatialmca.errors import GeometryMismatch, TooFewCells
from spatialmca.model import (
    HalfLine,
    ModulationVector,
    Reaction,
    Slab,
    Species,
    Sphere,
    TransportLaw,
    apply_modulation,
    build_network,
)
from spatialmca.ratelang import parse_rate

SP = ("A", "B")


def _closed_network(geometry, face):
    # A <-> B in the bulk; a transport law whose constant is zero keeps the
    # network valid while leaving the boundary closed
    consts = {"k1": 2.0, "k2": 0.5, "z": 0.0}
    return build_network(
        [Species("A", 1.0, 1.0), Species("B", 0.3, 0.0)],
        [Reaction("conv", {"A": -1, "B": 1}, parse_rate("k1*A - k2*B", SP, consts))],
        [TransportLaw("A", face, parse_rate("z*A", SP, consts))],
        geometry,
        "A",
        consts,
    )


def _reference(spec):
    return apply_modulation(spec, ModulationVector.reference(spec))


def test_slab_mesh_example():
    m = build_mesh(Slab(1.0), 4)
    np.testing.assert_allclose(m.centers, [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(m.widths, 0.25)
    assert m.edges[0] == 0.0 and m.edges[-1] == 1.0


def test_sphere_volumes_are_shells():
    m = build_mesh(Sphere(1.0), 4)
    e = np.array([0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(m.volumes, 4 * np.pi / 3 * np.diff(e**3))
    assert m.total_volume == pytest.approx(4 * np.pi / 3)
    assert m.edge_areas[-1] == pytest.approx(4 * np.pi)


def test_halfline_mesh():
    m = build_mesh(HalfLine(100.0), 1000)
    assert m.length == 100.0 and m.n_cells == 1000


def test_too_few_cells():
    with pytest.raises(TooFewCells):
        build_mesh(Slab(1.0), 3)


def test_geometry_mismatch(slab_spec):
    with pytest.raises(GeometryMismatch):
        assemble(_reference(slab_spec), build_mesh(Slab(2.0), 8))


@pytest.mark.parametrize("geometry, face", [(Slab(2.0), "left"), (Sphere(1.5), "surface")])
def test_laplacian_conserves_and_is_volume_symmetric(geometry, face):
    spec = _closed_network(geometry, face)
    mesh = build_mesh(geometry, 16)
    system = assemble(_reference(spec), mesh)
    lap = system._laplacians[0].toarray()
    weighted = mesh.volumes[:, None] * lap
    np.testing.assert_allclose(weighted, weighted.T, atol=1e-12)
    # column sums of V*L vanish: diffusion moves mass, never creates it
    np.testing.assert_allclose(weighted.sum(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(lap[1:-1].sum(axis=1), 0.0, atol=1e-10)


@pytest.mark.parametrize("geometry, face", [(Slab(2.0), "left"), (Sphere(1.5), "surface")])
def test_closed_network_conserves_moiety(geometry, face):
    spec = _closed_network(geometry, face)
    mesh = build_mesh(geometry, 16)
    system = assemble(_reference(spec), mesh)
    rng = np.random.default_rng(1)
    c = rng.uniform(0.1, 2.0, size=(2, 16))
    F = system.rhs(c)
    assert abs((F[0] + F[1]) @ mesh.volumes) < 1e-12 * np.abs(F).max()


def test_uniform_field_is_steady_without_processes():
    consts = {"z": 0.0}
    spec = build_network(
        [Species("A", 1.0), Species("B", 2.0)],
        [],
        [TransportLaw("A", "left", parse_rate("z*A", SP, consts))],
        Slab(1.0),
        "A",
        consts,
    )
    mesh = build_mesh(spec.geometry, 10)
    system = assemble(_reference(spec), mesh)
    uniform = np.vstack([np.full(10, 0.3), np.full(10, 2.0)])
    assert np.abs(system.rhs(uniform)).max() <= 1e-14 * system.rate_scale(uniform)
    bumpy = np.vstack([np.linspace(0, 1, 10), np.full(10, 2.0)])
    assert np.abs(system.rhs(bumpy)).max() > 0.1
    assert compute_flux(_reference(spec), mesh, bumpy) == 0.0


def test_slab_interior_rows_are_pure_diffusion(slab_spec):
    mesh = build_mesh(slab_spec.geometry, 8)
    system = assemble(_reference(slab_spec), mesh)
    c = np.random.default_rng(0).uniform(0.1, 1.0, size=(2, 8))
    diff, react, bnd = system.parts(c)
    assert np.all(react == 0.0)
    assert np.all(bnd[:, 1:-1] == 0.0)
    assert np.all(bnd[:, [0, -1]] != 0.0)


def test_doubling_alpha_D_doubles_diffusion(slab_spec):
    mesh = build_mesh(slab_spec.geometry, 8)
    c = np.random.default_rng(2).uniform(0.1, 1.0, size=(2, 8))
    ref = assemble(_reference(slab_spec), mesh).parts(c)[0]
    mv = ModulationVector.reference(slab_spec).replace({"D:Y": 2.0, "D:YP": 2.0})
    doubled = assemble(apply_modulation(slab_spec, mv), mesh).parts(c)[0]
    np.testing.assert_allclose(doubled, 2.0 * ref, rtol=1e-14)


def test_jacobian_matches_finite_differences(sphere_spec):
    mesh = build_mesh(sphere_spec.geometry, 6)
    system = assemble(_reference(sphere_spec), mesh)
    c = np.random.default_rng(3).uniform(0.1, 1.0, size=(2, 6))
    J = system.jacobian(c).toarray()
    x = system.pack(c)
    h = 1e-6
    fd = np.empty_like(J)
    for j in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fd[:, j] = (system.pack(system.rhs(system.unpack(xp))) - system.pack(system.rhs(system.unpack(xm)))) / (2 * h)
    np.testing.assert_allclose(J, fd, atol=1e-6)


def test_flux_of_exact_slab_profile(slab_spec, slab_model):
    mesh = build_mesh(slab_spec.geometry, 32)
    sol = slab_solution(slab_model)
    c = np.vstack([sol.Y(mesh.centers), sol.YP(mesh.centers)])
    J = compute_flux(_reference(slab_spec), mesh, c)
    # linear profiles are reproduced exactly by face extrapolation
    assert J == pytest.approx(-9.9 / 24.2, abs=1e-12)
    assert abs(J) == pytest.approx(slab_model.D * sol.delta, abs=1e-12)


def test_flux_of_exact_sphere_profile(sphere_spec, sphere_model):
    mesh = build_mesh(sphere_spec.geometry, 512)
    sol = sphere_solution(sphere_model)
    c = np.vstack([sol.Y(mesh.centers), sol.YP(mesh.centers)])
    J = compute_flux(_reference(sphere_spec), mesh, c)
    assert J == pytest.approx(-0.2716, abs=1e-4)


def test_sphere_rows_approach_slab_rows_far_from_center():
    geometry = Sphere(1000.0)
    spec = _closed_network(geometry, "surface")
    mesh = build_mesh(geometry, 1000)
    sphere_lap = assemble(_reference(spec), mesh)._laplacians[0]
    slab = _closed_network(Slab(1000.0), "left")
    slab_lap = assemble(_reference(slab), build_mesh(slab.geometry, 1000))._laplacians[0]
    devs = []
    for k in (100, 400, 800):
        row_s = sphere_lap.getrow(k).toarray().ravel()[k - 1 : k + 2]
        row_p = slab_lap.getrow(k).toarray().ravel()[k - 1 : k + 2]
        devs.append(np.abs(row_s - row_p).max() / np.abs(row_p).max())
    xi = mesh.centers[[100, 400, 800]]
    # off-diagonal entries differ by 1/xi (curvature term)
    assert all(d < 2.5 / x for d, x in zip(devs, xi))
    assert devs[0] > devs[1] > devs[2]
