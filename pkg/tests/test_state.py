import numpy as np
import pytest

from fdtopo.fem_core import Loads, SolverError
from fdtopo.levelset import HeavisideKernel, Variant
from fdtopo.mesh import BoundaryLabel
from fdtopo.presets import bridge, cantilever
from fdtopo.state import Problem, difference_norms, inside_triangles, solve_state, volume_of
from oracles import dense_compliance


@pytest.fixture(scope="module")
def cant():
    return cantilever().problem((10, 10))


def random_g(mesh, seed):
    rng = np.random.default_rng(seed)
    x, y = mesh.vertices.T
    a = rng.uniform(-1, 1, 4)
    return 0.05 + 0.1 * (a[0] * np.sin(3 * x + a[1]) + a[2] * np.cos(4 * y + a[3]))


def test_zero_load(cant):
    pb = Problem(cant.mesh, cant.material, Loads(), 0.5, cant.kernel)
    g = random_g(cant.mesh, 0)
    st = solve_state(pb, g)
    assert np.all(st.displacement == 0)
    assert st.cost == pytest.approx(0.5 * volume_of(cant.mesh, g, cant.kernel), rel=1e-15)


def test_full_material_against_dense_oracle(cant):
    g = np.full(cant.mesh.n_vertices, 10.0)
    st = solve_state(cant, g)
    ref, u_ref = dense_compliance(cant.mesh, cant.material, np.ones(cant.mesh.n_vertices),
                                  (0.0, -5.0), BoundaryLabel.GammaN,
                                  cant.mesh.p2_nodes_on(BoundaryLabel.SigmaD))
    assert st.volume_term == pytest.approx(2.0, abs=1e-6)
    assert st.compliance_surface_term == pytest.approx(ref, rel=1e-9)
    assert st.cost == pytest.approx(ref + 0.5 * 2.0, rel=1e-9)
    assert np.allclose(st.displacement, u_ref, atol=1e-9 * np.abs(u_ref).max())


@pytest.mark.parametrize("solver", ["direct", "cg"])
def test_cost_decomposition_and_energy(cant, solver):
    pb = Problem(cant.mesh, cant.material, Loads((0.0, -0.3), (0.0, -5.0)), 0.5, cant.kernel,
                 solver=solver)
    g = random_g(cant.mesh, 1)
    st = solve_state(pb, g)
    assert st.cost == pytest.approx(st.compliance_volume_term + st.compliance_surface_term
                                    + 0.5 * st.volume_term, rel=1e-14)
    fem = pb.fem
    energy = fem.integrate(fem.h_at_quadrature(st.h_nodal) * fem.energy_density(st.displacement))
    work = st.compliance_volume_term + st.compliance_surface_term
    assert abs(energy - work) <= 1e-6 * abs(work)


def test_solvers_agree(cant):
    g = random_g(cant.mesh, 2)
    a = solve_state(cant, g)
    b = solve_state(Problem(cant.mesh, cant.material, cant.loads, cant.penalty, cant.kernel, "cg"), g)
    assert b.cost == pytest.approx(a.cost, rel=1e-8)


def test_unknown_solver(cant):
    with pytest.raises(ValueError):
        Problem(cant.mesh, cant.material, cant.loads, 0.5, cant.kernel, solver="lu")


def test_cg_failure_propagates(cant, monkeypatch):
    import fdtopo.fem_core as fc
    import fdtopo.state as state_mod

    def short(A, b, **kw):
        return fc.solve_spd(A, b, rel_tol=kw["rel_tol"], max_iter=3)

    monkeypatch.setattr(state_mod, "solve_spd", short)
    pb = Problem(cant.mesh, cant.material, cant.loads, 0.5, cant.kernel, solver="cg")
    with pytest.raises(SolverError):
        solve_state(pb, random_g(cant.mesh, 3))


def test_volume_examples(cant):
    m, k = cant.mesh, cant.kernel
    assert volume_of(m, np.zeros(m.n_vertices), k) == pytest.approx(1.0, rel=1e-14)
    assert volume_of(m, np.full(m.n_vertices, 10.0), k) == pytest.approx(2.0, abs=1e-6)
    fine = cantilever().build_mesh((40, 10))
    half = volume_of(fine, fine.vertices[:, 0] - 1.0, HeavisideKernel.smooth(1e-3))
    assert half == pytest.approx(1.0, abs=1e-3)
    assert volume_of(m, random_g(m, 4), k) <= 2.0


def test_surface_compliance_nonnegative(cant):
    for seed in range(3):
        assert solve_state(cant, random_g(cant.mesh, seed)).compliance_surface_term >= 0


def test_monotone_stiffening(cant):
    for seed in range(5):
        g = random_g(cant.mesh, 10 + seed)
        soft = solve_state(cant, g).compliance_surface_term
        stiff = solve_state(cant, g + 0.02).compliance_surface_term
        assert stiff <= soft + 1e-8


def test_state_kernel_clamped_below_threshold(cant):
    g = random_g(cant.mesh, 5)
    st = solve_state(cant, g, HeavisideKernel.smooth(1e-3))
    assert np.min(st.h_nodal) >= 1e-4
    assert st.kernel.variant is Variant.SMOOTH


def test_epsilon_consistency_trend():
    # odd n_y keeps grid nodes off the zero level set y = 0.6
    preset = bridge("half")
    pb = preset.problem((40, 25))
    g = preset.g0(pb.mesh.vertices)
    ref = solve_state(pb, g, HeavisideKernel(1.0, Variant.REFERENCE))
    mask = inside_triangles(pb.mesh, g)
    diffs = []
    for eps in (1e-2, 5e-3, 1e-3, 5e-4):
        st = solve_state(pb, g, HeavisideKernel.smooth(eps))
        diffs.append(difference_norms(pb.fem, st.displacement, ref.displacement, mask))
    l2, h1 = np.array(diffs).T
    assert np.all(np.diff(l2) <= 0) and np.all(np.diff(h1) <= 0)


def test_difference_norms():
    pb = cantilever().problem((10, 10))
    fem = pb.fem
    P = pb.mesh.p2_nodes
    # u = (x, 0): L2^2 = int x^2 = 8/3 over ]0,2[x]-.5,.5[, grad part = area = 2
    u = np.column_stack([P[:, 0], np.zeros(len(P))]).ravel()
    l2, h1 = difference_norms(fem, u, np.zeros_like(u))
    assert l2 == pytest.approx(np.sqrt(8 / 3), rel=1e-12)
    assert h1 == pytest.approx(np.sqrt(8 / 3 + 2), rel=1e-12)
    mask = pb.mesh.vertices[pb.mesh.triangles][:, :, 0].max(axis=1) <= 1.0
    l2m, _ = difference_norms(fem, u, np.zeros_like(u), mask)
    assert l2m == pytest.approx(np.sqrt(1 / 3), rel=1e-12)


def test_inside_triangles():
    m = cantilever().build_mesh((10, 10))
    g = 1.0 - m.vertices[:, 0]
    inside = inside_triangles(m, g)
    assert inside.sum() == m.n_triangles // 2
