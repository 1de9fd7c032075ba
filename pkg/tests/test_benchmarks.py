from fractions import Fraction

import numpy as np
import pytest

from goafem.benchmarks import (WEIGHTED_L2_EXACT, GridCutoff, convection_problem,
                               evaluate_goal, force_problem, get_problem, in_U2,
                               weighted_l2_problem)
from goafem.fem import ConfigurationError, assemble_dual_rhs, build_space
from goafem.mesh import Mesh, initial_mesh, refine_nvb, uniform_refine

from oracles import duffy_rule

SQ = np.sqrt(0.5)


def test_exact_goal_value():
    assert WEIGHTED_L2_EXACT == pytest.approx(6.986667e-4, rel=1e-6)
    # exact rational integral of (xy(1-x)(1-y))^2 over (1/4, 3/4)^2
    def antideriv(x):
        x = Fraction(x)
        return x ** 3 / 3 - x ** 4 / 2 + x ** 5 / 5  # of x^2 (1-x)^2
    one_d = antideriv(Fraction(3, 4)) - antideriv(Fraction(1, 4))
    assert one_d ** 2 == Fraction(41209, 58982400)
    # and by quadrature on two triangles covering U1
    tris = [np.array([[0.25, 0.25], [0.75, 0.25], [0.75, 0.75]]),
            np.array([[0.25, 0.25], [0.75, 0.75], [0.25, 0.75]])]
    total = 0.0
    for t in tris:
        pts, w = duffy_rule(t, 8)
        x, y = pts.T
        total += w @ (x * y * (1 - x) * (1 - y)) ** 2
    assert abs(total - 41209 / 58982400) <= 1e-14


@pytest.mark.parametrize("name", ["weighted_l2", "convection", "force"])
def test_goal_of_zero(name):
    problem = get_problem(name)
    space = build_space(problem.initial_mesh(), 2)
    z = np.zeros(space.n_dofs)
    assert evaluate_goal(problem, space, z) == 0.0
    g, gvec = problem.goal.dual_rhs(space, z)
    assert np.all(assemble_dual_rhs(space, g, gvec) == 0)


def test_interpolant_goal_converges():
    problem = weighted_l2_problem()
    mesh = problem.initial_mesh()
    errs = []
    for _ in range(3):
        space = build_space(mesh, 2)
        u = space.interpolate(problem.exact_solution)
        errs.append(abs(evaluate_goal(problem, space, u) - WEIGHTED_L2_EXACT))
        mesh = uniform_refine(mesh)
    assert errs[-1] < 1e-9 and errs[2] < errs[1] < errs[0]


def test_goal_evaluation_is_exact_quadrature(rng):
    # the integrand is a polynomial of degree 2p per element
    problem = weighted_l2_problem()
    mesh = refine_nvb(problem.initial_mesh(), [10, 60])
    from oracles import MonomialBasis
    for p in (1, 2):
        space = build_space(mesh, p)
        w = rng.standard_normal(space.n_dofs)
        ref = 0.0
        for t in range(mesh.n_elements):
            c = mesh.centroids[t]
            if not (0.25 < c[0] < 0.75 and 0.25 < c[1] < 0.75):
                continue
            pts, wq = duffy_rule(mesh.coords[t], 6)
            phi, _, _ = MonomialBasis(mesh.coords[t], p).values(pts)
            ref += wq @ (phi @ w[space.element_dofs[t]]) ** 2
        assert evaluate_goal(problem, space, w) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("name", ["weighted_l2", "convection", "force"])
@pytest.mark.parametrize("p", [1, 2])
def test_polarization_identity(rng, name, p):
    problem = get_problem(name)
    mesh = refine_nvb(problem.initial_mesh(), rng.choice(128, 25, replace=False))
    space = build_space(mesh, p)
    G = lambda w: evaluate_goal(problem, space, w)
    for _ in range(3):
        v, w = rng.standard_normal((2, space.n_dofs))
        lhs = G(v + w) - G(v) - G(w)
        rhs = assemble_dual_rhs(space, *problem.goal.dual_rhs(space, w)) @ v
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(G(v)) + abs(G(w)) + abs(G(v + w)))


@pytest.mark.parametrize("name", ["weighted_l2", "convection", "force"])
def test_dual_rhs_linear(rng, name):
    problem = get_problem(name)
    space = build_space(problem.initial_mesh(), 2)
    w1, w2 = rng.standard_normal((2, space.n_dofs))
    r = [assemble_dual_rhs(space, *problem.goal.dual_rhs(space, w)) for w in (w1, w2, w1 + w2)]
    assert np.allclose(r[2], r[0] + r[1], rtol=0, atol=1e-13 * np.abs(r[2]).max())


def test_convection_dual_example():
    problem = convection_problem()
    mesh = problem.initial_mesh()
    space = build_space(mesh, 1)
    w = space.dof_coords[:, 0].copy()  # grad w = (1, 0) everywhere
    bary = np.array([[1 / 3, 1 / 3, 1 / 3]])
    g, gvec = problem.goal.dual_rhs(space, w)
    gv = g.evaluate(mesh, bary)[:, 0]
    inside = in_U2(*mesh.centroids.T)
    assert inside.any()
    assert np.allclose(gv[inside], -SQ) and np.allclose(gv[~inside], SQ)
    wc = space.evaluate(w, bary)[0][:, 0]
    sigma = np.where(inside, 1.0, -1.0)
    expected = -wc[:, None] * sigma[:, None] * SQ * np.array([-1.0, 1.0])
    assert np.allclose(gvec.evaluate(mesh, bary)[:, 0], expected)


def test_convection_load_support():
    problem = convection_problem()
    mesh = problem.initial_mesh()
    f = problem.loads.fvec.evaluate(mesh, np.array([[1 / 3, 1 / 3, 1 / 3]]))[:, 0]
    x, y = mesh.centroids.T
    assert np.allclose(f[x - y >= 0.25], SQ * np.array([-1.0, 1.0]))
    assert np.all(f[x - y < 0.25] == 0)


def test_force_cutoff():
    psi = GridCutoff(8)
    s = np.arange(9) / 8
    X, Y = np.meshgrid(s, s, indexing="ij")
    vals = psi(X, Y)
    inside = (X >= 0.25) & (X <= 0.75) & (Y >= 0.25) & (Y <= 0.75)
    assert np.array_equal(vals, inside.astype(float))
    # falls off within one element layer: zero beyond max-norm distance 1/8
    x = np.linspace(0, 1, 101)
    XX, YY = np.meshgrid(x, x, indexing="ij")
    dist = np.maximum(np.maximum(0, np.maximum(0.25 - XX, XX - 0.75)),
                      np.maximum(0, np.maximum(0.25 - YY, YY - 0.75)))
    assert np.all(psi(XX, YY)[dist > 1 / 8 + 1e-12] == 0)
    mesh = initial_mesh(8)
    grad = psi.gradient(mesh)
    # gradient agrees with finite differences of the nodal interpolant
    c = mesh.centroids
    h = 1e-6
    fd = np.column_stack([(psi(c[:, 0] + h, c[:, 1]) - psi(c[:, 0] - h, c[:, 1])) / (2 * h),
                          (psi(c[:, 0], c[:, 1] + h) - psi(c[:, 0], c[:, 1] - h)) / (2 * h)])
    assert np.allclose(grad, fd, atol=1e-6)
    # zero gradient strictly inside U1 and outside the layer
    x, y = c.T
    core = (x > 0.25) & (x < 0.75) & (y > 0.25) & (y < 0.75)
    far = (x < 0.125) | (x > 0.875) | (y < 0.125) | (y > 0.875)
    assert np.all(grad[core | far] == 0)
    assert np.any(grad != 0)


def test_force_gradient_on_refined_mesh():
    psi = GridCutoff(8)
    mesh = refine_nvb(initial_mesh(8), np.arange(0, 128, 3))
    mesh = refine_nvb(mesh, np.arange(0, mesh.n_elements, 5))
    grad = psi.gradient(mesh)
    c = mesh.centroids
    h = 1e-7
    fd = np.column_stack([(psi(c[:, 0] + h, c[:, 1]) - psi(c[:, 0] - h, c[:, 1])) / (2 * h),
                          (psi(c[:, 0], c[:, 1] + h) - psi(c[:, 0], c[:, 1] - h)) / (2 * h)])
    assert np.allclose(grad, fd, atol=1e-5)


def test_force_dual_example():
    problem = force_problem()
    mesh = problem.initial_mesh()
    space = build_space(mesh, 1)
    chi = SQ * np.array([1.0, 1.0])
    w = space.dof_coords @ chi  # grad w = chi
    bary = np.array([[0.2, 0.3, 0.5]])
    g, gvec = problem.goal.dual_rhs(space, w)
    assert np.all(g.evaluate(mesh, bary) == 0)
    gpsi = problem.goal.cutoff.gradient(mesh)
    assert np.allclose(gvec.evaluate(mesh, bary)[:, 0], -gpsi, rtol=0, atol=1e-13)
    # elements where the cutoff is flat contribute nothing to G
    dens = problem.goal.integrand(mesh, bary, *space.evaluate(w, bary)[:2])[:, 0]
    assert np.all(dens[np.all(gpsi == 0, axis=1)] == 0)


def test_force_div_gvec_matches_oracle(rng):
    # div gvec from the Hessian formula against central differences of gvec
    problem = force_problem()
    mesh = refine_nvb(problem.initial_mesh(), [40, 41, 60])
    space = build_space(mesh, 2)
    w = rng.standard_normal(space.n_dofs)
    bary = np.array([[0.2, 0.3, 0.5]])
    _, gvec = problem.goal.dual_rhs(space, w)
    div = gvec.divergence(mesh, bary)[:, 0]
    eps = 1e-5
    num = np.zeros(mesh.n_elements)
    G = space.grad_lambda  # d lambda / dx
    for d in range(2):
        step = eps * G[:, :, d]  # barycentric shift for a physical step e_d
        plus = gvec.evaluate(mesh, (bary + step)[:, None, :])[:, 0, d]
        minus = gvec.evaluate(mesh, (bary - step)[:, None, :])[:, 0, d]
        num += (plus - minus) / (2 * eps)
    assert np.allclose(div, num, atol=1e-5 * max(1.0, np.abs(num).max()))


def test_region_resolution_and_configuration_errors():
    for name in ("weighted_l2", "convection", "force"):
        get_problem(name).initial_mesh()
    with pytest.raises(ConfigurationError):
        force_problem(4)
    with pytest.raises(ConfigurationError):
        weighted_l2_problem(6)
    with pytest.raises(ConfigurationError):
        get_problem("nope")
    # a mesh not resolving U3 is rejected
    bad = convection_problem(4)
    object.__setattr__(bad, "n0", 2)
    with pytest.raises(ConfigurationError):
        bad.initial_mesh()


def test_problem_definitions():
    for problem in (weighted_l2_problem(), convection_problem(), force_problem()):
        mesh = problem.initial_mesh()
        bary = np.array([[0.2, 0.3, 0.5]])
        assert np.allclose(problem.coeffs.A.evaluate(mesh, bary), np.eye(2))
        assert np.all(problem.coeffs.b.evaluate(mesh, bary) == 0)
        assert np.all(problem.coeffs.c.evaluate(mesh, bary) == 0)
    assert force_problem().goal.compact is False
    assert convection_problem().exact_goal is None
    assert force_problem().exact_goal is None
    p = weighted_l2_problem()
    x, y = np.meshgrid(np.linspace(0.1, 0.9, 7), np.linspace(0.1, 0.9, 7))
    u, h = p.exact_solution, 1e-3
    lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4 * u(x, y)) / h ** 2
    f = p.loads.f.evaluate(Mesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]),
                                np.zeros(1, dtype=np.int64)),
                           np.array([[0.2, 0.3, 0.5]]))
    assert np.allclose(-lap, 2 * x * (x - 1) + 2 * y * (y - 1), atol=1e-8)
    assert f[0, 0] == pytest.approx(2 * 0.3 * (0.3 - 1) + 2 * 0.5 * (0.5 - 1))
    assert np.allclose(u(x, y), -x * y * (1 - x) * (1 - y))
    g = p.exact_gradient(x, y)
    assert np.allclose(g[..., 0], (u(x + h, y) - u(x - h, y)) / (2 * h), atol=1e-9)
