"""Lagrangian verification, primitive solving, lifts, and genericity."""

import numpy as np
import pytest

from lcslab.errors import PreconditionError
from lcslab.forms import pullback
from lcslab.lagrangians import (beta_graph, cobordism_gluing_constant,
                                contact_lift_check, example_torus_1,
                                example_torus_2, genericity_check, jet_graph,
                                lift_generating_function, lift_legendrian,
                                solve_primitive, symplectization_immersion,
                                translate_by_form, verify_lagrangian,
                                zero_section)
from lcslab.manifolds import (ScalarField, SmoothMap, make_manifold,
                              sample_points)
from lcslab.structures import cotangent_lcs

T1 = make_manifold(1, 0)
T2 = make_manifold(2, 0)


# ------------------------------------------------------------------ verify

def test_example_1_is_lagrangian():
    E = example_torus_1()
    rep = verify_lagrangian(E)
    assert rep.passed and rep.residual_sup <= 1e-9


def test_example_2_is_lagrangian():
    E = example_torus_2()
    rep = verify_lagrangian(E)
    assert rep.passed


def test_zero_section_is_lagrangian():
    S = cotangent_lcs(T2, [0.0, 1.0])
    rep = verify_lagrangian(zero_section(S))
    assert rep.passed


def test_nonclosed_graph_fails():
    # graph of the non-closed 1-form p1 = sin(q2), beta = 0
    S = cotangent_lcs(T2, [0.0, 0.0])

    def fn(jets):
        return [jets[0], jets[1], jets[1].sin(), jets[0] * 0.0]

    E_chart = SmoothMap(T2, S.total, fn)
    from lcslab.lagrangians import ParametricEmbedding
    E = ParametricEmbedding(source=T2, structure=S, chart=E_chart)
    rep = verify_lagrangian(E)
    assert not rep.passed
    # residual is |cos q2| at the worst sample, about 1
    assert rep.residual_sup > 0.5


# ------------------------------------------------------------- primitives

def test_example_1_primitive_and_holonomy():
    E = example_torus_1()
    cert = solve_primitive(E, grid_shape=64)
    assert cert.valid
    assert cert.unique_primitive
    # multiplicative holonomy over the phi loop is e^{2 pi}
    H = cert.holonomies["phi"]
    assert abs(H - np.exp(2 * np.pi)) / np.exp(2 * np.pi) <= 1e-6
    assert max(cert.holonomy_defects.values()) <= 1e-8
    # solved primitive equals sin(theta), pinned with no free constant
    params = sample_points(E.source, 50)
    vals = cert.solved_primitive.value(params)
    assert np.abs(vals - np.sin(params[:, 0])).max() <= 1e-8
    assert cert.declared_residual_sup <= 1e-12
    assert cert.declared_match_sup <= 1e-8


def test_example_2_primitive():
    E = example_torus_2()
    cert = solve_primitive(E, grid_shape=64)
    assert cert.valid and cert.unique_primitive
    params = sample_points(E.source, 50)
    vals = cert.solved_primitive.value(params)
    assert np.abs(vals + np.sin(params[:, 0]) ** 3).max() <= 1e-8


def test_zero_section_unique_zero_primitive():
    S = cotangent_lcs(T2, [1.0, 0.0])  # beta = dq1
    cert = solve_primitive(zero_section(S), grid_shape=32)
    assert cert.valid
    assert cert.unique_primitive  # e^{2 pi} holonomy over the q1 loop
    params = sample_points(T2, 30)
    assert np.abs(cert.solved_primitive.value(params)).max() <= 1e-10


def test_primitive_jets_satisfy_defining_relation():
    E = example_torus_1()
    cert = solve_primitive(E, grid_shape=64)
    params = sample_points(E.source, 20)
    jet = cert.solved_primitive.jet(params, order=2)
    assert np.abs(jet.f - np.sin(params[:, 0])).max() <= 1e-8
    # df = i*lambda + f i*beta = cos(theta) d theta (the phi terms cancel)
    grad_expected = np.stack([np.cos(params[:, 0]),
                              np.zeros(len(params))], axis=-1)
    assert np.abs(jet.g - grad_expected).max() <= 1e-8


# ------------------------------------------------------------- translation

def test_translate_zero_is_identity():
    E = example_torus_1()
    E0 = translate_by_form(E, "beta", 0.0)
    pts = sample_points(E.source, 20)
    assert np.allclose(E0.points(pts), E.points(pts))


def test_translate_example_1_makes_primitive_positive():
    E = translate_by_form(example_torus_1(), "beta", -2.0)
    cert = solve_primitive(E, grid_shape=64)
    assert cert.valid
    params = sample_points(E.source, 40)
    vals = cert.solved_primitive.value(params)
    assert np.abs(vals - (np.sin(params[:, 0]) + 2.0)).max() <= 1e-8
    assert vals.min() > 0


def test_translate_beta_graph_shifts_primitive():
    S = cotangent_lcs(T2, [0.0, 1.0])
    f = ScalarField(T2, lambda j: j[0].cos(), name="cos q1")
    E = beta_graph(f, S)
    Et = translate_by_form(E, "beta", 1.5)
    cert = solve_primitive(Et, grid_shape=48)
    params = sample_points(T2, 30)
    assert np.abs(cert.solved_primitive.value(params)
                  - (np.cos(params[:, 0]) - 1.5)).max() <= 1e-8


# ------------------------------------------------------------- beta graphs

def test_beta_graph_of_zero_is_zero_section():
    S = cotangent_lcs(T2, [0.0, 1.0])
    E = beta_graph(ScalarField.constant(T2, 0.0), S)
    pts = sample_points(T2, 20)
    assert np.abs(E.fiber_values(pts)).max() == 0.0


def test_beta_graph_of_constant():
    # f = 1, beta = dq1: graph of -dq1, primitive 1
    S = cotangent_lcs(T2, [1.0, 0.0])
    E = beta_graph(ScalarField.constant(T2, 1.0), S)
    pts = sample_points(T2, 20)
    fib = E.fiber_values(pts)
    assert np.allclose(fib[:, 0], -1.0) and np.allclose(fib[:, 1], 0.0)
    cert = solve_primitive(E, grid_shape=32)
    assert np.abs(cert.solved_primitive.value(pts) - 1.0).max() <= 1e-8


def test_beta_graph_roundtrip():
    # f = cos q1, beta = dq2: the solver recovers f to 1e-8
    S = cotangent_lcs(T2, [0.0, 1.0])
    f = ScalarField(T2, lambda j: j[0].cos(), name="cos q1")
    cert = solve_primitive(beta_graph(f, S), grid_shape=48)
    assert cert.valid and cert.unique_primitive
    pts = sample_points(T2, 40)
    assert np.abs(cert.solved_primitive.value(pts)
                  - np.cos(pts[:, 0])).max() <= 1e-8


# ------------------------------------------------------------------- lifts

def test_lift_constant_jet_graph():
    c = 1.0
    leg = jet_graph(ScalarField.constant(T1, c), T1)
    Q = make_manifold(1, 0, labels=("theta",))
    E = lift_legendrian(leg, Q, [1.0])
    pts = sample_points(E.source, 20)
    img = E.points(pts)
    # (x, theta) -> (x, theta, 0, -c) in (q1, theta, p1, p_theta) order
    assert np.allclose(img[:, 2], 0.0)
    assert np.allclose(img[:, 3], -c)
    cert = solve_primitive(E, grid_shape=32)
    assert cert.valid
    assert np.abs(cert.solved_primitive.value(pts) - c).max() <= 1e-8


def test_lift_sine_jet_graph_roundtrip():
    leg = jet_graph(ScalarField(T1, lambda j: j[0].sin(), name="sin"), T1)
    Q = make_manifold(1, 0, labels=("theta",))
    E = lift_legendrian(leg, Q, [1.0])
    rep = verify_lagrangian(E)
    assert rep.passed
    cert = solve_primitive(E, grid_shape=48)
    assert cert.valid
    pts = sample_points(E.source, 30)
    assert np.abs(cert.solved_primitive.value(pts)
                  - np.sin(pts[:, 0])).max() <= 1e-8


def test_lift_over_two_torus():
    leg = jet_graph(ScalarField.constant(T1, 0.5), T1)
    Q = make_manifold(2, 0)
    E = lift_legendrian(leg, Q, [1.0, 1.0])  # beta = dtheta1 + dtheta2
    cert = solve_primitive(E, grid_shape=24)
    assert cert.valid
    assert max(cert.holonomy_defects.values()) <= 1e-8


def test_lift_rejects_non_legendrian():
    j1 = T1.jet1()
    bad = SmoothMap(T1, j1, lambda j: [j[0], j[0].cos(), j[0] * 0.0])
    Q = make_manifold(1, 0)
    with pytest.raises(PreconditionError):
        lift_legendrian(bad, Q, [1.0])


def test_lift_rejects_vanishing_form():
    leg = jet_graph(ScalarField.constant(T1, 1.0), T1)
    Q = make_manifold(1, 0)
    with pytest.raises(PreconditionError):
        lift_legendrian(leg, Q, [ScalarField(Q, lambda j: j[0].sin())])


# --------------------------------------------------------- symplectization

def test_symplectization_of_example_1():
    E = example_torus_1()
    jmap, rep = symplectization_immersion(E)
    assert rep.passed
    pts = sample_points(E.source, 40)
    pb = pullback(jmap, E.structure.lam).coefficients(pts)
    expected = np.stack([np.cos(pts[:, 0]), np.zeros(len(pts))], axis=-1)
    assert np.abs(pb - expected).max() <= 1e-9


def test_symplectization_of_example_2():
    E = example_torus_2()
    jmap, rep = symplectization_immersion(E)
    assert rep.passed
    pts = sample_points(E.source, 40)
    pb = pullback(jmap, E.structure.lam).coefficients(pts)
    expected = np.stack([-3 * np.sin(pts[:, 0]) ** 2 * np.cos(pts[:, 0]),
                         np.zeros(len(pts))], axis=-1)
    assert np.abs(pb - expected).max() <= 1e-9


def test_symplectization_of_zero_section_unchanged():
    S = cotangent_lcs(T2, [0.0, 1.0])
    E = zero_section(S)
    jmap, rep = symplectization_immersion(E)
    assert rep.passed
    pts = sample_points(T2, 20)
    assert np.allclose(jmap(pts), E.points(pts))


# ------------------------------------------------------------ contact lift

def test_contact_lift_identity_torus_1():
    rep = contact_lift_check(T1, [1.0])
    assert rep.passed and rep.equality_sup <= 1e-10
    assert rep.min_abs_coefficient > 0


def test_contact_lift_trivial_beta():
    rep = contact_lift_check(T1, [0.0])
    assert rep.passed and rep.equality_sup <= 1e-14


def test_contact_lift_torus_2():
    rep = contact_lift_check(T2, [1.0, 0.0], tol=1e-10)
    assert rep.passed


# ----------------------------------------------------- generating functions

def test_generating_function_pure_quadratic():
    dom = make_manifold(1, 1)  # (q, xi)
    F = ScalarField(dom, lambda j: j[1] * j[1], name="xi^2")
    lift = lift_generating_function(F, T1, k=1, grid=16)
    # fiber-critical locus is xi = 0, generated set is the zero section
    assert np.abs(lift.critical_points[:, 1]).max() <= 1e-10
    assert np.abs(lift.generated_points[:, 1]).max() <= 1e-10  # p = 0
    assert np.abs(lift.generated_points[:, 2]).max() <= 1e-10  # z = 0


def test_generating_function_constant_shift():
    dom = make_manifold(1, 1)
    c = 0.75
    F = ScalarField(dom, lambda j: j[1] * j[1] + c)
    lift = lift_generating_function(F, T1, k=1, grid=16)
    assert np.allclose(lift.generated_points[:, 2], -c, atol=1e-10)
    pts = lift.lift_points(theta=0.3)
    assert np.allclose(pts[:, 1], 0.3)
    assert np.allclose(pts[:, 3], -c, atol=1e-10)


def test_generating_function_cusp_front():
    dom = make_manifold(1, 1)
    F = ScalarField(dom, lambda j: j[1] ** 3 - j[1] * j[0].sin())
    with pytest.raises(PreconditionError):
        lift_generating_function(F, T1, k=1, grid=12)  # cubic: not quadratic

    # blend to a quadratic outside |xi| > 1.5 to satisfy the contract
    def blended(j):
        xi = j[1]
        cubic = xi ** 3 - xi * j[0].sin()
        quad = xi * xi * 4.0
        from lcslab.jets import Jet2
        x = (xi * xi - 1.5 ** 2) * (1.0 / (2.5 ** 2 - 1.5 ** 2))
        s = x * x * x * (x * (x * 6.0 - 15.0) + 10.0)
        w = Jet2.where(xi.f ** 2 <= 1.5 ** 2, x * 0.0,
                       Jet2.where(xi.f ** 2 >= 2.5 ** 2, x * 0.0 + 1.0, s))
        return cubic * (1.0 - w) + quad * w

    Fb = ScalarField(dom, blended)
    lift = lift_generating_function(Fb, T1, k=1, grid=24, xi_radius=1.4)
    crit = lift.critical_points
    inner = crit[np.abs(crit[:, 1]) < 1.4]
    # fiber-critical points satisfy 3 xi^2 = sin q
    resid = 3 * inner[:, 1] ** 2 - np.sin(inner[:, 0])
    assert np.abs(resid).max() <= 1e-8


# ------------------------------------------------------------------ gluing

def test_gluing_constant_cases():
    assert cobordism_gluing_constant(0.0, 0.0, 1.0) == 0.0
    ft0 = 0.37
    assert abs(cobordism_gluing_constant(np.e * ft0, ft0, 1.0)) <= 1e-15
    c = cobordism_gluing_constant(1.0, 0.0, np.log(2.0))
    assert np.isclose(c, 1.0)
    assert 1.0 + c == pytest.approx(2.0 * (0.0 + c))
    assert cobordism_gluing_constant(1.0, 2.0, 0.0) is None
    with pytest.raises(PreconditionError):
        cobordism_gluing_constant(1.0, 2.0, -1.0)


# -------------------------------------------------------------- genericity

def test_genericity_zero_section_degenerate():
    S = cotangent_lcs(T2, [0.0, 1.0])
    rep = genericity_check(zero_section(S), grid=24)
    assert rep.degenerate_input and not rep.hypothesis_ok


def test_genericity_example_1():
    rep = genericity_check(example_torus_1(), grid=48)
    assert not rep.degenerate_input
    # fiber (cos/2, -sin) never vanishes: no intersections with the section
    assert rep.intersections.shape[0] == 0
    # base map (2 theta, phi) never drops rank: no vertical tangencies
    assert rep.tangency_params.shape[0] == 0
    assert rep.hypothesis_ok


def test_genericity_example_2_tangencies_touch_section():
    rep = genericity_check(example_torus_2(), grid=48)
    # tangency locus at sin(theta) = 0, which lies on the zero section
    assert rep.tangency_params.shape[0] > 0
    thetas = rep.tangency_params[:, 0]
    dist = np.minimum(np.abs(np.mod(thetas, np.pi)),
                      np.pi - np.abs(np.mod(thetas, np.pi)))
    assert dist.max() <= 1e-6
    assert rep.min_tangency_fiber_norm <= 1e-6
    assert not rep.hypothesis_ok


def test_genericity_morse_graph():
    # graph of df for Morse f: intersections at critical points with
    # Hessian-controlled margins
    S = cotangent_lcs(T2, [0.0, 0.0])
    f = ScalarField(T2, lambda j: j[0].cos() + j[1].cos() * 0.7)
    rep = genericity_check(beta_graph(f, S), grid=48)
    assert rep.intersections.shape[0] == 4
    assert rep.min_transversality > 0.1
    assert rep.hypothesis_ok


def test_rank_deficient_chart_raises_immersion_error():
    from lcslab.errors import ImmersionError
    S = cotangent_lcs(T2, [0.0, 1.0])

    def fn(jets):
        return [jets[0], jets[0], jets[1] * 0.0, jets[1] * 0.0]

    from lcslab.lagrangians import ParametricEmbedding
    E = ParametricEmbedding(source=T2, structure=S,
                            chart=SmoothMap(T2, S.total, fn))
    with pytest.raises(ImmersionError):
        verify_lagrangian(E)


def test_example_registry_by_name():
    from lcslab.lagrangians import example_by_name
    E1 = example_by_name("example-torus-1")
    assert E1.name == "example-torus-1"
    S = cotangent_lcs(T2, [0.0, 1.0])
    Z = example_by_name("zero-section", structure=S)
    assert Z.name == "zero-section"
    f = ScalarField(T2, lambda j: j[0].cos())
    G = example_by_name("beta-graph", f=f, structure=S)
    assert verify_lagrangian(G).passed
    with pytest.raises(KeyError):
        example_by_name("no-such-thing")


def test_solved_primitive_independent_of_base_point():
    # nontrivial multiplicative holonomy pins the primitive: starting the
    # integration elsewhere reproduces the same function
    E = example_torus_1()
    a = solve_primitive(E, grid_shape=48)
    b = solve_primitive(E, base_point=np.array([np.pi / 3, 1.0]),
                        grid_shape=48)
    pts = sample_points(E.source, 40)
    assert np.abs(a.solved_primitive.value(pts)
                  - b.solved_primitive.value(pts)).max() <= 1e-8
    assert np.abs(a.solved_primitive.value(pts)
                  - np.sin(pts[:, 0])).max() <= 1e-8


def test_contact_lift_top_coefficient_is_unit():
    # n = 1 hand expansion: alpha ^ d(alpha) = -dq ^ dp ^ dz up to sign,
    # so the single top coefficient is exactly +-1 everywhere
    from lcslab.forms import exterior_d
    from lcslab.lagrangians import _canonical_contact_form
    j1 = T1.jet1()
    alpha = _canonical_contact_form(T1)
    vol = alpha.wedge(exterior_d(alpha))
    pts = sample_points(j1, 50)
    coeffs = vol.coefficients(pts)
    assert coeffs.shape[-1] == 1
    assert np.all(np.abs(coeffs) == 1.0)
